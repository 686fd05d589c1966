//! Property checks of the detectors against the reference oracles, greedy
//! counterexample shrinking, and exhaustive enumeration of small traces.

use crate::commutativity::{detect_mraces_with, MraceMode};
use crate::grains::{
    check_witnesses, detect_granular_races_with, AcceptedWitness, GrainsConfig, GrainsPrefixDetector, HeuristicConfig,
    Mutation,
};
use crate::oracle::{
    oracle_augmented_prefix_races, oracle_grain_races, oracle_granular_races, oracle_maximal_suffix_mraces,
    oracle_mraces, oracle_predictable_races, oracle_prefix_races, oracle_syncp_prefix_races,
    suffix_soundness_violations, OracleBudget, OracleError,
};
use crate::seqp::{SeqpConfig, SeqpDetector};
use crate::trace::{Alphabet, EventId, EventLabel, Op, Trace, WellFormedChecker};
use crate::{validate_wellformed, RaceSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    /// Detectors equal or bracketed by their defining oracles.
    Equivalence,
    /// Inclusions and equalities between race classes.
    Hierarchy,
    Antichain,
    Heuristics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    SeqpEqualsOracle,
    GrainsContainsPrefix,
    GrainsWithinGranular,
    MracesMatchReference,
    DetectorHierarchy,
    MracesWithinGrains,
    ContiguousWithinScattered,
    ScatteredWithinPrefix,
    SyncpEqualsPrefix,
    AugmentedEqualsPrefix,
    PrefixWithinGranular,
    MaximalSuffixWithinGranular,
    SuffixSoundness,
    DetectorSoundness,
    WitnessReplay,
    AntichainSameRaces,
    AntichainSmallerFrontier,
    HeuristicSubset,
    OracleBudget,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::SeqpEqualsOracle => "seqp-equals-prefix-oracle",
            Property::GrainsContainsPrefix => "grains-contains-prefix-oracle",
            Property::GrainsWithinGranular => "grains-within-granular-oracle",
            Property::MracesMatchReference => "mraces-match-reference",
            Property::DetectorHierarchy => "m-within-seqp-within-grains",
            Property::MracesWithinGrains => "m-within-contiguous-grains",
            Property::ContiguousWithinScattered => "contiguous-within-scattered",
            Property::ScatteredWithinPrefix => "scattered-grains-within-prefix",
            Property::SyncpEqualsPrefix => "syncp-equals-prefix",
            Property::AugmentedEqualsPrefix => "augmented-prefix-equals-prefix",
            Property::PrefixWithinGranular => "prefix-within-granular",
            Property::MaximalSuffixWithinGranular => "maximal-suffix-within-granular",
            Property::SuffixSoundness => "suffix-soundness",
            Property::DetectorSoundness => "detector-soundness",
            Property::WitnessReplay => "witness-replay",
            Property::AntichainSameRaces => "antichain-same-races",
            Property::AntichainSmallerFrontier => "antichain-smaller-frontier",
            Property::HeuristicSubset => "heuristic-subset",
            Property::OracleBudget => "oracle-budget",
        }
    }

    pub fn group(self) -> Group {
        use Property::*;
        match self {
            SeqpEqualsOracle | GrainsContainsPrefix | GrainsWithinGranular | OracleBudget => Group::Equivalence,
            AntichainSameRaces | AntichainSmallerFrontier => Group::Antichain,
            HeuristicSubset => Group::Heuristics,
            _ => Group::Hierarchy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub property: Property,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.property.name(), self.detail)
    }
}

/// Result of checking one trace.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub failures: Vec<Failure>,
    /// Granular oracle pairs the unrestricted detector does not report.
    pub gap: Vec<(EventId, EventId)>,
}

/// The eight combinations of {-, Sz^5} x {-, Sh} x {-, LRU^100}.
pub fn heuristic_grid() -> Vec<HeuristicConfig> {
    let mut v = Vec::new();
    for sz in [None, Some(5)] {
        for sh in [false, true] {
            for lru in [None, Some(100)] {
                v.push(HeuristicConfig { sz, sh, lru });
            }
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub budget: OracleBudget,
    pub groups: Vec<Group>,
    /// Oracles that enumerate grain partitions, acquire orders or suffix
    /// subtraces run only on traces up to this length.
    pub tight_events: usize,
    pub heuristics: Vec<HeuristicConfig>,
    pub mutation: Option<Mutation>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            budget: OracleBudget::default(),
            groups: vec![Group::Equivalence, Group::Hierarchy, Group::Antichain, Group::Heuristics],
            tight_events: 9,
            heuristics: heuristic_grid(),
            mutation: None,
        }
    }
}

impl CheckConfig {
    pub fn only(groups: &[Group]) -> Self {
        CheckConfig { groups: groups.to_vec(), ..Default::default() }
    }
}

fn grains(trace: &Trace, heur: HeuristicConfig, antichain: bool, mutation: Option<Mutation>) -> RaceSet {
    detect_granular_races_with(
        trace,
        GrainsConfig { heur, antichain, threads: Some(trace.num_threads()), mutation, ..Default::default() },
    )
}

struct GrainsRun {
    races: RaceSet,
    peak: usize,
    witnesses: Vec<AcceptedWitness>,
}

fn run_grains(trace: &Trace, antichain: bool, witnesses: bool, mutation: Option<Mutation>) -> GrainsRun {
    let mut d = GrainsPrefixDetector::new(GrainsConfig {
        antichain,
        witnesses,
        threads: Some(trace.num_threads()),
        mutation,
        ..Default::default()
    });
    let mut out = Vec::new();
    trace.labels().for_each(|l| d.step(l, &mut out));
    GrainsRun { races: out.into_iter().collect(), peak: d.peak_states(), witnesses: d.take_witnesses() }
}

fn run_seqp(trace: &Trace, antichain: bool) -> (RaceSet, usize) {
    let mut d = SeqpDetector::new(SeqpConfig { antichain, threads: Some(trace.num_threads()), ..Default::default() });
    let mut out = Vec::new();
    trace.labels().for_each(|l| d.step(l, &mut out));
    (out.into_iter().collect(), d.peak_states())
}

fn pairs(v: impl IntoIterator<Item = (EventId, EventId)>) -> String {
    let v: Vec<_> = v.into_iter().collect();
    format!("{v:?}")
}

struct Ctx<'a> {
    trace: &'a Trace,
    out: Outcome,
}

impl Ctx<'_> {
    fn fail(&mut self, property: Property, detail: String) {
        self.out.failures.push(Failure { property, detail });
    }

    fn subset(&mut self, property: Property, small: &RaceSet, big: &RaceSet, what: &str) {
        if !small.is_subset(big) {
            self.fail(property, format!("{what}: extra {}", pairs(small.difference(big).copied())));
        }
    }

    fn equal(&mut self, property: Property, got: &RaceSet, want: &RaceSet) {
        if got != want {
            let extra = pairs(got.difference(want).copied());
            let missing = pairs(want.difference(got).copied());
            self.fail(property, format!("extra {extra}, missing {missing}"));
        }
    }

    fn oracle<T>(&mut self, r: Result<T, OracleError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                let n = self.trace.len();
                self.fail(Property::OracleBudget, format!("{e} on {n} events"));
                None
            }
        }
    }
}

/// Checks every property of the selected groups on one trace.
pub fn check_trace(trace: &Trace, cfg: &CheckConfig) -> Outcome {
    let mut cx = Ctx { trace, out: Outcome::default() };
    let on = |g: Group| cfg.groups.contains(&g);
    let tight = trace.len() <= cfg.tight_events;
    let b = &cfg.budget;

    let g_on = run_grains(trace, true, on(Group::Hierarchy), cfg.mutation);
    let grains_off = &g_on.races;
    let (seqp, s_peak) = run_seqp(trace, true);

    if on(Group::Equivalence) || on(Group::Hierarchy) {
        let Some(prefix) = cx.oracle(oracle_prefix_races(trace, b)) else { return cx.out };
        let Some(granular) = cx.oracle(oracle_granular_races(trace, b)) else { return cx.out };
        if on(Group::Equivalence) {
            cx.equal(Property::SeqpEqualsOracle, &seqp, &prefix);
            cx.subset(Property::GrainsContainsPrefix, &prefix, grains_off, "prefix oracle vs grains");
            cx.subset(Property::GrainsWithinGranular, grains_off, &granular, "grains vs granular oracle");
            cx.out.gap = granular.difference(grains_off).copied().collect();
        }
        if on(Group::Hierarchy) {
            hierarchy(&mut cx, cfg, tight, &prefix, &granular, &seqp, &g_on);
        }
    }

    if on(Group::Antichain) {
        let (s_off, p_off) = run_seqp(trace, false);
        cx.equal(Property::AntichainSameRaces, &seqp, &s_off);
        if s_peak > p_off {
            cx.fail(Property::AntichainSmallerFrontier, format!("seqp peak {s_peak} > {p_off}"));
        }
        let g_off = run_grains(trace, false, false, cfg.mutation);
        cx.equal(Property::AntichainSameRaces, grains_off, &g_off.races);
        if g_on.peak > g_off.peak {
            cx.fail(Property::AntichainSmallerFrontier, format!("grains peak {} > {}", g_on.peak, g_off.peak));
        }
    }

    if on(Group::Heuristics) {
        for h in &cfg.heuristics {
            if h.is_off() {
                continue;
            }
            let got = grains(trace, *h, true, cfg.mutation);
            cx.subset(Property::HeuristicSubset, &got, grains_off, &format!("{h:?}"));
        }
    }
    cx.out
}

fn hierarchy(
    cx: &mut Ctx,
    cfg: &CheckConfig,
    tight: bool,
    prefix: &RaceSet,
    granular: &RaceSet,
    seqp: &RaceSet,
    g: &GrainsRun,
) {
    let grains_off = &g.races;
    let trace = cx.trace;
    let b = &cfg.budget;
    let m = crate::detect_mraces(trace);
    let m_ref = oracle_mraces(trace);
    cx.equal(Property::MracesMatchReference, &m, &m_ref);
    cx.equal(Property::MracesMatchReference, &detect_mraces_with(trace, MraceMode::Compact), &m_ref);
    cx.subset(Property::DetectorHierarchy, &m, seqp, "m vs seqp");
    cx.subset(Property::DetectorHierarchy, seqp, grains_off, "seqp vs grains");
    cx.subset(Property::PrefixWithinGranular, prefix, granular, "prefix vs granular");
    if let Some(ms) = cx.oracle(oracle_maximal_suffix_mraces(trace, b)) {
        cx.subset(Property::MaximalSuffixWithinGranular, &ms, granular, "maximal suffix vs granular");
    }
    if let Some(pred) = cx.oracle(oracle_predictable_races(trace, b)) {
        cx.subset(Property::DetectorSoundness, grains_off, &pred, "grains vs predictable");
    }
    for (i, msg) in check_witnesses(trace, &g.witnesses) {
        let w = &g.witnesses[i];
        cx.fail(Property::WitnessReplay, format!("({}, {}): {msg}", w.e1, w.e2));
    }
    if !tight {
        return;
    }
    let contiguous = cx.oracle(oracle_grain_races(trace, false, b));
    let scattered = cx.oracle(oracle_grain_races(trace, true, b));
    if let (Some(c), Some(s)) = (contiguous, scattered) {
        cx.subset(Property::MracesWithinGrains, &m, &c, "m vs contiguous grains");
        cx.subset(Property::ContiguousWithinScattered, &c, &s, "contiguous vs scattered");
        cx.subset(Property::ScatteredWithinPrefix, &s, prefix, "scattered grains vs prefix");
    }
    if let Some(sp) = cx.oracle(oracle_syncp_prefix_races(trace, b)) {
        cx.equal(Property::SyncpEqualsPrefix, &sp, prefix);
    }
    if let Some(aug) = cx.oracle(oracle_augmented_prefix_races(trace, 64, b)) {
        cx.equal(Property::AugmentedEqualsPrefix, &aug.races, prefix);
        if let Some(u) = aug.unsound.first() {
            cx.fail(Property::AugmentedEqualsPrefix, format!("grain linearization {u:?} is not a correct reordering"));
        }
    }
    if let Some(bad) = cx.oracle(suffix_soundness_violations(trace, b)) {
        if !bad.is_empty() {
            cx.fail(Property::SuffixSoundness, pairs(bad));
        }
    }
}

/// Why the unrestricted detector misses a granular oracle pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapCause {
    /// Found once `ρ` may also grow while a grain is open.
    RhoInsideGrains,
    Unexplained,
}

/// Classifies each missed pair by rerunning the detector with the relaxed rule.
pub fn triage_gap(trace: &Trace, gap: &[(EventId, EventId)]) -> Vec<((EventId, EventId), GapCause)> {
    if gap.is_empty() {
        return Vec::new();
    }
    let relaxed = detect_granular_races_with(
        trace,
        GrainsConfig { threads: Some(trace.num_threads()), rho_in_grains: true, ..Default::default() },
    );
    gap.iter()
        .map(|&p| (p, if relaxed.contains(&p) { GapCause::RhoInsideGrains } else { GapCause::Unexplained }))
        .collect()
}

/// Greedily deletes events (single events, then whole critical sections,
/// then whole threads) while the trace stays well-formed and `fails` holds.
pub fn shrink(trace: &Trace, mut fails: impl FnMut(&Trace) -> bool) -> Trace {
    let mut cur = trace.clone();
    loop {
        let mut progress = false;
        for cut in removal_candidates(&cur) {
            let next = cur.restrict(|e| !cut.contains(&e));
            if validate_wellformed(&next).is_ok() && fails(&next) {
                cur = next;
                progress = true;
                break;
            }
        }
        if !progress {
            return cur;
        }
    }
}

fn removal_candidates(t: &Trace) -> Vec<Vec<EventId>> {
    let labels: Vec<EventLabel> = t.labels().collect();
    let mut out: Vec<Vec<EventId>> = Vec::new();
    let mut threads: Vec<u32> = labels.iter().map(|l| l.thread).collect();
    threads.sort_unstable();
    threads.dedup();
    for th in threads {
        out.push((0..labels.len()).filter(|&i| labels[i].thread == th).collect());
    }
    for (i, l) in labels.iter().enumerate() {
        if let Op::Acquire(k) = l.op {
            let mut sec = vec![i];
            if let Some(j) =
                (i + 1..labels.len()).find(|&j| labels[j].thread == l.thread && labels[j].op == Op::Release(k))
            {
                sec.push(j);
            }
            out.push(sec);
        }
    }
    for i in (0..labels.len()).rev() {
        out.push(vec![i]);
    }
    out
}

/// Calls `f` on every well-formed trace with at most `max_events` events
/// over the given alphabet, up to renaming of threads and locations (each
/// new thread or location is the smallest unused one).
pub fn enumerate_traces(threads: u32, locations: u32, locks: u32, max_events: usize, mut f: impl FnMut(&Trace)) {
    let alphabet = Alphabet::numbered(threads, locations, locks);
    let mut word = Vec::with_capacity(max_events);
    let mut go = |word: &Vec<EventLabel>| f(&Trace::from_labels(alphabet.clone(), word.iter().copied()));
    dfs(threads, locations, locks, max_events, &mut word, WellFormedChecker::new(), 0, 0, &mut go);
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    nt: u32,
    nx: u32,
    nl: u32,
    max: usize,
    word: &mut Vec<EventLabel>,
    wf: WellFormedChecker,
    used_t: u32,
    used_x: u32,
    f: &mut dyn FnMut(&Vec<EventLabel>),
) {
    f(word);
    if word.len() == max {
        return;
    }
    for t in 0..nt.min(used_t + 1) {
        let mut ops = Vec::new();
        for x in 0..nx.min(used_x + 1) {
            ops.push(Op::Read(x));
            ops.push(Op::Write(x));
        }
        for l in 0..nl {
            ops.push(Op::Acquire(l));
            ops.push(Op::Release(l));
        }
        for op in ops {
            let label = EventLabel::new(t, op);
            let mut next = wf.clone();
            if next.check(label).is_err() {
                continue;
            }
            let ux = match op.loc() {
                Some(x) => used_x.max(x + 1),
                None => used_x,
            };
            word.push(label);
            dfs(nt, nx, nl, max, word, next, used_t.max(t + 1), ux, f);
            word.pop();
        }
    }
}
