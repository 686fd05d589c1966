//! Streaming granular prefix-race detection.
//!
//! The automaton guesses a sequential prefix `ρ` followed by two grains `g1`
//! and `g2` (each a subsequence of the trace, `g1` entirely before `g2`) such
//! that `g1·g2` is enabled after `ρ`, and a candidate `e1 ∈ g1` whose
//! conflicting partner `e2` could be moved right next to it inside `g1·g2`.
//! States live in an antichain keyed on everything except the prefix summary.

use crate::commutativity::RaceCone;
use crate::frontier::{DetMap, Frontier, Summary};
use crate::idset::IdSet;
use crate::partition::Partition;
use crate::seqp::{Candidate, PrefixSummary};
use crate::trace::{conflicting, EventId, EventLabel, Op, Trace};
use crate::RaceSet;
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Before,
    Inside1,
    Between,
    Inside2,
}

/// Constant-size summary of a guessed grain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GrainSummary {
    pub incl_threads: IdSet,
    pub incl_acqs: IdSet,
    /// Locks released in the grain but acquired in the prefix.
    pub orphan_rels: IdSet,
    pub incl_wrs: IdSet,
    /// Locations read in the grain from a write in the prefix.
    pub orphan_rds: IdSet,
    /// Locations whose latest write so far lies in this grain.
    pub last_wrs: IdSet,
    /// Locks acquired in the grain and not yet released.
    pub held_lcks: IdSet,
    /// Event count; only tracked when grain size is bounded.
    pub len: u32,
}

/// The subset-compared part of a state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GpRho {
    pub prefix: PrefixSummary,
    /// Threads with an event outside `ρ·g1·g2`; they can no longer join a grain.
    pub dead: IdSet,
}

impl Summary for GpRho {
    fn le(&self, o: &Self) -> bool {
        self.prefix.le(&o.prefix) && self.dead.is_subset(&o.dead)
    }
}

/// Shape bookkeeping for the single-critical-section heuristic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Free,
    Section { thread: u32, lock: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GpKey {
    pub phase: Phase,
    pub e1: Option<Candidate>,
    pub g1: GrainSummary,
    pub g2: GrainSummary,
    pub cone: Option<RaceCone>,
    pub shape: Shape,
}

impl GpKey {
    fn initial() -> Self {
        GpKey {
            phase: Phase::Before,
            e1: None,
            g1: GrainSummary::default(),
            g2: GrainSummary::default(),
            cone: None,
            shape: Shape::Free,
        }
    }
}

/// Concrete event ids behind a state, kept only in witness mode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Witness {
    pub rho: Vec<EventId>,
    pub g1: Vec<EventId>,
    pub g2: Vec<EventId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcceptedWitness {
    pub e1: EventId,
    pub e2: EventId,
    pub run: Witness,
}

/// A summary plus its optional witness; equality and order ignore the witness.
#[derive(Clone, Debug)]
pub struct Tracked {
    pub rho: GpRho,
    pub witness: Option<Box<Witness>>,
}

impl PartialEq for Tracked {
    fn eq(&self, o: &Self) -> bool {
        self.rho == o.rho
    }
}

impl Eq for Tracked {}

impl Hash for Tracked {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.rho.hash(h)
    }
}

impl Summary for Tracked {
    fn le(&self, o: &Self) -> bool {
        self.rho.le(&o.rho)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Maximum grain length.
    pub sz: Option<u32>,
    /// `g1` is one event or one complete critical section; `g2` is one event.
    pub sh: bool,
    /// Maximum number of live candidates.
    pub lru: Option<usize>,
}

impl HeuristicConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn is_off(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Clone, Debug)]
pub struct GrainsConfig {
    pub heur: HeuristicConfig,
    pub antichain: bool,
    pub partition: Partition,
    /// Total number of threads, when known; enables dropping dead states.
    pub threads: Option<u32>,
    /// Record the concrete run behind every accepted race.
    pub witnesses: bool,
    /// Deliberately broken rule, for checking that the fuzzer notices.
    pub mutation: Option<Mutation>,
    /// Also let `ρ` grow while a grain is open.
    pub rho_in_grains: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Let `ρ` overwrite a location that `g1` reads from `ρ`.
    DropOrphanReads,
}

impl Default for GrainsConfig {
    fn default() -> Self {
        GrainsConfig {
            heur: HeuristicConfig::off(),
            antichain: true,
            partition: Partition::whole(),
            threads: None,
            witnesses: false,
            mutation: None,
            rho_in_grains: false,
        }
    }
}

/// One successor under construction; `key` is `None` when unchanged.
struct Next {
    key: Option<GpKey>,
    rho: GpRho,
    witness: Option<Box<Witness>>,
}

pub struct GrainsPrefixDetector {
    cfg: GrainsConfig,
    frontier: Frontier<GpKey, Tracked>,
    stamps: DetMap<EventId, u64>,
    all_threads: Option<IdSet>,
    next: EventId,
    peak: usize,
    step_races: Vec<(EventId, EventId)>,
    accepted: Vec<AcceptedWitness>,
    buf: Vec<Next>,
}

impl GrainsPrefixDetector {
    pub fn new(cfg: GrainsConfig) -> Self {
        let mut frontier = Frontier::new(cfg.antichain);
        let witness = cfg.witnesses.then(|| Box::new(Witness::default()));
        frontier.insert(GpKey::initial(), Tracked { rho: GpRho::default(), witness });
        GrainsPrefixDetector {
            all_threads: cfg.threads.map(IdSet::full),
            cfg,
            frontier,
            stamps: DetMap::default(),
            next: 0,
            peak: 1,
            step_races: Vec::new(),
            accepted: Vec::new(),
            buf: Vec::new(),
        }
    }

    pub fn states(&self) -> usize {
        self.frontier.len()
    }

    pub fn peak_states(&self) -> usize {
        self.peak
    }

    pub fn candidates(&self) -> usize {
        self.stamps.len()
    }

    /// Witnesses of accepted races (witness mode only), drained.
    pub fn take_witnesses(&mut self) -> Vec<AcceptedWitness> {
        std::mem::take(&mut self.accepted)
    }

    pub fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        let id = self.next;
        self.next += 1;
        let may_pick = e.op.loc().is_some_and(|x| self.cfg.partition.owns(x));
        self.step_races.clear();
        let mut touched: Vec<EventId> = Vec::new();
        let ctx = StepCtx {
            id,
            e,
            may_pick,
            heur: &self.cfg.heur,
            mutation: self.cfg.mutation,
            rho_in_grains: self.cfg.rho_in_grains,
        };
        let (buf, races, accepted, all) = (&mut self.buf, &mut self.step_races, &mut self.accepted, &self.all_threads);
        self.frontier.advance(|key, t, same, moved| {
            buf.clear();
            gp_successors(&ctx, key, &t.rho, t.witness.as_deref(), buf, &mut |acc| {
                races.push((acc.e1, acc.e2));
                touched.push(acc.e1);
                if let Some(w) = acc.run {
                    accepted.push(AcceptedWitness { e1: acc.e1, e2: acc.e2, run: w });
                }
            });
            for n in buf.drain(..) {
                let nk = n.key.as_ref().unwrap_or(key);
                if let Some(c) = nk.e1 {
                    if let Some(all) = all {
                        let mut alive = all.clone();
                        alive.difference_with(&n.rho.dead);
                        alive.remove(c.label.thread);
                        if alive.is_empty() {
                            continue;
                        }
                    }
                    if key.e1.is_none() || nk.g1 != key.g1 || nk.g2 != key.g2 {
                        touched.push(c.id);
                    }
                } else if let Some(all) = all {
                    if all.is_subset(&n.rho.dead) {
                        continue;
                    }
                }
                let s = Tracked { rho: n.rho, witness: n.witness };
                match n.key {
                    Some(k) if k != *key => moved.push((k, s)),
                    _ => same.push(s),
                }
            }
        });
        for c in touched {
            self.stamps.insert(c, id as u64);
        }
        if self.cfg.heur.lru.is_some() || self.all_threads.is_some() {
            self.sync_candidates();
        }
        if let Some(n) = self.cfg.heur.lru {
            lru_evict(&mut self.frontier, &mut self.stamps, n);
        }
        self.step_races.sort_unstable();
        self.step_races.dedup();
        out.extend_from_slice(&self.step_races);
        self.peak = self.peak.max(self.frontier.len());
    }

    /// Forgets stamps of candidates with no remaining state.
    fn sync_candidates(&mut self) {
        let mut live: DetMap<EventId, ()> = DetMap::default();
        for (k, _) in self.frontier.iter() {
            if let Some(c) = k.e1 {
                live.insert(c.id, ());
            }
        }
        self.stamps.retain(|c, _| live.contains_key(c));
    }
}

/// Drops every state of the least recently stamped candidates until at most
/// `n` candidates remain. Candidate-less states are kept.
pub fn lru_evict(frontier: &mut Frontier<GpKey, Tracked>, stamps: &mut DetMap<EventId, u64>, n: usize) {
    if stamps.len() <= n {
        return;
    }
    let mut order: Vec<(u64, EventId)> = stamps.iter().map(|(&c, &s)| (s, c)).collect();
    order.sort_unstable();
    let drop: DetMap<EventId, ()> = order[..order.len() - n].iter().map(|&(_, c)| (c, ())).collect();
    stamps.retain(|c, _| !drop.contains_key(c));
    frontier.retain_keys(|k| k.e1.is_none_or(|c| !drop.contains_key(&c.id)));
}

struct StepCtx<'a> {
    id: EventId,
    e: EventLabel,
    may_pick: bool,
    heur: &'a HeuristicConfig,
    mutation: Option<Mutation>,
    rho_in_grains: bool,
}

struct Accept {
    e1: EventId,
    e2: EventId,
    run: Option<Witness>,
}

fn push(out: &mut Vec<Next>, key: GpKey, rho: GpRho, w: Option<&Witness>, add: impl FnOnce(&mut Witness)) {
    push_opt(out, Some(key), rho, w, add)
}

fn push_opt(out: &mut Vec<Next>, key: Option<GpKey>, rho: GpRho, w: Option<&Witness>, add: impl FnOnce(&mut Witness)) {
    let witness = w.map(|w| {
        let mut w = w.clone();
        add(&mut w);
        Box::new(w)
    });
    out.push(Next { key, rho, witness });
}

/// Freezing `ρ` in front of the grains must not leave a lock open that a
/// grain acquires.
fn freeze_ok(key: &GpKey, rho: &GpRho) -> bool {
    !rho.prefix.open_locks.intersects(&key.g1.incl_acqs) && !rho.prefix.open_locks.intersects(&key.g2.incl_acqs)
}

fn size_ok(heur: &HeuristicConfig, len: u32) -> bool {
    heur.sz.is_none_or(|m| len < m)
}

/// Every successor of one state on the current event.
fn gp_successors(
    cx: &StepCtx,
    key: &GpKey,
    rho: &GpRho,
    w: Option<&Witness>,
    out: &mut Vec<Next>,
    accept: &mut dyn FnMut(Accept),
) {
    let (id, e) = (cx.id, cx.e);
    let t = e.thread;
    let dead = rho.dead.contains(t);
    let sh = cx.heur.sh;

    // ACCEPT: e2 is only enabled, never executed
    if let (Some(c), Some(cone)) = (key.e1, &key.cone) {
        let phase_ok = match key.phase {
            Phase::Between => freeze_ok(key, rho),
            Phase::Inside2 => !sh && (!cx.rho_in_grains || freeze_ok(key, rho)),
            _ => false,
        };
        if phase_ok
            && conflicting(c.label, e)
            && c.label.thread != t
            && !dead
            && size_ok(cx.heur, key.g2.len)
            && cone.commutes_to_e1(e)
        {
            accept(Accept { e1: c.id, e2: id, run: w.cloned() });
        }
    }

    // EXCLUDE
    let section_thread = match key.shape {
        Shape::Section { thread, .. } if key.phase == Phase::Inside1 => Some(thread),
        _ => None,
    };
    if section_thread != Some(t) {
        let mut r = rho.clone();
        r.prefix.exclude(e);
        r.dead.insert(t);
        let k = match e.op {
            Op::Write(x) if key.g1.last_wrs.contains(x) || key.g2.last_wrs.contains(x) => {
                let mut k = key.clone();
                k.g1.last_wrs.remove(x);
                k.g2.last_wrs.remove(x);
                Some(k)
            }
            _ => None,
        };
        push_opt(out, k, r, w, |_| {});
    }

    // ρ-INCLUDE
    let open = matches!(key.phase, Phase::Inside1 | Phase::Inside2);
    if (!open || cx.rho_in_grains) && rho.prefix.can_include(e) {
        let (g1, g2) = (&key.g1, &key.g2);
        let blocked = key.phase != Phase::Before
            && match e.op {
                Op::Acquire(l) => g1.orphan_rels.contains(l) || g2.orphan_rels.contains(l),
                Op::Write(x) => {
                    let orphan = (g1.orphan_rds.contains(x) || g2.orphan_rds.contains(x))
                        && cx.mutation != Some(Mutation::DropOrphanReads);
                    orphan || open && (g1.incl_wrs.contains(x) || g2.incl_wrs.contains(x))
                }
                _ => false,
            };
        if !blocked {
            let mut r = rho.clone();
            r.prefix.include(e);
            let k = match e.op {
                Op::Write(x) if key.g1.last_wrs.contains(x) => {
                    let mut k = key.clone();
                    k.g1.last_wrs.remove(x);
                    Some(k)
                }
                _ => None,
            };
            push_opt(out, k, r, w, |w| w.rho.push(id));
        }
    }

    // g1-EXTEND, possibly picking e1
    if matches!(key.phase, Phase::Before | Phase::Inside1) {
        g1_extend(cx, key, rho, w, out);
    }

    // g2-EXTEND
    if !sh && key.e1.is_some() && matches!(key.phase, Phase::Between | Phase::Inside2) {
        if key.phase == Phase::Between && !freeze_ok(key, rho) {
            return;
        }
        if dead || !size_ok(cx.heur, key.g2.len) {
            return;
        }
        let mut k = key.clone();
        let mut r = rho.clone();
        let ok = match e.op {
            Op::Acquire(l) => {
                let free =
                    !r.prefix.open_locks.contains(l) && !k.g1.held_lcks.contains(l) && !k.g2.held_lcks.contains(l);
                if free {
                    k.g2.held_lcks.insert(l);
                    k.g2.incl_acqs.insert(l);
                }
                free
            }
            Op::Release(l) => {
                if k.g2.held_lcks.remove(l) || k.g1.held_lcks.remove(l) {
                    true
                } else if !k.g1.incl_acqs.contains(l) && !k.g2.incl_acqs.contains(l) && r.prefix.open_locks.remove(l) {
                    k.g2.orphan_rels.insert(l);
                    true
                } else {
                    false
                }
            }
            Op::Read(x) => {
                let from_rho = !r.prefix.excl_last_wrs.contains(x) && !k.g1.incl_wrs.contains(x);
                let own = k.g1.last_wrs.contains(x) || k.g2.last_wrs.contains(x);
                if from_rho && !own && cx.rho_in_grains {
                    k.g2.orphan_rds.insert(x);
                }
                from_rho || own
            }
            Op::Write(x) => {
                k.g2.incl_wrs.insert(x);
                k.g2.last_wrs.insert(x);
                k.g1.last_wrs.remove(x);
                r.prefix.excl_last_wrs.insert(x);
                true
            }
        };
        if ok {
            k.g2.incl_threads.insert(t);
            r.prefix.excl_threads.insert(t);
            if cx.heur.sz.is_some() {
                k.g2.len += 1;
            }
            if let Some(cone) = &mut k.cone {
                cone.step(e);
            }
            k.phase = Phase::Inside2;
            push(out, k, r, w, |w| w.g2.push(id));
        }
    }
}

fn g1_extend(cx: &StepCtx, key: &GpKey, rho: &GpRho, w: Option<&Witness>, out: &mut Vec<Next>) {
    let (id, e) = (cx.id, cx.e);
    let t = e.thread;
    let sh = cx.heur.sh;
    if rho.dead.contains(t) {
        return;
    }
    let committed = key.g1.incl_threads.contains(t);
    if rho.prefix.excl_threads.contains(t) && !committed {
        return;
    }
    if !size_ok(cx.heur, key.g1.len) {
        return;
    }
    // shape discipline: what this event may be and whether g1 must close after it
    let mut shape = key.shape;
    let mut must_close = false;
    if sh {
        match (key.phase, key.shape) {
            (Phase::Before, _) => match e.op {
                Op::Acquire(l) => shape = Shape::Section { thread: t, lock: l },
                _ if e.op.is_access() => must_close = true,
                _ => return,
            },
            (Phase::Inside1, Shape::Section { thread, lock }) => {
                if thread != t {
                    return;
                }
                if e.op == Op::Release(lock) {
                    must_close = true;
                }
            }
            _ => return,
        }
    }
    let mut k = key.clone();
    let mut r = rho.clone();
    let mut regular = true;
    match e.op {
        Op::Acquire(l) => {
            if r.prefix.open_locks.contains(l) || k.g1.held_lcks.contains(l) {
                return;
            }
            k.g1.held_lcks.insert(l);
            k.g1.incl_acqs.insert(l);
        }
        Op::Release(l) => {
            if !k.g1.held_lcks.remove(l) {
                // the grain cannot have taken a lock that ρ holds throughout it
                if k.g1.incl_acqs.contains(l) || !r.prefix.open_locks.remove(l) {
                    return;
                }
                k.g1.orphan_rels.insert(l);
            }
        }
        Op::Read(x) => {
            if k.g1.last_wrs.contains(x) {
            } else if !r.prefix.excl_last_wrs.contains(x) {
                k.g1.orphan_rds.insert(x);
            } else {
                regular = false;
            }
        }
        Op::Write(x) => {
            k.g1.incl_wrs.insert(x);
            k.g1.last_wrs.insert(x);
            r.prefix.excl_last_wrs.insert(x);
        }
    }
    k.g1.incl_threads.insert(t);
    r.prefix.excl_threads.insert(t);
    if cx.heur.sz.is_some() {
        k.g1.len += 1;
    }
    k.shape = shape;
    if let Some(cone) = &mut k.cone {
        cone.step(e);
    }
    k.phase = Phase::Inside1;

    let emit = |out: &mut Vec<Next>, k: GpKey, r: GpRho| {
        if k.e1.is_some() {
            let mut closed = k.clone();
            closed.phase = Phase::Between;
            push(out, closed, r.clone(), w, |w| w.g1.push(id));
        }
        if !must_close {
            push(out, k, r, w, |w| w.g1.push(id));
        }
    };

    if regular {
        emit(out, k.clone(), r.clone());
    }
    if key.e1.is_none() && cx.may_pick && e.op.is_access() {
        let c = Candidate { id, label: e };
        let mut kp = key.clone();
        kp.g1 = k.g1.clone();
        kp.phase = Phase::Inside1;
        kp.shape = shape;
        kp.e1 = Some(c);
        kp.cone = Some(RaceCone::new(e));
        if regular {
            emit(out, kp.clone(), r.clone());
        }
        if let Op::Read(_) = e.op {
            // a final read of its thread may observe any writer: the thread
            // takes no further part in the grains
            let mut ke = kp;
            ke.g1.orphan_rds = key.g1.orphan_rds.clone();
            let mut re = r;
            re.dead.insert(t);
            emit(out, ke, re);
        }
    }
}

/// One automaton state, for stepping outside the detector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrainsPrefixState {
    pub key: GpKey,
    pub rho: GpRho,
}

impl GrainsPrefixState {
    pub fn initial() -> Self {
        GrainsPrefixState { key: GpKey::initial(), rho: GpRho::default() }
    }
}

pub fn gp_subsumes(p: &GrainsPrefixState, q: &GrainsPrefixState) -> bool {
    p.key == q.key && p.rho.le(&q.rho)
}

/// All successors of `state` on event `(id, e)` plus the races it accepts.
pub fn gp_step(
    state: &GrainsPrefixState,
    id: EventId,
    e: EventLabel,
    heur: &HeuristicConfig,
) -> (Vec<GrainsPrefixState>, Vec<(EventId, EventId)>) {
    let cx = StepCtx { id, e, may_pick: e.op.is_access(), heur, mutation: None, rho_in_grains: false };
    let mut buf = Vec::new();
    let mut races = Vec::new();
    gp_successors(&cx, &state.key, &state.rho, None, &mut buf, &mut |a| races.push((a.e1, a.e2)));
    let succ = buf
        .into_iter()
        .map(|n| GrainsPrefixState { key: n.key.unwrap_or_else(|| state.key.clone()), rho: n.rho })
        .collect();
    (succ, races)
}

impl GrainsPrefixDetector {
    /// Every state currently held.
    pub fn snapshot(&self) -> Vec<GrainsPrefixState> {
        self.frontier.iter().map(|(k, t)| GrainsPrefixState { key: k.clone(), rho: t.rho.clone() }).collect()
    }
}

pub fn detect_granular_races_with(trace: &Trace, cfg: GrainsConfig) -> RaceSet {
    let mut d = GrainsPrefixDetector::new(cfg);
    let mut out = Vec::new();
    for l in trace.labels() {
        d.step(l, &mut out);
    }
    out.into_iter().collect()
}

pub fn detect_granular_races(trace: &Trace, heur: HeuristicConfig, antichain: bool) -> RaceSet {
    detect_granular_races_with(
        trace,
        GrainsConfig { heur, antichain, threads: Some(trace.num_threads()), ..Default::default() },
    )
}

/// Runs the detector in witness mode and returns every accepted run.
pub fn granular_witnesses(trace: &Trace, heur: HeuristicConfig) -> Vec<AcceptedWitness> {
    granular_witnesses_with(trace, GrainsConfig { heur, threads: Some(trace.num_threads()), ..Default::default() })
}

pub fn granular_witnesses_with(trace: &Trace, cfg: GrainsConfig) -> Vec<AcceptedWitness> {
    let mut d = GrainsPrefixDetector::new(GrainsConfig { witnesses: true, ..cfg });
    let mut out = Vec::new();
    for l in trace.labels() {
        d.step(l, &mut out);
    }
    d.take_witnesses()
}

/// Replays an accepted run: `ρ` must be a sequential prefix, `g1·g2·e2`
/// must be enabled after it with `g1` before `g2`, and `(e1, e2)` must be a
/// commutativity race inside `g1·g2·e2`.
pub fn check_witness(trace: &Trace, w: &AcceptedWitness) -> Result<(), String> {
    match crate::oracle::Replayer::new(trace) {
        Some(r) => replay_witness(trace, &r, w),
        None => Err("trace too long to replay".into()),
    }
}

/// Checks every witness; returns the failures with their index.
pub fn check_witnesses(trace: &Trace, ws: &[AcceptedWitness]) -> Vec<(usize, String)> {
    let Some(r) = crate::oracle::Replayer::new(trace) else {
        return ws.iter().enumerate().map(|(i, _)| (i, "trace too long to replay".to_string())).collect();
    };
    ws.iter().enumerate().filter_map(|(i, w)| replay_witness(trace, &r, w).err().map(|m| (i, m))).collect()
}

fn replay_witness(trace: &Trace, replayer: &crate::oracle::Replayer, w: &AcceptedWitness) -> Result<(), String> {
    let run = &w.run;
    let sorted = |v: &[EventId]| v.windows(2).all(|p| p[0] < p[1]);
    if !sorted(&run.rho) || !sorted(&run.g1) || !sorted(&run.g2) {
        return Err("components out of trace order".into());
    }
    if let (Some(a), Some(b)) = (run.g1.last(), run.g2.first()) {
        if a >= b {
            return Err("g1 does not precede g2".into());
        }
    }
    if !run.g1.contains(&w.e1) {
        return Err("e1 not in g1".into());
    }
    if run.g2.last().is_some_and(|&l| l >= w.e2) || run.g1.last().is_some_and(|&l| l >= w.e2) {
        return Err("e2 does not follow the grains".into());
    }
    if !replayer.is_seqp_prefix(&run.rho) {
        return Err("rho is not a sequential prefix".into());
    }
    let mut tail: Vec<EventId> = run.g1.iter().chain(&run.g2).copied().collect();
    tail.push(w.e2);
    if !replayer.is_enabled_after(&run.rho, &tail) {
        return Err(format!("g1 g2 e2 not enabled after rho: {run:?} e2={}", w.e2));
    }
    let word: Vec<EventLabel> = tail.iter().map(|&e| trace.label(e)).collect();
    let i = tail.iter().position(|&e| e == w.e1).unwrap();
    if !crate::mrace_in_word(&word, i, word.len() - 1) {
        return Err("not a commutativity race inside the grains".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::seqp::detect_prefix_races;

    fn off(t: &Trace) -> RaceSet {
        detect_granular_races(t, HeuristicConfig::off(), true)
    }

    #[test]
    fn fig3a_found_by_grains_only() {
        let t = fixtures::fig3a();
        assert!(off(&t).contains(&(1, 5)));
        assert!(!detect_prefix_races(&t, true).contains(&(1, 5)));
    }

    #[test]
    fn tr7_pair() {
        assert!(off(&fixtures::tr7()).contains(&(3, 8)));
    }

    #[test]
    fn contains_prefix_races_on_fixtures() {
        for (name, text) in fixtures::ALL {
            let t = crate::parse_trace(text).unwrap();
            let p = detect_prefix_races(&t, true);
            let g = off(&t);
            assert!(p.is_subset(&g), "{name}: {:?}", p.difference(&g).collect::<Vec<_>>());
        }
    }

    #[test]
    fn antichain_does_not_change_result() {
        for (_, text) in fixtures::ALL {
            let t = crate::parse_trace(text).unwrap();
            assert_eq!(off(&t), detect_granular_races(&t, HeuristicConfig::off(), false));
        }
    }

    #[test]
    fn witnesses_replay() {
        for (name, text) in fixtures::ALL {
            let t = crate::parse_trace(text).unwrap();
            for w in granular_witnesses(&t, HeuristicConfig::off()) {
                check_witness(&t, &w).unwrap_or_else(|m| panic!("{name}: {m}"));
            }
        }
    }

    #[test]
    fn lru_examples() {
        let t = fixtures::fig3a();
        let one = HeuristicConfig { lru: Some(1), ..Default::default() };
        assert_eq!(detect_granular_races(&t, one, true), off(&t));

        let mut f: Frontier<GpKey, Tracked> = Frontier::new(true);
        let mut stamps = DetMap::default();
        for c in 0..101usize {
            let mut k = GpKey::initial();
            k.e1 = Some(Candidate { id: c, label: EventLabel::new(0, Op::Write(0)) });
            f.insert(k, Tracked { rho: GpRho::default(), witness: None });
            stamps.insert(c, c as u64 + 1);
        }
        f.insert(GpKey::initial(), Tracked { rho: GpRho::default(), witness: None });
        lru_evict(&mut f, &mut stamps, 100);
        assert_eq!(f.len(), 101);
        assert!(!stamps.contains_key(&0));
        assert!(f.iter().all(|(k, _)| k.e1.is_none_or(|c| c.id != 0)));
        let mut few = stamps.clone();
        few.retain(|c, _| *c < 4);
        let before = few.len();
        lru_evict(&mut f, &mut few, 100);
        assert_eq!(few.len(), before);
    }

    #[test]
    fn subsumption_examples() {
        let a = GpRho::default();
        let mut b = GpRho::default();
        b.prefix.excl_threads.insert(1);
        assert!(a.le(&b) && a.le(&a) && !b.le(&a));
        let mut k1 = GpKey::initial();
        let k2 = GpKey { phase: Phase::Between, ..GpKey::initial() };
        assert_ne!(k1, k2);
        k1.phase = Phase::Between;
        assert_eq!(k1, k2);
    }
}
