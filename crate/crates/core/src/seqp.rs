//! Streaming prefix-race detection: on-the-fly simulation of the nondeterministic
//! automaton that guesses a sequential-order-preserving prefix and a candidate
//! `e1`, pruned to an antichain of minimal prefix summaries.

use crate::frontier::{Frontier, Summary};
use crate::idset::IdSet;
use crate::partition::Partition;
use crate::trace::{conflicting, EventId, EventLabel, Op, Trace};
use std::collections::BTreeSet;

/// Constant-size summary of a guessed prefix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PrefixSummary {
    /// Threads with at least one excluded event.
    pub excl_threads: IdSet,
    /// Locks whose last included acquire has no included release.
    pub open_locks: IdSet,
    /// Locations whose latest write so far is excluded.
    pub excl_last_wrs: IdSet,
}

impl Summary for PrefixSummary {
    #[inline]
    fn le(&self, o: &Self) -> bool {
        self.excl_threads.is_subset(&o.excl_threads)
            && self.open_locks.is_subset(&o.open_locks)
            && self.excl_last_wrs.is_subset(&o.excl_last_wrs)
    }
}

impl PrefixSummary {
    #[inline]
    pub fn can_include(&self, e: EventLabel) -> bool {
        if self.excl_threads.contains(e.thread) {
            return false;
        }
        match e.op {
            Op::Acquire(l) => !self.open_locks.contains(l),
            Op::Read(x) => !self.excl_last_wrs.contains(x),
            _ => true,
        }
    }

    #[inline]
    pub fn include(&mut self, e: EventLabel) {
        match e.op {
            Op::Acquire(l) => {
                self.open_locks.insert(l);
            }
            Op::Release(l) => {
                self.open_locks.remove(l);
            }
            Op::Write(x) => {
                self.excl_last_wrs.remove(x);
            }
            Op::Read(_) => {}
        }
    }

    /// A release whose acquire was included leaves the lock open for good.
    #[inline]
    pub fn exclude(&mut self, e: EventLabel) {
        self.excl_threads.insert(e.thread);
        if let Op::Write(x) = e.op {
            self.excl_last_wrs.insert(x);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candidate {
    pub id: EventId,
    pub label: EventLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeqpState {
    pub e1: Option<Candidate>,
    pub rho: PrefixSummary,
}

impl SeqpState {
    pub fn initial() -> Self {
        SeqpState { e1: None, rho: PrefixSummary::default() }
    }
}

pub fn seqp_subsumes(p: &SeqpState, q: &SeqpState) -> bool {
    p.e1 == q.e1 && p.rho.le(&q.rho)
}

/// All successors of `state` on event `(id, e)`. Races completed by `e` are
/// appended to `races`. `may_pick` restricts which accesses may become `e1`.
pub fn seqp_step(
    state: &SeqpState,
    id: EventId,
    e: EventLabel,
    may_pick: bool,
    succ: &mut Vec<SeqpState>,
    races: &mut Vec<(EventId, EventId)>,
) {
    let rho = &state.rho;
    if let Some(c) = state.e1 {
        if conflicting(c.label, e) && c.label.thread != e.thread && !rho.excl_threads.contains(e.thread) {
            races.push((c.id, id));
        }
    }
    if rho.can_include(e) {
        let mut r = rho.clone();
        r.include(e);
        succ.push(SeqpState { e1: state.e1, rho: r });
    }
    let mut r = rho.clone();
    r.exclude(e);
    if state.e1.is_none() && may_pick && e.op.is_access() && !rho.excl_threads.contains(e.thread) {
        succ.push(SeqpState { e1: Some(Candidate { id, label: e }), rho: r.clone() });
    }
    succ.push(SeqpState { e1: state.e1, rho: r });
}

#[derive(Clone, Debug)]
pub struct SeqpConfig {
    pub antichain: bool,
    /// Only accesses to locations owned by this partition may become `e1`.
    pub partition: Partition,
    /// Total number of threads, when known; enables dropping dead candidates.
    pub threads: Option<u32>,
}

impl Default for SeqpConfig {
    fn default() -> Self {
        SeqpConfig { antichain: true, partition: Partition::whole(), threads: None }
    }
}

pub struct SeqpDetector {
    cfg: SeqpConfig,
    frontier: Frontier<Option<Candidate>, PrefixSummary>,
    all_threads: Option<IdSet>,
    next: EventId,
    peak: usize,
    succ: Vec<SeqpState>,
    step_races: Vec<(EventId, EventId)>,
}

impl SeqpDetector {
    pub fn new(cfg: SeqpConfig) -> Self {
        let mut frontier = Frontier::new(cfg.antichain);
        frontier.insert(None, PrefixSummary::default());
        SeqpDetector {
            all_threads: cfg.threads.map(IdSet::full),
            cfg,
            frontier,
            next: 0,
            peak: 1,
            succ: Vec::new(),
            step_races: Vec::new(),
        }
    }

    pub fn states(&self) -> usize {
        self.frontier.len()
    }

    pub fn peak_states(&self) -> usize {
        self.peak
    }

    pub fn frontier(&self) -> &Frontier<Option<Candidate>, PrefixSummary> {
        &self.frontier
    }

    /// Feeds the next event; each race it completes is appended once.
    pub fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        let id = self.next;
        self.next += 1;
        let may_pick = e.op.loc().is_some_and(|x| self.cfg.partition.owns(x));
        self.step_races.clear();
        let (succ, races, all) = (&mut self.succ, &mut self.step_races, &self.all_threads);
        self.frontier.advance(|key, rho, same, moved| {
            let st = SeqpState { e1: *key, rho };
            succ.clear();
            seqp_step(&st, id, e, may_pick, succ, races);
            for s in succ.drain(..) {
                if s.e1.is_some() {
                    if let Some(all) = all {
                        if all.is_subset(&s.rho.excl_threads) {
                            continue;
                        }
                    }
                }
                if s.e1 == *key {
                    same.push(s.rho);
                } else {
                    moved.push((s.e1, s.rho));
                }
            }
        });
        self.step_races.sort_unstable();
        self.step_races.dedup();
        out.extend_from_slice(&self.step_races);
        self.peak = self.peak.max(self.frontier.len());
    }
}

pub fn detect_prefix_races_with(trace: &Trace, cfg: SeqpConfig) -> BTreeSet<(EventId, EventId)> {
    let mut d = SeqpDetector::new(cfg);
    let mut out = Vec::new();
    for l in trace.labels() {
        d.step(l, &mut out);
    }
    out.into_iter().collect()
}

pub fn detect_prefix_races(trace: &Trace, antichain: bool) -> BTreeSet<(EventId, EventId)> {
    detect_prefix_races_with(trace, SeqpConfig { antichain, threads: Some(trace.num_threads()), ..Default::default() })
}
