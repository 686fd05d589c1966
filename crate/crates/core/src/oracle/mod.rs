//! Exponential-time reference implementations for small traces.
//!
//! Event sets are `u64` bitmasks over event ids, so every oracle refuses
//! traces longer than its budget allows (and never more than 63 events).

mod grain;
mod suffix;

pub use grain::{
    contiguous_partitions, grain_closure_linearizations, oracle_augmented_prefix_races, oracle_grain_races,
    set_partitions, AugmentedResult, GrainGraph,
};
pub use suffix::{
    enabled_suffixes, is_enabled_after, oracle_granular_races, oracle_maximal_suffix_mraces, oracle_maximal_suffixes,
    suffix_soundness_violations,
};

use crate::frontier::DetSet;
use crate::trace::{conflicting, labels_wellformed, reads_from_vec, EventId, EventLabel, Op, Trace};
use crate::RaceSet;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_events: usize,
    pub max_reorderings: usize,
    pub time_limit: Option<Duration>,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_events: 12, max_reorderings: 5_000_000, time_limit: None }
    }
}

impl OracleBudget {
    /// The tighter budget used where suffix or grain enumeration multiplies.
    pub fn tight() -> Self {
        OracleBudget { max_events: 9, ..Default::default() }
    }

    pub fn with_max_events(max_events: usize) -> Self {
        OracleBudget { max_events, ..Default::default() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("trace has {events} events, oracle budget allows {max}")]
    TooManyEvents { events: usize, max: usize },
    #[error("more than {0} reorderings")]
    TooManyReorderings(usize),
    #[error("oracle wall-clock budget exhausted")]
    Timeout,
}

pub type OracleResult<T> = Result<T, OracleError>;

pub(crate) struct Clock {
    start: Instant,
    limit: Option<Duration>,
    ticks: u32,
}

impl Clock {
    pub(crate) fn new(b: &OracleBudget) -> Self {
        Clock { start: Instant::now(), limit: b.time_limit, ticks: 0 }
    }

    #[inline]
    pub(crate) fn tick(&mut self) -> OracleResult<()> {
        self.ticks = self.ticks.wrapping_add(1);
        if self.ticks.is_multiple_of(1024) {
            if let Some(l) = self.limit {
                if self.start.elapsed() > l {
                    return Err(OracleError::Timeout);
                }
            }
        }
        Ok(())
    }
}

/// Precomputed per-trace tables shared by the oracles.
pub(crate) struct Ctx {
    pub n: usize,
    pub labels: Vec<EventLabel>,
    pub rf: Vec<Option<EventId>>,
    pub per_thread: Vec<Vec<EventId>>,
    pub nx: usize,
    pub nl: usize,
}

impl Ctx {
    pub(crate) fn new(trace: &Trace, budget: &OracleBudget) -> OracleResult<Self> {
        let n = trace.len();
        let max = budget.max_events.min(63);
        if n > max {
            return Err(OracleError::TooManyEvents { events: n, max });
        }
        let labels: Vec<EventLabel> = trace.labels().collect();
        let nt = trace.num_threads() as usize;
        let mut per_thread = vec![Vec::new(); nt];
        for (i, l) in labels.iter().enumerate() {
            per_thread[l.thread as usize].push(i);
        }
        Ok(Ctx {
            n,
            rf: reads_from_vec(trace),
            labels,
            per_thread,
            nx: trace.num_locations() as usize,
            nl: trace.num_locks() as usize,
        })
    }

    pub(crate) fn nt(&self) -> usize {
        self.per_thread.len()
    }

    /// Event ids of a mask, in trace order.
    pub(crate) fn ids(mask: u64) -> impl Iterator<Item = EventId> {
        let mut m = mask;
        std::iter::from_fn(move || {
            if m == 0 {
                return None;
            }
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        })
    }

    /// Mask of the first `k` events of thread `t`.
    pub(crate) fn thread_prefix(&self, t: usize, k: usize) -> u64 {
        self.per_thread[t][..k].iter().fold(0, |m, &e| m | 1 << e)
    }

    /// Whether every thread's events in `mask` form a prefix of that thread.
    pub(crate) fn po_closed(&self, mask: u64) -> bool {
        self.per_thread.iter().all(|evs| {
            let k = evs.iter().take_while(|&&e| mask >> e & 1 == 1).count();
            evs[k..].iter().all(|&e| mask >> e & 1 == 0)
        })
    }

    /// The next event of each thread not in `mask` (mask assumed po-closed).
    pub(crate) fn enabled(&self, mask: u64) -> Vec<EventId> {
        self.per_thread.iter().filter_map(|evs| evs.iter().copied().find(|&e| mask >> e & 1 == 0)).collect()
    }

    /// Conflicting pairs of distinct-thread events in `evs`, as (smaller, larger).
    pub(crate) fn racy_pairs(&self, evs: &[EventId], out: &mut RaceSet) {
        for (i, &a) in evs.iter().enumerate() {
            for &b in &evs[i + 1..] {
                let (la, lb) = (self.labels[a], self.labels[b]);
                if la.thread != lb.thread && conflicting(la, lb) {
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
    }

    /// Whether the trace-order linearization of `mask` is well-formed and
    /// every included read still observes its original writer.
    pub(crate) fn seqp_prefix(&self, mask: u64) -> bool {
        if !labels_wellformed(Ctx::ids(mask).map(|e| self.labels[e])) {
            return false;
        }
        Ctx::ids(mask).all(|e| match self.rf[e] {
            Some(w) => mask >> w & 1 == 1,
            None => true,
        })
    }
}

/// Incremental replay state of a run under construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Replay {
    pub last_write: Vec<Option<EventId>>,
    pub holder: Vec<Option<u32>>,
}

impl Replay {
    pub(crate) fn new(ctx: &Ctx) -> Self {
        Replay { last_write: vec![None; ctx.nx], holder: vec![None; ctx.nl] }
    }

    /// Applies event `e`, returning false (state unspecified) when the step is
    /// not well-formed. Reads are only checked for having some writer.
    pub(crate) fn apply(&mut self, ctx: &Ctx, e: EventId) -> bool {
        let l = ctx.labels[e];
        match l.op {
            Op::Write(x) => {
                self.last_write[x as usize] = Some(e);
                true
            }
            Op::Read(x) => self.last_write[x as usize].is_some(),
            Op::Acquire(k) => {
                let h = &mut self.holder[k as usize];
                if h.is_some() {
                    return false;
                }
                *h = Some(l.thread);
                true
            }
            Op::Release(k) => {
                let h = &mut self.holder[k as usize];
                if *h != Some(l.thread) {
                    return false;
                }
                *h = None;
                true
            }
        }
    }

    /// Replays a whole mask in trace order.
    pub(crate) fn of_mask(ctx: &Ctx, mask: u64) -> Option<Self> {
        let mut r = Replay::new(ctx);
        Ctx::ids(mask).all(|e| r.apply(ctx, e)).then_some(r)
    }
}

/// Whether `seq` is a correct reordering: well-formed, per-thread prefixes of
/// the trace, and every read observes its original writer.
pub fn is_correct_reordering(trace: &Trace, seq: &[EventId]) -> bool {
    let ctx = match Ctx::new(trace, &OracleBudget::with_max_events(63)) {
        Ok(c) => c,
        Err(_) => return false,
    };
    correct_reordering(&ctx, seq)
}

pub(crate) fn correct_reordering(ctx: &Ctx, seq: &[EventId]) -> bool {
    let mut next = vec![0usize; ctx.nt()];
    let mut r = Replay::new(ctx);
    for &e in seq {
        let t = ctx.labels[e].thread as usize;
        if ctx.per_thread[t].get(next[t]) != Some(&e) {
            return false;
        }
        next[t] += 1;
        if let Op::Read(x) = ctx.labels[e].op {
            if r.last_write[x as usize] != ctx.rf[e] {
                return false;
            }
        }
        if !r.apply(ctx, e) {
            return false;
        }
    }
    true
}

/// Every correct reordering of the trace, as sequences of event ids.
pub fn enumerate_correct_reorderings(trace: &Trace, budget: &OracleBudget) -> OracleResult<Vec<Vec<EventId>>> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let mut out = Vec::new();
    let mut seq = Vec::new();
    let mut next = vec![0usize; ctx.nt()];
    fn go(
        ctx: &Ctx,
        budget: &OracleBudget,
        clock: &mut Clock,
        seq: &mut Vec<EventId>,
        next: &mut Vec<usize>,
        r: &Replay,
        out: &mut Vec<Vec<EventId>>,
    ) -> OracleResult<()> {
        clock.tick()?;
        if out.len() >= budget.max_reorderings {
            return Err(OracleError::TooManyReorderings(budget.max_reorderings));
        }
        out.push(seq.clone());
        for t in 0..ctx.nt() {
            let Some(&e) = ctx.per_thread[t].get(next[t]) else { continue };
            if let Op::Read(x) = ctx.labels[e].op {
                if r.last_write[x as usize] != ctx.rf[e] {
                    continue;
                }
            }
            let mut r2 = r.clone();
            if !r2.apply(ctx, e) {
                continue;
            }
            seq.push(e);
            next[t] += 1;
            go(ctx, budget, clock, seq, next, &r2, out)?;
            next[t] -= 1;
            seq.pop();
        }
        Ok(())
    }
    go(&ctx, budget, &mut clock, &mut seq, &mut next, &Replay::new(&ctx), &mut out)?;
    Ok(out)
}

/// Event sets of all correct reorderings (optionally keeping same-lock
/// acquires in trace order), by memoized search over (set, last writers).
fn reachable_sets(ctx: &Ctx, budget: &OracleBudget, acquire_order: bool) -> OracleResult<DetSet<u64>> {
    let mut clock = Clock::new(budget);
    let mut seen: DetSet<(u64, Vec<Option<EventId>>)> = DetSet::default();
    let mut masks = DetSet::default();
    let mut stack = vec![(0u64, Replay::new(ctx))];
    while let Some((mask, r)) = stack.pop() {
        clock.tick()?;
        if !seen.insert((mask, r.last_write.clone())) {
            continue;
        }
        masks.insert(mask);
        for e in ctx.enabled(mask) {
            match ctx.labels[e].op {
                Op::Read(x) if r.last_write[x as usize] != ctx.rf[e] => continue,
                Op::Acquire(k) if acquire_order => {
                    let later_taken = Ctx::ids(mask).any(|f| f > e && ctx.labels[f].op == Op::Acquire(k));
                    if later_taken {
                        continue;
                    }
                }
                _ => {}
            }
            let mut r2 = r.clone();
            if r2.apply(ctx, e) {
                stack.push((mask | 1 << e, r2));
            }
        }
    }
    Ok(masks)
}

fn enabled_pairs(ctx: &Ctx, masks: impl IntoIterator<Item = u64>) -> RaceSet {
    let mut out = RaceSet::new();
    for m in masks {
        ctx.racy_pairs(&ctx.enabled(m), &mut out);
    }
    out
}

/// All predictable races: pairs simultaneously enabled in a correct reordering.
pub fn oracle_predictable_races(trace: &Trace, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    Ok(enabled_pairs(&ctx, reachable_sets(&ctx, budget, false)?))
}

pub fn oracle_predictable_race(trace: &Trace, e1: EventId, e2: EventId, budget: &OracleBudget) -> OracleResult<bool> {
    Ok(oracle_predictable_races(trace, budget)?.contains(&(e1.min(e2), e1.max(e2))))
}

/// Races enabled by some correct reordering that keeps same-lock acquires in trace order.
pub fn oracle_syncp_prefix_races(trace: &Trace, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    Ok(enabled_pairs(&ctx, reachable_sets(&ctx, budget, true)?))
}

/// Every per-thread-prefix-closed event set whose trace-order linearization
/// is well-formed and preserves reads-from.
pub fn seqp_prefixes(trace: &Trace, budget: &OracleBudget) -> OracleResult<Vec<u64>> {
    let ctx = Ctx::new(trace, budget)?;
    seqp_prefix_masks(&ctx, &mut Clock::new(budget))
}

/// Whether `ids` form a sequential prefix of `trace`.
pub fn is_seqp_prefix(trace: &Trace, ids: &[EventId]) -> bool {
    Replayer::new(trace).is_some_and(|r| r.is_seqp_prefix(ids))
}

/// Membership checks against one trace, sharing the precomputed tables.
pub struct Replayer {
    ctx: Ctx,
}

impl Replayer {
    /// `None` when the trace is too long for mask-based checks.
    pub fn new(trace: &Trace) -> Option<Self> {
        Ctx::new(trace, &OracleBudget::with_max_events(63)).ok().map(|ctx| Replayer { ctx })
    }

    pub fn is_seqp_prefix(&self, ids: &[EventId]) -> bool {
        let mask = ids.iter().fold(0u64, |m, &e| m | 1 << e);
        self.ctx.po_closed(mask) && self.ctx.seqp_prefix(mask)
    }

    /// Whether `tau` (trace order) is enabled after the prefix `rho`.
    pub fn is_enabled_after(&self, rho: &[EventId], tau: &[EventId]) -> bool {
        suffix::enabled_after(&self.ctx, rho, tau)
    }
}

pub(crate) fn seqp_prefix_masks(ctx: &Ctx, clock: &mut Clock) -> OracleResult<Vec<u64>> {
    let mut out = Vec::new();
    let mut lens = vec![0usize; ctx.nt()];
    loop {
        clock.tick()?;
        let mask = lens.iter().enumerate().fold(0, |m, (t, &k)| m | ctx.thread_prefix(t, k));
        if ctx.seqp_prefix(mask) {
            out.push(mask);
        }
        let mut t = 0;
        loop {
            if t == lens.len() {
                return Ok(out);
            }
            if lens[t] < ctx.per_thread[t].len() {
                lens[t] += 1;
                break;
            }
            lens[t] = 0;
            t += 1;
        }
    }
}

pub fn oracle_prefix_races(trace: &Trace, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    let masks = seqp_prefix_masks(&ctx, &mut Clock::new(budget))?;
    Ok(enabled_pairs(&ctx, masks))
}

/// Quadratic reference for the M-race detector: every conflicting pair whose
/// word check succeeds.
pub fn oracle_mraces(trace: &Trace) -> RaceSet {
    let w: Vec<EventLabel> = trace.labels().collect();
    let mut out = RaceSet::new();
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            if w[i].thread != w[j].thread && conflicting(w[i], w[j]) && crate::mrace_in_word(&w, i, j) {
                out.insert((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::trace::TraceBuilder;

    fn build(evs: &[(&str, &str, &str)]) -> Trace {
        let mut b = TraceBuilder::new();
        for (t, o, x) in evs {
            b.event(t, o, x).unwrap();
        }
        b.finish()
    }

    #[test]
    fn reorderings_small() {
        let b = OracleBudget::default();
        let t = build(&[("T1", "w", "x")]);
        let mut r = enumerate_correct_reorderings(&t, &b).unwrap();
        r.sort();
        assert_eq!(r, vec![vec![], vec![0]]);
        let t = build(&[("T1", "w", "x"), ("T2", "w", "y")]);
        let mut r = enumerate_correct_reorderings(&t, &b).unwrap();
        r.sort();
        assert_eq!(r, vec![vec![], vec![0], vec![0, 1], vec![1], vec![1, 0]]);
    }

    #[test]
    fn tr7_contains_swapped_sections() {
        let r = enumerate_correct_reorderings(&fixtures::tr7(), &OracleBudget::default()).unwrap();
        assert!(r.contains(&vec![5, 6, 7, 0, 1, 2, 3]));
    }

    #[test]
    fn budget_is_enforced() {
        let t = fixtures::tr9();
        assert_eq!(
            oracle_prefix_races(&t, &OracleBudget::tight()),
            Err(OracleError::TooManyEvents { events: 21, max: 9 })
        );
        let t = build(&[("T1", "w", "x"), ("T2", "w", "y"), ("T3", "w", "z")]);
        let b = OracleBudget { max_reorderings: 3, ..Default::default() };
        assert_eq!(enumerate_correct_reorderings(&t, &b), Err(OracleError::TooManyReorderings(3)));
    }

    #[test]
    fn predictable_examples() {
        let b = OracleBudget::default();
        assert!(oracle_predictable_race(&fixtures::fig3a(), 1, 5, &b).unwrap());
        let t = build(&[("T1", "w", "x"), ("T1", "r", "x")]);
        assert!(oracle_predictable_races(&t, &b).unwrap().is_empty());
    }

    #[test]
    fn prefix_examples() {
        let b = OracleBudget::default();
        assert!(oracle_prefix_races(&fixtures::fig2(), &b).unwrap().contains(&(0, 4)));
        assert!(!oracle_prefix_races(&fixtures::fig3a(), &b).unwrap().contains(&(1, 5)));
        let t = fixtures::fig2();
        assert_eq!(oracle_syncp_prefix_races(&t, &b).unwrap(), oracle_prefix_races(&t, &b).unwrap());
        let t = fixtures::tr8();
        assert_eq!(oracle_syncp_prefix_races(&t, &b).unwrap(), oracle_prefix_races(&t, &b).unwrap());
    }
}
