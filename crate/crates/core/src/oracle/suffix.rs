//! Enabled sequences after a prefix, maximal suffixes, and the granular
//! prefix race definition built on them.
//!
//! A sequence `τ` (in trace order, disjoint from the prefix `ρ`) is enabled
//! after `ρ` when `ρ ∪ τ` is closed under program order, `ρ·τ` is well-formed,
//! and every read of `τ` observes its original writer unless it is the last
//! event of its thread in `τ`. Such a last read may observe a different
//! writer, or none at all.

use super::{Clock, Ctx, OracleBudget, OracleError, OracleResult, Replay};
use crate::frontier::DetSet;
use crate::mrace_in_word;
use crate::trace::{conflicting, EventId, EventLabel, Op, Trace};
use crate::RaceSet;

/// All sequences enabled after the prefix `rho`, as event masks.
pub(crate) fn enabled_suffix_masks(ctx: &Ctx, rho: u64, clock: &mut Clock) -> OracleResult<Vec<u64>> {
    let start = Replay::of_mask(ctx, rho).expect("prefix replays");
    let rest: Vec<EventId> = (0..ctx.n).filter(|&e| rho >> e & 1 == 0).collect();
    let mut out = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn go(
        ctx: &Ctx,
        rest: &[EventId],
        k: usize,
        mask: u64,
        r: &Replay,
        blocked: u64,
        closed: u64,
        clock: &mut Clock,
        out: &mut Vec<u64>,
    ) -> OracleResult<()> {
        clock.tick()?;
        let Some(&e) = rest.get(k) else {
            out.push(mask);
            return Ok(());
        };
        let l = ctx.labels[e];
        let tbit = 1u64 << l.thread;
        if (blocked | closed) & tbit == 0 {
            let mut r2 = r.clone();
            let mut closed2 = closed;
            let ok = match l.op {
                Op::Read(x) => {
                    if r.last_write[x as usize] != ctx.rf[e] {
                        closed2 |= tbit;
                    }
                    true
                }
                _ => r2.apply(ctx, e),
            };
            if ok {
                go(ctx, rest, k + 1, mask | 1 << e, &r2, blocked, closed2, clock, out)?;
            }
        }
        go(ctx, rest, k + 1, mask, r, blocked | tbit, closed, clock, out)
    }
    go(ctx, &rest, 0, 0, &start, 0, 0, clock, &mut out)?;
    Ok(out)
}

pub(crate) fn maximal(mut masks: Vec<u64>) -> Vec<u64> {
    masks.sort_unstable_by(|a, b| b.count_ones().cmp(&a.count_ones()).then(a.cmp(b)));
    masks.dedup();
    let mut kept: Vec<u64> = Vec::new();
    for m in masks {
        if !kept.iter().any(|&k| m & !k == 0) {
            kept.push(m);
        }
    }
    kept
}

/// Whether `tau` (trace order) is enabled after the prefix `rho`.
pub fn is_enabled_after(trace: &Trace, rho: &[EventId], tau: &[EventId]) -> bool {
    let Ok(ctx) = Ctx::new(trace, &OracleBudget::with_max_events(63)) else { return false };
    enabled_after(&ctx, rho, tau)
}

pub(crate) fn enabled_after(ctx: &Ctx, rho: &[EventId], tau: &[EventId]) -> bool {
    let rmask = rho.iter().fold(0u64, |m, &e| m | 1 << e);
    let tmask = tau.iter().fold(0u64, |m, &e| m | 1 << e);
    if rmask & tmask != 0 || !tau.windows(2).all(|w| w[0] < w[1]) || !ctx.po_closed(rmask | tmask) {
        return false;
    }
    let Some(mut r) = Replay::of_mask(ctx, rmask) else { return false };
    let mut closed = 0u64;
    for &e in tau {
        let l = ctx.labels[e];
        if closed >> l.thread & 1 == 1 {
            return false;
        }
        match l.op {
            Op::Read(x) => {
                if r.last_write[x as usize] != ctx.rf[e] {
                    closed |= 1 << l.thread;
                }
            }
            _ => {
                if !r.apply(ctx, e) {
                    return false;
                }
            }
        }
    }
    true
}

/// All enabled sequences after a prefix given as event ids.
pub fn enabled_suffixes(trace: &Trace, prefix: &[EventId], budget: &OracleBudget) -> OracleResult<Vec<Vec<EventId>>> {
    let ctx = Ctx::new(trace, budget)?;
    let rho = prefix.iter().fold(0u64, |m, &e| m | 1 << e);
    assert!(ctx.seqp_prefix(rho) && ctx.po_closed(rho), "not a sequential prefix");
    let masks = enabled_suffix_masks(&ctx, rho, &mut Clock::new(budget))?;
    Ok(masks.into_iter().map(|m| Ctx::ids(m).collect()).collect())
}

/// The inclusion-maximal enabled sequences after a sequential prefix.
pub fn oracle_maximal_suffixes(
    trace: &Trace,
    prefix: &[EventId],
    budget: &OracleBudget,
) -> OracleResult<Vec<Vec<EventId>>> {
    let ctx = Ctx::new(trace, budget)?;
    let rho = prefix.iter().fold(0u64, |m, &e| m | 1 << e);
    assert!(ctx.seqp_prefix(rho) && ctx.po_closed(rho), "not a sequential prefix");
    let masks = enabled_suffix_masks(&ctx, rho, &mut Clock::new(budget))?;
    Ok(maximal(masks).into_iter().map(|m| Ctx::ids(m).collect()).collect())
}

fn mraces_in(ctx: &Ctx, ids: &[EventId], out: &mut RaceSet) {
    let word: Vec<EventLabel> = ids.iter().map(|&e| ctx.labels[e]).collect();
    for i in 0..word.len() {
        for j in i + 1..word.len() {
            if word[i].thread != word[j].thread
                && conflicting(word[i], word[j])
                && !out.contains(&(ids[i], ids[j]))
                && mrace_in_word(&word, i, j)
            {
                out.insert((ids[i], ids[j]));
            }
        }
    }
}

/// Pairs forming a commutativity race inside some maximal suffix of some
/// sequential prefix.
pub fn oracle_maximal_suffix_mraces(trace: &Trace, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let mut out = RaceSet::new();
    for rho in super::seqp_prefix_masks(&ctx, &mut clock)? {
        for tau in maximal(enabled_suffix_masks(&ctx, rho, &mut clock)?) {
            let ids: Vec<EventId> = Ctx::ids(tau).collect();
            mraces_in(&ctx, &ids, &mut out);
        }
    }
    Ok(out)
}

/// Granular prefix races: a sequential prefix `ρ`, contiguous windows `g1`,
/// `g2` of maximal suffixes of `ρ` with `g1` entirely before `g2`, `g1·g2`
/// enabled after `ρ`, and `(e1, e2)` a commutativity race in `g1·g2`.
pub fn oracle_granular_races(trace: &Trace, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let mut out = RaceSet::new();
    let access_mask = (0..ctx.n).filter(|&e| ctx.labels[e].op.is_access()).fold(0u64, |m, e| m | 1 << e);
    for rho in super::seqp_prefix_masks(&ctx, &mut clock)? {
        let all = enabled_suffix_masks(&ctx, rho, &mut clock)?;
        let enabled: DetSet<u64> = all.iter().copied().collect();
        let mut windows: DetSet<u64> = DetSet::default();
        for tau in maximal(all) {
            let ids: Vec<EventId> = Ctx::ids(tau).collect();
            for a in 0..ids.len() {
                let mut w = 0u64;
                for &e in &ids[a..] {
                    w |= 1 << e;
                    if w & access_mask != 0 {
                        windows.insert(w);
                    }
                }
            }
        }
        let windows: Vec<u64> = windows.into_iter().collect();
        for &g1 in &windows {
            let hi = 63 - g1.leading_zeros();
            for &g2 in &windows {
                clock.tick()?;
                if g2.trailing_zeros() <= hi {
                    continue;
                }
                let u = g1 | g2;
                if !enabled.contains(&u) {
                    continue;
                }
                let ids: Vec<EventId> = Ctx::ids(u).collect();
                let word: Vec<EventLabel> = ids.iter().map(|&e| ctx.labels[e]).collect();
                for i in 0..ids.len() {
                    if g1 >> ids[i] & 1 == 0 {
                        continue;
                    }
                    for j in i + 1..ids.len() {
                        if g2 >> ids[j] & 1 == 0 {
                            continue;
                        }
                        let pair = (ids[i], ids[j]);
                        if word[i].thread != word[j].thread
                            && conflicting(word[i], word[j])
                            && !out.contains(&pair)
                            && mrace_in_word(&word, i, j)
                        {
                            out.insert(pair);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Checks that races of `ρ·τ`, run on its own for every sequential prefix `ρ`
/// and maximal suffix `τ`, are predictable races of the whole trace. Returns
/// the offending pairs (in trace ids). `ρ·τ` runs that are not well-formed on
/// their own (a final read without any writer) are skipped.
pub fn suffix_soundness_violations(trace: &Trace, budget: &OracleBudget) -> OracleResult<Vec<(EventId, EventId)>> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let whole = super::oracle_predictable_races(trace, budget)?;
    let mut bad = Vec::new();
    for rho in super::seqp_prefix_masks(&ctx, &mut clock)? {
        for tau in maximal(enabled_suffix_masks(&ctx, rho, &mut clock)?) {
            let order: Vec<EventId> = Ctx::ids(rho).chain(Ctx::ids(tau)).collect();
            let standalone = Trace::from_labels(trace.alphabet.clone(), order.iter().map(|&e| ctx.labels[e]));
            if crate::validate_wellformed(&standalone).is_err() {
                continue;
            }
            let local = match super::oracle_predictable_races(&standalone, budget) {
                Ok(r) => r,
                Err(OracleError::Timeout) => return Err(OracleError::Timeout),
                Err(e) => return Err(e),
            };
            for (a, b) in local {
                let (ea, eb) = (order[a], order[b]);
                if tau >> ea & 1 == 1 && tau >> eb & 1 == 1 && !whole.contains(&(ea.min(eb), ea.max(eb))) {
                    bad.push((ea.min(eb), ea.max(eb)));
                }
            }
        }
    }
    Ok(bad)
}
