//! Grain-level commutativity: partitions of a run into grains, a dependence
//! relation between grains, and the races exposed by reordering grains.
//!
//! Two grains of a run depend on each other when swapping them could break
//! well-formedness or change a reads-from edge:
//! - they share a thread;
//! - both touch a lock and at least one of them does not consist of complete
//!   critical sections on it;
//! - one writes a location that the other reads from outside itself, or
//!   whose writes inside the other are observed outside it.
//!
//! Grains are grouped into strongly connected components (dependent grains
//! whose events interleave in the run); components are reordered along any
//! topological order, each laid out in run order.

use super::{correct_reordering, Clock, Ctx, OracleBudget, OracleResult};
use crate::trace::{conflicting, EventId, Op, Trace};
use crate::RaceSet;

#[derive(Clone, Copy, Debug, Default)]
struct Footprint {
    threads: u64,
    writes: u64,
    ext_reads: u64,
    visible: u64,
    locks: u64,
    unbalanced: u64,
}

fn footprint(ctx: &Ctx, g: u64) -> Footprint {
    let mut f = Footprint::default();
    let mut open: u64 = 0;
    for e in Ctx::ids(g) {
        let l = ctx.labels[e];
        f.threads |= 1 << l.thread;
        match l.op {
            Op::Write(x) => f.writes |= 1 << x,
            Op::Read(x) => {
                if let Some(w) = ctx.rf[e] {
                    if g >> w & 1 == 0 {
                        f.ext_reads |= 1 << x;
                    }
                }
            }
            Op::Acquire(k) => {
                f.locks |= 1 << k;
                if open >> k & 1 == 1 {
                    f.unbalanced |= 1 << k;
                }
                open |= 1 << k;
            }
            Op::Release(k) => {
                f.locks |= 1 << k;
                if open >> k & 1 == 0 {
                    f.unbalanced |= 1 << k;
                }
                open &= !(1 << k);
            }
        }
    }
    f.unbalanced |= open;
    for e in 0..ctx.n {
        if g >> e & 1 == 0 {
            if let (Op::Read(x), Some(w)) = (ctx.labels[e].op, ctx.rf[e]) {
                if g >> w & 1 == 1 {
                    f.visible |= 1 << x;
                }
            }
        }
    }
    f
}

fn dependent(a: &Footprint, b: &Footprint) -> bool {
    a.threads & b.threads != 0
        || a.locks & b.locks & (a.unbalanced | b.unbalanced) != 0
        || a.writes & (b.ext_reads | b.visible) != 0
        || b.writes & (a.ext_reads | a.visible) != 0
}

/// Grain graph of one partition, condensed into components.
pub struct GrainGraph {
    /// Event mask of each component.
    pub components: Vec<u64>,
    /// `succ[c]`: components reachable from `c` by at least one edge.
    pub succ: Vec<u64>,
}

impl GrainGraph {
    pub(crate) fn build(ctx: &Ctx, grains: &[u64]) -> Self {
        let fps: Vec<Footprint> = grains.iter().map(|&g| footprint(ctx, g)).collect();
        Self::build_from(grains, |i| fps[i])
    }

    /// `fp(i)` is the footprint of `grains[i]`.
    fn build_from(grains: &[u64], fp: impl Fn(usize) -> Footprint) -> Self {
        let k = grains.len();
        let mut fps = [Footprint::default(); 64];
        for (i, f) in fps.iter_mut().enumerate().take(k) {
            *f = fp(i);
        }
        let mut reach = [0u64; 64];
        for i in 0..k {
            for j in 0..k {
                let before = grains[i].trailing_zeros() < 63 - grains[j].leading_zeros();
                if i != j && before && dependent(&fps[i], &fps[j]) {
                    reach[i] |= 1 << j;
                }
            }
        }
        loop {
            let mut changed = false;
            for i in 0..k {
                let mut r = reach[i];
                for j in Ctx::ids(reach[i]) {
                    r |= reach[j];
                }
                if r != reach[i] {
                    reach[i] = r;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut comp_of = [usize::MAX; 64];
        let mut members: Vec<u64> = Vec::with_capacity(k);
        for i in 0..k {
            if comp_of[i] != usize::MAX {
                continue;
            }
            let c = members.len();
            let mut m = 1u64 << i;
            for j in i + 1..k {
                if reach[i] >> j & 1 == 1 && reach[j] >> i & 1 == 1 {
                    m |= 1 << j;
                }
            }
            for j in Ctx::ids(m) {
                comp_of[j] = c;
            }
            members.push(m);
        }
        let components: Vec<u64> = members.iter().map(|&m| Ctx::ids(m).fold(0, |a, g| a | grains[g])).collect();
        let succ = members
            .iter()
            .enumerate()
            .map(|(c, &m)| {
                let r = Ctx::ids(m).fold(0u64, |a, g| a | reach[g]);
                Ctx::ids(r).fold(0u64, |a, g| a | 1 << comp_of[g]) & !(1 << c)
            })
            .collect();
        GrainGraph { components, succ }
    }

    /// Pairs of events that are adjacent in some linearization.
    pub(crate) fn adjacent_pairs(&self, mut f: impl FnMut(EventId, EventId)) {
        let n = self.components.len();
        for c in 0..n {
            let ids: Vec<EventId> = Ctx::ids(self.components[c]).collect();
            for w in ids.windows(2) {
                f(w[0], w[1]);
            }
        }
        for a in 0..n {
            for b in 0..n {
                if a == b || self.succ[b] >> a & 1 == 1 {
                    continue;
                }
                let between = Ctx::ids(self.succ[a]).any(|c| self.succ[c] >> b & 1 == 1);
                if !between {
                    let last = 63 - self.components[a].leading_zeros() as usize;
                    let first = self.components[b].trailing_zeros() as usize;
                    f(last, first);
                }
            }
        }
    }

    /// Up to `cap` linearizations (topological orders of the components).
    pub fn linearizations(&self, cap: usize) -> Vec<Vec<EventId>> {
        let n = self.components.len();
        let mut preds = vec![0u64; n];
        for a in 0..n {
            for b in Ctx::ids(self.succ[a]) {
                preds[b] |= 1 << a;
            }
        }
        let mut out = Vec::new();
        let mut order = Vec::new();
        fn go(
            g: &GrainGraph,
            preds: &[u64],
            placed: u64,
            order: &mut Vec<usize>,
            cap: usize,
            out: &mut Vec<Vec<EventId>>,
        ) {
            if out.len() >= cap {
                return;
            }
            if order.len() == g.components.len() {
                out.push(order.iter().flat_map(|&c| Ctx::ids(g.components[c])).collect());
                return;
            }
            for c in 0..g.components.len() {
                if placed >> c & 1 == 0 && preds[c] & !placed == 0 {
                    order.push(c);
                    go(g, preds, placed | 1 << c, order, cap, out);
                    order.pop();
                }
            }
        }
        go(self, &preds, 0, &mut order, cap, &mut out);
        out
    }
}

/// All partitions of `0..n` into contiguous blocks.
pub fn contiguous_partitions(n: usize) -> Vec<Vec<u64>> {
    if n == 0 {
        return vec![vec![]];
    }
    (0..1u64 << (n - 1))
        .map(|cuts| {
            let mut parts = Vec::new();
            let mut cur = 0u64;
            for e in 0..n {
                cur |= 1 << e;
                if e + 1 == n || cuts >> e & 1 == 1 {
                    parts.push(cur);
                    cur = 0;
                }
            }
            parts
        })
        .collect()
}

/// Calls `f` on every partition of `0..n` into nonempty blocks.
pub fn set_partitions(n: usize, mut f: impl FnMut(&[u64])) {
    fn go(e: usize, n: usize, blocks: &mut Vec<u64>, f: &mut dyn FnMut(&[u64])) {
        if e == n {
            f(blocks);
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << e;
            go(e + 1, n, blocks, f);
            blocks[b] &= !(1 << e);
        }
        blocks.push(1 << e);
        go(e + 1, n, blocks, f);
        blocks.pop();
    }
    go(0, n, &mut Vec::new(), &mut f);
}

fn collect_adjacent(ctx: &Ctx, g: &GrainGraph, out: &mut RaceSet) {
    g.adjacent_pairs(|a, b| {
        let (la, lb) = (ctx.labels[a], ctx.labels[b]);
        if la.thread != lb.thread && conflicting(la, lb) {
            out.insert((a.min(b), a.max(b)));
        }
    });
}

/// Conflicting pairs made adjacent by reordering grains, over all partitions
/// into contiguous grains (`scattered = false`) or arbitrary ones.
pub fn oracle_grain_races(trace: &Trace, scattered: bool, budget: &OracleBudget) -> OracleResult<RaceSet> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let mut out = RaceSet::new();
    if scattered {
        let table: Vec<Footprint> = (0..1u64 << ctx.n).map(|g| footprint(&ctx, g)).collect();
        let mut err = None;
        set_partitions(ctx.n, |p| {
            if err.is_some() {
                return;
            }
            if let Err(e) = clock.tick() {
                err = Some(e);
                return;
            }
            collect_adjacent(&ctx, &GrainGraph::build_from(p, |i| table[p[i] as usize]), &mut out);
        });
        if let Some(e) = err {
            return Err(e);
        }
    } else {
        for p in contiguous_partitions(ctx.n) {
            clock.tick()?;
            collect_adjacent(&ctx, &GrainGraph::build(&ctx, &p), &mut out);
        }
    }
    Ok(out)
}

/// Up to `cap` linearizations of the grain graph of `partition` (event masks).
pub fn grain_closure_linearizations(trace: &Trace, partition: &[u64], cap: usize) -> Vec<Vec<EventId>> {
    let ctx = Ctx::new(trace, &OracleBudget::with_max_events(63)).expect("trace fits a mask");
    GrainGraph::build(&ctx, partition).linearizations(cap)
}

#[derive(Clone, Debug, Default)]
pub struct AugmentedResult {
    pub races: RaceSet,
    /// Linearizations checked against the correct-reordering definition.
    pub checked: usize,
    /// Linearizations that were not correct reorderings of the trace.
    pub unsound: Vec<Vec<EventId>>,
}

/// Races enabled after any grain reordering of any sequential prefix, with up
/// to `cap` linearizations per contiguous partition of each prefix.
pub fn oracle_augmented_prefix_races(
    trace: &Trace,
    cap: usize,
    budget: &OracleBudget,
) -> OracleResult<AugmentedResult> {
    let ctx = Ctx::new(trace, budget)?;
    let mut clock = Clock::new(budget);
    let mut res = AugmentedResult::default();
    for rho in super::seqp_prefix_masks(&ctx, &mut clock)? {
        let ids: Vec<EventId> = Ctx::ids(rho).collect();
        let sub = trace.restrict(|e| rho >> e & 1 == 1);
        let sctx = Ctx::new(&sub, budget)?;
        let mut any = false;
        for p in contiguous_partitions(ids.len()) {
            clock.tick()?;
            for lin in GrainGraph::build(&sctx, &p).linearizations(cap) {
                let seq: Vec<EventId> = lin.iter().map(|&i| ids[i]).collect();
                res.checked += 1;
                if correct_reordering(&ctx, &seq) {
                    any = true;
                } else {
                    res.unsound.push(seq);
                }
            }
        }
        if any {
            ctx.racy_pairs(&ctx.enabled(rho), &mut res.races);
        }
    }
    Ok(res)
}
