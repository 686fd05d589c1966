//! Event independence, dependence footprints and commutativity (M-) races.

use crate::idset::IdSet;
use crate::trace::{conflicting, EventId, EventLabel, Op, Trace};
use std::collections::{BTreeSet, HashMap};

/// Mazurkiewicz independence: distinct threads, and distinct objects or two reads.
/// Lock operations behave like writes to the lock object.
pub fn independent(a: EventLabel, b: EventLabel) -> bool {
    if a.thread == b.thread {
        return false;
    }
    match (a.op, b.op) {
        (Op::Read(_), Op::Read(_)) => true,
        (Op::Read(x) | Op::Write(x), Op::Read(y) | Op::Write(y)) => x != y,
        (Op::Acquire(l) | Op::Release(l), Op::Acquire(k) | Op::Release(k)) => l != k,
        _ => true,
    }
}

/// Label footprint of a set of events.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AftSet {
    pub threads: IdSet,
    pub read_locs: IdSet,
    pub write_locs: IdSet,
    pub locks: IdSet,
}

impl AftSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn init(label: EventLabel) -> Self {
        let mut s = AftSet::new();
        s.absorb(label);
        s
    }

    /// Whether `e` depends on some event summarized by `self`.
    #[inline]
    pub fn dependent(&self, e: EventLabel) -> bool {
        if self.threads.contains(e.thread) {
            return true;
        }
        match e.op {
            Op::Write(x) => self.write_locs.contains(x) || self.read_locs.contains(x),
            Op::Read(x) => self.write_locs.contains(x),
            Op::Acquire(l) | Op::Release(l) => self.locks.contains(l),
        }
    }

    pub fn absorb(&mut self, e: EventLabel) {
        self.threads.insert(e.thread);
        match e.op {
            Op::Write(x) => self.write_locs.insert(x),
            Op::Read(x) => self.read_locs.insert(x),
            Op::Acquire(l) | Op::Release(l) => self.locks.insert(l),
        };
    }

    pub fn is_subset(&self, o: &AftSet) -> bool {
        self.threads.is_subset(&o.threads)
            && self.read_locs.is_subset(&o.read_locs)
            && self.write_locs.is_subset(&o.write_locs)
            && self.locks.is_subset(&o.locks)
    }
}

/// Dependence cone of a race candidate `e1`.
///
/// `reach` covers `e1` and everything transitively dependent on it and
/// decides absorption. `between` covers only the absorbed events after `e1`;
/// `e2` may not depend on any of those, while its direct conflict with `e1`
/// is exactly what makes the pair a race.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RaceCone {
    pub reach: AftSet,
    pub between: AftSet,
}

impl RaceCone {
    pub fn new(e1: EventLabel) -> Self {
        RaceCone { reach: AftSet::init(e1), between: AftSet::new() }
    }

    /// Feeds an event that lies strictly between `e1` and the candidate `e2`.
    #[inline]
    pub fn step(&mut self, e: EventLabel) {
        if self.reach.dependent(e) {
            self.reach.absorb(e);
            self.between.absorb(e);
        }
    }

    /// `e` could be moved right next to `e1`.
    #[inline]
    pub fn commutes_to_e1(&self, e: EventLabel) -> bool {
        !self.between.dependent(e)
    }
}

/// Whether positions `i < j` of `word` can be made adjacent by swapping
/// independent neighbours, i.e. no dependence chain links them through the
/// events in between.
pub fn mrace_in_word(word: &[EventLabel], i: usize, j: usize) -> bool {
    assert!(i < j && j < word.len(), "mrace_in_word needs i < j < len");
    let mut cone = RaceCone::new(word[i]);
    for &e in &word[i + 1..j] {
        cone.step(e);
    }
    cone.commutes_to_e1(word[j])
}

/// How many race candidates the streaming M-race detector keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MraceMode {
    /// One cone per memory access seen so far.
    PerEvent,
    /// Only the latest access per (thread, location, access kind). An older
    /// candidate can never race once a newer one of the same kind exists, so
    /// this reports exactly the same pairs in bounded space.
    Compact,
}

struct Candidate {
    id: EventId,
    label: EventLabel,
    cone: RaceCone,
}

/// Streaming commutativity-race detector.
pub struct MraceDetector {
    mode: MraceMode,
    candidates: Vec<Candidate>,
    slot: HashMap<(u32, u32, bool), usize>,
    next: EventId,
    peak: usize,
}

impl MraceDetector {
    pub fn new(mode: MraceMode) -> Self {
        MraceDetector { mode, candidates: Vec::new(), slot: HashMap::new(), next: 0, peak: 0 }
    }

    pub fn live_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn peak_candidates(&self) -> usize {
        self.peak
    }

    /// Processes the next event and appends `(e1, e2)` races it completes.
    pub fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        let id = self.next;
        self.next += 1;
        for c in &self.candidates {
            if c.label.thread != e.thread && conflicting(c.label, e) && c.cone.commutes_to_e1(e) {
                out.push((c.id, id));
            }
        }
        for c in &mut self.candidates {
            c.cone.step(e);
        }
        if let Some(x) = e.op.loc() {
            let fresh = Candidate { id, label: e, cone: RaceCone::new(e) };
            match self.mode {
                MraceMode::PerEvent => self.candidates.push(fresh),
                MraceMode::Compact => {
                    let key = (e.thread, x, matches!(e.op, Op::Write(_)));
                    match self.slot.get(&key) {
                        Some(&k) => self.candidates[k] = fresh,
                        None => {
                            self.slot.insert(key, self.candidates.len());
                            self.candidates.push(fresh);
                        }
                    }
                }
            }
            self.peak = self.peak.max(self.candidates.len());
        }
    }
}

pub fn detect_mraces_with(trace: &Trace, mode: MraceMode) -> BTreeSet<(EventId, EventId)> {
    let mut d = MraceDetector::new(mode);
    let mut out = Vec::new();
    for l in trace.labels() {
        d.step(l, &mut out);
    }
    out.into_iter().collect()
}

pub fn detect_mraces(trace: &Trace) -> BTreeSet<(EventId, EventId)> {
    detect_mraces_with(trace, MraceMode::PerEvent)
}
