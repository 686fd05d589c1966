//! Events, traces and the relations derived from them.

use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

pub type EventId = usize;
pub type ThreadId = u32;
pub type LocId = u32;
pub type LockId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Read(LocId),
    Write(LocId),
    Acquire(LockId),
    Release(LockId),
}

impl Op {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::Read(_) => "r",
            Op::Write(_) => "w",
            Op::Acquire(_) => "acq",
            Op::Release(_) => "rel",
        }
    }

    pub fn loc(&self) -> Option<LocId> {
        match *self {
            Op::Read(x) | Op::Write(x) => Some(x),
            _ => None,
        }
    }

    pub fn lock(&self) -> Option<LockId> {
        match *self {
            Op::Acquire(l) | Op::Release(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_access(&self) -> bool {
        matches!(self, Op::Read(_) | Op::Write(_))
    }
}

/// `<thread, op(object)>` with all names interned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventLabel {
    pub thread: ThreadId,
    pub op: Op,
}

impl EventLabel {
    pub fn new(thread: ThreadId, op: Op) -> Self {
        EventLabel { thread, op }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub label: EventLabel,
    pub loc: Option<String>,
}

/// Interned names for threads, memory locations and locks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alphabet {
    pub threads: Vec<String>,
    pub locations: Vec<String>,
    pub locks: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NameKind {
    Thread,
    Location,
    Lock,
}

impl Alphabet {
    pub fn thread_name(&self, t: ThreadId) -> &str {
        &self.threads[t as usize]
    }

    pub fn location_name(&self, x: LocId) -> &str {
        &self.locations[x as usize]
    }

    pub fn lock_name(&self, l: LockId) -> &str {
        &self.locks[l as usize]
    }

    pub fn object_name(&self, op: Op) -> &str {
        match op {
            Op::Read(x) | Op::Write(x) => self.location_name(x),
            Op::Acquire(l) | Op::Release(l) => self.lock_name(l),
        }
    }

    /// Names `T1..Tn`, `x1..xm` style alphabets used by the generator.
    pub fn numbered(threads: u32, locations: u32, locks: u32) -> Self {
        Alphabet {
            threads: (1..=threads).map(|i| format!("T{i}")).collect(),
            locations: (1..=locations).map(|i| format!("x{i}")).collect(),
            locks: (1..=locks).map(|i| format!("l{i}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub event: EventId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    ReadBeforeWrite,
    DoubleAcquire,
    ReleaseWithoutAcquire,
    OverlappingCriticalSections,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::ReadBeforeWrite => "read-before-write",
            ViolationKind::DoubleAcquire => "double-acquire",
            ViolationKind::ReleaseWithoutAcquire => "release-without-acquire",
            ViolationKind::OverlappingCriticalSections => "overlapping-critical-sections",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at event {}", self.kind.as_str(), self.event)
    }
}

impl std::error::Error for Violation {}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("name `{0}` is used both as a lock and as a memory location")]
    NamespaceClash(String),
}

/// Incremental well-formedness checker, usable on streams.
#[derive(Clone, Debug, Default)]
pub struct WellFormedChecker {
    written: Vec<bool>,
    holder: Vec<Option<ThreadId>>,
    next: EventId,
}

impl WellFormedChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, label: EventLabel) -> Result<(), Violation> {
        let id = self.next;
        let err = |kind| Err(Violation { kind, event: id });
        match label.op {
            Op::Write(x) => {
                grow(&mut self.written, x as usize, false);
                self.written[x as usize] = true;
            }
            Op::Read(x) => {
                if !self.written.get(x as usize).copied().unwrap_or(false) {
                    return err(ViolationKind::ReadBeforeWrite);
                }
            }
            Op::Acquire(l) => {
                grow(&mut self.holder, l as usize, None);
                match self.holder[l as usize] {
                    Some(t) if t == label.thread => return err(ViolationKind::DoubleAcquire),
                    Some(_) => return err(ViolationKind::OverlappingCriticalSections),
                    None => self.holder[l as usize] = Some(label.thread),
                }
            }
            Op::Release(l) => match self.holder.get(l as usize).copied().flatten() {
                Some(t) if t == label.thread => self.holder[l as usize] = None,
                _ => return err(ViolationKind::ReleaseWithoutAcquire),
            },
        }
        self.next += 1;
        Ok(())
    }
}

fn grow<T: Clone>(v: &mut Vec<T>, idx: usize, fill: T) {
    if v.len() <= idx {
        v.resize(idx + 1, fill);
    }
}

/// A run: events in trace order plus the interned alphabets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub alphabet: Alphabet,
}

impl Trace {
    /// Builds a trace from already-interned labels; ids are assigned by position.
    pub fn from_labels(alphabet: Alphabet, labels: impl IntoIterator<Item = EventLabel>) -> Self {
        let events = labels.into_iter().enumerate().map(|(id, label)| Event { id, label, loc: None }).collect();
        Trace { events, alphabet }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn label(&self, e: EventId) -> EventLabel {
        self.events[e].label
    }

    pub fn labels(&self) -> impl Iterator<Item = EventLabel> + '_ {
        self.events.iter().map(|e| e.label)
    }

    pub fn num_threads(&self) -> u32 {
        self.alphabet.threads.len() as u32
    }

    pub fn num_locations(&self) -> u32 {
        self.alphabet.locations.len() as u32
    }

    pub fn num_locks(&self) -> u32 {
        self.alphabet.locks.len() as u32
    }

    /// Bug location of an event: its source location, or its id when absent.
    pub fn bug_location(&self, e: EventId) -> String {
        match &self.events[e].loc {
            Some(l) => l.clone(),
            None => e.to_string(),
        }
    }

    /// Keeps only the events whose ids are in `keep`, renumbering them.
    pub fn restrict(&self, keep: impl Fn(EventId) -> bool) -> Trace {
        let events = self
            .events
            .iter()
            .filter(|e| keep(e.id))
            .enumerate()
            .map(|(id, e)| Event { id, label: e.label, loc: e.loc.clone() })
            .collect();
        Trace { events, alphabet: self.alphabet.clone() }
    }

    pub fn display_event(&self, e: EventId) -> String {
        let l = self.events[e].label;
        format!("{} {}({})", self.alphabet.thread_name(l.thread), l.op.mnemonic(), self.alphabet.object_name(l.op))
    }
}

/// Interns textual names while enforcing disjoint lock/location namespaces.
#[derive(Default)]
pub struct TraceBuilder {
    alphabet: Alphabet,
    threads: HashMap<String, ThreadId>,
    objects: HashMap<String, (NameKind, u32)>,
    events: Vec<Event>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn thread(&mut self, name: &str) -> ThreadId {
        if let Some(&t) = self.threads.get(name) {
            return t;
        }
        let t = self.alphabet.threads.len() as ThreadId;
        self.alphabet.threads.push(name.to_string());
        self.threads.insert(name.to_string(), t);
        t
    }

    pub fn object(&mut self, name: &str, kind: NameKind) -> Result<u32, BuildError> {
        if let Some(&(k, i)) = self.objects.get(name) {
            return if k == kind { Ok(i) } else { Err(BuildError::NamespaceClash(name.to_string())) };
        }
        let table = match kind {
            NameKind::Location => &mut self.alphabet.locations,
            NameKind::Lock => &mut self.alphabet.locks,
            NameKind::Thread => unreachable!("threads are interned separately"),
        };
        let i = table.len() as u32;
        table.push(name.to_string());
        self.objects.insert(name.to_string(), (kind, i));
        Ok(i)
    }

    pub fn push(&mut self, label: EventLabel, loc: Option<String>) -> EventId {
        let id = self.events.len();
        self.events.push(Event { id, label, loc });
        id
    }

    /// Convenience used by fixtures and tests: `op` is one of r/w/acq/rel.
    pub fn event(&mut self, thread: &str, op: &str, object: &str) -> Result<EventId, BuildError> {
        let t = self.thread(thread);
        let op = match op {
            "r" => Op::Read(self.object(object, NameKind::Location)?),
            "w" => Op::Write(self.object(object, NameKind::Location)?),
            "acq" => Op::Acquire(self.object(object, NameKind::Lock)?),
            "rel" => Op::Release(self.object(object, NameKind::Lock)?),
            other => panic!("unknown op mnemonic {other}"),
        };
        Ok(self.push(EventLabel::new(t, op), None))
    }

    pub fn finish(self) -> Trace {
        Trace { events: self.events, alphabet: self.alphabet }
    }
}

pub fn validate_wellformed(trace: &Trace) -> Result<(), Violation> {
    let mut c = WellFormedChecker::new();
    trace.labels().try_for_each(|l| c.check(l))
}

/// Same as [`validate_wellformed`] but over bare labels.
pub fn labels_wellformed(labels: impl IntoIterator<Item = EventLabel>) -> bool {
    let mut c = WellFormedChecker::new();
    labels.into_iter().all(|l| c.check(l).is_ok())
}

/// Program order as per-thread predecessor indices.
#[derive(Clone, Debug)]
pub struct ProgramOrder {
    /// For each event, its immediate predecessor on the same thread.
    pub pred: Vec<Option<EventId>>,
    /// For each event, its position within its thread.
    pub index_in_thread: Vec<usize>,
    /// Event ids of each thread, in order.
    pub per_thread: Vec<Vec<EventId>>,
}

impl ProgramOrder {
    /// `(e, f) ∈ po`
    pub fn ordered(&self, trace: &Trace, e: EventId, f: EventId) -> bool {
        e < f && trace.label(e).thread == trace.label(f).thread
    }
}

pub fn program_order(trace: &Trace) -> ProgramOrder {
    let nt = trace.num_threads() as usize;
    let mut per_thread: Vec<Vec<EventId>> = vec![Vec::new(); nt];
    let mut pred = Vec::with_capacity(trace.len());
    let mut index_in_thread = Vec::with_capacity(trace.len());
    for e in &trace.events {
        let list = &mut per_thread[e.label.thread as usize];
        pred.push(list.last().copied());
        index_in_thread.push(list.len());
        list.push(e.id);
    }
    ProgramOrder { pred, index_in_thread, per_thread }
}

/// Maps every read to the latest earlier write on the same location.
pub fn reads_from(trace: &Trace) -> HashMap<EventId, EventId> {
    let mut last: HashMap<LocId, EventId> = HashMap::new();
    let mut rf = HashMap::new();
    for e in &trace.events {
        match e.label.op {
            Op::Write(x) => {
                last.insert(x, e.id);
            }
            Op::Read(x) => {
                if let Some(&w) = last.get(&x) {
                    rf.insert(e.id, w);
                }
            }
            _ => {}
        }
    }
    rf
}

/// Dense variant of [`reads_from`]: `None` for non-reads.
pub fn reads_from_vec(trace: &Trace) -> Vec<Option<EventId>> {
    let mut last: HashMap<LocId, EventId> = HashMap::new();
    trace
        .events
        .iter()
        .map(|e| match e.label.op {
            Op::Write(x) => {
                last.insert(x, e.id);
                None
            }
            Op::Read(x) => last.get(&x).copied(),
            _ => None,
        })
        .collect()
}

pub fn conflicting(a: EventLabel, b: EventLabel) -> bool {
    match (a.op, b.op) {
        (Op::Write(x), Op::Write(y)) | (Op::Write(x), Op::Read(y)) | (Op::Read(x), Op::Write(y)) => x == y,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_is_wellformed() {
        assert_eq!(validate_wellformed(&Trace::default()), Ok(()));
    }

    #[test]
    fn tr8_is_wellformed() {
        assert_eq!(validate_wellformed(&fixtures::tr8()), Ok(()));
    }

    #[test]
    fn lone_read_is_rejected() {
        let mut b = TraceBuilder::new();
        b.event("T1", "r", "x").unwrap();
        let v = validate_wellformed(&b.finish()).unwrap_err();
        assert_eq!(v.kind, ViolationKind::ReadBeforeWrite);
        assert_eq!(v.event, 0);
    }

    #[test]
    fn lock_violations() {
        let mut b = TraceBuilder::new();
        b.event("T1", "acq", "l").unwrap();
        b.event("T1", "acq", "l").unwrap();
        assert_eq!(validate_wellformed(&b.finish()).unwrap_err().kind, ViolationKind::DoubleAcquire);

        let mut b = TraceBuilder::new();
        b.event("T1", "acq", "l").unwrap();
        b.event("T2", "acq", "l").unwrap();
        let v = validate_wellformed(&b.finish()).unwrap_err();
        assert_eq!((v.kind, v.event), (ViolationKind::OverlappingCriticalSections, 1));

        let mut b = TraceBuilder::new();
        b.event("T1", "acq", "l").unwrap();
        b.event("T2", "rel", "l").unwrap();
        assert_eq!(validate_wellformed(&b.finish()).unwrap_err().kind, ViolationKind::ReleaseWithoutAcquire);
    }

    #[test]
    fn namespace_clash() {
        let mut b = TraceBuilder::new();
        b.event("T1", "acq", "m").unwrap();
        assert_eq!(b.event("T1", "w", "m"), Err(BuildError::NamespaceClash("m".into())));
    }

    #[test]
    fn po_on_tr8() {
        let t = fixtures::tr8();
        let po = program_order(&t);
        assert!(po.ordered(&t, 1, 2));
        assert!(!po.ordered(&t, 0, 1));
        assert_eq!(po.pred[2], Some(1));
        let mut b = TraceBuilder::new();
        b.event("T1", "w", "x").unwrap();
        let single = b.finish();
        assert_eq!(program_order(&single).pred, vec![None]);
    }

    #[test]
    fn rf_examples() {
        let rf = reads_from(&fixtures::tr8());
        assert_eq!(rf[&3], 0);
        let rf7 = reads_from(&fixtures::tr7());
        assert_eq!(rf7[&2], 1);

        let mut b = TraceBuilder::new();
        for (t, o) in [("T1", "w"), ("T1", "r"), ("T2", "w"), ("T1", "r")] {
            b.event(t, o, "x").unwrap();
        }
        let rf = reads_from(&b.finish());
        assert_eq!(rf[&3], 2);
        assert_eq!(rf[&1], 0);
    }

    #[test]
    fn conflicting_examples() {
        let w1 = EventLabel::new(0, Op::Write(0));
        let w2 = EventLabel::new(1, Op::Write(0));
        let r1 = EventLabel::new(0, Op::Read(0));
        let r2 = EventLabel::new(1, Op::Read(0));
        let a1 = EventLabel::new(0, Op::Acquire(0));
        let a2 = EventLabel::new(1, Op::Acquire(0));
        assert!(conflicting(w1, w2));
        assert!(conflicting(r1, w2) && conflicting(w2, r1));
        assert!(!conflicting(r1, r2));
        assert!(!conflicting(a1, a2));
        assert!(!conflicting(w1, EventLabel::new(1, Op::Write(1))));
    }
}
