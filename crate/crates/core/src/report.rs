//! Driving a detector over a trace stream, optionally split into location
//! partitions, and assembling the race report.

use crate::commutativity::{MraceDetector, MraceMode};
use crate::grains::{GrainsConfig, GrainsPrefixDetector, HeuristicConfig};
use crate::partition::{self, Partition};
use crate::seqp::{SeqpConfig, SeqpDetector};
use crate::trace::{EventId, EventLabel, LocId, Trace};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    M,
    Seqp,
    GrainsPrefix,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::M, Algo::Seqp, Algo::GrainsPrefix];

    pub fn name(self) -> &'static str {
        match self {
            Algo::M => "m",
            Algo::Seqp => "seqp",
            Algo::GrainsPrefix => "grainsprefix",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected m, seqp or grainsprefix)"))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algo: Algo,
    pub heur: HeuristicConfig,
    pub antichain: bool,
    pub partitions: u32,
    pub timeout: Option<Duration>,
    /// Number of events fed to all partitions between timeout checks.
    pub batch: usize,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        RunConfig { algo, heur: HeuristicConfig::off(), antichain: true, partitions: 1, timeout: None, batch: 1024 }
    }
}

enum Detector {
    M(MraceDetector),
    Seqp(SeqpDetector),
    Grains(GrainsPrefixDetector),
}

impl Detector {
    fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        match self {
            Detector::M(d) => d.step(e, out),
            Detector::Seqp(d) => d.step(e, out),
            Detector::Grains(d) => d.step(e, out),
        }
    }

    fn peak(&self) -> usize {
        match self {
            Detector::M(d) => d.peak_candidates(),
            Detector::Seqp(d) => d.peak_states(),
            Detector::Grains(d) => d.peak_states(),
        }
    }
}

struct Worker {
    det: Detector,
    out: Vec<(EventId, EventId)>,
}

/// Races emitted by one batch, merged over partitions and sorted.
pub type Batch = Vec<(EventId, EventId)>;

/// One streaming run: events go in by batch, races come out per batch.
pub struct StreamRun {
    workers: Vec<Worker>,
    start: Instant,
    timeout: Option<Duration>,
    events: usize,
    timed_out: bool,
}

impl StreamRun {
    /// `threads` is the total thread count when known up front.
    pub fn new(cfg: &RunConfig, threads: Option<u32>) -> Self {
        // Commutativity races are found in one linear pass; it is not split.
        let parts = match cfg.algo {
            Algo::M => vec![Partition::whole()],
            _ => Partition::all(cfg.partitions),
        };
        let workers = parts
            .into_iter()
            .map(|partition| {
                let det = match cfg.algo {
                    Algo::M => Detector::M(MraceDetector::new(MraceMode::Compact)),
                    Algo::Seqp => {
                        Detector::Seqp(SeqpDetector::new(SeqpConfig { antichain: cfg.antichain, partition, threads }))
                    }
                    Algo::GrainsPrefix => Detector::Grains(GrainsPrefixDetector::new(GrainsConfig {
                        heur: cfg.heur,
                        antichain: cfg.antichain,
                        partition,
                        threads,
                        ..Default::default()
                    })),
                };
                Worker { det, out: Vec::new() }
            })
            .collect();
        StreamRun { workers, start: Instant::now(), timeout: cfg.timeout, events: 0, timed_out: false }
    }

    /// Feeds a batch to every partition. Returns `None` once the timeout has
    /// passed; the batch that crossed it is still processed in full.
    pub fn feed(&mut self, batch: &[EventLabel]) -> Option<Batch> {
        if self.timed_out {
            return None;
        }
        partition::for_each_mut(&mut self.workers, |w| {
            for &e in batch {
                w.det.step(e, &mut w.out);
            }
        });
        self.events += batch.len();
        let mut races: Batch = Vec::new();
        for w in &mut self.workers {
            races.append(&mut w.out);
        }
        races.sort_unstable();
        races.dedup();
        if self.timeout.is_some_and(|t| self.start.elapsed() > t) {
            self.timed_out = true;
        }
        Some(races)
    }

    pub fn timed_out(&self) -> bool {
        self.timed_out
    }

    pub fn events(&self) -> usize {
        self.events
    }

    /// Sum of the per-partition peak frontier sizes.
    pub fn peak_states(&self) -> usize {
        self.workers.iter().map(|w| w.det.peak()).sum()
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceRecord {
    pub e1: EventId,
    pub e2: EventId,
    pub e1_loc: String,
    pub e2_loc: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub heuristics: HeuristicConfig,
    pub antichain: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaceReport {
    pub algorithm: Algo,
    pub config: ReportConfig,
    pub events: usize,
    pub races: Vec<RaceRecord>,
    pub racy_events: usize,
    pub locations: usize,
    pub wall_ms: f64,
    pub peak_states: usize,
    pub timeout: bool,
}

impl RaceReport {
    /// Rebuilds the derived counts from the race list.
    pub fn recount(&mut self) {
        self.racy_events = self.races.iter().map(|r| r.e2).collect::<BTreeSet<_>>().len();
        self.locations = self.races.iter().map(|r| r.e2_loc.as_str()).collect::<BTreeSet<_>>().len();
    }

    pub fn counts_consistent(&self) -> bool {
        let mut c = self.clone();
        c.recount();
        c.racy_events == self.racy_events && c.locations == self.locations
    }

    pub fn pairs(&self) -> BTreeSet<(EventId, EventId)> {
        self.races.iter().map(|r| (r.e1, r.e2)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_text(&self, trace: &Trace) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm: {}", self.algorithm);
        let h = &self.config.heuristics;
        let _ = writeln!(
            s,
            "config: sz={} sh={} lru={} antichain={}",
            h.sz.map_or("-".into(), |v| v.to_string()),
            h.sh,
            h.lru.map_or("-".into(), |v| v.to_string()),
            self.config.antichain
        );
        let _ = writeln!(s, "events: {}", self.events);
        let _ = writeln!(s, "races: {}", self.races.len());
        for r in &self.races {
            let _ = writeln!(
                s,
                "  {} {} @ {}  <->  {} {} @ {}",
                r.e1,
                trace.display_event(r.e1),
                r.e1_loc,
                r.e2,
                trace.display_event(r.e2),
                r.e2_loc
            );
        }
        let _ = writeln!(s, "racy events: {}", self.racy_events);
        let _ = writeln!(s, "locations: {}", self.locations);
        let _ = writeln!(s, "peak states: {}", self.peak_states);
        let _ = writeln!(s, "wall: {:.3} ms", self.wall_ms);
        if self.timeout {
            let _ = writeln!(s, "timeout: partial results");
        }
        s
    }
}

/// Runs a detector over a whole trace and reports every race found.
pub fn analyze(trace: &Trace, cfg: &RunConfig) -> RaceReport {
    let labels: Vec<EventLabel> = trace.labels().collect();
    let mut run = StreamRun::new(cfg, Some(trace.num_threads()));
    let mut pairs = Vec::new();
    for chunk in labels.chunks(cfg.batch.max(1)) {
        match run.feed(chunk) {
            Some(mut b) => pairs.append(&mut b),
            None => break,
        }
    }
    let races = pairs
        .into_iter()
        .map(|(e1, e2)| RaceRecord { e1, e2, e1_loc: trace.bug_location(e1), e2_loc: trace.bug_location(e2) })
        .collect();
    let mut report = RaceReport {
        algorithm: cfg.algo,
        config: ReportConfig { heuristics: cfg.heur, antichain: cfg.antichain },
        events: run.events(),
        races,
        racy_events: 0,
        locations: 0,
        wall_ms: run.elapsed().as_secs_f64() * 1e3,
        peak_states: run.peak_states(),
        timeout: run.timed_out(),
    };
    report.recount();
    report
}

/// Counts only, for streams too long to keep every race.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamCounts {
    pub events: usize,
    pub races: u64,
    pub racy_events: u64,
    /// Distinct memory locations of racy `e2`s.
    pub locations: usize,
    pub peak_states: usize,
    pub timeout: bool,
}

/// Runs a detector over a label stream without retaining the races.
/// `on_batch` sees the number of events consumed so far after every batch.
pub fn count_stream(
    cfg: &RunConfig,
    threads: Option<u32>,
    stream: impl IntoIterator<Item = EventLabel>,
    mut on_batch: impl FnMut(usize),
) -> StreamCounts {
    let mut run = StreamRun::new(cfg, threads);
    let mut counts = StreamCounts::default();
    let mut locs: BTreeSet<LocId> = BTreeSet::new();
    let mut buf = Vec::with_capacity(cfg.batch.max(1));
    let mut it = stream.into_iter();
    loop {
        buf.clear();
        buf.extend(it.by_ref().take(cfg.batch.max(1)));
        if buf.is_empty() {
            break;
        }
        let base = run.events();
        let Some(races) = run.feed(&buf) else { break };
        counts.races += races.len() as u64;
        let e2s: BTreeSet<EventId> = races.iter().map(|r| r.1).collect();
        counts.racy_events += e2s.len() as u64;
        for e2 in e2s {
            if let Some(x) = buf[e2 - base].op.loc() {
                locs.insert(x);
            }
        }
        on_batch(run.events());
    }
    counts.events = run.events();
    counts.locations = locs.len();
    counts.peak_states = run.peak_states();
    counts.timeout = run.timed_out();
    counts
}

pub const CSV_HEADER: &str = "trace,algo,antichain,events,races,wall_ms,peak_states";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub trace: String,
    pub algo: Algo,
    pub antichain: bool,
    pub events: usize,
    pub races: u64,
    pub wall_ms: f64,
    pub peak_states: usize,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{}",
            self.trace, self.algo, self.antichain, self.events, self.races, self.wall_ms, self.peak_states
        )
    }
}
