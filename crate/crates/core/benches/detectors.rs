use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use racepred::commutativity::{detect_mraces_with, MraceMode};
use racepred::grains::{GrainsConfig, GrainsPrefixDetector, HeuristicConfig};
use racepred::partition::{self, Partition};
use racepred::seqp::{SeqpConfig, SeqpDetector};
use racepred::{generate_trace, EventId, EventLabel, GeneratorConfig, Trace};

const PARTITIONS: u32 = 4;

fn trace(events: usize) -> Trace {
    let gc = GeneratorConfig { threads: 4, locks: 2, locations: 8, events, seed: 7, ..Default::default() };
    generate_trace(&gc).unwrap()
}

trait Step: Send {
    fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>);
}

impl Step for SeqpDetector {
    fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        SeqpDetector::step(self, e, out)
    }
}

impl Step for GrainsPrefixDetector {
    fn step(&mut self, e: EventLabel, out: &mut Vec<(EventId, EventId)>) {
        GrainsPrefixDetector::step(self, e, out)
    }
}

/// Feeds the trace to every partition in batches, either through the
/// data-parallel helper or a plain loop.
fn drive<D: Step>(mut dets: Vec<(D, Vec<(EventId, EventId)>)>, labels: &[EventLabel], parallel: bool) -> usize {
    for batch in labels.chunks(1024) {
        let f = |(d, out): &mut (D, Vec<(EventId, EventId)>)| batch.iter().for_each(|&e| d.step(e, out));
        if parallel {
            partition::for_each_mut(&mut dets, f);
        } else {
            dets.iter_mut().for_each(f);
        }
    }
    dets.iter().map(|(_, out)| out.len()).sum()
}

fn seqp(threads: u32, antichain: bool) -> Vec<(SeqpDetector, Vec<(EventId, EventId)>)> {
    Partition::all(PARTITIONS)
        .into_iter()
        .map(|partition| (SeqpDetector::new(SeqpConfig { antichain, partition, threads: Some(threads) }), Vec::new()))
        .collect()
}

fn grains(threads: u32, antichain: bool) -> Vec<(GrainsPrefixDetector, Vec<(EventId, EventId)>)> {
    let heur = HeuristicConfig { sz: Some(5), sh: true, lru: Some(100) };
    Partition::all(PARTITIONS)
        .into_iter()
        .map(|partition| {
            let cfg = GrainsConfig { heur, antichain, partition, threads: Some(threads), ..Default::default() };
            (GrainsPrefixDetector::new(cfg), Vec::new())
        })
        .collect()
}

fn drivers(c: &mut Criterion) {
    let t = trace(5_000);
    let labels: Vec<EventLabel> = t.labels().collect();
    let threads = t.num_threads();
    let mut g = c.benchmark_group("partitioned");
    g.sample_size(10);
    for (name, parallel) in [("parallel", true), ("sequential", false)] {
        g.bench_with_input(BenchmarkId::new("seqp", name), &parallel, |b, &p| {
            b.iter(|| drive(seqp(threads, true), &labels, p))
        });
        g.bench_with_input(BenchmarkId::new("grainsprefix", name), &parallel, |b, &p| {
            b.iter(|| drive(grains(threads, true), &labels, p))
        });
    }
    g.finish();
}

fn antichain(c: &mut Criterion) {
    let t = trace(2_000);
    let labels: Vec<EventLabel> = t.labels().collect();
    let threads = t.num_threads();
    let mut g = c.benchmark_group("antichain");
    g.sample_size(10);
    for on in [true, false] {
        g.bench_with_input(BenchmarkId::new("seqp", on), &on, |b, &on| {
            b.iter(|| drive(seqp(threads, on), &labels, false))
        });
    }
    g.finish();
}

fn mraces(c: &mut Criterion) {
    let t = trace(5_000);
    let mut g = c.benchmark_group("m");
    g.sample_size(10);
    for mode in [MraceMode::PerEvent, MraceMode::Compact] {
        g.bench_function(format!("{mode:?}"), |b| b.iter(|| detect_mraces_with(&t, mode).len()));
    }
    g.finish();
}

criterion_group!(benches, drivers, antichain, mraces);
criterion_main!(benches);
