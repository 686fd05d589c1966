use clap::{Args, Parser, Subcommand, ValueEnum};
use racepred::check::{check_trace, shrink, CheckConfig};
use racepred::grains::{HeuristicConfig, Mutation};
use racepred::io::{ParseError, TraceGenerator};
use racepred::report::{analyze, count_stream, Algo, BenchRow, RaceReport, RunConfig, CSV_HEADER};
use racepred::{generate_trace, parse_trace, serialize_trace, GeneratorConfig, RaceSet, Trace};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

const EXIT_PARSE: u8 = 1;
const EXIT_WELLFORMED: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_FLAGS: u8 = 4;
const EXIT_PROPERTY: u8 = 5;

#[derive(Parser)]
#[command(name = "racepred", version, about = "Predictive data-race detection over recorded traces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one detector over a trace file.
    Analyze {
        trace: PathBuf,
        #[arg(long, default_value = "seqp", value_parser = parse_algo)]
        algo: Algo,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run several detectors on one trace and check that their race sets nest.
    Compare {
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "m,seqp,grainsprefix", value_parser = parse_algo)]
        algos: Vec<Algo>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check the detectors against the reference oracles on random traces.
    Fuzz(FuzzFlags),
    /// Time detectors with and without antichain pruning; prints CSV.
    Bench(BenchFlags),
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Maximum grain length.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    sz: Option<u32>,
    /// Restrict grains to one event or one critical section.
    #[arg(long)]
    sh: bool,
    /// Maximum number of live race candidates.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    lru: Option<u64>,
    #[arg(long)]
    no_antichain: bool,
    /// Number of location partitions (default: available parallelism).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    partitions: Option<u32>,
    /// Stop after this many seconds and report what was found so far.
    #[arg(long)]
    timeout: Option<f64>,
}

impl RunFlags {
    fn config(&self, algo: Algo) -> Result<RunConfig, Failure> {
        let timeout = match self.timeout {
            Some(s) if !(s.is_finite() && s >= 0.0) => {
                return Err(Failure::new(EXIT_FLAGS, format!("invalid --timeout {s}")))
            }
            Some(s) => Some(Duration::from_secs_f64(s)),
            None => None,
        };
        let partitions =
            self.partitions.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get() as u32));
        Ok(RunConfig {
            heur: HeuristicConfig { sz: self.sz, sh: self.sh, lru: self.lru.map(|n| n as usize) },
            antichain: !self.no_antichain,
            partitions,
            timeout,
            ..RunConfig::new(algo)
        })
    }
}

#[derive(Args)]
struct FuzzFlags {
    #[arg(long, default_value_t = 1000)]
    iterations: u64,
    /// Maximum trace length; lengths cycle through 1..=events.
    #[arg(long, default_value_t = 8)]
    events: usize,
    #[arg(long, default_value_t = 3)]
    threads: u32,
    #[arg(long, default_value_t = 2)]
    locks: u32,
    #[arg(long, default_value_t = 2)]
    locations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for shrunk counterexamples.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, hide = true)]
    mutant: Option<Mutant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mutant {
    DropOrphanReads,
}

#[derive(Args)]
struct BenchFlags {
    /// Trace files; when none are given a trace is generated.
    traces: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "seqp", value_parser = parse_algo)]
    algos: Vec<Algo>,
    #[arg(long, value_enum, default_value_t = Antichain::Both)]
    antichain: Antichain,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, default_value_t = 100_000)]
    events: usize,
    #[arg(long, default_value_t = 8)]
    threads: u32,
    #[arg(long, default_value_t = 4)]
    locks: u32,
    #[arg(long, default_value_t = 16)]
    locations: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Antichain {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Failure { code, msg: msg.into() }
    }
}

fn load(path: &Path) -> Result<Trace, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| {
        let code = match e {
            ParseError::IllFormed { .. } => EXIT_WELLFORMED,
            _ => EXIT_PARSE,
        };
        Failure::new(code, format!("{}: {e}", path.display()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FLAGS } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Analyze { trace, algo, run, format } => cmd_analyze(&trace, algo, &run, format),
        Cmd::Compare { trace, algos, run, format } => cmd_compare(&trace, &algos, &run, format),
        Cmd::Fuzz(f) => cmd_fuzz(&f),
        Cmd::Bench(b) => cmd_bench(&b),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                eprintln!("error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}

fn cmd_analyze(path: &Path, algo: Algo, flags: &RunFlags, format: Format) -> Result<(), Failure> {
    let cfg = flags.config(algo)?;
    let trace = load(path)?;
    let report = analyze(&trace, &cfg);
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text(&trace)),
    }
    if report.timeout {
        return Err(Failure::new(EXIT_TIMEOUT, format!("timed out after {} of {} events", report.events, trace.len())));
    }
    Ok(())
}

struct Inclusion {
    small: Algo,
    big: Algo,
    extra: Vec<(usize, usize)>,
}

fn cmd_compare(path: &Path, algos: &[Algo], flags: &RunFlags, format: Format) -> Result<(), Failure> {
    let trace = load(path)?;
    let mut reports: Vec<RaceReport> = Vec::new();
    for &a in algos {
        reports.push(analyze(&trace, &flags.config(a)?));
    }
    // heuristics only ever drop grainsprefix races, so it is left out of the
    // inclusion checks when any is on
    let heur_off = flags.sz.is_none() && !flags.sh && flags.lru.is_none();
    let mut sorted: Vec<&RaceReport> = reports.iter().filter(|r| !r.timeout).collect();
    sorted.sort_by_key(|r| r.algorithm);
    sorted.dedup_by_key(|r| r.algorithm);
    let mut incl = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b.algorithm == Algo::GrainsPrefix && !heur_off {
                continue;
            }
            let (pa, pb): (RaceSet, RaceSet) = (a.pairs(), b.pairs());
            incl.push(Inclusion { small: a.algorithm, big: b.algorithm, extra: pa.difference(&pb).copied().collect() });
        }
    }
    match format {
        Format::Json => {
            let v = serde_json::json!({
                "trace": path.display().to_string(),
                "reports": reports,
                "inclusions": incl.iter().map(|i| serde_json::json!({
                    "small": i.small, "big": i.big, "holds": i.extra.is_empty(), "extra": i.extra,
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        }
        Format::Text => {
            println!("{:<14} {:>7} {:>12} {:>10} {:>10}", "algorithm", "races", "racy_events", "locations", "wall_ms");
            for r in &reports {
                let t = if r.timeout { " (timeout)" } else { "" };
                println!(
                    "{:<14} {:>7} {:>12} {:>10} {:>10.3}{t}",
                    r.algorithm.name(),
                    r.races.len(),
                    r.racy_events,
                    r.locations,
                    r.wall_ms
                );
            }
            for i in &incl {
                let v = if i.extra.is_empty() { "yes".to_string() } else { format!("NO, extra {:?}", i.extra) };
                println!("{} within {}: {v}", i.small, i.big);
            }
        }
    }
    let broken: Vec<String> =
        incl.iter().filter(|i| !i.extra.is_empty()).map(|i| format!("{} not within {}", i.small, i.big)).collect();
    if !broken.is_empty() {
        return Err(Failure::new(EXIT_PROPERTY, format!("hierarchy violation: {}", broken.join(", "))));
    }
    if reports.iter().any(|r| r.timeout) {
        return Err(Failure::new(EXIT_TIMEOUT, "timed out"));
    }
    Ok(())
}

fn cmd_fuzz(f: &FuzzFlags) -> Result<(), Failure> {
    if f.events == 0 {
        return Err(Failure::new(EXIT_FLAGS, "--events must be at least 1"));
    }
    let cfg = CheckConfig {
        mutation: f.mutant.map(|Mutant::DropOrphanReads| Mutation::DropOrphanReads),
        ..Default::default()
    };
    let (mut gap_pairs, mut gap_traces) = (0usize, 0u64);
    for i in 0..f.iterations {
        let seed = f.seed.wrapping_add(i);
        let gc = GeneratorConfig {
            threads: f.threads,
            locks: f.locks,
            locations: f.locations,
            events: 1 + (i as usize % f.events),
            seed,
            ..Default::default()
        };
        let trace = generate_trace(&gc).map_err(|e| Failure::new(EXIT_FLAGS, e.to_string()))?;
        let out = check_trace(&trace, &cfg);
        if !out.gap.is_empty() {
            gap_pairs += out.gap.len();
            gap_traces += 1;
        }
        if out.failures.is_empty() {
            continue;
        }
        let small = shrink(&trace, |t| !check_trace(t, &cfg).failures.is_empty());
        let fails = check_trace(&small, &cfg).failures;
        let mut text = String::new();
        for fl in &fails {
            text.push_str(&format!("# {fl}\n"));
        }
        text.push_str(&serialize_trace(&small));
        let path = f.out.join(format!("counterexample-{seed}.trace"));
        std::fs::write(&path, &text).map_err(|e| Failure::new(EXIT_PROPERTY, format!("{}: {e}", path.display())))?;
        println!("iteration {i} (seed {seed}): {} event(s), shrunk to {}", trace.len(), small.len());
        for fl in &fails {
            println!("  {fl}");
        }
        println!("counterexample: {}", path.display());
        return Err(Failure::new(EXIT_PROPERTY, format!("property violated, see {}", path.display())));
    }
    println!("{} iteration(s), all properties hold", f.iterations);
    println!("granular oracle pairs not reported: {gap_pairs} on {gap_traces} trace(s)");
    Ok(())
}

fn cmd_bench(b: &BenchFlags) -> Result<(), Failure> {
    let modes: &[bool] = match b.antichain {
        Antichain::On => &[true],
        Antichain::Off => &[false],
        Antichain::Both => &[true, false],
    };
    println!("{CSV_HEADER}");
    let mut timed_out = false;
    let mut row = |name: &str,
                   algo: Algo,
                   antichain: bool,
                   threads: u32,
                   labels: &mut dyn Iterator<Item = racepred::EventLabel>| {
        let cfg = RunConfig { antichain, ..b.run.config(algo)? };
        let t = std::time::Instant::now();
        let c = count_stream(&cfg, Some(threads), labels, |_| {});
        timed_out |= c.timeout;
        let r = BenchRow {
            trace: name.to_string(),
            algo,
            antichain,
            events: c.events,
            races: c.races,
            wall_ms: t.elapsed().as_secs_f64() * 1e3,
            peak_states: c.peak_states,
        };
        println!("{}", r.csv());
        Ok::<(), Failure>(())
    };
    if b.traces.is_empty() {
        let gc = GeneratorConfig {
            threads: b.threads,
            locks: b.locks,
            locations: b.locations,
            events: b.events,
            seed: b.seed,
            ..Default::default()
        };
        gc.validate().map_err(|e| Failure::new(EXIT_FLAGS, e.to_string()))?;
        let name = format!("gen-{}-{}", b.events, b.seed);
        for &algo in &b.algos {
            for &ac in modes {
                let g = TraceGenerator::new(gc.clone()).map_err(|e| Failure::new(EXIT_FLAGS, e.to_string()))?;
                row(&name, algo, ac, b.threads, &mut g.map_while(Result::ok))?;
            }
        }
    } else {
        for p in &b.traces {
            let trace = load(p)?;
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            for &algo in &b.algos {
                for &ac in modes {
                    row(&name, algo, ac, trace.num_threads(), &mut trace.labels())?;
                }
            }
        }
    }
    if timed_out {
        return Err(Failure::new(EXIT_TIMEOUT, "timed out"));
    }
    Ok(())
}
