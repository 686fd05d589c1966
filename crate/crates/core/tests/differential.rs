//! Detectors against the exhaustive oracles on small random traces.

use racepred::commutativity::{detect_mraces_with, MraceMode};
use racepred::grains::{check_witness, granular_witnesses};
use racepred::io::OpWeights;
use racepred::oracle::{oracle_granular_races, oracle_mraces, oracle_prefix_races, OracleBudget};
use racepred::{
    detect_granular_races, detect_mraces, detect_prefix_races, generate_trace, serialize_trace, GeneratorConfig,
    HeuristicConfig, RaceSet, Trace,
};

fn cases() -> u64 {
    std::env::var("RACEPRED_FUZZ_CASES").ok().and_then(|s| s.parse().ok()).unwrap_or(150)
}

fn random_trace(seed: u64) -> Trace {
    let threads = 2 + (seed % 4) as u32;
    let cfg = GeneratorConfig {
        threads,
        locks: 1 + (seed / 3 % 2) as u32,
        locations: 1 + (seed / 7 % 3) as u32,
        events: 5 + (seed / 5 % 8) as usize,
        seed,
        weights: OpWeights::default(),
    };
    generate_trace(&cfg).expect("generator")
}

fn show(t: &Trace) -> String {
    serialize_trace(t)
}

#[test]
fn mraces_match_quadratic_reference() {
    for seed in 0..cases() * 4 {
        let t = random_trace(seed);
        let want = oracle_mraces(&t);
        assert_eq!(detect_mraces(&t), want, "seed {seed}\n{}", show(&t));
        assert_eq!(detect_mraces_with(&t, MraceMode::Compact), want, "seed {seed}\n{}", show(&t));
    }
}

#[test]
fn seqp_matches_prefix_oracle() {
    let budget = OracleBudget::default();
    for seed in 0..cases() {
        let t = random_trace(seed);
        let want = oracle_prefix_races(&t, &budget).unwrap();
        assert_eq!(detect_prefix_races(&t, true), want, "seed {seed}\n{}", show(&t));
        assert_eq!(detect_prefix_races(&t, false), want, "seed {seed}\n{}", show(&t));
    }
}

#[test]
fn grains_between_prefix_and_granular() {
    let budget = OracleBudget::default();
    let mut gaps = 0;
    for seed in 0..cases() {
        let t = random_trace(seed);
        let prefix = oracle_prefix_races(&t, &budget).unwrap();
        let granular = oracle_granular_races(&t, &budget).unwrap();
        let got = detect_granular_races(&t, HeuristicConfig::off(), true);
        assert!(prefix.is_subset(&got), "seed {seed}: missing {:?}\n{}", diff(&prefix, &got), show(&t));
        if !got.is_subset(&granular) {
            gaps += 1;
            eprintln!("seed {seed}: beyond granular oracle {:?}\n{}", diff(&got, &granular), show(&t));
        }
        for w in granular_witnesses(&t, HeuristicConfig::off()) {
            if let Err(m) = check_witness(&t, &w) {
                panic!("seed {seed}: {m}\n{}", show(&t));
            }
        }
        let exact = detect_granular_races(&t, HeuristicConfig::off(), false);
        assert_eq!(got, exact, "seed {seed}\n{}", show(&t));
    }
    assert_eq!(gaps, 0);
}

fn diff(a: &RaceSet, b: &RaceSet) -> Vec<(usize, usize)> {
    a.difference(b).copied().collect()
}

#[test]
#[ignore]
fn measure_granular_gap() {
    let budget = OracleBudget::default();
    let (mut missed, mut total, mut traces) = (0, 0, 0);
    for seed in 0..cases() {
        let t = random_trace(seed);
        let granular = oracle_granular_races(&t, &budget).unwrap();
        let got = detect_granular_races(&t, HeuristicConfig::off(), true);
        total += granular.len();
        let m = diff(&granular, &got);
        if !m.is_empty() {
            traces += 1;
            missed += m.len();
            if traces <= 3 {
                eprintln!("seed {seed}: detector misses {m:?}\n{}", show(&t));
            }
        }
    }
    eprintln!("missed {missed} of {total} oracle pairs on {traces} traces");
}
