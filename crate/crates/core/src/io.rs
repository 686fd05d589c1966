//! Text trace format and a seeded random generator of well-formed traces.
//!
//! One event per line: `<thread> <op> <object> [<srcloc>]` with op one of
//! `r`, `w`, `acq`, `rel`. `#` starts a comment; blank lines are skipped.

use crate::trace::{Alphabet, BuildError, EventLabel, NameKind, Op, Trace, TraceBuilder, Violation, WellFormedChecker};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Namespace { line: usize, source: BuildError },
    #[error("line {line}: {violation}")]
    IllFormed { line: usize, violation: Violation },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::Namespace { line, .. }
            | ParseError::IllFormed { line, .. } => *line,
        }
    }
}

pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut b = TraceBuilder::new();
    let mut wf = WellFormedChecker::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = i + 1;
        let body = raw.strip_suffix('\r').unwrap_or(raw);
        let body = match body.find('#') {
            Some(p) => &body[..p],
            None => body,
        };
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 || toks.len() > 4 {
            return Err(ParseError::Syntax {
                line,
                msg: format!("expected `<thread> <op> <object> [<srcloc>]`, got {} fields", toks.len()),
            });
        }
        let kind = match toks[1] {
            "r" | "w" => NameKind::Location,
            "acq" | "rel" => NameKind::Lock,
            other => return Err(ParseError::Syntax { line, msg: format!("unknown op `{other}`") }),
        };
        let t = b.thread(toks[0]);
        let obj = b.object(toks[2], kind).map_err(|source| ParseError::Namespace { line, source })?;
        let op = match toks[1] {
            "r" => Op::Read(obj),
            "w" => Op::Write(obj),
            "acq" => Op::Acquire(obj),
            _ => Op::Release(obj),
        };
        let label = EventLabel::new(t, op);
        wf.check(label).map_err(|violation| ParseError::IllFormed { line, violation })?;
        b.push(label, toks.get(3).map(|s| s.to_string()));
    }
    Ok(b.finish())
}

pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for e in &trace.events {
        let a = &trace.alphabet;
        let _ =
            write!(out, "{} {} {}", a.thread_name(e.label.thread), e.label.op.mnemonic(), a.object_name(e.label.op));
        if let Some(loc) = &e.loc {
            let _ = write!(out, " {loc}");
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpWeights {
    pub read: f64,
    pub write: f64,
    pub acquire: f64,
    pub release: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights { read: 4.0, write: 3.0, acquire: 1.0, release: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub threads: u32,
    pub locks: u32,
    pub locations: u32,
    pub events: usize,
    pub seed: u64,
    pub weights: OpWeights,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { threads: 3, locks: 1, locations: 2, events: 9, seed: 0, weights: OpWeights::default() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("unsatisfiable-config: no legal event at step {0}")]
    Unsatisfiable(usize),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        if self.threads == 0 || self.locations == 0 {
            return bad("thread and location counts must be at least 1");
        }
        let w = self.weights;
        let ws = [w.read, w.write, w.acquire, w.release];
        if ws.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("weights must be finite and nonnegative");
        }
        if ws.iter().all(|x| *x == 0.0) {
            return bad("weights must not all be zero");
        }
        Ok(())
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::numbered(self.threads, self.locations, self.locks)
    }
}

/// Streams labels of a random well-formed run.
pub struct TraceGenerator {
    cfg: GeneratorConfig,
    rng: ChaCha8Rng,
    written: Vec<bool>,
    holder: Vec<Option<u32>>,
    emitted: usize,
    failed: bool,
    scratch: Vec<(u32, u32)>,
}

impl TraceGenerator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self, GenError> {
        cfg.validate()?;
        Ok(TraceGenerator {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            written: vec![false; cfg.locations as usize],
            holder: vec![None; cfg.locks as usize],
            emitted: 0,
            failed: false,
            scratch: Vec::new(),
            cfg,
        })
    }

    fn legal(&mut self, kind: usize) {
        self.scratch.clear();
        let (nt, nx, nl) = (self.cfg.threads, self.cfg.locations, self.cfg.locks);
        match kind {
            0 => {
                for t in 0..nt {
                    for x in 0..nx {
                        if self.written[x as usize] {
                            self.scratch.push((t, x));
                        }
                    }
                }
            }
            1 => {
                for t in 0..nt {
                    for x in 0..nx {
                        self.scratch.push((t, x));
                    }
                }
            }
            2 => {
                for t in 0..nt {
                    for l in 0..nl {
                        if self.holder[l as usize].is_none() {
                            self.scratch.push((t, l));
                        }
                    }
                }
            }
            _ => {
                for l in 0..nl {
                    if let Some(t) = self.holder[l as usize] {
                        self.scratch.push((t, l));
                    }
                }
            }
        }
    }

    fn legal_count(&self, kind: usize) -> usize {
        let nt = self.cfg.threads as usize;
        match kind {
            0 => nt * self.written.iter().filter(|w| **w).count(),
            1 => nt * self.cfg.locations as usize,
            2 => nt * self.holder.iter().filter(|h| h.is_none()).count(),
            _ => self.holder.iter().filter(|h| h.is_some()).count(),
        }
    }
}

impl Iterator for TraceGenerator {
    type Item = Result<EventLabel, GenError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.emitted >= self.cfg.events {
            return None;
        }
        let w = self.cfg.weights;
        let weights = [w.read, w.write, w.acquire, w.release];
        let mut avail = [0.0f64; 4];
        for k in 0..4 {
            if weights[k] > 0.0 && self.legal_count(k) > 0 {
                avail[k] = weights[k];
            }
        }
        let total: f64 = avail.iter().sum();
        if total <= 0.0 {
            self.failed = true;
            return Some(Err(GenError::Unsatisfiable(self.emitted)));
        }
        let mut pick = self.rng.gen::<f64>() * total;
        let mut kind = 0;
        for (k, a) in avail.iter().enumerate() {
            if *a > 0.0 {
                kind = k;
                if pick < *a {
                    break;
                }
                pick -= a;
            }
        }
        self.legal(kind);
        let (t, o) = self.scratch[self.rng.gen_range(0..self.scratch.len())];
        let op = match kind {
            0 => Op::Read(o),
            1 => {
                self.written[o as usize] = true;
                Op::Write(o)
            }
            2 => {
                self.holder[o as usize] = Some(t);
                Op::Acquire(o)
            }
            _ => {
                self.holder[o as usize] = None;
                Op::Release(o)
            }
        };
        self.emitted += 1;
        Some(Ok(EventLabel::new(t, op)))
    }
}

pub fn generate_trace(cfg: &GeneratorConfig) -> Result<Trace, GenError> {
    let labels = TraceGenerator::new(cfg.clone())?.collect::<Result<Vec<_>, _>>()?;
    Ok(Trace::from_labels(cfg.alphabet(), labels))
}
