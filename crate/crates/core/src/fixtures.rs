//! Small hand-written traces shipped with the crate.

use crate::io::parse_trace;
use crate::trace::Trace;

pub const TR7: &str = include_str!("../../../fixtures/tr7.trace");
pub const TR8: &str = include_str!("../../../fixtures/tr8.trace");
pub const TR9: &str = include_str!("../../../fixtures/tr9.trace");
pub const FIG1A: &str = include_str!("../../../fixtures/fig1a.trace");
pub const FIG2: &str = include_str!("../../../fixtures/fig2.trace");
pub const FIG3A: &str = include_str!("../../../fixtures/fig3a.trace");
pub const FIG51: &str = include_str!("../../../fixtures/fig51.trace");

/// Every named fixture, in a stable order.
pub const ALL: &[(&str, &str)] =
    &[("tr7", TR7), ("tr8", TR8), ("tr9", TR9), ("fig1a", FIG1A), ("fig2", FIG2), ("fig3a", FIG3A), ("fig51", FIG51)];

fn load(text: &str) -> Trace {
    parse_trace(text).expect("bundled fixture parses")
}

pub fn tr7() -> Trace {
    load(TR7)
}

pub fn tr8() -> Trace {
    load(TR8)
}

pub fn tr9() -> Trace {
    load(TR9)
}

pub fn fig1a() -> Trace {
    load(FIG1A)
}

pub fn fig2() -> Trace {
    load(FIG2)
}

pub fn fig3a() -> Trace {
    load(FIG3A)
}

pub fn fig51() -> Trace {
    load(FIG51)
}

pub fn by_name(name: &str) -> Option<Trace> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| load(t))
}
