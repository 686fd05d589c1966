//! Predictive data-race detection over traces of concurrent programs.
//!
//! Three detectors of increasing power share one trace model:
//! [`commutativity`] finds races reachable by swapping independent events,
//! [`seqp`] finds races enabled after a sequentially consistent prefix, and
//! [`grains`] additionally lets two grains of events follow that prefix.
//! [`oracle`] holds brute-force reference implementations for small traces.

pub mod check;
pub mod commutativity;
pub mod fixtures;
pub mod frontier;
pub mod grains;
pub mod idset;
pub mod io;
pub mod oracle;
pub mod partition;
pub mod report;
pub mod seqp;
pub mod trace;

pub use commutativity::{detect_mraces, independent, mrace_in_word, AftSet, RaceCone};

pub use grains::{detect_granular_races, HeuristicConfig};
pub use io::{generate_trace, parse_trace, serialize_trace, GeneratorConfig};
pub use seqp::detect_prefix_races;
pub use trace::{conflicting, validate_wellformed, Event, EventId, EventLabel, Op, Trace};

pub type RaceSet = std::collections::BTreeSet<(EventId, EventId)>;
