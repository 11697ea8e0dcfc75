//! Scheduling and dimensioning of heterogeneous energy-storage fleets
//! against an hourly residual-energy (generation minus demand) series.
//!
//! * [`fleet`]: store types, one-step dynamics, loss conventions.
//! * [`policies`]: value-function, GGDDF and GRTEF schedulers.
//! * [`engine`]: simulation, lower bounds, feasibility and greediness checks.
//! * [`sizing`]: costs, reliability checks and dimensioning searches.
//! * [`traces`]: CSV ingestion, synthetic traces and statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod fleet;
pub mod policies;
pub mod sizing;
pub mod traces;

pub use engine::{simulate, PolicyTrace, SimResult, SimSummary};
pub use fleet::{FleetState, LossConvention, StepDecision, StoreSpec};
pub use policies::{PolicyKind, Scheduler, ValueParams};
pub use traces::ResidualTrace;
