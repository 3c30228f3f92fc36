//! Un-slotted primary network: alternating renewal busy/free periods in
//! continuous time.

pub mod analytics;
pub mod optimizer;
pub mod renewal;
pub mod sim;

pub use analytics::{ChannelMetrics, OverheadMode, PeriodPair};
pub use optimizer::{InterferenceConstraint, OptimizationResult, OptimizerConfig};
