//! Slotted primary network: Gilbert-Elliott channels observed once per slot.

pub mod belief;
pub mod policy;
pub mod sim;
pub mod whittle;

pub use belief::{
    genie_throughput_bound, propagate_belief, sensing_posterior, BeliefState, Evidence,
    Observation, SensingOutcome, TransitionCounts, TransitionEstimate,
};
pub use policy::{PolicyDecision, UcbState};
pub use sim::{monte_carlo, simulate_slotted, MonteCarloResult, Policy, RunResult, SlottedConfig};
pub use whittle::WhittleConfig;
