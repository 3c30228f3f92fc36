//! Cognitive MAC protocols for a secondary transmitter/receiver pair that
//! communicates over the idle periods of a set of primary channels.
//!
//! The crate is split in two halves that share the parameter types in
//! [`model`]:
//!
//! - [`slotted`]: Gilbert-Elliott (two-state Markov) primary channels. Belief
//!   tracking with a shared belief that keeps both secondary endpoints
//!   synchronized, Bayesian learning of the transition probabilities,
//!   full-sensing, Whittle-index and UCB channel selection, and a slot-level
//!   Monte Carlo simulator.
//! - [`unslotted`]: continuous-time primary channels with exponentially
//!   distributed busy/free periods. Closed-form renewal quantities, a
//!   numeric renewal-equation solver, the sensing-period optimizer under
//!   per-channel interference constraints, and an event-driven simulator.

pub mod error;
pub mod model;
pub mod seed;
pub mod slotted;
pub mod unslotted;

pub use error::{Error, Result};
pub use model::{
    ChannelState, SensingModel, SlottedChannelParams, UnslottedChannelParams,
};
