//! Belief propagation, sensing-error posteriors, the transmitter/shared
//! belief bookkeeping, and Bayesian learning of the transition
//! probabilities.
//!
//! Both secondary endpoints hold the *shared* belief Ω̄ and the last shared
//! transition estimates; only the transmitter holds its own belief Ω, built
//! from every sensing outcome and its freshest estimates. The two coincide
//! after every acknowledged slot. After one or more failed slots the
//! transmitter ships Ω inside the next data packet and both ends resync.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{steady_state_free_prob, ChannelState, SensingModel, SlottedChannelParams};

/// One-step prediction of the free probability of a channel that was not
/// observed: `ω·p11 + (1−ω)·p01`.
pub fn propagate_belief(omega: f64, p11: f64, p01: f64) -> f64 {
    omega * p11 + (1.0 - omega) * p01
}

/// What the secondary pair learned about a channel in the current slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    SensedFree,
    SensedBusy,
    /// The access channel produced no acknowledgement.
    NoAck,
}

/// Posterior probability that the channel is actually free given `evidence`
/// and the prior belief `omega`.
///
/// Returns [`Error::IndeterminatePosterior`] when the evidence has zero
/// probability under the prior (for example `omega = 0` with a channel
/// sensed free by a perfect detector).
pub fn sensing_posterior(omega: f64, evidence: Evidence, sensing: &SensingModel) -> Result<f64> {
    let (p_fa, p_md) = (sensing.p_fa, sensing.p_md);
    let (num, other) = match evidence {
        Evidence::SensedFree => ((1.0 - p_fa) * omega, p_md * (1.0 - omega)),
        Evidence::SensedBusy => (p_fa * omega, (1.0 - p_md) * (1.0 - omega)),
        Evidence::NoAck => (p_fa * omega, 1.0 - omega),
    };
    let den = num + other;
    if den <= 0.0 {
        return Err(Error::IndeterminatePosterior);
    }
    Ok(num / den)
}

/// Sensing result for one channel in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observation {
    Free,
    Busy,
    NotSensed,
}

impl Observation {
    pub fn state(self) -> Option<ChannelState> {
        match self {
            Observation::Free => Some(ChannelState::Free),
            Observation::Busy => Some(ChannelState::Busy),
            Observation::NotSensed => None,
        }
    }
}

impl From<ChannelState> for Observation {
    fn from(s: ChannelState) -> Self {
        match s {
            ChannelState::Free => Observation::Free,
            ChannelState::Busy => Observation::Busy,
        }
    }
}

/// Sensing vector Φ(j) of a slot; unsensed channels are `NotSensed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingOutcome {
    pub sensed: Vec<Observation>,
}

impl SensingOutcome {
    pub fn new(sensed: Vec<Observation>) -> Self {
        Self { sensed }
    }

    pub fn len(&self) -> usize {
        self.sensed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensed.is_empty()
    }

    pub fn sensed_count(&self) -> usize {
        self.sensed
            .iter()
            .filter(|o| **o != Observation::NotSensed)
            .count()
    }
}

/// Estimated (or true) transition probabilities of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub p01: f64,
    pub p11: f64,
}

impl TransitionEstimate {
    /// Mean of the uniform prior.
    pub const PRIOR: TransitionEstimate = TransitionEstimate { p01: 0.5, p11: 0.5 };

    pub fn of(params: &SlottedChannelParams) -> Self {
        Self {
            p01: params.p01,
            p11: params.p11,
        }
    }

    pub fn propagate(&self, omega: f64) -> f64 {
        propagate_belief(omega, self.p11, self.p01)
    }

    /// Stationary free probability, or 0.5 for a chain without one.
    pub fn stationary(&self) -> f64 {
        let denom = self.p01 + 1.0 - self.p11;
        if denom > 0.0 {
            self.p01 / denom
        } else {
            0.5
        }
    }
}

/// Which transition probability a posterior refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    P01,
    P11,
}

/// Per-channel transition and occupancy counters over sensed states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
    /// Slots in which the channel was sensed free.
    pub n1: u64,
    pub slots_observed: u64,
}

impl TransitionCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_transition(&mut self, prev: ChannelState, cur: ChannelState) {
        use ChannelState::*;
        match (prev, cur) {
            (Busy, Busy) => self.n00 += 1,
            (Busy, Free) => self.n01 += 1,
            (Free, Busy) => self.n10 += 1,
            (Free, Free) => self.n11 += 1,
        }
    }

    fn remove_transition(&mut self, prev: ChannelState, cur: ChannelState) {
        use ChannelState::*;
        let slot = match (prev, cur) {
            (Busy, Busy) => &mut self.n00,
            (Busy, Free) => &mut self.n01,
            (Free, Busy) => &mut self.n10,
            (Free, Free) => &mut self.n11,
        };
        *slot -= 1;
    }

    pub fn record_observation(&mut self, state: ChannelState) {
        self.slots_observed += 1;
        if state.is_free() {
            self.n1 += 1;
        }
    }

    pub fn transitions(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    /// Posterior-mean estimates under a uniform prior:
    /// `p̂01 = (n01+1)/(n00+n01+2)`, `p̂11 = (n11+1)/(n10+n11+2)`.
    pub fn estimate(&self) -> TransitionEstimate {
        TransitionEstimate {
            p01: (self.n01 + 1) as f64 / (self.n00 + self.n01 + 2) as f64,
            p11: (self.n11 + 1) as f64 / (self.n10 + self.n11 + 2) as f64,
        }
    }

    /// Beta posterior density of `which` evaluated at `x`.
    pub fn posterior_density(&self, which: TransitionKind, x: f64) -> f64 {
        let (hits, misses) = match which {
            TransitionKind::P01 => (self.n01, self.n00),
            TransitionKind::P11 => (self.n11, self.n10),
        };
        beta_density(hits, misses, x)
    }

    /// Free-probability estimate for channels known to be memoryless.
    pub fn iid_free_estimate(&self) -> Result<f64> {
        if self.slots_observed == 0 {
            return Err(Error::Domain("no slots observed".into()));
        }
        Ok(self.n1 as f64 / self.slots_observed as f64)
    }
}

/// Density of Beta(hits+1, misses+1) at `x`.
fn beta_density(hits: u64, misses: u64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let (a, b) = (hits as f64, misses as f64);
    let log_norm = ln_gamma(a + b + 2.0) - ln_gamma(a + 1.0) - ln_gamma(b + 1.0);
    let log_x = if hits == 0 { 0.0 } else { a * x.ln() };
    let log_1mx = if misses == 0 { 0.0 } else { b * (1.0 - x).ln() };
    (log_norm + log_x + log_1mx).exp()
}

/// Free function form of [`TransitionCounts::record_transition`].
pub fn record_transition(
    mut counts: TransitionCounts,
    prev: ChannelState,
    cur: ChannelState,
) -> TransitionCounts {
    counts.record_transition(prev, cur);
    counts
}

/// Free function form of [`TransitionCounts::estimate`].
pub fn estimate_transitions(counts: &TransitionCounts) -> TransitionEstimate {
    counts.estimate()
}

/// Free function form of [`TransitionCounts::posterior_density`].
pub fn posterior_density(counts: &TransitionCounts, which: TransitionKind, x: f64) -> f64 {
    counts.posterior_density(which, x)
}

/// Free function form of [`TransitionCounts::iid_free_estimate`].
pub fn iid_free_estimate(counts: &TransitionCounts) -> Result<f64> {
    counts.iid_free_estimate()
}

/// Transition learner for one channel, optionally restricted to the most
/// recent `window` transitions (for slowly drifting primary statistics).
#[derive(Debug, Clone, Default)]
pub struct ChannelLearner {
    counts: TransitionCounts,
    window: Option<usize>,
    recent: VecDeque<(ChannelState, ChannelState)>,
    last: Option<ChannelState>,
}

impl ChannelLearner {
    pub fn new(window: Option<usize>) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    pub fn estimate(&self) -> TransitionEstimate {
        self.counts.estimate()
    }

    /// Records a sensed state; `consecutive` says whether the previous
    /// recorded observation came from the immediately preceding slot, in
    /// which case a transition is counted.
    pub fn observe(&mut self, state: ChannelState, consecutive: bool) {
        self.counts.record_observation(state);
        if let (true, Some(prev)) = (consecutive, self.last) {
            self.counts.record_transition(prev, state);
            if let Some(w) = self.window {
                self.recent.push_back((prev, state));
                if self.recent.len() > w {
                    let (a, b) = self.recent.pop_front().expect("nonempty window");
                    self.counts.remove_transition(a, b);
                }
            }
        }
        self.last = Some(state);
    }
}

/// Transmitter-side belief bookkeeping of the secondary pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    /// Ω: belief built from every observation with fresh estimates.
    pub tx_belief: Vec<f64>,
    /// Ω̄: belief both endpoints can compute.
    pub shared_belief: Vec<f64>,
    /// Transition estimates last delivered to the receiver.
    pub shared_estimates: Vec<TransitionEstimate>,
    /// Whether the previous slot was acknowledged.
    pub last_ack: bool,
}

/// Side effects of a belief update worth logging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateReport {
    /// Ω̄ was overwritten by Ω before the update.
    pub resynced: bool,
    /// Posteriors whose evidence was impossible under the belief; the
    /// observation was taken at face value instead.
    pub impossible_evidence: u32,
}

impl BeliefState {
    pub fn new(initial: Vec<f64>, estimates: Vec<TransitionEstimate>) -> Result<Self> {
        if initial.len() != estimates.len() {
            return Err(Error::DimensionMismatch {
                expected: initial.len(),
                got: estimates.len(),
            });
        }
        Ok(Self {
            tx_belief: initial.clone(),
            shared_belief: initial,
            shared_estimates: estimates,
            last_ack: true,
        })
    }

    pub fn len(&self) -> usize {
        self.tx_belief.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_belief.is_empty()
    }

    /// Advances both beliefs by one slot.
    ///
    /// `fresh` are the transmitter's current estimates (after this slot's
    /// learning stage). On an acknowledged slot they become the shared
    /// estimates, exactly as if delivered in the data packet.
    pub fn update(
        &mut self,
        access: usize,
        outcome: &SensingOutcome,
        ack: bool,
        fresh: &[TransitionEstimate],
        sensing: &SensingModel,
    ) -> Result<UpdateReport> {
        let n = self.len();
        for len in [outcome.len(), fresh.len(), self.shared_estimates.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if access >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: access + 1,
            });
        }
        let mut report = UpdateReport::default();
        if ack {
            if !self.last_ack {
                self.shared_belief.clone_from(&self.tx_belief);
                report.resynced = true;
            }
            self.shared_estimates.copy_from_slice(fresh);
            report.impossible_evidence += advance_shared(
                &mut self.shared_belief,
                &self.shared_estimates,
                access,
                outcome,
                true,
                sensing,
            );
            self.tx_belief.clone_from(&self.shared_belief);
        } else {
            report.impossible_evidence += advance_shared(
                &mut self.shared_belief,
                &self.shared_estimates,
                access,
                outcome,
                false,
                sensing,
            );
            report.impossible_evidence +=
                advance_transmitter_after_failure(&mut self.tx_belief, fresh, access, outcome, sensing);
        }
        self.last_ack = ack;
        Ok(report)
    }
}

fn posterior_or_face_value(omega: f64, evidence: Evidence, sensing: &SensingModel) -> (f64, u32) {
    match sensing_posterior(omega, evidence, sensing) {
        Ok(p) => (p, 0),
        Err(_) => {
            let face = if evidence == Evidence::SensedFree { 1.0 } else { 0.0 };
            (face, 1)
        }
    }
}

/// Shared-belief update Ω̄(j) → Ω̄(j+1). The receiver runs this too: on an
/// acknowledged slot it has Φ(j) from the packet, otherwise it only needs
/// the access channel.
///
/// Returns the number of impossible-evidence fallbacks.
pub fn advance_shared(
    shared: &mut [f64],
    estimates: &[TransitionEstimate],
    access: usize,
    outcome: &SensingOutcome,
    ack: bool,
    sensing: &SensingModel,
) -> u32 {
    let mut impossible = 0;
    for (i, omega) in shared.iter_mut().enumerate() {
        let est = estimates[i];
        let posterior = if ack {
            if i == access {
                1.0
            } else {
                match outcome.sensed[i] {
                    Observation::Free => {
                        let (p, bad) = posterior_or_face_value(*omega, Evidence::SensedFree, sensing);
                        impossible += bad;
                        p
                    }
                    Observation::Busy => {
                        let (p, bad) = posterior_or_face_value(*omega, Evidence::SensedBusy, sensing);
                        impossible += bad;
                        p
                    }
                    Observation::NotSensed => *omega,
                }
            }
        } else if i == access {
            let (p, bad) = posterior_or_face_value(*omega, Evidence::NoAck, sensing);
            impossible += bad;
            p
        } else {
            *omega
        };
        *omega = est.propagate(posterior);
    }
    impossible
}

/// Transmitter-belief update after an unacknowledged slot, using every
/// sensing outcome and the fresh estimates.
fn advance_transmitter_after_failure(
    tx: &mut [f64],
    fresh: &[TransitionEstimate],
    access: usize,
    outcome: &SensingOutcome,
    sensing: &SensingModel,
) -> u32 {
    let mut impossible = 0;
    for (i, omega) in tx.iter_mut().enumerate() {
        let evidence = if i == access {
            Some(Evidence::NoAck)
        } else {
            match outcome.sensed[i] {
                Observation::Free => Some(Evidence::SensedFree),
                Observation::Busy => Some(Evidence::SensedBusy),
                Observation::NotSensed => None,
            }
        };
        let posterior = match evidence {
            Some(e) => {
                let (p, bad) = posterior_or_face_value(*omega, e, sensing);
                impossible += bad;
                p
            }
            None => *omega,
        };
        *omega = fresh[i].propagate(posterior);
    }
    impossible
}

/// Largest channel count accepted by [`genie_throughput_bound`].
pub const GENIE_MAX_CHANNELS: usize = 20;

/// Expected per-slot throughput when the previous slot's state of every
/// channel is known to both endpoints: the expectation, over the stationary
/// joint state, of `max_i P(S_i → free)·B_i`.
pub fn genie_throughput_bound(channels: &[SlottedChannelParams]) -> Result<f64> {
    let n = channels.len();
    if n == 0 {
        return Err(Error::Empty("channel list"));
    }
    if n > GENIE_MAX_CHANNELS {
        return Err(Error::TooManyChannels {
            channels: n,
            limit: GENIE_MAX_CHANNELS,
        });
    }
    let pi = channels
        .iter()
        .map(steady_state_free_prob)
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        let mut best = f64::NEG_INFINITY;
        for (i, ch) in channels.iter().enumerate() {
            let free = mask & (1 << i) != 0;
            prob *= if free { pi[i] } else { 1.0 - pi[i] };
            let reward = ch.to_free(ChannelState::from_free(free)) * ch.bandwidth;
            best = best.max(reward);
        }
        total += prob * best;
    }
    Ok(total)
}
