//! Channel and sensing-detector parameters shared by the slotted and
//! un-slotted halves of the crate.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Occupancy of a primary channel. `Free` is the state the secondary pair
/// can exploit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelState {
    Busy,
    Free,
}

impl ChannelState {
    pub fn is_free(self) -> bool {
        matches!(self, ChannelState::Free)
    }

    pub fn from_free(free: bool) -> Self {
        if free {
            ChannelState::Free
        } else {
            ChannelState::Busy
        }
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(name, format!("{p} is not a probability")));
    }
    Ok(())
}

/// Two-state Markov (Gilbert-Elliott) primary channel for the slotted model.
///
/// `p01` is the busy→free transition probability, `p11` the free→free one;
/// the complements give `p00` and `p10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlottedChannelParams {
    pub p01: f64,
    pub p11: f64,
    pub bandwidth: f64,
}

impl SlottedChannelParams {
    pub fn new(p01: f64, p11: f64, bandwidth: f64) -> Result<Self> {
        let params = Self {
            p01,
            p11,
            bandwidth,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p01", self.p01)?;
        check_probability("p11", self.p11)?;
        if !(self.bandwidth >= 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::invalid(
                "bandwidth",
                format!("{} must be finite and nonnegative", self.bandwidth),
            ));
        }
        Ok(())
    }

    /// Probability of being free in the next slot given the current state.
    pub fn to_free(&self, from: ChannelState) -> f64 {
        match from {
            ChannelState::Free => self.p11,
            ChannelState::Busy => self.p01,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.p01 == 0.0 && self.p11 == 1.0
    }
}

/// Stationary probability that a slotted channel is free:
/// `π = p01 / (p01 + 1 − p11)`.
pub fn steady_state_free_prob(params: &SlottedChannelParams) -> Result<f64> {
    let denom = params.p01 + (1.0 - params.p11);
    if denom <= 0.0 {
        return Err(Error::DegenerateChain);
    }
    Ok(params.p01 / denom)
}

/// Continuous-time primary channel with exponentially distributed free
/// periods (rate `lambda_free`) and busy periods (rate `lambda_busy`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnslottedChannelParams {
    pub lambda_free: f64,
    pub lambda_busy: f64,
}

impl UnslottedChannelParams {
    pub fn new(lambda_free: f64, lambda_busy: f64) -> Result<Self> {
        let params = Self {
            lambda_free,
            lambda_busy,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_free", self.lambda_free),
            ("lambda_busy", self.lambda_busy),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} must be a positive rate")));
            }
        }
        Ok(())
    }

    /// Long-run fraction of time the primary user occupies the channel,
    /// `u = λ_free / (λ_free + λ_busy)`.
    pub fn utilization(&self) -> f64 {
        self.lambda_free / (self.lambda_free + self.lambda_busy)
    }

    pub fn total_rate(&self) -> f64 {
        self.lambda_free + self.lambda_busy
    }

    pub fn mean_free(&self) -> f64 {
        1.0 / self.lambda_free
    }

    pub fn mean_busy(&self) -> f64 {
        1.0 / self.lambda_busy
    }

    /// Probability the channel is free `elapsed` time units after it was
    /// observed in `from`.
    pub fn transition_prob(&self, from: ChannelState, elapsed: f64) -> f64 {
        let u = self.utilization();
        let decay = (-self.total_rate() * elapsed).exp();
        match from {
            ChannelState::Free => (1.0 - u) + u * decay,
            ChannelState::Busy => (1.0 - u) * (1.0 - decay),
        }
    }
}

/// Free function form of [`UnslottedChannelParams::utilization`].
pub fn utilization(params: &UnslottedChannelParams) -> f64 {
    params.utilization()
}

/// Free function form of [`UnslottedChannelParams::transition_prob`].
pub fn transition_prob(params: &UnslottedChannelParams, from: ChannelState, elapsed: f64) -> f64 {
    params.transition_prob(from, elapsed)
}

/// Spectrum-sensing detector: error probabilities and the time a single
/// sensing event occupies the radio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingModel {
    pub p_fa: f64,
    pub p_md: f64,
    pub sampling_freq: f64,
    /// Linear signal-to-noise ratio of the primary signal.
    pub snr: f64,
    pub sensing_time: f64,
}

impl SensingModel {
    /// Error-free detector with the given sensing duration.
    pub fn perfect(sensing_time: f64) -> Self {
        Self {
            p_fa: 0.0,
            p_md: 0.0,
            sampling_freq: 0.0,
            snr: 0.0,
            sensing_time,
        }
    }

    /// Detector with explicit error probabilities and sensing duration.
    pub fn with_errors(p_fa: f64, p_md: f64, sensing_time: f64) -> Result<Self> {
        let model = Self {
            p_fa,
            p_md,
            sampling_freq: 0.0,
            snr: 0.0,
            sensing_time,
        };
        model.validate()?;
        Ok(model)
    }

    /// Energy detector whose sensing time is the minimum meeting the target
    /// error probabilities.
    pub fn energy_detector(p_fa: f64, p_md: f64, snr: f64, sampling_freq: f64) -> Result<Self> {
        let sensing_time = compute_sensing_time(p_fa, p_md, snr, sampling_freq)?;
        Ok(Self {
            p_fa,
            p_md,
            sampling_freq,
            snr,
            sensing_time,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_fa", self.p_fa), ("p_md", self.p_md)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} must lie in [0, 1)")));
            }
        }
        if !(self.sensing_time >= 0.0) || !self.sensing_time.is_finite() {
            return Err(Error::invalid(
                "sensing_time",
                format!("{} must be finite and nonnegative", self.sensing_time),
            ));
        }
        Ok(())
    }

    pub fn is_perfect(&self) -> bool {
        self.p_fa == 0.0 && self.p_md == 0.0
    }
}

/// Inverse of the standard normal tail probability, `Q⁻¹(p)`.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q^-1 is undefined at p = {p}")));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
}

/// Minimum energy-detector sensing time meeting the target false-alarm and
/// miss-detection probabilities:
///
/// `T_s = (2/f_s)·[Q⁻¹(P_FA) − Q⁻¹(1−P_MD)·√(1+2σ)]²·σ⁻²`
pub fn compute_sensing_time(p_fa: f64, p_md: f64, snr: f64, sampling_freq: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::Domain(format!("snr must be positive, got {snr}")));
    }
    if !(sampling_freq > 0.0) {
        return Err(Error::Domain(format!(
            "sampling frequency must be positive, got {sampling_freq}"
        )));
    }
    let bracket = q_inv(p_fa)? - q_inv(1.0 - p_md)? * (1.0 + 2.0 * snr).sqrt();
    Ok(2.0 / sampling_freq * bracket * bracket / (snr * snr))
}

/// Converts a signal-to-noise ratio in decibels to the linear ratio used by
/// [`compute_sensing_time`].
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
