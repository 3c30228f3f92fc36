//! Steady-state performance of periodic two-period sensing.
//!
//! A channel sensed free is sensed again after `T^F`, one sensed busy after
//! `T^B`. The sensed state forms a two-state Markov chain; its stationary law
//! and the renewal quantities of [`super::renewal`] give the secondary
//! utilization, unexplored opportunity, interference and sensing overhead
//! of each channel, and the resulting secondary throughput.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelState, SensingModel, UnslottedChannelParams};
use crate::unslotted::renewal::delta;

/// Sensing periods of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodPair {
    /// `T^F`: time to the next sensing after sensing the channel free.
    pub t_free: f64,
    /// `T^B`: time to the next sensing after sensing the channel busy.
    /// Zero encodes the single-channel hopping specialization.
    pub t_busy: f64,
}

impl PeriodPair {
    pub fn new(t_free: f64, t_busy: f64) -> Result<Self> {
        let p = Self { t_free, t_busy };
        p.validate()?;
        Ok(p)
    }

    /// Same period after either outcome.
    pub fn single(t: f64) -> Result<Self> {
        Self::new(t, t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_free > 0.0) || !self.t_free.is_finite() {
            return Err(Error::invalid("t_free", format!("{} must be positive", self.t_free)));
        }
        if !(self.t_busy >= 0.0) || !self.t_busy.is_finite() {
            return Err(Error::invalid("t_busy", format!("{} must be nonnegative", self.t_busy)));
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.t_free.max(self.t_busy)
    }
}

/// How the aggregate sensing-overhead factor is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadMode {
    /// `Σ_j T_s/μ_j`: every channel's sensing interrupts the transmission.
    #[default]
    CrossChannel,
    /// `N·T_s/μ_i`: the summand taken literally with the channel's own `μ`.
    Literal,
}

/// Steady-state fractions of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    /// `T^SU`: fraction of time the channel is sensed or used.
    pub secondary_utilization: f64,
    /// `T^U`: fraction of time the channel is free but undiscovered.
    pub unexplored: f64,
    /// `T^I`: fraction of time the secondary user occupies a busy channel.
    pub interference: f64,
    /// `T^O`: useful time lost to sensing events.
    pub overhead: f64,
    /// `P^SS`: stationary probability the channel is sensed free.
    pub p_ss: f64,
    /// `μ`: mean time between sensing events.
    pub mean_interval: f64,
}

impl ChannelMetrics {
    /// `T^SU − T^I − T^O`.
    pub fn throughput(&self) -> f64 {
        self.secondary_utilization - self.interference - self.overhead
    }
}

/// `P^SS = P⁰¹(T^B) / (1 − P¹¹(T^F) + P⁰¹(T^B))`.
pub fn steady_state_sense_free(params: &UnslottedChannelParams, periods: PeriodPair) -> Result<f64> {
    periods.validate()?;
    let p01 = params.transition_prob(ChannelState::Busy, periods.t_busy);
    let p11 = params.transition_prob(ChannelState::Free, periods.t_free);
    let den = 1.0 - p11 + p01;
    if !(den > 0.0) {
        return Err(Error::DegenerateChain);
    }
    Ok(p01 / den)
}

fn mean_interval_from(p_ss: f64, periods: PeriodPair, sensing: &SensingModel) -> f64 {
    let (tf, tb) = (periods.t_free, periods.t_busy);
    p_ss * ((1.0 - sensing.p_fa) * tf + sensing.p_fa * tb)
        + (1.0 - p_ss) * (sensing.p_md * tf + (1.0 - sensing.p_md) * tb)
}

/// Mean time between sensing events,
/// `μ = P^SS[(1−P_FA)T^F + P_FA·T^B] + (1−P^SS)[P_MD·T^F + (1−P_MD)T^B]`.
pub fn mean_sense_interval(
    params: &UnslottedChannelParams,
    periods: PeriodPair,
    sensing: &SensingModel,
) -> Result<f64> {
    let p_ss = steady_state_sense_free(params, periods)?;
    Ok(mean_interval_from(p_ss, periods, sensing))
}

/// Aggregate sensing-overhead factor seen by channel `own`, capped at one.
pub fn overhead_factor(mean_intervals: &[f64], own: usize, sensing_time: f64, mode: OverheadMode) -> Result<f64> {
    if let Some(&bad) = mean_intervals.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::Domain(format!("mean sensing interval {bad} must be positive")));
    }
    let factor = match mode {
        OverheadMode::CrossChannel => mean_intervals.iter().map(|m| sensing_time / m).sum::<f64>(),
        OverheadMode::Literal => {
            let own_mu = *mean_intervals.get(own).ok_or(Error::DimensionMismatch {
                expected: own + 1,
                got: mean_intervals.len(),
            })?;
            mean_intervals.len() as f64 * sensing_time / own_mu
        }
    };
    Ok(factor.min(1.0))
}

/// Steady-state fractions of one channel. `overhead` multiplies the
/// interference-free utilization `T^SU − T^I` (see [`overhead_factor`]).
pub fn channel_metrics_with_factor(
    params: &UnslottedChannelParams,
    periods: PeriodPair,
    sensing: &SensingModel,
    overhead: f64,
) -> Result<ChannelMetrics> {
    let p_ss = steady_state_sense_free(params, periods)?;
    let mu = mean_interval_from(p_ss, periods, sensing);
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mean sensing interval {mu} must be positive")));
    }
    let (tf, tb) = (periods.t_free, periods.t_busy);
    let sensed_free = (1.0 - sensing.p_fa) * p_ss + sensing.p_md * (1.0 - p_ss);
    let secondary_utilization = sensed_free * tf / mu;
    let unexplored = (1.0 - sensing.p_md) * (1.0 - p_ss) * delta(params, ChannelState::Busy, tb) / mu
        + sensing.p_fa * p_ss * delta(params, ChannelState::Free, tb) / mu;
    let interference = (1.0 - sensing.p_fa) * p_ss * (tf - delta(params, ChannelState::Free, tf)) / mu
        + sensing.p_md * (1.0 - p_ss) * (tf - delta(params, ChannelState::Busy, tf)) / mu;
    let overhead = (secondary_utilization - interference) * overhead;
    Ok(ChannelMetrics {
        secondary_utilization,
        unexplored,
        interference,
        overhead,
        p_ss,
        mean_interval: mu,
    })
}

/// Steady-state fractions of one channel given every channel's mean
/// sensing interval (`all_mean_intervals[own]` is this channel's).
pub fn channel_metrics(
    params: &UnslottedChannelParams,
    periods: PeriodPair,
    sensing: &SensingModel,
    all_mean_intervals: &[f64],
    own: usize,
    mode: OverheadMode,
) -> Result<ChannelMetrics> {
    let factor = overhead_factor(all_mean_intervals, own, sensing.sensing_time, mode)?;
    channel_metrics_with_factor(params, periods, sensing, factor)
}

/// Metrics of every channel plus the network throughput computed both as
/// `Σ(T^SU − T^I − T^O)` and as `Σ((1−u) − T^U − T^O)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub channels: Vec<ChannelMetrics>,
    pub throughput: f64,
    pub throughput_via_unexplored: f64,
}

pub fn network_metrics(
    all_params: &[UnslottedChannelParams],
    all_periods: &[PeriodPair],
    sensing: &SensingModel,
    mode: OverheadMode,
) -> Result<NetworkMetrics> {
    if all_params.len() != all_periods.len() {
        return Err(Error::DimensionMismatch {
            expected: all_params.len(),
            got: all_periods.len(),
        });
    }
    let mus = all_params
        .iter()
        .zip(all_periods)
        .map(|(p, &t)| mean_sense_interval(p, t, sensing))
        .collect::<Result<Vec<f64>>>()?;
    let mut channels = Vec::with_capacity(all_params.len());
    let (mut r1, mut r2) = (0.0, 0.0);
    for (i, (p, &t)) in all_params.iter().zip(all_periods).enumerate() {
        let m = channel_metrics(p, t, sensing, &mus, i, mode)?;
        r1 += m.throughput();
        r2 += (1.0 - p.utilization()) - m.unexplored - m.overhead;
        channels.push(m);
    }
    Ok(NetworkMetrics {
        channels,
        throughput: r1,
        throughput_via_unexplored: r2,
    })
}

/// Secondary throughput `R` in channel-time units (cross-channel overhead).
pub fn network_throughput(
    all_params: &[UnslottedChannelParams],
    all_periods: &[PeriodPair],
    sensing: &SensingModel,
) -> Result<f64> {
    Ok(network_metrics(all_params, all_periods, sensing, OverheadMode::CrossChannel)?.throughput)
}

/// Total spectrum opportunity `Σ(1 − u_i)`, an upper bound on `R`.
pub fn total_opportunity(all_params: &[UnslottedChannelParams]) -> f64 {
    all_params.iter().map(|p| 1.0 - p.utilization()).sum()
}
