//! Experiment configuration: one TOML document per experiment.
//!
//! Top-level keys select the scenario, master seed, run count and output
//! directory; `[sensing]` describes the detector; `[slotted]` or
//! `[unslotted]` carries the scenario parameters and `[optimizer]` tunes the
//! period search. Unknown keys are rejected so typos surface as errors.

use std::path::{Path, PathBuf};

use cogmac::model::SensingModel;
use cogmac::slotted::sim::{random_channels, CountingRule};
use cogmac::slotted::Policy;
use cogmac::unslotted::optimizer::InterferenceConstraint;
use cogmac::unslotted::{OptimizerConfig, OverheadMode};
use cogmac::{SlottedChannelParams, UnslottedChannelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Slotted channels, every channel sensed each slot.
    SlottedFull,
    /// Slotted channels, `sense_budget` channels sensed each slot.
    SlottedPartial,
    /// Un-slotted channels, periodic sensing of all channels.
    UnslottedMulti,
    /// Un-slotted channels, hopping access of one channel at a time.
    UnslottedSingle,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SlottedFull => "slotted_full",
            Scenario::SlottedPartial => "slotted_partial",
            Scenario::UnslottedMulti => "unslotted_multi",
            Scenario::UnslottedSingle => "unslotted_single",
        }
    }

    pub fn is_slotted(self) -> bool {
        matches!(self, Scenario::SlottedFull | Scenario::SlottedPartial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Master seed; run `r` uses `derive_seed(seed, r)`.
    pub seed: u64,
    pub runs: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub sensing: SensingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slotted: Option<SlottedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unslotted: Option<UnslottedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Detector description. Either an explicit `sensing_time`, or `snr_db`
/// plus `sampling_freq` to size an energy detector for the error targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing_time: Option<f64>,
    #[serde(default)]
    pub p_fa: f64,
    #[serde(default)]
    pub p_md: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_freq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub p01: f64,
    pub p11: f64,
    #[serde(default = "unit_bandwidth")]
    pub bandwidth: f64,
}

fn unit_bandwidth() -> f64 {
    1.0
}

/// Channels drawn with `p01, p11 ~ U[low, high)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomChannels {
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    /// Draw `p11 = p01` (memoryless channels).
    #[serde(default)]
    pub memoryless: bool,
}

fn default_low() -> f64 {
    0.1
}

fn default_high() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlottedSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomChannels>,
    pub horizon: u64,
    pub policies: Vec<Policy>,
    /// Channels sensed per slot; required for `slotted_partial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense_budget: Option<usize>,
    #[serde(default = "default_learning_period")]
    pub learning_period: u64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default)]
    pub counting: CountingRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_window: Option<usize>,
    #[serde(default)]
    pub access_during_learning: bool,
    /// Write every `trace_stride`-th slot to the trace.
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    /// Fraction of the horizon, counted from the end, reported as the
    /// final-window throughput.
    #[serde(default = "default_final_window")]
    pub final_window: f64,
}

fn default_learning_period() -> u64 {
    20
}

fn default_discount() -> f64 {
    0.9999
}

fn default_stride() -> u64 {
    1
}

fn default_final_window() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodMethod {
    /// Separate periods after sensing free and after sensing busy.
    TwoPeriods,
    /// One period per channel regardless of the outcome.
    SinglePeriod,
}

impl PeriodMethod {
    pub fn name(self) -> &'static str {
        match self {
            PeriodMethod::TwoPeriods => "two_periods",
            PeriodMethod::SinglePeriod => "single_period",
        }
    }
}

fn default_methods() -> Vec<PeriodMethod> {
    vec![PeriodMethod::TwoPeriods, PeriodMethod::SinglePeriod]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnslottedSection {
    /// Rate of the exponential free periods, per channel.
    pub free_rates: Vec<f64>,
    /// Rate of the exponential busy periods, per channel.
    pub busy_rates: Vec<f64>,
    /// Interference limit as a fraction of each channel's utilization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference_fraction: Option<f64>,
    /// Explicit per-channel interference limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference_max: Option<Vec<f64>>,
    /// Simulated time per run.
    pub horizon: f64,
    /// Sensing-period strategies compared in `unslotted_multi`.
    #[serde(default = "default_methods")]
    pub methods: Vec<PeriodMethod>,
    /// RTS and CTS duration of the hopping handshake (`unslotted_single`).
    #[serde(default)]
    pub rts_cts_duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overhead: Option<OverheadMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML rendering; parses back to an equal config.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(runs) = overrides.runs {
            self.runs = runs;
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(config_error("`runs` must be at least 1"));
        }
        self.sensing_model()?;
        if let Some(opt) = &self.optimizer {
            if opt.restarts == Some(0) {
                return Err(config_error("optimizer.restarts must be at least 1"));
            }
        }
        if self.scenario.is_slotted() {
            if self.unslotted.is_some() {
                return Err(config_error("[unslotted] is not allowed in a slotted scenario"));
            }
            self.validate_slotted()
        } else {
            if self.slotted.is_some() {
                return Err(config_error("[slotted] is not allowed in an un-slotted scenario"));
            }
            self.validate_unslotted()
        }
    }

    fn validate_slotted(&self) -> Result<(), CliError> {
        let s = self.slotted_section()?;
        let n = self.slotted_channels()?.len();
        if s.policies.is_empty() {
            return Err(config_error("slotted.policies must not be empty"));
        }
        if s.horizon == 0 {
            return Err(config_error("slotted.horizon must be at least 1"));
        }
        if s.trace_stride == 0 {
            return Err(config_error("slotted.trace_stride must be at least 1"));
        }
        if !(s.final_window > 0.0 && s.final_window <= 1.0) {
            return Err(config_error("slotted.final_window must lie in (0, 1]"));
        }
        match self.scenario {
            Scenario::SlottedFull => {
                if let Some(l) = s.sense_budget {
                    if l != n {
                        return Err(config_error(format!(
                            "slotted.sense_budget = {l} but slotted_full senses all {n} channels"
                        )));
                    }
                }
            }
            _ => {
                let l = s
                    .sense_budget
                    .ok_or_else(|| config_error("slotted.sense_budget is required for slotted_partial"))?;
                if l == 0 || l > n {
                    return Err(config_error(format!("slotted.sense_budget = {l} not in [1, {n}]")));
                }
                if let Some(p) = s.policies.iter().find(|p| is_full_sensing(**p)) {
                    return Err(config_error(format!(
                        "policy {} senses every channel; use scenario slotted_full",
                        p.name()
                    )));
                }
            }
        }
        for &policy in &s.policies {
            self.slotted_config(policy)?.validate()?;
        }
        Ok(())
    }

    fn validate_unslotted(&self) -> Result<(), CliError> {
        let u = self.unslotted_section()?;
        self.unslotted_channels()?;
        self.interference_constraint()?;
        if !(u.horizon > 0.0) || !u.horizon.is_finite() {
            return Err(config_error("unslotted.horizon must be positive and finite"));
        }
        if !(u.rts_cts_duration >= 0.0) || !u.rts_cts_duration.is_finite() {
            return Err(config_error("unslotted.rts_cts_duration must be nonnegative"));
        }
        match self.scenario {
            Scenario::UnslottedMulti if u.methods.is_empty() => {
                Err(config_error("unslotted.methods must not be empty"))
            }
            Scenario::UnslottedSingle if u.rts_cts_duration == 0.0 && !(self.sensing_model()?.sensing_time > 0.0) => {
                Err(config_error(
                    "unslotted_single needs a positive sensing time or rts_cts_duration",
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn sensing_model(&self) -> Result<SensingModel, CliError> {
        let s = &self.sensing;
        let model = match (s.snr_db, s.sampling_freq) {
            (Some(snr_db), Some(fs)) => {
                if s.sensing_time.is_some() {
                    return Err(config_error(
                        "sensing: give either sensing_time or snr_db with sampling_freq, not both",
                    ));
                }
                SensingModel::energy_detector(s.p_fa, s.p_md, cogmac::model::db_to_linear(snr_db), fs)?
            }
            (None, None) => SensingModel::with_errors(s.p_fa, s.p_md, s.sensing_time.unwrap_or(0.0))?,
            _ => return Err(config_error("sensing: snr_db and sampling_freq go together")),
        };
        Ok(model)
    }

    pub fn slotted_section(&self) -> Result<&SlottedSection, CliError> {
        self.slotted
            .as_ref()
            .ok_or_else(|| config_error(format!("scenario {} needs a [slotted] table", self.scenario.name())))
    }

    pub fn unslotted_section(&self) -> Result<&UnslottedSection, CliError> {
        self.unslotted
            .as_ref()
            .ok_or_else(|| config_error(format!("scenario {} needs an [unslotted] table", self.scenario.name())))
    }

    pub fn slotted_channels(&self) -> Result<Vec<SlottedChannelParams>, CliError> {
        let s = self.slotted_section()?;
        let channels = match (&s.channels, &s.random) {
            (Some(list), None) => list
                .iter()
                .map(|c| SlottedChannelParams::new(c.p01, c.p11, c.bandwidth))
                .collect::<Result<Vec<_>, _>>()?,
            (None, Some(r)) => {
                if r.count == 0 {
                    return Err(config_error("slotted.random.count must be at least 1"));
                }
                if !(0.0 <= r.low && r.low < r.high && r.high <= 1.0) {
                    return Err(config_error("slotted.random needs 0 <= low < high <= 1"));
                }
                random_channels(r.seed, r.count, r.low..r.high, r.memoryless)
            }
            _ => {
                return Err(config_error(
                    "slotted: give exactly one of `channels` or `random`",
                ))
            }
        };
        if channels.is_empty() {
            return Err(config_error("slotted.channels must not be empty"));
        }
        Ok(channels)
    }

    /// Simulator settings for one policy, with `block_count = runs`.
    pub fn slotted_config(&self, policy: Policy) -> Result<cogmac::slotted::SlottedConfig, CliError> {
        let s = self.slotted_section()?;
        let channels = self.slotted_channels()?;
        let n = channels.len();
        let mut cfg = cogmac::slotted::SlottedConfig::new(channels, policy);
        cfg.sense_budget = if matches!(policy, Policy::Ucb | Policy::FixedBaseline) {
            1
        } else if is_full_sensing(policy) {
            n
        } else {
            match self.scenario {
                Scenario::SlottedFull => n,
                _ => s.sense_budget.unwrap_or(1),
            }
        };
        cfg.sensing = self.sensing_model()?;
        cfg.horizon = s.horizon;
        cfg.learning_period = s.learning_period;
        cfg.seed = self.seed;
        cfg.block_count = self.runs;
        cfg.discount = s.discount;
        cfg.counting = s.counting;
        cfg.learning_window = s.learning_window;
        cfg.access_during_learning = s.access_during_learning;
        Ok(cfg)
    }

    pub fn unslotted_channels(&self) -> Result<Vec<UnslottedChannelParams>, CliError> {
        let u = self.unslotted_section()?;
        if u.free_rates.len() != u.busy_rates.len() {
            return Err(config_error(format!(
                "unslotted: {} free_rates but {} busy_rates",
                u.free_rates.len(),
                u.busy_rates.len()
            )));
        }
        if u.free_rates.is_empty() {
            return Err(config_error("unslotted.free_rates must not be empty"));
        }
        Ok(u
            .free_rates
            .iter()
            .zip(&u.busy_rates)
            .map(|(&f, &b)| UnslottedChannelParams::new(f, b))
            .collect::<Result<Vec<_>, _>>()?)
    }

    pub fn interference_constraint(&self) -> Result<InterferenceConstraint, CliError> {
        let u = self.unslotted_section()?;
        let channels = self.unslotted_channels()?;
        let constraint = match (u.interference_fraction, &u.interference_max) {
            (Some(f), None) => {
                if !(f > 0.0) || !f.is_finite() {
                    return Err(config_error("unslotted.interference_fraction must be positive"));
                }
                InterferenceConstraint::utilization_fraction(&channels, f)
            }
            (None, Some(max)) => {
                if max.len() != channels.len() {
                    return Err(config_error(format!(
                        "unslotted.interference_max has {} entries for {} channels",
                        max.len(),
                        channels.len()
                    )));
                }
                if max.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
                    return Err(config_error("unslotted.interference_max entries must be positive"));
                }
                InterferenceConstraint {
                    per_channel_max: max.clone(),
                }
            }
            _ => {
                return Err(config_error(
                    "unslotted: give exactly one of `interference_fraction` or `interference_max`",
                ))
            }
        };
        Ok(constraint)
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default();
        if let Some(o) = &self.optimizer {
            if let Some(v) = o.restarts {
                cfg.restarts = v;
            }
            if let Some(v) = o.tol {
                cfg.tol = v;
            }
            if let Some(v) = o.max_sweeps {
                cfg.max_sweeps = v;
            }
            if let Some(v) = o.overhead {
                cfg.overhead = v;
            }
            if let Some(v) = o.seed {
                cfg.seed = v;
            }
        }
        cfg
    }
}

pub fn is_full_sensing(policy: Policy) -> bool {
    matches!(
        policy,
        Policy::FullSensingBlind | Policy::FullSensingInformed | Policy::FullSensingIid
    )
}
