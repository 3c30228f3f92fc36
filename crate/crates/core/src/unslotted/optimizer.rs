//! Sensing-period optimization under per-channel interference limits, the
//! single-channel access period, and the channel search order.
//!
//! Channels interact only through the aggregate sensing-overhead factor
//! `Σ_j T_s/μ_j`, so the two-period problem is solved by block-coordinate
//! ascent: each channel's `(T^F, T^B)` is improved with the others fixed,
//! and sweeps repeat until the objective stops moving. Each block is a
//! derivative-free pattern search in log-period space with the interference
//! constraint handled by projection: for a given `T^B` the largest feasible
//! `T^F` is found by bisection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelState, SensingModel, UnslottedChannelParams};
use crate::seed;
use crate::unslotted::analytics::{
    channel_metrics_with_factor, mean_sense_interval, overhead_factor, ChannelMetrics,
    OverheadMode, PeriodPair,
};
use crate::unslotted::renewal::delta;

/// Per-channel interference limits `T_i^Imax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConstraint {
    pub per_channel_max: Vec<f64>,
}

impl InterferenceConstraint {
    /// `T_i^Imax = fraction · u_i`.
    pub fn utilization_fraction(params: &[UnslottedChannelParams], fraction: f64) -> Self {
        Self {
            per_channel_max: params.iter().map(|p| fraction * p.utilization()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub feasibility_tol: f64,
    pub restarts: usize,
    /// Stop when a full sweep improves the objective by less than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Lower period bound; the effective bound is `max(min_period, T_s)`.
    pub min_period: f64,
    /// Upper period bound as a multiple of the longest mean period.
    pub max_period_factor: f64,
    pub overhead: OverheadMode,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            restarts: 8,
            tol: 1e-8,
            max_sweeps: 200,
            min_period: 1e-6,
            max_period_factor: 1e4,
            overhead: OverheadMode::CrossChannel,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub periods: Vec<PeriodPair>,
    /// Throughput `R` at `periods`.
    pub objective: f64,
    /// `T_i^Imax − T_i^I` at `periods`.
    pub constraint_slack: Vec<f64>,
    pub metrics: Vec<ChannelMetrics>,
    /// Sweeps of the best start.
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    params: &'a [UnslottedChannelParams],
    sensing: &'a SensingModel,
    limits: &'a [f64],
    lo: f64,
    hi: f64,
    mode: OverheadMode,
}

impl<'a> Problem<'a> {
    fn new(
        params: &'a [UnslottedChannelParams],
        sensing: &'a SensingModel,
        constraint: &'a InterferenceConstraint,
        cfg: &OptimizerConfig,
    ) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Empty("channel list"));
        }
        sensing.validate()?;
        if constraint.per_channel_max.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: constraint.per_channel_max.len(),
            });
        }
        for p in params {
            p.validate()?;
        }
        if let Some(bad) = constraint.per_channel_max.iter().find(|&&m| !(m > 0.0)) {
            return Err(Error::Infeasible(format!(
                "interference limit {bad} leaves no positive-period point"
            )));
        }
        let longest_mean = params
            .iter()
            .map(|p| p.mean_free().max(p.mean_busy()))
            .fold(0.0, f64::max);
        let lo = cfg.min_period.max(sensing.sensing_time);
        let hi = cfg.max_period_factor * longest_mean;
        if !(lo < hi) {
            return Err(Error::invalid("min_period", format!("period bounds [{lo}, {hi}] are empty")));
        }
        Ok(Self {
            params,
            sensing,
            limits: &constraint.per_channel_max,
            lo,
            hi,
            mode: cfg.overhead,
        })
    }

    fn interference(&self, i: usize, tf: f64, tb: f64) -> f64 {
        let periods = PeriodPair { t_free: tf, t_busy: tb };
        channel_metrics_with_factor(&self.params[i], periods, self.sensing, 0.0)
            .map(|m| m.interference)
            .unwrap_or(f64::INFINITY)
    }

    /// Largest feasible `T^F` in `[lo, hi]` for the given `T^B`, if any.
    fn max_free_period(&self, i: usize, tb: f64) -> Option<f64> {
        let limit = self.limits[i];
        if self.interference(i, self.lo, tb) > limit {
            return None;
        }
        if self.interference(i, self.hi, tb) <= limit {
            return Some(self.hi);
        }
        let (mut a, mut b) = (self.lo.ln(), self.hi.ln());
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.interference(i, m.exp(), tb) <= limit {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-13 {
                break;
            }
        }
        Some(a.exp())
    }

    fn mean_intervals(&self, periods: &[PeriodPair]) -> Vec<f64> {
        self.params
            .iter()
            .zip(periods)
            .map(|(p, &t)| mean_sense_interval(p, t, self.sensing).unwrap_or(f64::NAN))
            .collect()
    }

    fn metrics(&self, periods: &[PeriodPair]) -> Option<Vec<ChannelMetrics>> {
        let mus = self.mean_intervals(periods);
        (0..self.params.len())
            .map(|i| {
                let factor = overhead_factor(&mus, i, self.sensing.sensing_time, self.mode).ok()?;
                channel_metrics_with_factor(&self.params[i], periods[i], self.sensing, factor).ok()
            })
            .collect()
    }

    fn objective(&self, periods: &[PeriodPair]) -> f64 {
        match self.metrics(periods) {
            Some(ms) => {
                let r: f64 = ms.iter().map(ChannelMetrics::throughput).sum();
                if r.is_finite() {
                    r
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => f64::NEG_INFINITY,
        }
    }

    fn clamp_log(&self, x: f64) -> f64 {
        x.clamp(self.lo.ln(), self.hi.ln())
    }
}

/// Search space of one block.
#[derive(Clone, Copy)]
enum Block {
    /// `(log T^F, log T^B)` with `T^F` projected onto its feasible range.
    TwoPeriods,
    /// `T^F = T^B`.
    SinglePeriod,
}

struct BlockSearch<'p, 'a> {
    problem: &'p Problem<'a>,
    block: Block,
    channel: usize,
}

impl BlockSearch<'_, '_> {
    /// Feasible periods for a trial point in log space.
    fn project(&self, x: f64, y: f64) -> Option<PeriodPair> {
        let pr = self.problem;
        match self.block {
            Block::TwoPeriods => {
                let tb = pr.clamp_log(y).exp();
                let cap = pr.max_free_period(self.channel, tb)?;
                let tf = pr.clamp_log(x).exp().min(cap);
                Some(PeriodPair { t_free: tf, t_busy: tb })
            }
            Block::SinglePeriod => {
                let t = pr.clamp_log(x).exp();
                (pr.interference(self.channel, t, t) <= pr.limits[self.channel]).then_some(PeriodPair {
                    t_free: t,
                    t_busy: t,
                })
            }
        }
    }

    fn value(&self, periods: &mut [PeriodPair], trial: PeriodPair) -> f64 {
        let saved = periods[self.channel];
        periods[self.channel] = trial;
        let v = self.problem.objective(periods);
        periods[self.channel] = saved;
        v
    }

    /// Best point of a log-spaced grid; `None` if nothing is feasible.
    fn grid_seed(&self, periods: &mut [PeriodPair], points: usize) -> Option<(PeriodPair, f64)> {
        let pr = self.problem;
        let (a, b) = (pr.lo.ln(), pr.hi.ln());
        let at = |k: usize| a + (b - a) * k as f64 / (points - 1) as f64;
        let mut best: Option<(PeriodPair, f64)> = None;
        let mut consider = |p: PeriodPair, periods: &mut [PeriodPair]| {
            let v = self.value(periods, p);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((p, v));
            }
        };
        match self.block {
            Block::TwoPeriods => {
                for ky in 0..points {
                    let tb = at(ky).exp();
                    let Some(cap) = pr.max_free_period(self.channel, tb) else {
                        continue;
                    };
                    for kx in 0..points {
                        let tf = at(kx).exp();
                        if tf > cap {
                            consider(PeriodPair { t_free: cap, t_busy: tb }, periods);
                            break;
                        }
                        consider(PeriodPair { t_free: tf, t_busy: tb }, periods);
                    }
                }
            }
            Block::SinglePeriod => {
                for k in 0..points * points {
                    let x = a + (b - a) * k as f64 / (points * points - 1) as f64;
                    if let Some(p) = self.project(x, x) {
                        consider(p, periods);
                    }
                }
            }
        }
        best
    }

    /// Compass search from the channel's current periods. Returns the
    /// improved objective.
    fn improve(&self, periods: &mut [PeriodPair], mut step: f64) -> f64 {
        let start = periods[self.channel];
        let Some(mut current) = self.project(start.t_free.ln(), start.t_busy.max(self.problem.lo).ln()) else {
            return self.problem.objective(periods);
        };
        let mut best = self.value(periods, current);
        let dirs: &[(f64, f64)] = match self.block {
            Block::TwoPeriods => &[
                (1.0, 0.0),
                (-1.0, 0.0),
                (0.0, 1.0),
                (0.0, -1.0),
                (1.0, 1.0),
                (-1.0, -1.0),
                (1.0, -1.0),
                (-1.0, 1.0),
            ],
            Block::SinglePeriod => &[(1.0, 1.0), (-1.0, -1.0)],
        };
        while step > 1e-10 {
            let (x, y) = (current.t_free.ln(), current.t_busy.ln());
            let mut moved = false;
            let mut candidates: Vec<PeriodPair> = dirs
                .iter()
                .filter_map(|&(dx, dy)| self.project(x + dx * step, y + dy * step))
                .collect();
            if let Block::TwoPeriods = self.block {
                // Slide along the active constraint.
                for dy in [step, -step] {
                    let tb = self.problem.clamp_log(y + dy).exp();
                    if let Some(cap) = self.problem.max_free_period(self.channel, tb) {
                        candidates.push(PeriodPair { t_free: cap, t_busy: tb });
                    }
                }
            }
            for c in candidates {
                let v = self.value(periods, c);
                if v > best + 1e-15 {
                    best = v;
                    current = c;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        periods[self.channel] = current;
        best
    }
}

fn run_start(
    problem: &Problem,
    block: Block,
    cfg: &OptimizerConfig,
    mut periods: Vec<PeriodPair>,
    grid_seed: bool,
) -> Result<(Vec<PeriodPair>, f64, usize, bool)> {
    let n = problem.params.len();
    if grid_seed {
        for i in 0..n {
            let search = BlockSearch { problem, block, channel: i };
            let (p, _) = search.grid_seed(&mut periods, 48).ok_or_else(|| {
                Error::Infeasible(format!("no feasible sensing periods for channel {i}"))
            })?;
            periods[i] = p;
        }
    }
    let mut value = problem.objective(&periods);
    for sweep in 1..=cfg.max_sweeps {
        let before = value;
        for i in 0..n {
            let search = BlockSearch { problem, block, channel: i };
            value = search.improve(&mut periods, if sweep == 1 { 0.5 } else { 0.05 });
        }
        if (value - before).abs() < cfg.tol {
            return Ok((periods, value, sweep, true));
        }
    }
    Ok((periods, value, cfg.max_sweeps, false))
}

/// Periods, objective, sweeps and convergence flag of one start.
type StartOutcome = (Vec<PeriodPair>, f64, usize, bool);

fn optimize(
    params: &[UnslottedChannelParams],
    sensing: &SensingModel,
    constraint: &InterferenceConstraint,
    cfg: &OptimizerConfig,
    block: Block,
) -> Result<OptimizationResult> {
    let problem = Problem::new(params, sensing, constraint, cfg)?;
    let n = params.len();
    let restarts = cfg.restarts.max(1);
    let starts: Vec<Result<StartOutcome>> = (0..restarts)
        .into_par_iter()
        .map(|s| {
            if s == 0 {
                let init = vec![PeriodPair { t_free: problem.lo, t_busy: problem.lo }; n];
                return run_start(&problem, block, cfg, init, true);
            }
            let mut rng = seed::stream(seed::derive_seed(cfg.seed, s as u64), 0);
            let (a, b) = (problem.lo.ln(), problem.lo.ln().max(problem.hi.ln().min(problem.lo.ln() + 12.0)));
            let mut init = Vec::with_capacity(n);
            for i in 0..n {
                let search = BlockSearch { problem: &problem, block, channel: i };
                let mut point = None;
                for _ in 0..64 {
                    let x = rng.random_range(a..=b);
                    let y = match block {
                        Block::TwoPeriods => rng.random_range(a..=b),
                        Block::SinglePeriod => x,
                    };
                    if let Some(p) = search.project(x, y) {
                        point = Some(p);
                        break;
                    }
                }
                init.push(point.unwrap_or(PeriodPair { t_free: problem.lo, t_busy: problem.lo }));
            }
            run_start(&problem, block, cfg, init, false)
        })
        .collect();

    let mut best: Option<(Vec<PeriodPair>, f64, usize, bool)> = None;
    let mut first_err = None;
    for r in starts {
        match r {
            Ok(s) => {
                if best.as_ref().is_none_or(|b| s.1 > b.1) {
                    best = Some(s);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((periods, objective, iterations, converged)) = best else {
        return Err(first_err.unwrap_or(Error::NonConvergence("no start produced a point".into())));
    };
    let metrics = problem
        .metrics(&periods)
        .ok_or_else(|| Error::NonConvergence("optimum has undefined metrics".into()))?;
    let constraint_slack: Vec<f64> = metrics
        .iter()
        .zip(problem.limits)
        .map(|(m, &lim)| lim - m.interference)
        .collect();
    if constraint_slack.iter().any(|&s| s < -cfg.feasibility_tol) {
        return Err(Error::Infeasible("optimum violates an interference limit".into()));
    }
    Ok(OptimizationResult {
        periods,
        objective,
        constraint_slack,
        metrics,
        iterations,
        converged,
    })
}

/// Maximizes `R` over a free and a busy sensing period per channel subject
/// to `T_i^I ≤ T_i^Imax`.
pub fn optimize_two_periods(
    params: &[UnslottedChannelParams],
    sensing: &SensingModel,
    constraint: &InterferenceConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    optimize(params, sensing, constraint, cfg, Block::TwoPeriods)
}

/// Same problem restricted to one sensing period per channel (`T^F = T^B`).
pub fn optimize_single_period(
    params: &[UnslottedChannelParams],
    sensing: &SensingModel,
    constraint: &InterferenceConstraint,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    optimize(params, sensing, constraint, cfg, Block::SinglePeriod)
}

/// Interference of a single-channel access of length `T^F` that starts
/// right after the channel was sensed free:
/// `(1−P_FA)(T^F − δ¹(T^F))/T^F + P_MD(T^F − δ⁰(T^F))/T^F`.
pub fn single_channel_interference(params: &UnslottedChannelParams, t_free: f64, sensing: &SensingModel) -> f64 {
    if t_free <= 0.0 {
        return sensing.p_md;
    }
    let busy_after_free = (t_free - delta(params, ChannelState::Free, t_free)) / t_free;
    let busy_after_busy = (t_free - delta(params, ChannelState::Busy, t_free)) / t_free;
    (1.0 - sensing.p_fa) * busy_after_free + sensing.p_md * busy_after_busy
}

/// Interference as `T^F → ∞`: `u(1 − P_FA + P_MD)`.
pub fn limiting_interference(params: &UnslottedChannelParams, sensing: &SensingModel) -> f64 {
    params.utilization() * (1.0 - sensing.p_fa + sensing.p_md)
}

const ACCESS_ROOT_TOL: f64 = 1e-9;

/// Access period `T^F*` solving `T^I(T^F) = t_imax`.
pub fn solve_access_period(params: &UnslottedChannelParams, sensing: &SensingModel, t_imax: f64) -> Result<f64> {
    params.validate()?;
    sensing.validate()?;
    if !(t_imax > 0.0) {
        return Err(Error::invalid("t_imax", format!("{t_imax} must be positive")));
    }
    let limit = limiting_interference(params, sensing);
    if t_imax >= limit || t_imax <= sensing.p_md {
        return Err(Error::NoFiniteRoot { target: t_imax, limit });
    }
    let f = |t: f64| single_channel_interference(params, t, sensing) - t_imax;
    // Expanding bracket from the short-period side.
    let mut lo = 1e-12 * params.mean_free().min(params.mean_busy());
    let mut hi = lo;
    let cap = 1e12 * params.mean_free().max(params.mean_busy());
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::NoFiniteRoot { target: t_imax, limit });
        }
    }
    let mut mid = hi;
    for _ in 0..300 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < 1e-3 * ACCESS_ROOT_TOL || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = f(mid).abs();
    if residual >= ACCESS_ROOT_TOL {
        return Err(Error::NonConvergence(format!("access-period residual {residual}")));
    }
    Ok(mid)
}

/// Search index `γ_i`: `P¹¹(t − t_s)/T_s` if last sensed free, `P⁰¹(t − t_s)/T_s`
/// if last sensed busy.
pub fn search_index(
    params: &UnslottedChannelParams,
    last_state: ChannelState,
    elapsed: f64,
    sensing_time: f64,
) -> f64 {
    params.transition_prob(last_state, elapsed) / sensing_time
}

/// Channels in descending order of `γ_i`, ties to the lowest index.
pub fn channel_priority_order(
    last_states: &[ChannelState],
    last_sense_times: &[f64],
    now: f64,
    params: &[UnslottedChannelParams],
    sensing_time: f64,
) -> Result<Vec<usize>> {
    let n = params.len();
    for len in [last_states.len(), last_sense_times.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if !(sensing_time > 0.0) {
        return Err(Error::invalid("sensing_time", "must be positive to rank channels"));
    }
    if let Some(&t) = last_sense_times.iter().find(|&&t| t > now) {
        return Err(Error::invalid("last_sense_times", format!("{t} lies after now = {now}")));
    }
    let gamma: Vec<f64> = (0..n)
        .map(|i| search_index(&params[i], last_states[i], now - last_sense_times[i], sensing_time))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]));
    Ok(order)
}
