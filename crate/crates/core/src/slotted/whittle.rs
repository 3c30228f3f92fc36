//! Whittle index of a single Gilbert-Elliott channel.
//!
//! The arm's state is the belief `ω` that the channel is free. Activating
//! (sensing) the arm earns `ω` and reveals the state, so the next belief is
//! `p11` or `p01`; leaving it passive earns the subsidy `m` and the belief
//! drifts to `τ(ω) = ω·p11 + (1−ω)·p01`. The index at `ω` is the subsidy at
//! which both actions are equally valuable.
//!
//! Two routes are provided:
//!
//! - [`whittle_index`] works from the definition: relative value iteration
//!   of the subsidized single-arm problem on a uniform belief grid, and
//!   bisection on the subsidy.
//! - [`threshold_index`] evaluates the threshold policy "passive iff belief
//!   ≤ ω" exactly along the belief orbits and solves the indifference
//!   condition, which is linear in the subsidy. It costs O(1) and is what
//!   the slot simulator uses; its agreement with the grid route is tested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical settings for [`whittle_index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhittleConfig {
    /// Discount factor β ∈ [0, 1).
    pub discount: f64,
    /// Points of the uniform belief grid (≥ 101).
    pub grid_points: usize,
    /// Bound on the error of the relative value function (sup norm).
    pub value_tol: f64,
    /// Width of the final subsidy bracket.
    pub subsidy_tol: f64,
}

impl Default for WhittleConfig {
    fn default() -> Self {
        Self {
            discount: 0.9999,
            grid_points: 2001,
            value_tol: 1e-9,
            subsidy_tol: 1e-6,
        }
    }
}

impl WhittleConfig {
    pub fn with_discount(discount: f64) -> Self {
        Self {
            discount,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid("discount", format!("{} not in [0, 1)", self.discount)));
        }
        if self.grid_points < 101 {
            return Err(Error::invalid("grid_points", format!("{} < 101", self.grid_points)));
        }
        if !(self.value_tol > 0.0) || !(self.subsidy_tol > 0.0) {
            return Err(Error::invalid("tolerance", "tolerances must be positive"));
        }
        Ok(())
    }

    /// Iteration cap of a single value-iteration solve.
    pub fn iteration_cap(&self) -> usize {
        (10 * (1.0 / (1.0 - self.discount)).ceil() as usize).max(MIN_ITERATION_CAP)
    }
}

/// Floor of [`WhittleConfig::iteration_cap`]: small discounts still need a
/// few hundred sweeps to reach a tight span.
const MIN_ITERATION_CAP: usize = 5_000;

fn check_probs(omega: f64, p01: f64, p11: f64) -> Result<()> {
    for (name, p) in [("omega", omega), ("p01", p01), ("p11", p11)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("{p} is not a probability")));
        }
    }
    Ok(())
}

/// Linear interpolation stencil on the uniform grid.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    lo: usize,
    w: f64,
}

impl Stencil {
    fn at(x: f64, n: usize) -> Self {
        let pos = x.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = (pos.floor() as usize).min(n - 2);
        Stencil {
            lo,
            w: pos - lo as f64,
        }
    }

    fn eval(&self, v: &[f64]) -> f64 {
        v[self.lo] * (1.0 - self.w) + v[self.lo + 1] * self.w
    }
}

/// Value-iteration workspace for one arm; reused across subsidy values.
struct ArmSolver {
    beta: f64,
    grid: Vec<f64>,
    drift: Vec<Stencil>,
    to_free: Stencil,
    to_busy: Stencil,
    p11: f64,
    p01: f64,
    value: Vec<f64>,
    scratch: Vec<f64>,
}

impl ArmSolver {
    fn new(p01: f64, p11: f64, cfg: &WhittleConfig) -> Self {
        let n = cfg.grid_points;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let drift = grid
            .iter()
            .map(|&x| Stencil::at(x * p11 + (1.0 - x) * p01, n))
            .collect();
        Self {
            beta: cfg.discount,
            drift,
            to_free: Stencil::at(p11, n),
            to_busy: Stencil::at(p01, n),
            p11,
            p01,
            value: vec![0.0; n],
            scratch: vec![0.0; n],
            grid,
        }
    }

    /// Solves the subsidized problem for `subsidy`, leaving the relative
    /// value function in `self.value`.
    fn solve(&mut self, subsidy: f64, tol: f64, cap: usize) -> Result<()> {
        let beta = self.beta;
        // McQueen bound: the relative error is at most β/(1−β)·span(TV − V).
        let span_target = if beta == 0.0 {
            f64::INFINITY
        } else {
            tol * (1.0 - beta) / beta
        };
        for _ in 0..cap {
            let v_free = self.to_free.eval(&self.value);
            let v_busy = self.to_busy.eval(&self.value);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..self.grid.len() {
                let x = self.grid[k];
                let passive = subsidy + beta * self.drift[k].eval(&self.value);
                let active = x + beta * (x * v_free + (1.0 - x) * v_busy);
                let next = passive.max(active);
                let diff = next - self.value[k];
                lo = lo.min(diff);
                hi = hi.max(diff);
                self.scratch[k] = next;
            }
            let anchor = self.scratch[0];
            for (v, s) in self.value.iter_mut().zip(&self.scratch) {
                *v = s - anchor;
            }
            if hi - lo <= span_target {
                return Ok(());
            }
        }
        Err(Error::NonConvergence(format!(
            "value iteration exceeded {cap} iterations at subsidy {subsidy}"
        )))
    }

    /// Active minus passive action value at belief `omega` under the current
    /// value function.
    fn advantage(&self, omega: f64, subsidy: f64) -> f64 {
        let n = self.grid.len();
        let v_free = self.to_free.eval(&self.value);
        let v_busy = self.to_busy.eval(&self.value);
        let drifted = Stencil::at(omega * self.p11 + (1.0 - omega) * self.p01, n).eval(&self.value);
        let active = omega + self.beta * (omega * v_free + (1.0 - omega) * v_busy);
        let passive = subsidy + self.beta * drifted;
        active - passive
    }
}

/// Whittle index at belief `omega` from its definition.
pub fn whittle_index(omega: f64, p01: f64, p11: f64, cfg: &WhittleConfig) -> Result<f64> {
    check_probs(omega, p01, p11)?;
    cfg.validate()?;
    let cap = cfg.iteration_cap();
    let mut solver = ArmSolver::new(p01, p11, cfg);

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    solver.solve(lo, cfg.value_tol, cap)?;
    let at_lo = solver.advantage(omega, lo);
    solver.solve(hi, cfg.value_tol, cap)?;
    let at_hi = solver.advantage(omega, hi);
    // Zero subsidy never favours passivity; a unit subsidy always does.
    let slack = 1e-9;
    if at_lo < -slack || at_hi > slack {
        return Err(Error::NonConvergence(format!(
            "subsidy bracket [0, 1] does not contain the index (advantages {at_lo}, {at_hi})"
        )));
    }
    while hi - lo > cfg.subsidy_tol {
        let mid = 0.5 * (lo + hi);
        solver.solve(mid, cfg.value_tol, cap)?;
        if solver.advantage(omega, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Affine function of the subsidy: `c + s·m`.
#[derive(Debug, Clone, Copy, Default)]
struct Affine {
    c: f64,
    s: f64,
}

impl Affine {
    fn scale(self, k: f64) -> Affine {
        Affine {
            c: self.c * k,
            s: self.s * k,
        }
    }

    fn add(self, o: Affine) -> Affine {
        Affine {
            c: self.c + o.c,
            s: self.s + o.s,
        }
    }
}

/// Value of a belief under the threshold policy, written in terms of the
/// unknown values at `p11` and `p01`.
#[derive(Debug, Clone, Copy)]
struct Reduced {
    constant: Affine,
    coef_free: f64,
    coef_busy: f64,
}

/// Orbit of the passive belief map.
#[derive(Debug, Clone, Copy)]
struct Drift {
    p01: f64,
    slope: f64,
    fixed: f64,
}

impl Drift {
    fn new(p01: f64, p11: f64) -> Self {
        let slope = p11 - p01;
        let fixed = if slope < 1.0 { p01 / (1.0 - slope) } else { 0.5 };
        Self { p01, slope, fixed }
    }

    fn step(&self, x: f64) -> f64 {
        self.p01 + self.slope * x
    }

    fn iterate(&self, x: f64, k: u64) -> f64 {
        if k == 0 {
            x
        } else if self.slope == 0.0 {
            self.p01
        } else {
            self.fixed + self.slope.powf(k as f64) * (x - self.fixed)
        }
    }

    /// Smallest `k ≥ 0` with `τᵏ(x) > threshold`, if any.
    fn first_exceed(&self, x: f64, threshold: f64) -> Option<u64> {
        if x > threshold {
            return Some(0);
        }
        let next = self.step(x);
        if next > threshold {
            return Some(1);
        }
        // Beyond one step only a monotone approach from below can cross. A
        // fixed point within rounding of the threshold is never crossed.
        let margin = 1e-12 * self.fixed.abs().max(1.0);
        if self.slope <= 0.0 || self.slope >= 1.0 || x >= self.fixed || self.fixed <= threshold + margin {
            return None;
        }
        let ratio = (self.fixed - threshold) / (self.fixed - x);
        let guess = (ratio.ln() / self.slope.ln()).floor().max(1.0) as u64;
        let mut k = guess.max(2);
        while self.iterate(x, k) <= threshold {
            k += 1;
        }
        while k > 2 && self.iterate(x, k - 1) > threshold {
            k -= 1;
        }
        Some(k)
    }
}

fn reduce(x: f64, threshold: f64, drift: &Drift, beta: f64) -> Reduced {
    let annuity = |k: u64| -> f64 {
        if beta == 0.0 {
            if k == 0 {
                0.0
            } else {
                1.0
            }
        } else {
            (1.0 - beta.powf(k as f64)) / (1.0 - beta)
        }
    };
    match drift.first_exceed(x, threshold) {
        None => Reduced {
            constant: Affine {
                c: 0.0,
                s: 1.0 / (1.0 - beta),
            },
            coef_free: 0.0,
            coef_busy: 0.0,
        },
        Some(k) => {
            let y = drift.iterate(x, k);
            let bk = if k == 0 { 1.0 } else { beta.powf(k as f64) };
            Reduced {
                constant: Affine {
                    c: bk * y,
                    s: annuity(k),
                },
                coef_free: bk * beta * y,
                coef_busy: bk * beta * (1.0 - y),
            }
        }
    }
}

/// Whittle index at `omega` from an exact evaluation of the threshold
/// policy that is indifferent at `omega`.
pub fn threshold_index(omega: f64, p01: f64, p11: f64, discount: f64) -> f64 {
    let beta = discount;
    let drift = Drift::new(p01, p11);
    let free = reduce(p11, omega, &drift, beta);
    let busy = reduce(p01, omega, &drift, beta);

    // Solve V(p11), V(p01) from the two reduced equations.
    let a11 = 1.0 - free.coef_free;
    let a12 = -free.coef_busy;
    let a21 = -busy.coef_free;
    let a22 = 1.0 - busy.coef_busy;
    let det = a11 * a22 - a12 * a21;
    let v_free = free.constant.scale(a22 / det).add(busy.constant.scale(-a12 / det));
    let v_busy = busy.constant.scale(a11 / det).add(free.constant.scale(-a21 / det));

    let drifted = reduce(drift.step(omega), omega, &drift, beta);
    let v_drifted = drifted
        .constant
        .add(v_free.scale(drifted.coef_free))
        .add(v_busy.scale(drifted.coef_busy));

    let active = Affine { c: omega, s: 0.0 }
        .add(v_free.scale(beta * omega))
        .add(v_busy.scale(beta * (1.0 - omega)));
    let passive = Affine { c: 0.0, s: 1.0 }.add(v_drifted.scale(beta));
    let diff = active.add(passive.scale(-1.0));
    if diff.s.abs() < 1e-300 {
        return omega;
    }
    -diff.c / diff.s
}
