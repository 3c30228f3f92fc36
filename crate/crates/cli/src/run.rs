//! Scenario dispatch: turns a validated config into result tables.

use cogmac::seed::derive_seed;
use cogmac::slotted::sim::sample_std_error;
use cogmac::slotted::{genie_throughput_bound, monte_carlo};
use cogmac::unslotted::analytics::total_opportunity;
use cogmac::unslotted::optimizer::{
    optimize_single_period, optimize_two_periods, single_channel_interference, solve_access_period,
};
use cogmac::unslotted::sim::{simulate_multi, simulate_single, EmpiricalMetrics, TRACE_BINS};
use cogmac::unslotted::{OptimizationResult, PeriodPair};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PeriodMethod, Scenario};
use crate::error::CliError;
use crate::table::{num, Table};

const THROUGHPUT_UNIT: &str = "channel-time per unit time";
const SLOT_UNIT: &str = "bandwidth per slot";

/// Everything `run` writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Table,
    pub trace: Table,
    /// Per-channel periods and interference; un-slotted scenarios only.
    pub channels: Option<Table>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    match cfg.scenario {
        Scenario::SlottedFull | Scenario::SlottedPartial => run_slotted(cfg),
        Scenario::UnslottedMulti => run_unslotted_multi(cfg),
        Scenario::UnslottedSingle => run_unslotted_single(cfg),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run_slotted(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = cfg.slotted_section()?;
    let bound = genie_throughput_bound(&cfg.slotted_channels()?)?;
    let horizon = s.horizon as usize;
    let window = ((s.final_window * horizon as f64).ceil() as usize).clamp(1, horizon);

    let mut summary = Table::new([
        "scenario".to_string(),
        "method".to_string(),
        "runs [count]".to_string(),
        "horizon [slots]".to_string(),
        format!("mean_throughput [{SLOT_UNIT}]"),
        format!("std_error [{SLOT_UNIT}]"),
        format!("final_window_throughput [{SLOT_UNIT}]"),
        format!("genie_bound [{SLOT_UNIT}]"),
        "constraint_slack [fraction of time]".to_string(),
        "collisions [count]".to_string(),
        "sync_failures [count]".to_string(),
    ]);
    let mut header = vec!["slot [slots]".to_string()];
    let mut traces = Vec::new();
    for &policy in &s.policies {
        let mc = monte_carlo(&cfg.slotted_config(policy)?)?;
        summary.push(vec![
            cfg.scenario.name().to_string(),
            policy.name().to_string(),
            cfg.runs.to_string(),
            s.horizon.to_string(),
            num(mc.mean_throughput),
            num(mc.std_error),
            num(mc.window_mean(horizon - window, horizon)),
            num(bound),
            String::new(),
            mc.collisions.to_string(),
            mc.sync_violations.to_string(),
        ]);
        header.push(format!("{}_throughput [{SLOT_UNIT}]", policy.name()));
        header.push(format!("{}_std_error [{SLOT_UNIT}]", policy.name()));
        traces.push(mc);
    }

    let mut trace = Table::new(header);
    let stride = s.trace_stride as usize;
    for k in (0..horizon).filter(|k| (k + 1) % stride == 0 || k + 1 == horizon) {
        let mut row = vec![(k + 1).to_string()];
        for mc in &traces {
            row.push(num(mc.mean_trace[k]));
            row.push(num(mc.stderr_trace[k]));
        }
        trace.push(row);
    }
    Ok(Report {
        summary,
        trace,
        channels: None,
    })
}

fn unslotted_summary() -> Table {
    Table::new([
        "scenario".to_string(),
        "method".to_string(),
        "runs [count]".to_string(),
        "horizon [time units]".to_string(),
        format!("analytic_throughput [{THROUGHPUT_UNIT}]"),
        format!("mean_throughput [{THROUGHPUT_UNIT}]"),
        format!("std_error [{THROUGHPUT_UNIT}]"),
        format!("opportunity_bound [{THROUGHPUT_UNIT}]"),
        "constraint_slack [fraction of time]".to_string(),
        "measured_constraint_slack [fraction of time]".to_string(),
        "sync_failures [count]".to_string(),
    ])
}

fn channel_table() -> Table {
    Table::new([
        "method",
        "channel [index]",
        "t_free [time units]",
        "t_busy [time units]",
        "interference_limit [fraction of time]",
        "analytic_interference [fraction of time]",
        "measured_interference [fraction of time]",
        "measured_std_error [fraction of time]",
    ])
}

/// Runs `simulate` for every run seed, in parallel, preserving run order.
fn replicate<F>(cfg: &ExperimentConfig, simulate: F) -> Result<Vec<EmpiricalMetrics>, CliError>
where
    F: Fn(u64) -> cogmac::Result<EmpiricalMetrics> + Sync,
{
    Ok((0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| simulate(derive_seed(cfg.seed, r)))
        .collect::<cogmac::Result<Vec<_>>>()?)
}

/// Mean and standard error across runs of a per-run quantity.
fn across<F: Fn(&EmpiricalMetrics) -> f64>(runs: &[EmpiricalMetrics], f: F) -> (f64, f64) {
    let xs: Vec<f64> = runs.iter().map(f).collect();
    (mean(&xs), sample_std_error(&xs))
}

fn trace_columns(method: &str, runs: &[EmpiricalMetrics], columns: &mut Vec<Vec<f64>>, header: &mut Vec<String>) {
    header.push(format!("{method}_throughput [{THROUGHPUT_UNIT}]"));
    header.push(format!("{method}_std_error [{THROUGHPUT_UNIT}]"));
    let (m, e): (Vec<f64>, Vec<f64>) = (0..TRACE_BINS).map(|k| across(runs, |r| r.throughput_trace[k])).unzip();
    columns.push(m);
    columns.push(e);
}

fn trace_table(horizon: f64, header: Vec<String>, columns: &[Vec<f64>]) -> Table {
    let mut trace = Table::new(header);
    let width = horizon / TRACE_BINS as f64;
    for k in 0..TRACE_BINS {
        let mut row = vec![num((k + 1) as f64 * width)];
        row.extend(columns.iter().map(|c| num(c[k])));
        trace.push(row);
    }
    trace
}

/// Optimized sensing periods for one strategy.
pub fn optimize_method(cfg: &ExperimentConfig, method: PeriodMethod) -> Result<OptimizationResult, CliError> {
    let channels = cfg.unslotted_channels()?;
    let sensing = cfg.sensing_model()?;
    let constraint = cfg.interference_constraint()?;
    let opt = cfg.optimizer_config();
    let result = match method {
        PeriodMethod::TwoPeriods => optimize_two_periods(&channels, &sensing, &constraint, &opt)?,
        PeriodMethod::SinglePeriod => optimize_single_period(&channels, &sensing, &constraint, &opt)?,
    };
    Ok(result)
}

/// Access period per channel for the hopping scenario.
pub fn access_periods(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let sensing = cfg.sensing_model()?;
    let limits = cfg.interference_constraint()?.per_channel_max;
    cfg.unslotted_channels()?
        .iter()
        .zip(&limits)
        .map(|(p, &limit)| Ok(solve_access_period(p, &sensing, limit)?))
        .collect()
}

fn run_unslotted_multi(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let u = cfg.unslotted_section()?;
    let params = cfg.unslotted_channels()?;
    let sensing = cfg.sensing_model()?;
    let limits = cfg.interference_constraint()?.per_channel_max;
    let bound = total_opportunity(&params);

    let mut summary = unslotted_summary();
    let mut channels = channel_table();
    let mut header = vec!["time [time units]".to_string()];
    let mut columns = Vec::new();
    for &method in &u.methods {
        let opt = optimize_method(cfg, method)?;
        let runs = replicate(cfg, |seed| simulate_multi(&params, &opt.periods, &sensing, u.horizon, seed, false))?;
        let (rate, se) = across(&runs, |r| r.throughput);
        let mut measured_slack = f64::INFINITY;
        for (i, period) in opt.periods.iter().enumerate() {
            let (interference, ie) = across(&runs, |r| r.channels[i].interference);
            measured_slack = measured_slack.min(limits[i] - interference);
            channels.push(vec![
                method.name().to_string(),
                i.to_string(),
                num(period.t_free),
                num(period.t_busy),
                num(limits[i]),
                num(opt.metrics[i].interference),
                num(interference),
                num(ie),
            ]);
        }
        let slack = opt.constraint_slack.iter().copied().fold(f64::INFINITY, f64::min);
        summary.push(vec![
            cfg.scenario.name().to_string(),
            method.name().to_string(),
            cfg.runs.to_string(),
            num(u.horizon),
            num(opt.objective),
            num(rate),
            num(se),
            num(bound),
            num(slack),
            num(measured_slack),
            "0".to_string(),
        ]);
        trace_columns(method.name(), &runs, &mut columns, &mut header);
    }
    Ok(Report {
        summary,
        trace: trace_table(u.horizon, header, &columns),
        channels: Some(channels),
    })
}

fn run_unslotted_single(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let u = cfg.unslotted_section()?;
    let params = cfg.unslotted_channels()?;
    let sensing = cfg.sensing_model()?;
    let limits = cfg.interference_constraint()?.per_channel_max;
    let periods = access_periods(cfg)?;
    let runs = replicate(cfg, |seed| {
        simulate_single(&params, &periods, &sensing, u.rts_cts_duration, u.horizon, seed, false)
    })?;
    let method = "hopping";

    let mut channels = channel_table();
    let (mut slack, mut measured_slack) = (f64::INFINITY, f64::INFINITY);
    for (i, &tf) in periods.iter().enumerate() {
        let analytic = single_channel_interference(&params[i], tf, &sensing);
        let (interference, ie) = across(&runs, |r| r.channels[i].interference_ratio);
        slack = slack.min(limits[i] - analytic);
        measured_slack = measured_slack.min(limits[i] - interference);
        channels.push(vec![
            method.to_string(),
            i.to_string(),
            num(tf),
            String::new(),
            num(limits[i]),
            num(analytic),
            num(interference),
            num(ie),
        ]);
    }
    let (rate, se) = across(&runs, |r| r.throughput);
    let sync_failures: u64 = runs.iter().map(|r| r.sync_failures).sum();
    let mut summary = unslotted_summary();
    summary.push(vec![
        cfg.scenario.name().to_string(),
        method.to_string(),
        cfg.runs.to_string(),
        num(u.horizon),
        String::new(),
        num(rate),
        num(se),
        num(total_opportunity(&params)),
        num(slack),
        num(measured_slack),
        sync_failures.to_string(),
    ]);
    let mut header = vec!["time [time units]".to_string()];
    let mut columns = Vec::new();
    trace_columns(method, &runs, &mut columns, &mut header);
    Ok(Report {
        summary,
        trace: trace_table(u.horizon, header, &columns),
        channels: Some(channels),
    })
}

/// Period table printed by `optimize`.
pub fn optimize(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut table = Table::new([
        "method".to_string(),
        "channel [index]".to_string(),
        "t_free [time units]".to_string(),
        "t_busy [time units]".to_string(),
        "interference_limit [fraction of time]".to_string(),
        "interference [fraction of time]".to_string(),
        format!("throughput [{THROUGHPUT_UNIT}]"),
    ]);
    if cfg.scenario.is_slotted() {
        return Err(CliError::Config(format!(
            "scenario {} has no sensing periods to optimize",
            cfg.scenario.name()
        )));
    }
    let limits = cfg.interference_constraint()?.per_channel_max;
    match cfg.scenario {
        Scenario::UnslottedMulti => {
            for &method in &cfg.unslotted_section()?.methods {
                let opt = optimize_method(cfg, method)?;
                for (i, PeriodPair { t_free, t_busy }) in opt.periods.iter().enumerate() {
                    table.push(vec![
                        method.name().to_string(),
                        i.to_string(),
                        num(*t_free),
                        num(*t_busy),
                        num(limits[i]),
                        num(opt.metrics[i].interference),
                        num(opt.objective),
                    ]);
                }
            }
        }
        _ => {
            let params = cfg.unslotted_channels()?;
            let sensing = cfg.sensing_model()?;
            for (i, tf) in access_periods(cfg)?.into_iter().enumerate() {
                table.push(vec![
                    "hopping".to_string(),
                    i.to_string(),
                    num(tf),
                    String::new(),
                    num(limits[i]),
                    num(single_channel_interference(&params[i], tf, &sensing)),
                    String::new(),
                ]);
            }
        }
    }
    Ok(table)
}
