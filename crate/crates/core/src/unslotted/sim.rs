//! Event-driven simulation of the un-slotted protocols.
//!
//! Primary channels are alternating renewal paths with exponential periods,
//! started from the stationary distribution. Two secondary protocols run on
//! top of them:
//!
//! - [`simulate_multi`]: every channel is sensed periodically with period
//!   `T^F` or `T^B` depending on the last sensed state; sensed-free channels
//!   are used until their next sensing; a single antenna serializes sensing
//!   events (FIFO by scheduled time, ties by channel index) and pauses all
//!   transmissions while sensing.
//! - [`simulate_single`]: the pair hops over channels in descending order of
//!   the search index, accesses the first channel found free for its access
//!   period, and keeps the receiver on the same channel with an RTS/CTS
//!   handshake.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelState, SensingModel, UnslottedChannelParams};
use crate::seed;
use crate::unslotted::analytics::PeriodPair;
use crate::unslotted::optimizer::search_index;

/// Sample path of one primary channel on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath {
    /// `times[0] = 0`, then state-change epochs (strictly increasing).
    times: Vec<f64>,
    /// Free time accumulated on `[0, times[j]]`.
    cum_free: Vec<f64>,
    initial_free: bool,
}

impl ChannelPath {
    pub fn generate(params: &UnslottedChannelParams, horizon: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let free_law = Exp::new(params.lambda_free).map_err(|e| Error::invalid("lambda_free", e.to_string()))?;
        let busy_law = Exp::new(params.lambda_busy).map_err(|e| Error::invalid("lambda_busy", e.to_string()))?;
        let initial_free = rng.random::<f64>() >= params.utilization();
        let mut times = vec![0.0];
        let mut cum_free = vec![0.0];
        let mut free = initial_free;
        let mut t = 0.0;
        // Memorylessness makes the first residual period exponential too.
        while t < horizon {
            let len = if free { free_law.sample(rng) } else { busy_law.sample(rng) };
            let next = t + len;
            let last = *cum_free.last().expect("nonempty");
            cum_free.push(if free { last + len } else { last });
            times.push(next);
            t = next;
            free = !free;
        }
        Ok(Self {
            times,
            cum_free,
            initial_free,
        })
    }

    fn segment(&self, t: f64) -> usize {
        self.times.partition_point(|&e| e <= t).saturating_sub(1)
    }

    fn segment_free(&self, j: usize) -> bool {
        self.initial_free ^ (j % 2 == 1)
    }

    pub fn state_at(&self, t: f64) -> ChannelState {
        ChannelState::from_free(self.segment_free(self.segment(t)))
    }

    /// Free time on `[0, t]`.
    pub fn free_until(&self, t: f64) -> f64 {
        let j = self.segment(t);
        let tail = if self.segment_free(j) { t - self.times[j] } else { 0.0 };
        self.cum_free[j] + tail
    }

    /// Free time on `[a, b]`.
    pub fn free_time(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.free_until(b) - self.free_until(a)
    }

    /// State-change epochs after time zero.
    pub fn epochs(&self) -> &[f64] {
        &self.times[1..]
    }
}

/// One entry of the secondary action log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// The antenna senses `channel` on `[start, end)`.
    Sense {
        channel: usize,
        start: f64,
        end: f64,
        observed: ChannelState,
    },
    /// `channel` is in use (transmitting except during sensing) on
    /// `[start, end)`.
    Use { channel: usize, start: f64, end: f64 },
    /// A new search round starts; both ends recompute the channel order.
    Round { time: f64 },
    /// RTS sent on `channel` at `time`.
    Rts { channel: usize, time: f64 },
}

/// Measured fractions of one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelEmpirical {
    /// Fraction of the horizon the channel was in use (sensed free).
    pub secondary_utilization: f64,
    /// Free and not in use.
    pub unexplored: f64,
    /// In use while busy.
    pub interference: f64,
    /// In use, free, and the antenna busy sensing.
    pub overhead: f64,
    /// In use, busy, and actually transmitting (not paused for sensing).
    pub physical_interference: f64,
    /// Fraction of the horizon the channel was free.
    pub free_fraction: f64,
    /// Busy share of the time in use.
    pub interference_ratio: f64,
    pub use_time: f64,
    pub sensing_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMetrics {
    pub channels: Vec<ChannelEmpirical>,
    /// Interference-free transmission time per unit time, summed over
    /// channels.
    pub throughput: f64,
    pub horizon: f64,
    pub handshake_failures: u64,
    /// Search steps in which the receiver listened on another channel.
    pub sync_failures: u64,
    /// Access blocks completed or started (single-channel mode).
    pub blocks: u64,
    /// Mean time from the start of a search to the start of the access.
    pub mean_search_delay: f64,
    /// Throughput within each of [`TRACE_BINS`] equal bins of the horizon.
    pub throughput_trace: Vec<f64>,
    pub log: Vec<Action>,
}

/// Number of equal-width time bins in [`EmpiricalMetrics::throughput_trace`].
pub const TRACE_BINS: usize = 100;

/// Interference-free transmission time accumulated per time bin.
struct Bins {
    width: f64,
    time: Vec<f64>,
}

impl Bins {
    fn new(horizon: f64) -> Self {
        Self {
            width: horizon / TRACE_BINS as f64,
            time: vec![0.0; TRACE_BINS],
        }
    }

    /// Adds `sign` times the free time of `path` on `[a, b)`.
    fn add(&mut self, path: &ChannelPath, a: f64, b: f64, sign: f64) {
        let first = ((a / self.width) as usize).min(TRACE_BINS - 1);
        for k in first..TRACE_BINS {
            let lo = a.max(k as f64 * self.width);
            let hi = b.min((k + 1) as f64 * self.width);
            if lo >= b {
                break;
            }
            if hi > lo {
                self.time[k] += sign * path.free_time(lo, hi);
            }
        }
    }

    fn into_rates(self) -> Vec<f64> {
        self.time.into_iter().map(|t| t / self.width).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Timed(f64);

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn sense(truth: ChannelState, sensing: &SensingModel, rng: &mut ChaCha8Rng) -> ChannelState {
    let flip = match truth {
        ChannelState::Free => sensing.p_fa,
        ChannelState::Busy => sensing.p_md,
    };
    if flip > 0.0 && rng.random::<f64>() < flip {
        ChannelState::from_free(!truth.is_free())
    } else {
        truth
    }
}

fn generate_paths(params: &[UnslottedChannelParams], horizon: f64, run_seed: u64) -> Result<Vec<ChannelPath>> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.validate()?;
            ChannelPath::generate(p, horizon, &mut seed::stream(run_seed, 1 + i as u64))
        })
        .collect()
}

/// Horizon must cover at least this many of the longest period.
pub const MIN_HORIZON_PERIODS: f64 = 100.0;

/// Periodic two-period sensing of every channel.
pub fn simulate_multi(
    params: &[UnslottedChannelParams],
    periods: &[PeriodPair],
    sensing: &SensingModel,
    horizon: f64,
    seed: u64,
    record_log: bool,
) -> Result<EmpiricalMetrics> {
    let n = params.len();
    if periods.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: periods.len(),
        });
    }
    sensing.validate()?;
    for p in periods {
        p.validate()?;
        if !(p.t_busy > 0.0) {
            return Err(Error::invalid("t_busy", "periodic sensing needs a positive busy period"));
        }
    }
    let longest = periods.iter().map(PeriodPair::max).fold(0.0, f64::max);
    if !(horizon >= MIN_HORIZON_PERIODS * longest) || !horizon.is_finite() {
        return Err(Error::invalid(
            "horizon",
            format!("{horizon} is shorter than {MIN_HORIZON_PERIODS} x the longest period {longest}"),
        ));
    }
    let paths = generate_paths(params, horizon, seed)?;
    let mut noise = seed::stream(seed, 0);
    let ts = sensing.sensing_time;

    let mut queue: BinaryHeap<Reverse<(Timed, usize)>> = (0..n).map(|i| Reverse((Timed(0.0), i))).collect();
    let mut antenna_free = 0.0;
    let mut in_use_since: Vec<Option<f64>> = vec![None; n];
    let mut uses: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut sensings: Vec<(f64, f64)> = Vec::new();
    let mut sensing_events = vec![0u64; n];
    let mut log = Vec::new();

    while let Some(Reverse((Timed(scheduled), i))) = queue.pop() {
        let start = scheduled.max(antenna_free);
        if start >= horizon {
            break;
        }
        if let Some(since) = in_use_since[i].take() {
            uses[i].push((since, start));
            if record_log {
                log.push(Action::Use { channel: i, start: since, end: start });
            }
        }
        let observed = sense(paths[i].state_at(start), sensing, &mut noise);
        let end = start + ts;
        if ts > 0.0 {
            sensings.push((start, end.min(horizon)));
        }
        antenna_free = end;
        sensing_events[i] += 1;
        if record_log {
            log.push(Action::Sense { channel: i, start, end, observed });
        }
        let next = if observed.is_free() {
            in_use_since[i] = Some(start);
            start + periods[i].t_free
        } else {
            start + periods[i].t_busy
        };
        queue.push(Reverse((Timed(next), i)));
    }
    for i in 0..n {
        if let Some(since) = in_use_since[i].take() {
            uses[i].push((since, horizon));
            if record_log {
                log.push(Action::Use { channel: i, start: since, end: horizon });
            }
        }
    }

    let mut channels = Vec::with_capacity(n);
    let mut throughput = 0.0;
    let mut bins = Bins::new(horizon);
    for i in 0..n {
        let path = &paths[i];
        let (mut use_time, mut free_in_use, mut free_paused, mut busy_paused) = (0.0, 0.0, 0.0, 0.0);
        for &(a, b) in &uses[i] {
            use_time += b - a;
            free_in_use += path.free_time(a, b);
            bins.add(path, a, b, 1.0);
            let first = sensings.partition_point(|&(_, e)| e <= a);
            for &(s, e) in sensings[first..].iter().take_while(|&&(s, _)| s < b) {
                let (lo, hi) = (s.max(a), e.min(b));
                if hi > lo {
                    let f = path.free_time(lo, hi);
                    free_paused += f;
                    busy_paused += (hi - lo) - f;
                    bins.add(path, lo, hi, -1.0);
                }
            }
        }
        let busy_in_use = use_time - free_in_use;
        let free_total = path.free_until(horizon);
        throughput += (free_in_use - free_paused) / horizon;
        channels.push(ChannelEmpirical {
            secondary_utilization: use_time / horizon,
            unexplored: (free_total - free_in_use) / horizon,
            interference: busy_in_use / horizon,
            overhead: free_paused / horizon,
            physical_interference: (busy_in_use - busy_paused) / horizon,
            free_fraction: free_total / horizon,
            interference_ratio: if use_time > 0.0 { busy_in_use / use_time } else { 0.0 },
            use_time,
            sensing_events: sensing_events[i],
        });
    }
    Ok(EmpiricalMetrics {
        channels,
        throughput,
        horizon,
        handshake_failures: 0,
        sync_failures: 0,
        blocks: 0,
        mean_search_delay: 0.0,
        throughput_trace: bins.into_rates(),
        log,
    })
}

/// What one end of the hopping pair knows about each channel: the last
/// sensed state and when it was sensed.
#[derive(Debug, Clone, PartialEq)]
struct SearchKnowledge {
    last: Vec<Option<(ChannelState, f64)>>,
}

impl SearchKnowledge {
    fn new(n: usize) -> Self {
        Self { last: vec![None; n] }
    }

    fn record(&mut self, channel: usize, state: ChannelState, time: f64) {
        self.last[channel] = Some((state, time));
    }

    /// Descending search index, ties to the lowest index. Channels never
    /// sensed rank by their stationary free probability.
    fn order(&self, now: f64, params: &[UnslottedChannelParams], step: f64) -> Vec<usize> {
        let gamma: Vec<f64> = params
            .iter()
            .zip(&self.last)
            .map(|(p, last)| match last {
                Some((state, at)) => search_index(p, *state, now - at, step),
                None => (1.0 - p.utilization()) / step,
            })
            .collect();
        let mut order: Vec<usize> = (0..params.len()).collect();
        order.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]));
        order
    }
}

/// Receiver of the hopping pair: follows its own channel order and learns
/// only from whether an RTS arrives.
#[derive(Debug, Clone)]
struct HopReceiver<'a> {
    params: &'a [UnslottedChannelParams],
    rank_step: f64,
    knowledge: SearchKnowledge,
    order: Vec<usize>,
    position: usize,
}

impl<'a> HopReceiver<'a> {
    fn new(params: &'a [UnslottedChannelParams], rank_step: f64) -> Self {
        Self {
            params,
            rank_step,
            knowledge: SearchKnowledge::new(params.len()),
            order: Vec::new(),
            position: 0,
        }
    }

    fn start_round(&mut self, now: f64) {
        self.order = self.knowledge.order(now, self.params, self.rank_step);
        self.position = 0;
    }

    fn listening(&self) -> usize {
        self.order[self.position]
    }

    /// End of a search step on the listening channel. A received RTS means
    /// the transmitter sensed the channel free.
    fn finish_step(&mut self, rts_received: bool, sensed_at: f64) {
        let channel = self.listening();
        self.knowledge
            .record(channel, ChannelState::from_free(rts_received), sensed_at);
        self.position += 1;
    }
}

/// Hopping access over the channels with per-channel access periods.
///
/// Every search step lasts `T_s + 2·rts_cts_duration` at both ends, whether
/// the channel is found busy (the transmitter waits out the RTS and the
/// CTS slots) or the handshake fails. The state is read at the end of the
/// sensing event.
pub fn simulate_single(
    params: &[UnslottedChannelParams],
    access_periods: &[f64],
    sensing: &SensingModel,
    rts_cts_duration: f64,
    horizon: f64,
    seed: u64,
    record_log: bool,
) -> Result<EmpiricalMetrics> {
    let n = params.len();
    if n == 0 {
        return Err(Error::Empty("channel list"));
    }
    if access_periods.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: access_periods.len(),
        });
    }
    sensing.validate()?;
    if let Some(&bad) = access_periods.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("access_periods", format!("{bad} must be positive")));
    }
    if !(rts_cts_duration >= 0.0) {
        return Err(Error::invalid("rts_cts_duration", "must be nonnegative"));
    }
    let ts = sensing.sensing_time;
    let step = ts + 2.0 * rts_cts_duration;
    if !(step > 0.0) {
        return Err(Error::invalid(
            "sensing_time",
            "a search step must take time: sensing time or RTS/CTS duration must be positive",
        ));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be positive and finite"));
    }
    let rank_step = if ts > 0.0 { ts } else { step };
    let paths = generate_paths(params, horizon, seed)?;
    let mut noise = seed::stream(seed, 0);

    let mut tx = SearchKnowledge::new(n);
    let mut rx = HopReceiver::new(params, rank_step);
    let mut use_time = vec![0.0; n];
    let mut busy_use = vec![0.0; n];
    let mut sensing_events = vec![0u64; n];
    let (mut handshake_failures, mut sync_failures, mut blocks) = (0u64, 0u64, 0u64);
    let mut delay_sum = 0.0;
    let mut throughput_time = 0.0;
    let mut bins = Bins::new(horizon);
    let mut log = Vec::new();

    let mut t = 0.0;
    'outer: while t < horizon {
        let search_start = t;
        let order = tx.order(t, params, rank_step);
        rx.start_round(t);
        if record_log {
            log.push(Action::Round { time: t });
        }
        for &c in &order {
            if t >= horizon {
                break 'outer;
            }
            let listen = rx.listening();
            if listen != c {
                sync_failures += 1;
            }
            let sensed_at = t + ts;
            let observed = sense(paths[c].state_at(sensed_at.min(horizon)), sensing, &mut noise);
            sensing_events[c] += 1;
            tx.record(c, observed, sensed_at);
            if record_log {
                log.push(Action::Sense { channel: c, start: t, end: sensed_at, observed });
            }
            let rts_sent = observed.is_free();
            if rts_sent && record_log {
                log.push(Action::Rts { channel: c, time: sensed_at });
            }
            let rts_received = rts_sent && listen == c;
            rx.finish_step(rts_received, sensed_at);
            if rts_sent && !rts_received {
                handshake_failures += 1;
            }
            if rts_received {
                let begin = sensed_at + 2.0 * rts_cts_duration;
                let end = (begin + access_periods[c]).min(horizon);
                if begin < horizon {
                    blocks += 1;
                    delay_sum += begin - search_start;
                    let len = end - begin;
                    let free = paths[c].free_time(begin, end);
                    use_time[c] += len;
                    busy_use[c] += len - free;
                    throughput_time += free;
                    bins.add(&paths[c], begin, end, 1.0);
                    if record_log {
                        log.push(Action::Use { channel: c, start: begin, end });
                    }
                }
                t = begin + access_periods[c];
                continue 'outer;
            }
            t += step;
        }
    }

    let channels = (0..n)
        .map(|i| {
            let free_total = paths[i].free_until(horizon);
            let free_used = use_time[i] - busy_use[i];
            ChannelEmpirical {
                secondary_utilization: use_time[i] / horizon,
                unexplored: (free_total - free_used) / horizon,
                interference: busy_use[i] / horizon,
                overhead: 0.0,
                physical_interference: busy_use[i] / horizon,
                free_fraction: free_total / horizon,
                interference_ratio: if use_time[i] > 0.0 { busy_use[i] / use_time[i] } else { 0.0 },
                use_time: use_time[i],
                sensing_events: sensing_events[i],
            }
        })
        .collect();
    Ok(EmpiricalMetrics {
        channels,
        throughput: throughput_time / horizon,
        horizon,
        handshake_failures,
        sync_failures,
        blocks,
        mean_search_delay: if blocks > 0 { delay_sum / blocks as f64 } else { 0.0 },
        throughput_trace: bins.into_rates(),
        log,
    })
}

/// Rebuilds the receiver's listening channel for every search step from
/// the round boundaries and the RTS messages of a single-channel log.
pub fn replay_single_receiver(
    params: &[UnslottedChannelParams],
    sensing: &SensingModel,
    rts_cts_duration: f64,
    log: &[Action],
) -> Vec<usize> {
    let ts = sensing.sensing_time;
    let rank_step = if ts > 0.0 { ts } else { ts + 2.0 * rts_cts_duration };
    let mut rx = HopReceiver::new(params, rank_step);
    let mut listens = Vec::new();
    let mut k = 0;
    while k < log.len() {
        match &log[k] {
            Action::Round { time } => rx.start_round(*time),
            // A search step: the receiver knows its timing from the step
            // clock, and the only content it sees is an RTS on its channel.
            Action::Sense { end, .. } => {
                let listen = rx.listening();
                listens.push(listen);
                let rts_received = matches!(
                    log.get(k + 1),
                    Some(Action::Rts { channel, time }) if *channel == listen && *time == *end
                );
                rx.finish_step(rts_received, *end);
            }
            _ => {}
        }
        k += 1;
    }
    listens
}

/// Channels sensed at each step of a single-channel log.
pub fn transmitter_steps(log: &[Action]) -> Vec<usize> {
    log.iter()
        .filter_map(|a| match a {
            Action::Sense { channel, .. } => Some(*channel),
            _ => None,
        })
        .collect()
}
