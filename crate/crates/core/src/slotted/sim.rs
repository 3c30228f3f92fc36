//! Slot-level simulator of the secondary pair over Gilbert-Elliott primary
//! channels.
//!
//! The transmitter and the receiver are separate state machines. The
//! receiver sees nothing but the packets that reach it (plus the initial
//! handshake), and derives its listening channel from its own copy of the
//! shared state. Any disagreement between the two is counted as a
//! synchronization violation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{steady_state_free_prob, ChannelState, SensingModel, SlottedChannelParams};
use crate::seed;
use crate::slotted::belief::{
    advance_shared, sensing_posterior, BeliefState, ChannelLearner, Evidence, Observation,
    SensingOutcome, TransitionEstimate,
};
use crate::slotted::policy::{
    argmax_lowest, fixed_sequence_baseline, greedy_access, select_sense_set,
    UcbState,
};
use crate::slotted::whittle::threshold_index;

/// Channel selection strategy of the secondary pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Sense every channel, learn the transition probabilities on line.
    FullSensingBlind,
    /// Sense every channel with the true transition probabilities known.
    FullSensingInformed,
    /// Sense every channel, knowing only that channels are memoryless;
    /// learns each free probability as a frequency.
    FullSensingIid,
    /// Learning phase, then Whittle-index sensing with learned estimates.
    WhittleBlind,
    /// Whittle-index sensing with the true transition probabilities.
    WhittleInformed,
    /// Access the channel with the largest `ω̄·B`; sense the `L` best.
    GreedyInformed,
    /// Upper-confidence-bound channel choice, one channel per slot.
    Ucb,
    /// Always the channel with the largest stationary free probability.
    FixedBaseline,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::FullSensingBlind => "full_sensing_blind",
            Policy::FullSensingInformed => "full_sensing_informed",
            Policy::FullSensingIid => "full_sensing_iid",
            Policy::WhittleBlind => "whittle_blind",
            Policy::WhittleInformed => "whittle_informed",
            Policy::GreedyInformed => "greedy_informed",
            Policy::Ucb => "ucb",
            Policy::FixedBaseline => "fixed_baseline",
        }
    }

    pub fn is_informed(self) -> bool {
        matches!(
            self,
            Policy::FullSensingInformed
                | Policy::WhittleInformed
                | Policy::GreedyInformed
                | Policy::FixedBaseline
        )
    }

    fn full_sensing(self) -> bool {
        matches!(
            self,
            Policy::FullSensingBlind | Policy::FullSensingInformed | Policy::FullSensingIid
        )
    }

    fn single_channel(self) -> bool {
        matches!(self, Policy::Ucb | Policy::FixedBaseline)
    }
}

/// Which consecutive observations feed the transition counters once the
/// initial learning period is over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingRule {
    /// Every channel sensed in two consecutive slots.
    #[default]
    ConsecutiveSensing,
    /// Only the access channel, and only when it was also the access
    /// channel of the previous slot.
    AccessOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlottedConfig {
    pub channels: Vec<SlottedChannelParams>,
    pub sensing: SensingModel,
    /// Channels sensed per slot (`L`).
    pub sense_budget: usize,
    /// Slots per run (`T`).
    pub horizon: u64,
    pub policy: Policy,
    /// Slots each channel group is sensed during the initial learning
    /// period of [`Policy::WhittleBlind`].
    pub learning_period: u64,
    pub seed: u64,
    /// Monte Carlo runs.
    pub block_count: usize,
    /// Discount factor of the Whittle index.
    pub discount: f64,
    pub counting: CountingRule,
    /// Estimate from the most recent transitions only.
    pub learning_window: Option<usize>,
    /// Access the best sensed channel during the learning period instead of
    /// staying silent.
    pub access_during_learning: bool,
    /// Keep the per-slot message log in the [`RunResult`].
    pub record_log: bool,
}

impl SlottedConfig {
    pub fn new(channels: Vec<SlottedChannelParams>, policy: Policy) -> Self {
        let n = channels.len();
        let sense_budget = if policy.full_sensing() { n } else { 1 };
        Self {
            channels,
            sensing: SensingModel::perfect(0.0),
            sense_budget,
            horizon: 10_000,
            policy,
            learning_period: 20,
            seed: 0,
            block_count: 1,
            discount: 0.9999,
            counting: CountingRule::default(),
            learning_window: None,
            access_during_learning: false,
            record_log: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels.len();
        if n == 0 {
            return Err(Error::Empty("channel list"));
        }
        for ch in &self.channels {
            ch.validate()?;
            if ch.is_degenerate() {
                return Err(Error::DegenerateChain);
            }
        }
        self.sensing.validate()?;
        if self.sense_budget == 0 || self.sense_budget > n {
            return Err(Error::invalid(
                "sense_budget",
                format!("{} not in [1, {n}]", self.sense_budget),
            ));
        }
        if self.policy.full_sensing() && self.sense_budget != n {
            return Err(Error::invalid(
                "sense_budget",
                format!("{} senses every channel (L = N = {n})", self.policy.name()),
            ));
        }
        if self.policy.single_channel() && self.sense_budget != 1 {
            return Err(Error::invalid(
                "sense_budget",
                format!("{} senses one channel per slot (L = 1)", self.policy.name()),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least one slot"));
        }
        if self.block_count == 0 {
            return Err(Error::invalid("block_count", "must be at least one run"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid("discount", format!("{} not in [0, 1)", self.discount)));
        }
        if self.learning_window == Some(0) {
            return Err(Error::invalid("learning_window", "must be positive"));
        }
        Ok(())
    }

    fn bandwidths(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.bandwidth).collect()
    }

    /// First slot after the initial learning period.
    pub fn learning_end(&self) -> u64 {
        match self.policy {
            Policy::WhittleBlind => {
                let groups = self.channels.len().div_ceil(self.sense_budget) as u64;
                groups * self.learning_period
            }
            _ => 0,
        }
    }

    fn initial_estimates(&self) -> Vec<TransitionEstimate> {
        if self.policy.is_informed() {
            self.channels.iter().map(TransitionEstimate::of).collect()
        } else {
            vec![TransitionEstimate::PRIOR; self.channels.len()]
        }
    }

    fn initial_belief(&self) -> Vec<f64> {
        if self.policy.is_informed() {
            self.channels
                .iter()
                .map(|c| steady_state_free_prob(c).unwrap_or(0.5))
                .collect()
        } else {
            vec![0.5; self.channels.len()]
        }
    }
}

/// Initial state delivered by the handshake that establishes the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitPacket {
    pub belief: Vec<f64>,
    pub estimates: Vec<TransitionEstimate>,
}

/// Data packet payload used for synchronization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPacket {
    pub outcome: SensingOutcome,
    pub estimates: Vec<TransitionEstimate>,
    /// Free-probability estimates of the memoryless-channel strategy.
    pub free_estimates: Vec<f64>,
    /// Transmitter belief, attached when the previous slot failed.
    pub resync_belief: Option<Vec<f64>>,
}

/// What crossed the air in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLog {
    pub init: Option<InitPacket>,
    pub tx_access: Option<usize>,
    pub rx_listen: Option<usize>,
    /// Packet delivered to the receiver, if any.
    pub delivered: Option<DataPacket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Reward earned in each slot.
    pub rewards: Vec<f64>,
    /// Running average throughput up to each slot.
    pub throughput_per_slot: Vec<f64>,
    pub total_successes: u64,
    pub transmissions: u64,
    /// Transmissions on channels that were actually busy.
    pub collisions: u64,
    pub resync_events: u64,
    /// Slots in which transmitter and receiver picked different channels.
    pub sync_violations: u64,
    pub impossible_evidence: u64,
    pub log: Vec<SlotLog>,
}

impl RunResult {
    pub fn mean_throughput(&self) -> f64 {
        self.throughput_per_slot.last().copied().unwrap_or(0.0)
    }

    /// Mean reward over slots `[from, to)` (0-based).
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.rewards.len());
        if from >= to {
            return 0.0;
        }
        self.rewards[from..to].iter().sum::<f64>() / (to - from) as f64
    }
}

/// State both endpoints derive decisions from.
#[derive(Debug, Clone)]
struct SharedView {
    belief: Vec<f64>,
    estimates: Vec<TransitionEstimate>,
    free_estimates: Vec<f64>,
    ucb: UcbState,
    last_ack: bool,
}

impl SharedView {
    fn from_init(init: &InitPacket) -> Self {
        let n = init.belief.len();
        Self {
            belief: init.belief.clone(),
            estimates: init.estimates.clone(),
            free_estimates: vec![0.5; n],
            ucb: UcbState::new(n),
            last_ack: true,
        }
    }
}

/// Static protocol context shared by both endpoints.
struct Protocol<'a> {
    cfg: &'a SlottedConfig,
    bandwidths: Vec<f64>,
    fixed_channel: usize,
    learning_end: u64,
    groups: Vec<Vec<usize>>,
}

impl<'a> Protocol<'a> {
    fn new(cfg: &'a SlottedConfig) -> Result<Self> {
        let n = cfg.channels.len();
        let groups = (0..n)
            .step_by(cfg.sense_budget)
            .map(|s| (s..(s + cfg.sense_budget).min(n)).collect())
            .collect();
        Ok(Self {
            cfg,
            bandwidths: cfg.bandwidths(),
            fixed_channel: fixed_sequence_baseline(&cfg.channels)?,
            learning_end: cfg.learning_end(),
            groups,
        })
    }

    fn in_learning(&self, slot: u64) -> bool {
        slot < self.learning_end
    }

    /// Decision of either endpoint for `slot`; `None` access means the slot
    /// is used for sensing only.
    fn decide(&self, view: &SharedView, slot: u64) -> Result<(Option<usize>, Vec<usize>)> {
        let n = self.bandwidths.len();
        let cfg = self.cfg;
        if self.in_learning(slot) {
            let group = &self.groups[(slot / cfg.learning_period) as usize];
            let access = if cfg.access_during_learning {
                let scores = group.iter().map(|&i| view.belief[i] * self.bandwidths[i]);
                argmax_lowest(scores).map(|k| group[k])
            } else {
                None
            };
            return Ok((access, group.clone()));
        }
        let (access, sense) = match cfg.policy {
            Policy::FullSensingBlind | Policy::FullSensingInformed => {
                (greedy_access(&view.belief, &self.bandwidths)?, (0..n).collect())
            }
            Policy::FullSensingIid => (
                greedy_access(&view.free_estimates, &self.bandwidths)?,
                (0..n).collect(),
            ),
            Policy::WhittleBlind | Policy::WhittleInformed => {
                let indices: Vec<f64> = view
                    .belief
                    .iter()
                    .zip(&view.estimates)
                    .map(|(&w, e)| threshold_index(w, e.p01, e.p11, cfg.discount))
                    .collect();
                let d = select_sense_set(&indices, &view.belief, &self.bandwidths, cfg.sense_budget)?;
                (d.access_channel, d.sense_set)
            }
            Policy::GreedyInformed => {
                let access = greedy_access(&view.belief, &self.bandwidths)?;
                let mut others: Vec<usize> = (0..n).filter(|&i| i != access).collect();
                others.sort_by(|&a, &b| {
                    let sa = view.belief[a] * self.bandwidths[a];
                    let sb = view.belief[b] * self.bandwidths[b];
                    sb.total_cmp(&sa)
                });
                let mut sense: Vec<usize> = others.into_iter().take(cfg.sense_budget - 1).collect();
                sense.push(access);
                sense.sort_unstable();
                (access, sense)
            }
            Policy::Ucb => {
                let c = view.ucb.choose(&self.bandwidths)?;
                (c, vec![c])
            }
            Policy::FixedBaseline => (self.fixed_channel, vec![self.fixed_channel]),
        };
        Ok((Some(access), sense))
    }

    fn init_packet(&self, tx: &Transmitter) -> InitPacket {
        InitPacket {
            belief: tx.beliefs.tx_belief.clone(),
            estimates: tx.fresh_estimates(),
        }
    }
}

/// Receiver state machine: listens on one channel per slot.
struct Receiver<'p, 'a> {
    protocol: &'p Protocol<'a>,
    view: Option<SharedView>,
}

impl<'p, 'a> Receiver<'p, 'a> {
    fn new(protocol: &'p Protocol<'a>) -> Self {
        Self { protocol, view: None }
    }

    fn accept_init(&mut self, init: &InitPacket) {
        match &mut self.view {
            None => self.view = Some(SharedView::from_init(init)),
            Some(v) => {
                v.belief.clone_from(&init.belief);
                v.estimates.clone_from(&init.estimates);
                v.last_ack = true;
            }
        }
    }

    fn listen(&self, slot: u64) -> Result<Option<usize>> {
        let view = self.view.as_ref().ok_or(Error::Domain("receiver not initialized".into()))?;
        Ok(self.protocol.decide(view, slot)?.0)
    }

    /// End-of-slot update from whatever arrived on `listen`.
    fn finish_slot(&mut self, listen: Option<usize>, packet: Option<&DataPacket>) {
        let cfg = self.protocol.cfg;
        let n = self.protocol.bandwidths.len();
        let view = self.view.as_mut().expect("initialized");
        let Some(channel) = listen else {
            return;
        };
        let ack = packet.is_some();
        match cfg.policy {
            Policy::Ucb => view.ucb.record(channel, ack),
            Policy::FixedBaseline => {}
            Policy::FullSensingIid => {
                if let Some(p) = packet {
                    view.free_estimates.clone_from(&p.free_estimates);
                }
            }
            _ => {
                if let Some(p) = packet {
                    if !view.last_ack {
                        if let Some(b) = &p.resync_belief {
                            view.belief.clone_from(b);
                        }
                    }
                    view.estimates.clone_from(&p.estimates);
                    advance_shared(&mut view.belief, &view.estimates, channel, &p.outcome, true, &cfg.sensing);
                } else {
                    let blank = SensingOutcome::new(vec![Observation::NotSensed; n]);
                    advance_shared(&mut view.belief, &view.estimates, channel, &blank, false, &cfg.sensing);
                }
            }
        }
        view.last_ack = ack;
    }
}

/// Transmitter state machine: senses, learns, transmits.
struct Transmitter<'p, 'a> {
    protocol: &'p Protocol<'a>,
    view: SharedView,
    beliefs: BeliefState,
    learners: Vec<ChannelLearner>,
    sensed_last_slot: Vec<bool>,
    last_access: Option<usize>,
}

impl<'p, 'a> Transmitter<'p, 'a> {
    fn new(protocol: &'p Protocol<'a>) -> Result<Self> {
        let cfg = protocol.cfg;
        let n = cfg.channels.len();
        let beliefs = BeliefState::new(cfg.initial_belief(), cfg.initial_estimates())?;
        let view = SharedView::from_init(&InitPacket {
            belief: beliefs.shared_belief.clone(),
            estimates: beliefs.shared_estimates.clone(),
        });
        Ok(Self {
            protocol,
            view,
            beliefs,
            learners: (0..n).map(|_| ChannelLearner::new(cfg.learning_window)).collect(),
            sensed_last_slot: vec![false; n],
            last_access: None,
        })
    }

    fn fresh_estimates(&self) -> Vec<TransitionEstimate> {
        if self.protocol.cfg.policy.is_informed() {
            self.protocol.cfg.channels.iter().map(TransitionEstimate::of).collect()
        } else {
            self.learners.iter().map(ChannelLearner::estimate).collect()
        }
    }

    fn free_estimates(&self) -> Vec<f64> {
        self.learners
            .iter()
            .map(|l| l.counts().iid_free_estimate().unwrap_or(0.5))
            .collect()
    }

    /// Applies the end-of-learning handshake: Ω̄ ← Ω and shared estimates
    /// ← fresh estimates at both ends.
    fn handshake(&mut self) -> InitPacket {
        let init = self.protocol.init_packet(self);
        self.beliefs.shared_belief.clone_from(&init.belief);
        self.beliefs.shared_estimates.clone_from(&init.estimates);
        self.beliefs.last_ack = true;
        self.view.belief.clone_from(&init.belief);
        self.view.estimates.clone_from(&init.estimates);
        self.view.last_ack = true;
        init
    }

    fn learn(&mut self, slot: u64, access: Option<usize>, outcome: &SensingOutcome) {
        let in_learning = self.protocol.in_learning(slot);
        for (i, obs) in outcome.sensed.iter().enumerate() {
            let sensed = obs.state();
            if let Some(state) = sensed {
                let consecutive = self.sensed_last_slot[i]
                    && (in_learning
                        || match self.protocol.cfg.counting {
                            CountingRule::ConsecutiveSensing => true,
                            CountingRule::AccessOnly => {
                                access == Some(i) && self.last_access == Some(i)
                            }
                        });
                self.learners[i].observe(state, consecutive);
            }
            self.sensed_last_slot[i] = sensed.is_some();
        }
        self.last_access = access;
    }

    /// Belief update for a slot without an access attempt: the transmitter
    /// folds in what it sensed, the shared state is left untouched.
    fn observe_only(&mut self, outcome: &SensingOutcome, fresh: &[TransitionEstimate]) -> u64 {
        let sensing = &self.protocol.cfg.sensing;
        let mut impossible = 0;
        for (i, omega) in self.beliefs.tx_belief.iter_mut().enumerate() {
            let posterior = match outcome.sensed[i] {
                Observation::Free => sensing_posterior(*omega, Evidence::SensedFree, sensing)
                    .unwrap_or_else(|_| {
                        impossible += 1;
                        1.0
                    }),
                Observation::Busy => sensing_posterior(*omega, Evidence::SensedBusy, sensing)
                    .unwrap_or_else(|_| {
                        impossible += 1;
                        0.0
                    }),
                Observation::NotSensed => *omega,
            };
            *omega = fresh[i].propagate(posterior);
        }
        impossible
    }
}

fn sense(state: ChannelState, sensing: &SensingModel, rng: &mut ChaCha8Rng) -> ChannelState {
    let flip = match state {
        ChannelState::Free => sensing.p_fa,
        ChannelState::Busy => sensing.p_md,
    };
    if flip > 0.0 && rng.random::<f64>() < flip {
        match state {
            ChannelState::Free => ChannelState::Busy,
            ChannelState::Busy => ChannelState::Free,
        }
    } else {
        state
    }
}

/// Primary channels, one random stream each.
struct PrimaryNetwork {
    params: Vec<SlottedChannelParams>,
    states: Vec<ChannelState>,
    rngs: Vec<ChaCha8Rng>,
}

impl PrimaryNetwork {
    fn new(params: &[SlottedChannelParams], run_seed: u64) -> Self {
        let mut rngs: Vec<ChaCha8Rng> = (0..params.len())
            .map(|i| seed::stream(run_seed, 1 + i as u64))
            .collect();
        let states = params
            .iter()
            .zip(rngs.iter_mut())
            .map(|(p, rng)| {
                let pi = steady_state_free_prob(p).unwrap_or(0.5);
                ChannelState::from_free(rng.random::<f64>() < pi)
            })
            .collect();
        Self {
            params: params.to_vec(),
            states,
            rngs,
        }
    }

    fn advance(&mut self) {
        for ((s, p), rng) in self.states.iter_mut().zip(&self.params).zip(self.rngs.iter_mut()) {
            let u: f64 = rng.random();
            *s = ChannelState::from_free(u < p.to_free(*s));
        }
    }
}

/// One independent run of `config` driven by `seed`.
pub fn simulate_slotted(config: &SlottedConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let protocol = Protocol::new(config)?;
    let n = config.channels.len();
    let horizon = config.horizon as usize;
    let mut net = PrimaryNetwork::new(&config.channels, seed);
    let mut sensing_rng = seed::stream(seed, 0);
    let mut tx = Transmitter::new(&protocol)?;
    let mut rx = Receiver::new(&protocol);

    let mut result = RunResult {
        rewards: Vec::with_capacity(horizon),
        throughput_per_slot: Vec::with_capacity(horizon),
        total_successes: 0,
        transmissions: 0,
        collisions: 0,
        resync_events: 0,
        sync_violations: 0,
        impossible_evidence: 0,
        log: Vec::new(),
    };

    let mut cumulative = 0.0;
    for slot in 0..config.horizon {
        let mut init = None;
        if slot == 0 || (protocol.learning_end > 0 && slot == protocol.learning_end) {
            let packet = tx.handshake();
            rx.accept_init(&packet);
            init = Some(packet);
        }

        // Decision stage, independently at both ends.
        let (access, sense_set) = protocol.decide(&tx.view, slot)?;
        let listen = rx.listen(slot)?;
        if access != listen {
            result.sync_violations += 1;
        }

        // Sensing stage.
        let mut sensed = vec![Observation::NotSensed; n];
        for &i in &sense_set {
            sensed[i] = sense(net.states[i], &config.sensing, &mut sensing_rng).into();
        }
        let outcome = SensingOutcome::new(sensed);

        // Learning stage.
        tx.learn(slot, access, &outcome);
        let fresh = tx.fresh_estimates();

        // Access and ACK stages.
        let mut delivered = None;
        let mut ack = false;
        if let Some(i) = access {
            if outcome.sensed[i] == Observation::Free {
                result.transmissions += 1;
                let truly_free = net.states[i].is_free();
                if !truly_free {
                    result.collisions += 1;
                }
                if truly_free && listen == Some(i) {
                    ack = true;
                    delivered = Some(DataPacket {
                        outcome: outcome.clone(),
                        estimates: fresh.clone(),
                        free_estimates: tx.free_estimates(),
                        resync_belief: (!tx.beliefs.last_ack).then(|| tx.beliefs.tx_belief.clone()),
                    });
                }
            }
        }
        let reward = if ack {
            result.total_successes += 1;
            config.channels[access.expect("ack implies access")].bandwidth
        } else {
            0.0
        };

        // Belief and counter updates.
        match access {
            Some(i) => {
                match config.policy {
                    Policy::Ucb => tx.view.ucb.record(i, ack),
                    Policy::FixedBaseline => {}
                    Policy::FullSensingIid => {
                        if ack {
                            tx.view.free_estimates = tx.free_estimates();
                        }
                    }
                    _ => {
                        let report = tx.beliefs.update(i, &outcome, ack, &fresh, &config.sensing)?;
                        if report.resynced {
                            result.resync_events += 1;
                        }
                        result.impossible_evidence += report.impossible_evidence as u64;
                        tx.view.belief.clone_from(&tx.beliefs.shared_belief);
                        tx.view.estimates.clone_from(&tx.beliefs.shared_estimates);
                    }
                }
                tx.view.last_ack = ack;
            }
            None => {
                result.impossible_evidence += tx.observe_only(&outcome, &fresh);
            }
        }
        rx.finish_slot(listen, delivered.as_ref());

        cumulative += reward;
        result.rewards.push(reward);
        result.throughput_per_slot.push(cumulative / (slot + 1) as f64);
        if config.record_log {
            result.log.push(SlotLog {
                init,
                tx_access: access,
                rx_listen: listen,
                delivered,
            });
        }
        net.advance();
    }
    Ok(result)
}

/// Rebuilds the receiver's listening channels from a message log alone.
pub fn replay_receiver(config: &SlottedConfig, log: &[SlotLog]) -> Result<Vec<Option<usize>>> {
    config.validate()?;
    let protocol = Protocol::new(config)?;
    let mut rx = Receiver::new(&protocol);
    let mut listens = Vec::with_capacity(log.len());
    for (slot, entry) in log.iter().enumerate() {
        if let Some(init) = &entry.init {
            rx.accept_init(init);
        }
        let listen = rx.listen(slot as u64)?;
        rx.finish_slot(listen, entry.delivered.as_ref());
        listens.push(listen);
    }
    Ok(listens)
}

/// Aggregate of independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub runs: usize,
    /// Mean across runs of the running-average throughput.
    pub mean_trace: Vec<f64>,
    /// Standard error of `mean_trace`.
    pub stderr_trace: Vec<f64>,
    /// Mean across runs of the per-slot reward.
    pub mean_rewards: Vec<f64>,
    /// Each run's average throughput over the whole horizon.
    pub run_throughputs: Vec<f64>,
    pub mean_throughput: f64,
    pub std_error: f64,
    pub collisions: u64,
    pub resync_events: u64,
    pub sync_violations: u64,
}

impl MonteCarloResult {
    /// Mean per-slot reward over slots `[from, to)`.
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.mean_rewards.len());
        if from >= to {
            return 0.0;
        }
        self.mean_rewards[from..to].iter().sum::<f64>() / (to - from) as f64
    }
}

const MONTE_CARLO_CHUNK: usize = 32;

/// Runs `config.block_count` independent replications. Run `r` uses seed
/// `derive_seed(config.seed, r)`; results are reduced in run order.
pub fn monte_carlo(config: &SlottedConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let horizon = config.horizon as usize;
    let runs = config.block_count;
    let mut sum = vec![0.0; horizon];
    let mut sum_sq = vec![0.0; horizon];
    let mut reward_sum = vec![0.0; horizon];
    let mut run_throughputs = Vec::with_capacity(runs);
    let (mut collisions, mut resyncs, mut violations) = (0, 0, 0);

    let mut start = 0;
    while start < runs {
        let end = (start + MONTE_CARLO_CHUNK).min(runs);
        let chunk: Vec<RunResult> = (start..end)
            .into_par_iter()
            .map(|r| {
                let mut cfg = config.clone();
                cfg.record_log = false;
                simulate_slotted(&cfg, seed::derive_seed(config.seed, r as u64))
            })
            .collect::<Result<_>>()?;
        for run in chunk {
            for (k, &v) in run.throughput_per_slot.iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
            for (acc, r) in reward_sum.iter_mut().zip(&run.rewards) {
                *acc += r;
            }
            run_throughputs.push(run.mean_throughput());
            collisions += run.collisions;
            resyncs += run.resync_events;
            violations += run.sync_violations;
        }
        start = end;
    }

    let count = runs as f64;
    let mean_trace: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let stderr_trace = sum_sq
        .iter()
        .zip(&mean_trace)
        .map(|(sq, m)| std_error_from_moments(*sq / count, *m, runs))
        .collect();
    let mean_throughput = mean_trace.last().copied().unwrap_or(0.0);
    let std_error = sample_std_error(&run_throughputs);
    Ok(MonteCarloResult {
        runs,
        mean_trace,
        stderr_trace,
        mean_rewards: reward_sum.iter().map(|s| s / count).collect(),
        run_throughputs,
        mean_throughput,
        std_error,
        collisions,
        resync_events: resyncs,
        sync_violations: violations,
    })
}

fn std_error_from_moments(mean_sq: f64, mean: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let var = ((mean_sq - mean * mean) * n as f64 / (n - 1) as f64).max(0.0);
    (var / n as f64).sqrt()
}

/// Standard error of the sample mean.
pub fn sample_std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Random channel set with transition probabilities uniform in `range`
/// and unit bandwidth. With `memoryless`, `p01 = p11` per channel.
pub fn random_channels(
    seed: u64,
    n: usize,
    range: std::ops::Range<f64>,
    memoryless: bool,
) -> Vec<SlottedChannelParams> {
    let mut rng = seed::stream(seed, u64::MAX);
    (0..n)
        .map(|_| {
            let p01 = rng.random_range(range.clone());
            let p11 = if memoryless {
                p01
            } else {
                rng.random_range(range.clone())
            };
            SlottedChannelParams {
                p01,
                p11,
                bandwidth: 1.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(p01: f64, p11: f64) -> SlottedChannelParams {
        SlottedChannelParams::new(p01, p11, 1.0).unwrap()
    }

    const ALL: [Policy; 8] = [
        Policy::FullSensingBlind,
        Policy::FullSensingInformed,
        Policy::FullSensingIid,
        Policy::WhittleBlind,
        Policy::WhittleInformed,
        Policy::GreedyInformed,
        Policy::Ucb,
        Policy::FixedBaseline,
    ];

    #[test]
    fn always_free_channel_yields_full_bandwidth() {
        for policy in ALL {
            let mut cfg = SlottedConfig::new(vec![SlottedChannelParams::new(1.0, 1.0, 2.5).unwrap()], policy);
            cfg.horizon = 500;
            cfg.learning_period = 0;
            let run = simulate_slotted(&cfg, 3).unwrap();
            assert!(run.rewards.iter().all(|&r| r == 2.5), "{policy:?}");
            assert_eq!(run.sync_violations, 0);
        }
    }

    #[test]
    fn never_free_channel_yields_nothing() {
        for policy in ALL {
            let mut cfg = SlottedConfig::new(vec![ch(0.0, 0.0)], policy);
            cfg.horizon = 300;
            let run = simulate_slotted(&cfg, 3).unwrap();
            assert_eq!(run.total_successes, 0, "{policy:?}");
            assert_eq!(run.mean_throughput(), 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let chans = random_channels(11, 4, 0.1..0.9, false);
        for policy in [Policy::FullSensingBlind, Policy::WhittleBlind, Policy::Ucb] {
            let mut cfg = SlottedConfig::new(chans.clone(), policy);
            if policy == Policy::WhittleBlind {
                cfg.sense_budget = 2;
            }
            cfg.horizon = 2000;
            cfg.sensing = SensingModel::with_errors(0.1, 0.05, 0.0).unwrap();
            let a = simulate_slotted(&cfg, 17).unwrap();
            let b = simulate_slotted(&cfg, 17).unwrap();
            assert_eq!(a, b);
            let c = simulate_slotted(&cfg, 18).unwrap();
            assert_ne!(a.rewards, c.rewards);
        }
    }

    #[test]
    fn perfect_sensing_never_collides_and_stays_synchronized() {
        let chans = random_channels(5, 5, 0.1..0.9, false);
        for policy in ALL {
            let mut cfg = SlottedConfig::new(chans.clone(), policy);
            if matches!(policy, Policy::WhittleBlind | Policy::WhittleInformed | Policy::GreedyInformed) {
                cfg.sense_budget = 2;
            }
            cfg.horizon = 3000;
            let run = simulate_slotted(&cfg, 1).unwrap();
            assert_eq!(run.collisions, 0, "{policy:?}");
            assert_eq!(run.sync_violations, 0, "{policy:?}");
            assert!(run.throughput_per_slot.iter().all(|t| (0.0..=1.0).contains(t)));
        }
    }

    #[test]
    fn receiver_replay_from_log_matches_transmitter() {
        let chans = random_channels(8, 4, 0.1..0.9, false);
        for (policy, budget) in [
            (Policy::FullSensingBlind, 4),
            (Policy::WhittleBlind, 2),
            (Policy::Ucb, 1),
        ] {
            let mut cfg = SlottedConfig::new(chans.clone(), policy);
            cfg.sense_budget = budget;
            cfg.horizon = 1500;
            cfg.record_log = true;
            cfg.sensing = SensingModel::with_errors(0.1, 0.1, 0.0).unwrap();
            let run = simulate_slotted(&cfg, 9).unwrap();
            let replay = replay_receiver(&cfg, &run.log).unwrap();
            let tx: Vec<Option<usize>> = run.log.iter().map(|l| l.tx_access).collect();
            assert_eq!(replay, tx, "{policy:?}");
            assert_eq!(run.sync_violations, 0);
        }
    }

    #[test]
    fn whittle_blind_is_silent_while_learning() {
        let mut cfg = SlottedConfig::new(random_channels(2, 5, 0.1..0.9, false), Policy::WhittleBlind);
        cfg.sense_budget = 2;
        cfg.learning_period = 10;
        cfg.horizon = 100;
        cfg.record_log = true;
        let run = simulate_slotted(&cfg, 4).unwrap();
        assert!(run.log[..30].iter().all(|l| l.tx_access.is_none()));
        assert!(run.log[30].init.is_some());
        assert!(run.rewards[..30].iter().all(|&r| r == 0.0));
        assert!(run.log[30..].iter().all(|l| l.tx_access.is_some()));
    }

    #[test]
    fn config_validation() {
        let chans = random_channels(1, 3, 0.1..0.9, false);
        let mut cfg = SlottedConfig::new(chans.clone(), Policy::FullSensingBlind);
        cfg.sense_budget = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = SlottedConfig::new(chans.clone(), Policy::WhittleBlind);
        cfg.sense_budget = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = SlottedConfig::new(chans, Policy::Ucb);
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
        let cfg = SlottedConfig::new(vec![ch(0.0, 1.0)], Policy::FixedBaseline);
        assert_eq!(cfg.validate(), Err(Error::DegenerateChain));
    }

    #[test]
    fn monte_carlo_single_block_equals_single_run() {
        let mut cfg = SlottedConfig::new(random_channels(3, 3, 0.1..0.9, false), Policy::FullSensingInformed);
        cfg.horizon = 400;
        cfg.seed = 21;
        let mc = monte_carlo(&cfg).unwrap();
        let run = simulate_slotted(&cfg, seed::derive_seed(21, 0)).unwrap();
        assert_eq!(mc.mean_trace, run.throughput_per_slot);
        assert_eq!(mc.std_error, 0.0);
    }

    #[test]
    fn monte_carlo_constant_trace_for_always_free_channel() {
        let mut cfg = SlottedConfig::new(vec![ch(1.0, 1.0)], Policy::FullSensingBlind);
        cfg.horizon = 200;
        cfg.block_count = 5;
        let mc = monte_carlo(&cfg).unwrap();
        assert!(mc.mean_trace.iter().all(|&t| t == 1.0));
        assert!(mc.stderr_trace.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn standard_error_shrinks_with_more_runs() {
        let mut cfg = SlottedConfig::new(random_channels(2, 3, 0.1..0.9, false), Policy::FixedBaseline);
        cfg.horizon = 200;
        cfg.block_count = 200;
        let small = monte_carlo(&cfg).unwrap().std_error;
        cfg.block_count = 400;
        let large = monte_carlo(&cfg).unwrap().std_error;
        let ratio = small / large;
        assert!((ratio - 2f64.sqrt()).abs() < 0.25, "ratio {ratio}");
    }
}
