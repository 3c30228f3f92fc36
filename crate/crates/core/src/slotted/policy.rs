//! Channel-selection rules for the slotted protocols.
//!
//! Every argmax breaks ties toward the lowest channel index. Transmitter and
//! receiver evaluate these functions independently, so they must agree on
//! the tie rule or they lose synchronization.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{steady_state_free_prob, SlottedChannelParams};

/// Channel to access plus the channels to sense this slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub access_channel: usize,
    /// Sorted channel indices; always contains `access_channel`.
    pub sense_set: Vec<usize>,
}

impl PolicyDecision {
    pub fn senses(&self, channel: usize) -> bool {
        self.sense_set.binary_search(&channel).is_ok()
    }
}

/// Index of the first maximum. NaN scores never win.
pub fn argmax_lowest(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(s > b) => {}
            _ if s.is_nan() => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// `argmax_i ω̄_i·B_i`.
pub fn greedy_access(shared_belief: &[f64], bandwidths: &[f64]) -> Result<usize> {
    if shared_belief.is_empty() {
        return Err(Error::Empty("belief vector"));
    }
    if shared_belief.len() != bandwidths.len() {
        return Err(Error::DimensionMismatch {
            expected: shared_belief.len(),
            got: bandwidths.len(),
        });
    }
    argmax_lowest(shared_belief.iter().zip(bandwidths).map(|(w, b)| w * b))
        .ok_or(Error::Empty("belief vector"))
}

/// Access the channel with the largest `W_i·B_i` and additionally sense the
/// `L−1` other channels with the largest learning reward `W_i − ω̄_i`.
pub fn select_sense_set(
    whittle: &[f64],
    shared_belief: &[f64],
    bandwidths: &[f64],
    sense_budget: usize,
) -> Result<PolicyDecision> {
    let n = whittle.len();
    if n == 0 {
        return Err(Error::Empty("index vector"));
    }
    for len in [shared_belief.len(), bandwidths.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if sense_budget == 0 || sense_budget > n {
        return Err(Error::invalid("L", format!("{sense_budget} not in [1, {n}]")));
    }
    let access = argmax_lowest(whittle.iter().zip(bandwidths).map(|(w, b)| w * b))
        .ok_or(Error::Empty("index vector"))?;
    let mut rest: Vec<usize> = (0..n).filter(|&i| i != access).collect();
    // Stable sort keeps lower indices first among equal learning rewards.
    rest.sort_by(|&a, &b| {
        let ra = whittle[a] - shared_belief[a];
        let rb = whittle[b] - shared_belief[b];
        rb.total_cmp(&ra)
    });
    let mut sense_set: Vec<usize> = rest.into_iter().take(sense_budget - 1).collect();
    sense_set.push(access);
    sense_set.sort_unstable();
    Ok(PolicyDecision {
        access_channel: access,
        sense_set,
    })
}

/// Slot reward of a Whittle decision: `W_{i*} + Σ_{i∈U} (W_i − ω̄_i)`.
pub fn whittle_slot_reward(decision: &PolicyDecision, whittle: &[f64], shared_belief: &[f64]) -> f64 {
    let i = decision.access_channel;
    whittle[i]
        + decision
            .sense_set
            .iter()
            .filter(|&&k| k != i)
            .map(|&k| whittle[k] - shared_belief[k])
            .sum::<f64>()
}

/// Success/attempt counters for the UCB rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcbState {
    /// Slots with a successful exchange on each channel.
    pub successes: Vec<u64>,
    /// Slots in which each channel was chosen.
    pub attempts: Vec<u64>,
    /// Current slot index, starting at 1.
    pub slot: u64,
}

impl UcbState {
    pub fn new(channels: usize) -> Self {
        Self {
            successes: vec![0; channels],
            attempts: vec![0; channels],
            slot: 1,
        }
    }

    pub fn channels(&self) -> usize {
        self.attempts.len()
    }

    /// `γ_i = X_i/Y_i + √(2 ln j / Y_i)`.
    pub fn index(&self, channel: usize) -> Result<f64> {
        let y = *self
            .attempts
            .get(channel)
            .ok_or(Error::DimensionMismatch {
                expected: self.channels(),
                got: channel + 1,
            })?;
        if y == 0 {
            return Err(Error::Domain(format!("channel {channel} has no attempts yet")));
        }
        if self.slot == 0 {
            return Err(Error::Domain("slot index starts at 1".into()));
        }
        let y = y as f64;
        let x = self.successes[channel] as f64;
        Ok(x / y + (2.0 * (self.slot as f64).ln() / y).sqrt())
    }

    /// Channel to use this slot: round-robin until every channel has been
    /// tried once, then `argmax γ_i·B_i`.
    pub fn choose(&self, bandwidths: &[f64]) -> Result<usize> {
        if let Some(untried) = self.attempts.iter().position(|&y| y == 0) {
            return Ok(untried);
        }
        let scores = (0..self.channels())
            .map(|i| self.index(i).map(|g| g * bandwidths[i]))
            .collect::<Result<Vec<_>>>()?;
        argmax_lowest(scores).ok_or(Error::Empty("channel list"))
    }

    /// Records the outcome of the slot and advances the slot counter.
    pub fn record(&mut self, channel: usize, success: bool) {
        self.attempts[channel] += 1;
        if success {
            self.successes[channel] += 1;
        }
        self.slot += 1;
    }
}

/// Free function form of [`UcbState::index`].
pub fn ucb_index(state: &UcbState, channel: usize) -> Result<f64> {
    state.index(channel)
}

/// One phase of the initial learning period: a group of channels sensed
/// continuously for a contiguous run of slots (0-based, half-open).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningPhase {
    pub slots: Range<u64>,
    pub channels: Vec<usize>,
}

/// Splits `n` channels into `⌈n/L⌉` consecutive groups, each sensed for
/// `lp` slots.
pub fn learning_schedule(n: usize, sense_budget: usize, lp: u64) -> Result<Vec<LearningPhase>> {
    if sense_budget == 0 || sense_budget > n {
        return Err(Error::invalid("L", format!("{sense_budget} not in [1, {n}]")));
    }
    Ok((0..n)
        .step_by(sense_budget)
        .enumerate()
        .map(|(g, start)| LearningPhase {
            slots: g as u64 * lp..(g as u64 + 1) * lp,
            channels: (start..(start + sense_budget).min(n)).collect(),
        })
        .collect())
}

/// Static channel choice of the fixed-sequence baseline: the channel with
/// the largest stationary free probability times bandwidth.
pub fn fixed_sequence_baseline(channels: &[SlottedChannelParams]) -> Result<usize> {
    let scores = channels
        .iter()
        .map(|c| steady_state_free_prob(c).map(|pi| pi * c.bandwidth))
        .collect::<Result<Vec<_>>>()?;
    argmax_lowest(scores).ok_or(Error::Empty("channel list"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_access(&[0.9, 0.5], &[1.0, 1.0]).unwrap(), 0);
        assert_eq!(greedy_access(&[0.5, 0.9], &[2.0, 1.0]).unwrap(), 0);
        assert_eq!(greedy_access(&[0.5, 0.5], &[1.0, 1.0]).unwrap(), 0);
        assert_eq!(greedy_access(&[0.5, 0.6], &[1.0, 1.0]).unwrap(), 1);
        assert!(greedy_access(&[], &[]).is_err());
        assert!(greedy_access(&[0.5], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sense_set_examples() {
        let w = [0.9, 0.8, 0.7];
        let omega = [0.9, 0.5, 0.1];
        let b = [1.0; 3];
        let d = select_sense_set(&w, &omega, &b, 2).unwrap();
        assert_eq!(d.access_channel, 0);
        assert_eq!(d.sense_set, vec![0, 2]);
        assert_relative_eq!(whittle_slot_reward(&d, &w, &omega), 1.5, max_relative = 1e-12);

        let all = select_sense_set(&w, &omega, &b, 3).unwrap();
        assert_eq!(all.sense_set, vec![0, 1, 2]);
        let one = select_sense_set(&w, &omega, &b, 1).unwrap();
        assert_eq!(one.sense_set, vec![0]);
        assert_relative_eq!(whittle_slot_reward(&one, &w, &omega), 0.9);

        let flat = select_sense_set(&w, &w, &b, 3).unwrap();
        assert_relative_eq!(whittle_slot_reward(&flat, &w, &w), 0.9);
        assert!(select_sense_set(&w, &omega, &b, 0).is_err());
        assert!(select_sense_set(&w, &omega, &b, 4).is_err());
    }

    #[test]
    fn sense_set_ties_prefer_low_index() {
        let w = [0.5, 0.6, 0.6, 0.6];
        let omega = [0.5, 0.4, 0.4, 0.4];
        let d = select_sense_set(&w, &omega, &[1.0; 4], 2).unwrap();
        assert_eq!(d.access_channel, 1);
        assert_eq!(d.sense_set, vec![1, 2]);
    }

    #[test]
    fn ucb_examples() {
        let mut s = UcbState::new(2);
        s.successes[0] = 5;
        s.attempts[0] = 10;
        // Slot indices are integers; j = 7 ≈ e² is the nearest check of
        // 0.5 + √(4/10) = 1.13246 (ln 7 = 1.9459).
        s.slot = 7;
        let expected = 0.5 + (2.0 * 7f64.ln() / 10.0).sqrt();
        assert_relative_eq!(s.index(0).unwrap(), expected, max_relative = 1e-15);
        assert!((s.index(0).unwrap() - 1.132_455_532_033_676).abs() < 0.01);

        s.successes[1] = 4;
        s.attempts[1] = 4;
        s.slot = 1;
        assert_relative_eq!(ucb_index(&s, 1).unwrap(), 1.0);

        let mut prev = 0.0;
        for j in 1..50 {
            s.slot = j;
            let g = s.index(0).unwrap();
            if j > 1 {
                assert!(g > prev);
            }
            prev = g;
        }
        let fresh = UcbState::new(3);
        assert!(fresh.index(0).is_err());
    }

    #[test]
    fn ucb_round_robin_seeding() {
        let mut s = UcbState::new(3);
        let b = [1.0; 3];
        for expect in 0..3 {
            let c = s.choose(&b).unwrap();
            assert_eq!(c, expect);
            s.record(c, expect == 1);
        }
        assert_eq!(s.choose(&b).unwrap(), 1);
        assert!(s.successes.iter().zip(&s.attempts).all(|(x, y)| x <= y));
    }

    #[test]
    fn schedule_examples() {
        let one = learning_schedule(5, 5, 20).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].slots, 0..20);
        assert_eq!(one[0].channels, vec![0, 1, 2, 3, 4]);

        let single = learning_schedule(5, 1, 20).unwrap();
        assert_eq!(single.len(), 5);
        assert_eq!(single.last().unwrap().slots.end, 100);

        let pairs = learning_schedule(5, 2, 10).unwrap();
        let sizes: Vec<usize> = pairs.iter().map(|p| p.channels.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert_eq!(pairs.last().unwrap().slots.end, 30);
        assert!(learning_schedule(5, 6, 10).is_err());
    }

    #[test]
    fn baseline_examples() {
        let one = [SlottedChannelParams::new(0.3, 0.6, 1.0).unwrap()];
        assert_eq!(fixed_sequence_baseline(&one).unwrap(), 0);
        // π = 0.5 and 0.9
        let two = [
            SlottedChannelParams::new(0.5, 0.5, 1.0).unwrap(),
            SlottedChannelParams::new(0.9, 0.9, 1.0).unwrap(),
        ];
        assert_eq!(fixed_sequence_baseline(&two).unwrap(), 1);
        let tie = [
            SlottedChannelParams::new(0.9, 0.9, 1.0).unwrap(),
            SlottedChannelParams::new(0.9, 0.9, 1.0).unwrap(),
        ];
        assert_eq!(fixed_sequence_baseline(&tie).unwrap(), 0);
    }

    proptest! {
        #[test]
        fn decisions_invariant_to_bandwidth_scaling(
            w in proptest::collection::vec(0.0f64..1.0, 5),
            omega in proptest::collection::vec(0.0f64..1.0, 5),
            b in proptest::collection::vec(0.1f64..3.0, 5),
            scale in 0.01f64..100.0,
            budget in 1usize..=5,
        ) {
            let scaled: Vec<f64> = b.iter().map(|x| x * scale).collect();
            prop_assert_eq!(greedy_access(&omega, &b).unwrap(), greedy_access(&omega, &scaled).unwrap());
            let d1 = select_sense_set(&w, &omega, &b, budget).unwrap();
            let d2 = select_sense_set(&w, &omega, &scaled, budget).unwrap();
            prop_assert_eq!(&d1, &d2);
            prop_assert!(d1.senses(d1.access_channel));
            prop_assert_eq!(d1.sense_set.len(), budget);
        }
    }
}
