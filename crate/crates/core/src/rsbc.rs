//! RS-BC: behavior cloning on the reward-augmented state.
//!
//! Counts how often the expert played each action in each
//! `(stage, state, cumulative discretized reward)` cell and normalizes the
//! counts into a [`RewardAugmentedPolicy`]. Unvisited cells are uniform.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{discretize_reward, Dataset, GridReward, RewardGrid, RewardTable};
use crate::policies::RewardAugmentedPolicy;

/// `M_h(s, g, a)`, laid out like the weights of a [`RewardAugmentedPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    reward: GridReward,
    offsets: Vec<usize>,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn new(reward: GridReward) -> Self {
        let cell = reward.num_states() * reward.num_actions();
        let mut offsets = Vec::with_capacity(reward.horizon());
        let mut total = 0;
        for h in 0..reward.horizon() {
            offsets.push(total);
            total += reward.grid().stage_len(h) * cell;
        }
        Self { reward, offsets, counts: vec![0; total] }
    }

    fn index(&self, h: usize, s: usize, g: u32, a: usize) -> usize {
        self.offsets[h] + (g as usize * self.reward.num_states() + s) * self.reward.num_actions() + a
    }

    pub fn get(&self, h: usize, s: usize, g: u32, a: usize) -> u64 {
        self.counts[self.index(h, s, g, a)]
    }

    /// Adds every trajectory of `data`, accumulating `g` in integer multiples.
    pub fn add_dataset(&mut self, data: &Dataset) -> Result<()> {
        let (ns, na) = (self.reward.num_states(), self.reward.num_actions());
        for traj in &data.trajectories {
            if traj.len() != self.reward.horizon() {
                return Err(Error::OutOfBounds(format!(
                    "trajectory length {} vs horizon {}",
                    traj.len(),
                    self.reward.horizon()
                )));
            }
            let mut g = 0u32;
            for (h, &(s, a)) in traj.steps.iter().enumerate() {
                if s >= ns || a >= na {
                    return Err(Error::OutOfBounds(format!("step {h} = ({s}, {a})")));
                }
                let i = self.index(h, s, g, a);
                self.counts[i] += 1;
                g += self.reward.get(h, s, a);
            }
        }
        Ok(())
    }

    /// Sums another table built on the same discretized reward.
    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if self.reward != other.reward {
            return Err(Error::GridMismatch("count tables use different rewards".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(x, y)| *x += y);
        Ok(())
    }

    /// `Σ_{s,g,a} M_h(s, g, a)`.
    pub fn stage_total(&self, h: usize) -> u64 {
        let end = self.offsets.get(h + 1).copied().unwrap_or(self.counts.len());
        self.counts[self.offsets[h]..end].iter().sum()
    }

    pub fn into_policy(self) -> RewardAugmentedPolicy {
        let weights = self.counts.iter().map(|&c| c as f64).collect();
        RewardAugmentedPolicy::from_weights(self.reward, weights)
    }
}

/// RS-BC on `data` with the reward discretized on `grid`.
pub fn rs_bc(data: &Dataset, reward: &RewardTable, grid: &RewardGrid) -> Result<RewardAugmentedPolicy> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut table = CountTable::new(discretize_reward(reward, grid)?);
    table.add_dataset(data)?;
    Ok(table.into_policy())
}

/// Grid step `ε/(4H)` that makes RS-BC `ε`-accurate.
pub fn theta_for_epsilon_rsbc(epsilon: f64, horizon: usize) -> Result<f64> {
    check_epsilon(epsilon, horizon)?;
    Ok(epsilon / (4.0 * horizon as f64))
}

pub(crate) fn check_epsilon(epsilon: f64, horizon: usize) -> Result<()> {
    if horizon == 0 || !(epsilon > 0.0 && epsilon <= horizon as f64) {
        return Err(Error::InvalidArgument(format!("accuracy {epsilon} not in (0, {horizon}]")));
    }
    Ok(())
}
