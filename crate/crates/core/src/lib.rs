//! Return-distribution matching for tabular finite-horizon MDPs.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the MDP model and
//! reward discretization, discrete return-distribution metrics, the policy
//! classes together with exact and sampled evaluation, a dense simplex LP
//! solver, and the four imitation algorithms: RS-BC, RS-KT, BC and MIMIC-MD.
//!
//! Stages are 0-based in every API of this crate: stage `h` here is stage
//! `h + 1` in the usual 1-based textbook notation. Cumulative rewards on a
//! grid are carried as integer multiples of the grid step.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod distributions;
mod error;
pub mod fixtures;
pub mod lp;
pub mod mdp;
pub mod policies;
pub mod rsbc;
pub mod rskt;

pub use crate::distributions::DiscreteReturnDistribution;
pub use crate::error::{Error, Result};
pub use crate::mdp::{
    AugmentedMdp, Dataset, GridReward, RewardGrid, RewardTable, TabularMdp, Trajectory,
};
pub use crate::policies::{
    MarkovianPolicy, ParametricHistoryPolicy, PolicyHandle, RewardAugmentedPolicy,
};
