#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdm_core::mdp::{RewardGrid, RewardTable, TabularMdp};
use rdm_core::policies::sample_simplex;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random transitions with some zero entries, random rewards in [0, 1].
pub fn random_mdp(ns: usize, na: usize, nh: usize, rng: &mut impl Rng) -> TabularMdp {
    let mut t = Vec::with_capacity(nh * ns * na * ns);
    for _ in 0..nh * ns * na {
        if rng.random::<f64>() < 0.3 {
            let mut row = vec![0.0; ns];
            row[rng.random_range(0..ns)] = 1.0;
            t.extend(row);
        } else {
            t.extend(sample_simplex(rng, ns));
        }
    }
    let reward = (0..nh * ns * na).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(ns, na, nh, rng.random_range(0..ns), t, reward).unwrap()
}

/// Rewards drawn from the multiples of θ in [0, 1].
pub fn grid_reward(ns: usize, na: usize, nh: usize, grid: &RewardGrid, rng: &mut impl Rng) -> RewardTable {
    RewardTable::from_fn(ns, na, nh, |_, _, _| grid.value(rng.random_range(0..=grid.max_step())))
}

/// Small random shapes up to (3, 2, 4).
pub fn small_shape(rng: &mut impl Rng) -> (usize, usize, usize) {
    (rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(1..=4))
}
