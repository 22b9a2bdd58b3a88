//! Hand-built instances with known answers.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, TabularMdp};
use crate::policies::{HistoryPolicy, MarkovianPolicy, PolicyHandle};

pub const S_INIT: usize = 0;
pub const S_1: usize = 1;
pub const S_2: usize = 2;
pub const S_3: usize = 3;

/// The 4-state, 2-action, horizon-3 MDP on which no Markovian policy
/// matches a simple history-dependent expert, plus that expert.
///
/// From `s_init` either action leads to `s_1` or `s_2` with probability 1/2;
/// both then lead to `s_3`. Visiting `s_1` pays 1, and in `s_3` action 1
/// pays 1 while action 0 pays 0. The expert plays action 0 outside `s_3`; in
/// `s_3` it plays action 0 only after the history `(s_init, 0), (s_1, 0)` and
/// action 1 otherwise, so every trajectory returns exactly 1.
pub fn make_prop2_fixture() -> (TabularMdp, PolicyHandle) {
    let (ns, na, nh) = (4, 2, 3);
    let mut t = vec![0.0; nh * ns * na * ns];
    let mut set = |h: usize, s: usize, a: usize, s_next: usize, p: f64| {
        t[((h * ns + s) * na + a) * ns + s_next] = p;
    };
    for a in 0..na {
        set(0, S_INIT, a, S_1, 0.5);
        set(0, S_INIT, a, S_2, 0.5);
        for s in [S_1, S_2, S_3] {
            set(0, s, a, S_3, 1.0);
        }
        for h in 1..nh {
            for s in 0..ns {
                set(h, s, a, S_3, 1.0);
            }
        }
    }
    let mut reward = vec![0.0; nh * ns * na];
    for a in 0..na {
        reward[(ns + S_1) * na + a] = 1.0;
    }
    reward[(2 * ns + S_3) * na + 1] = 1.0;
    let mdp = TabularMdp::new(ns, na, nh, S_INIT, t, reward).expect("fixture MDP is valid");
    let expert = HistoryPolicy::new(
        "history-expert",
        na,
        Arc::new(|s, history| {
            if s != S_3 || history == [(S_INIT, 0), (S_1, 0)] {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        }),
    );
    (mdp, expert.into())
}

/// The Markovian policy that plays action 0 with probability `alpha` in `s_3`
/// at the last stage and action 0 everywhere else.
pub fn prop2_markov_policy(alpha: f64) -> MarkovianPolicy {
    MarkovianPolicy::from_fn(4, 2, 3, |h, s| if h == 2 && s == S_3 { vec![alpha, 1.0 - alpha] } else { vec![1.0, 0.0] })
        .expect("alpha in [0, 1]")
}

/// Largest `(H+1)·S·A` accepted by [`make_tv_hard_reward`]. The smallest
/// reward is `10^{-((H+1)SA-1)}`, and two distinct returns differ by about
/// that much, which has to stay above the 1e-12 tolerance at which
/// distribution atoms are merged.
pub const TV_HARD_MAX_DIGITS: usize = 12;

/// `r_h(s, a) = 10^{-(h·S·A + s·A + a)}` with 1-based `h`: every
/// (stage, state, action) owns a distinct decimal digit, so distinct
/// trajectories have distinct returns.
pub fn make_tv_hard_reward(num_states: usize, num_actions: usize, horizon: usize) -> Result<RewardTable> {
    let product = (horizon + 1) * num_states * num_actions;
    if product > TV_HARD_MAX_DIGITS {
        return Err(Error::RewardUnderflow { product, max: TV_HARD_MAX_DIGITS });
    }
    let sa = (num_states * num_actions) as i32;
    let values: Vec<f64> = (0..horizon)
        .flat_map(|h| (0..num_states).flat_map(move |s| (0..num_actions).map(move |a| (h, s, a))))
        .map(|(h, s, a)| {
            let exponent = (h as i32 + 1) * sa + (s * num_actions + a) as i32;
            libm::pow(10.0, -(exponent as f64))
        })
        .collect();
    RewardTable::new(num_states, num_actions, horizon, values)
}
