//! RS-KT: fit the return distribution of a reward-augmented policy to the
//! empirical expert distribution with a linear program over occupancy
//! measures of the augmented MDP, using the known transitions.
//!
//! Variables of the program:
//!
//! * `d_h(s, g, a) ≥ 0` for every augmented state `(s, g)` reachable at stage `h`
//!   (unreachable states are pruned);
//! * `η(g) ≥ 0`, the induced return distribution on the full grid;
//! * `x(g)` free, the CDF difference `Σ_{g' ≤ g} η(g') − η̂(g')`;
//! * `t(g) ≥ |x(g)|`.
//!
//! The objective is `θ·Σ_g t(g)`, which equals the 1-Wasserstein distance
//! between `η` and `η̂` because both live on the uniform grid of step θ.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::distributions::{empirical_grid_histogram, DiscreteReturnDistribution};
use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpStatus};
use crate::mdp::{build_augmented_mdp, discretize_reward, AugmentedMdp, Dataset, GridReward, RewardGrid, RewardTable, TabularMdp};
use crate::policies::{AugmentedOccupancy, RewardAugmentedPolicy};
use crate::rsbc::check_epsilon;

/// Where each group of variables lives in the program.
#[derive(Debug, Clone, PartialEq)]
pub struct RsktLayout {
    /// Per stage, the first `d` column of each reachable augmented state.
    pub d: Vec<BTreeMap<(usize, u32), usize>>,
    pub num_actions: usize,
    pub eta: usize,
    pub x: usize,
    pub t: usize,
    pub grid_len: usize,
}

#[derive(Debug, Clone)]
pub struct RsktProgram {
    pub lp: LinearProgram,
    pub layout: RsktLayout,
    pub eta_hat: Vec<f64>,
    pub reward: GridReward,
}

/// Maps a distribution supported on the grid to its histogram over multiples.
pub fn grid_histogram(dist: &DiscreteReturnDistribution, grid: &RewardGrid) -> Result<Vec<f64>> {
    let mut hist = vec![0.0; grid.len()];
    for (x, p) in dist.atoms() {
        let k = grid
            .multiple_of(x)
            .ok_or_else(|| Error::GridMismatch(format!("return {x} is not on the grid of step {}", grid.theta())))?;
        hist[k as usize] += p;
    }
    Ok(hist)
}

/// Builds the RS-KT program for fitting `eta_hat`, which must be supported on
/// the augmented MDP's grid.
pub fn build_rskt_lp(aug: &AugmentedMdp<'_>, eta_hat: &DiscreteReturnDistribution) -> Result<RsktProgram> {
    let hist = grid_histogram(eta_hat, aug.grid())?;
    build_rskt_lp_from_histogram(aug, hist)
}

fn build_rskt_lp_from_histogram(aug: &AugmentedMdp<'_>, eta_hat: Vec<f64>) -> Result<RsktProgram> {
    let mdp = aug.base();
    let (na, horizon) = (mdp.num_actions(), mdp.horizon());
    let grid = *aug.grid();
    let len = grid.len();
    if eta_hat.len() != len {
        return Err(Error::GridMismatch(format!("histogram has {} cells, grid has {len}", eta_hat.len())));
    }

    let mut d = Vec::with_capacity(horizon);
    let mut next_col = 0;
    for h in 0..horizon {
        let mut stage = BTreeMap::new();
        for &state in aug.reachable(h) {
            stage.insert(state, next_col);
            next_col += na;
        }
        d.push(stage);
    }
    let layout = RsktLayout { eta: next_col, x: next_col + len, t: next_col + 2 * len, grid_len: len, num_actions: na, d };
    let mut lp = LinearProgram::new(layout.t + len);

    // initial condition: all stage-0 mass on (s0, 0)
    let start = layout.d[0][&aug.initial_state()];
    lp.add_eq((0..na).map(|a| (start + a, 1.0)).collect(), 1.0);

    // flow conservation
    for h in 1..horizon {
        let mut inflow: BTreeMap<(usize, u32), Vec<(usize, f64)>> = BTreeMap::new();
        for (&(s, g), &col) in &layout.d[h - 1] {
            for a in 0..na {
                for (succ, p) in aug.successors(h - 1, s, g, a) {
                    inflow.entry(succ).or_default().push((col + a, -p));
                }
            }
        }
        for (state, &col) in &layout.d[h] {
            let mut terms: Vec<(usize, f64)> = (0..na).map(|a| (col + a, 1.0)).collect();
            terms.extend(inflow.remove(state).unwrap_or_default());
            lp.add_eq(terms, 0.0);
        }
    }

    // η from the last stage
    let mut final_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len];
    for (&(s, g), &col) in &layout.d[horizon - 1] {
        for a in 0..na {
            final_terms[aug.final_multiple(s, g, a) as usize].push((col + a, -1.0));
        }
    }
    for (k, mut terms) in final_terms.into_iter().enumerate() {
        terms.push((layout.eta + k, 1.0));
        lp.add_eq(terms, 0.0);
    }

    // x(k) = x(k−1) + η(k) − η̂(k), i.e. the cumulative difference
    for (k, &hat) in eta_hat.iter().enumerate() {
        lp.set_bounds(layout.x + k, f64::NEG_INFINITY, f64::INFINITY);
        let mut terms = vec![(layout.x + k, 1.0), (layout.eta + k, -1.0)];
        if k > 0 {
            terms.push((layout.x + k - 1, -1.0));
        }
        lp.add_eq(terms, -hat);
        lp.add_le(vec![(layout.x + k, 1.0), (layout.t + k, -1.0)], 0.0);
        lp.add_le(vec![(layout.x + k, -1.0), (layout.t + k, -1.0)], 0.0);
        lp.set_cost(layout.t + k, grid.theta());
    }
    Ok(RsktProgram { lp, layout, eta_hat, reward: aug.reward().clone() })
}

impl RsktProgram {
    /// The program's variable vector for a given occupancy measure: `η`, `x`
    /// and `t` are the values the constraints force.
    pub fn assignment(&self, occ: &AugmentedOccupancy) -> Result<Vec<f64>> {
        let layout = &self.layout;
        let mut v = vec![0.0; self.lp.num_vars()];
        for h in 0..occ.horizon() {
            for (state, row) in occ.stage(h) {
                let col = *layout.d[h]
                    .get(&state)
                    .ok_or_else(|| Error::OutOfBounds(format!("state {state:?} not reachable at stage {h}")))?;
                v[col..col + row.len()].copy_from_slice(row);
            }
        }
        let last = occ.horizon() - 1;
        for ((s, g), row) in occ.stage(last) {
            for (a, &m) in row.iter().enumerate() {
                let k = g + self.reward.get(last, s, a);
                v[layout.eta + k as usize] += m;
            }
        }
        let mut cum = 0.0;
        for k in 0..layout.grid_len {
            cum += v[layout.eta + k] - self.eta_hat[k];
            v[layout.x + k] = cum;
            v[layout.t + k] = cum.abs();
        }
        Ok(v)
    }

    fn occupancy(&self, values: &[f64]) -> AugmentedOccupancy {
        let na = self.layout.num_actions;
        let stages = self
            .layout
            .d
            .iter()
            .map(|stage| stage.iter().map(|(&state, &col)| (state, values[col..col + na].to_vec())).collect())
            .collect();
        AugmentedOccupancy::from_stages(na, stages)
    }
}

/// A solved RS-KT program.
#[derive(Debug, Clone)]
pub struct OccupancySolution {
    pub d: AugmentedOccupancy,
    pub eta: DiscreteReturnDistribution,
    /// Wasserstein distance between `eta` and the target, in return units.
    pub objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

pub fn solve_rskt_lp(program: &RsktProgram) -> Result<OccupancySolution> {
    let sol = solve(&program.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
    }
    let layout = &program.layout;
    let grid = program.reward.grid();
    let eta = DiscreteReturnDistribution::from_atoms(
        (0..layout.grid_len).map(|k| (grid.value(k as u32), sol.x[layout.eta + k].max(0.0))),
    )?;
    Ok(OccupancySolution {
        d: program.occupancy(&sol.x),
        eta,
        objective: sol.objective,
        iterations: sol.iterations,
        max_violation: sol.max_violation,
    })
}

/// Row-normalizes an occupancy measure into a policy; cells without mass are uniform.
pub fn occupancy_to_policy(occ: &AugmentedOccupancy, reward: &GridReward) -> Result<RewardAugmentedPolicy> {
    let mut policy = RewardAugmentedPolicy::uniform(reward.clone());
    let na = reward.num_actions();
    for h in 0..occ.horizon() {
        for ((s, g), row) in occ.stage(h) {
            if s >= reward.num_states() || g > reward.grid().stage_max(h) || row.len() != na {
                return Err(Error::OutOfBounds(format!("occupancy cell (h={h}, s={s}, g={g})")));
            }
            let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
            if total > 0.0 {
                let i = policy.index(h, s, g);
                for (a, &v) in row.iter().enumerate() {
                    policy.weights_mut()[i + a] = v.max(0.0) / total;
                }
            }
        }
    }
    Ok(policy)
}

/// Solve statistics reported by [`rs_kt`].
#[derive(Debug, Clone)]
pub struct RsktDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub max_violation: f64,
    pub eta_hat: DiscreteReturnDistribution,
    pub eta: DiscreteReturnDistribution,
}

/// `key=value` lines.
impl fmt::Display for RsktDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "objective={}", self.objective)?;
        writeln!(f, "iterations={}", self.iterations)?;
        writeln!(f, "variables={}", self.num_vars)?;
        writeln!(f, "constraints={}", self.num_constraints)?;
        writeln!(f, "max_violation={}", self.max_violation)
    }
}

impl RsktDiagnostics {
    pub fn to_text(&self) -> String {
        format!("{self}")
    }
}

/// RS-KT: empirical grid histogram of the expert's returns, then the policy
/// in the reward-augmented class whose return distribution is closest to it.
pub fn rs_kt(
    data: &Dataset,
    mdp: &TabularMdp,
    reward: &RewardTable,
    grid: &RewardGrid,
) -> Result<(RewardAugmentedPolicy, RsktDiagnostics)> {
    mdp.check_reward_shape(reward)?;
    let hist = empirical_grid_histogram(data, reward, grid)?;
    let disc = discretize_reward(reward, grid)?;
    let aug = build_augmented_mdp(mdp, &disc)?;
    let program = build_rskt_lp_from_histogram(&aug, hist)?;
    let sol = solve_rskt_lp(&program)?;
    let policy = occupancy_to_policy(&sol.d, &disc)?;
    let eta_hat = DiscreteReturnDistribution::from_atoms(
        program.eta_hat.iter().enumerate().map(|(k, &p)| (grid.value(k as u32), p)),
    )?;
    let diagnostics = RsktDiagnostics {
        objective: sol.objective,
        iterations: sol.iterations,
        num_vars: program.lp.num_vars(),
        num_constraints: program.lp.num_constraints(),
        max_violation: sol.max_violation,
        eta_hat,
        eta: sol.eta,
    };
    Ok((policy, diagnostics))
}

/// Grid step `ε/(7H)` that makes RS-KT `ε`-accurate.
pub fn theta_for_epsilon_rskt(epsilon: f64, horizon: usize) -> Result<f64> {
    check_epsilon(epsilon, horizon)?;
    Ok(epsilon / (7.0 * horizon as f64))
}
