//! Tabular finite-horizon MDPs, trajectories, reward grids and the
//! reward-augmented MDP.
//!
//! Stage indices are 0-based: stage `h` here is stage `h + 1` of the 1-based
//! convention used in the crate documentation of grids, where `Y_h` collects
//! the cumulative rewards reachable *before* acting at stage `h`. With 0-based
//! stages the grid before acting at stage `h` is `{0, θ, …, ⌊h/θ⌋θ}`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Tolerance on transition rows summing to one.
pub const PROB_TOL: f64 = 1e-9;

/// Slack used when flooring `n / θ`, so that `θ = 0.1, n = 3` gives 30.
const FLOOR_EPS: f64 = 1e-9;

pub(crate) fn floor_div(n: f64, theta: f64) -> u32 {
    libm::floor(n / theta + FLOOR_EPS) as u32
}

/// One (state, action) step of a trajectory.
pub type Step = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    InitialState,
    NegativeProbability,
    RowSum,
    RewardRange,
    NonFinite,
}

/// One broken invariant found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub stage: Option<usize>,
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn at(kind: ViolationKind, h: usize, s: usize, a: usize, detail: String) -> Self {
        Self { kind, stage: Some(h), state: Some(s), action: Some(a), detail }
    }

    fn global(kind: ViolationKind, detail: String) -> Self {
        Self { kind, stage: None, state: None, action: None, detail }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.stage, self.state, self.action) {
            (Some(h), Some(s), Some(a)) => {
                write!(f, "{:?} at (h={h}, s={s}, a={a}): {}", self.kind, self.detail)
            }
            _ => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

/// Deterministic reward `r_h(s, a)`, flattened as `[h][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions * horizon {
            return Err(Error::InvalidArgument(format!(
                "reward table has {} entries, expected {}",
                values.len(),
                num_states * num_actions * horizon
            )));
        }
        Ok(Self { num_states, num_actions, horizon, values })
    }

    pub fn zeros(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self { num_states, num_actions, horizon, values: vec![0.0; num_states * num_actions * horizon] }
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions * horizon);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    values.push(f(h, s, a));
                }
            }
        }
        Self { num_states, num_actions, horizon, values }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) {
        self.values[(h * self.num_states + s) * self.num_actions + a] = value;
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &RewardTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Unvalidated MDP contents, as read from a file or assembled by hand.
///
/// `transitions` is flattened as `[h][s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpParts {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub transitions: Vec<f64>,
    pub reward: Vec<f64>,
}

/// Lists every broken [`TabularMdp`] invariant; an empty report means valid.
pub fn validate_mdp(parts: &MdpParts) -> Vec<Violation> {
    let (ns, na, nh) = (parts.num_states, parts.num_actions, parts.horizon);
    let mut report = Vec::new();
    if ns == 0 || na == 0 || nh == 0 {
        report.push(Violation::global(
            ViolationKind::Dimension,
            format!("S, A, H must be positive (got {ns}, {na}, {nh})"),
        ));
        return report;
    }
    if parts.transitions.len() != nh * ns * na * ns {
        report.push(Violation::global(
            ViolationKind::Dimension,
            format!("transitions have {} entries, expected {}", parts.transitions.len(), nh * ns * na * ns),
        ));
    }
    if parts.reward.len() != nh * ns * na {
        report.push(Violation::global(
            ViolationKind::Dimension,
            format!("reward has {} entries, expected {}", parts.reward.len(), nh * ns * na),
        ));
    }
    if parts.initial_state >= ns {
        report.push(Violation::global(
            ViolationKind::InitialState,
            format!("initial state {} not in [0, {ns})", parts.initial_state),
        ));
    }
    if !report.is_empty() {
        return report;
    }
    for h in 0..nh {
        for s in 0..ns {
            for a in 0..na {
                let start = ((h * ns + s) * na + a) * ns;
                let row = &parts.transitions[start..start + ns];
                if row.iter().any(|p| !p.is_finite()) {
                    report.push(Violation::at(ViolationKind::NonFinite, h, s, a, "non-finite transition".into()));
                    continue;
                }
                if let Some(p) = row.iter().find(|p| **p < 0.0) {
                    report.push(Violation::at(
                        ViolationKind::NegativeProbability,
                        h,
                        s,
                        a,
                        format!("transition probability {p}"),
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    report.push(Violation::at(ViolationKind::RowSum, h, s, a, format!("row sums to {sum}")));
                }
                let r = parts.reward[(h * ns + s) * na + a];
                if !r.is_finite() {
                    report.push(Violation::at(ViolationKind::NonFinite, h, s, a, "non-finite reward".into()));
                } else if !(0.0..=1.0).contains(&r) {
                    report.push(Violation::at(ViolationKind::RewardRange, h, s, a, format!("reward {r}")));
                }
            }
        }
    }
    report
}

/// A finite MDP with stage-dependent transitions and a deterministic reward in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Vec<f64>,
    reward: RewardTable,
}

impl TryFrom<MdpParts> for TabularMdp {
    type Error = Error;

    fn try_from(parts: MdpParts) -> Result<Self> {
        let report = validate_mdp(&parts);
        if !report.is_empty() {
            return Err(Error::InvalidMdp(report));
        }
        let reward = RewardTable::new(parts.num_states, parts.num_actions, parts.horizon, parts.reward)?;
        Ok(Self {
            num_states: parts.num_states,
            num_actions: parts.num_actions,
            horizon: parts.horizon,
            initial_state: parts.initial_state,
            transitions: parts.transitions,
            reward,
        })
    }
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transitions: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        MdpParts { num_states, num_actions, horizon, initial_state, transitions, reward }.try_into()
    }

    pub fn to_parts(&self) -> MdpParts {
        MdpParts {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            initial_state: self.initial_state,
            transitions: self.transitions.clone(),
            reward: self.reward.values.clone(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward(&self) -> &RewardTable {
        &self.reward
    }

    /// Distribution of the next state after playing `a` in `s` at stage `h`.
    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// Same MDP with its reward replaced.
    pub fn with_reward(&self, reward: RewardTable) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.reward = reward.values;
        parts.try_into()
    }

    /// Checks that a reward table has this MDP's shape.
    pub fn check_reward_shape(&self, reward: &RewardTable) -> Result<()> {
        if reward.num_states != self.num_states
            || reward.num_actions != self.num_actions
            || reward.horizon != self.horizon
        {
            return Err(Error::InvalidArgument(format!(
                "reward shape ({}, {}, {}) does not match MDP ({}, {}, {})",
                reward.num_states, reward.num_actions, reward.horizon, self.num_states, self.num_actions, self.horizon
            )));
        }
        Ok(())
    }

    pub fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.len() != self.horizon {
            return Err(Error::OutOfBounds(format!(
                "trajectory length {} differs from horizon {}",
                traj.len(),
                self.horizon
            )));
        }
        check_steps(&traj.steps, self.num_states, self.num_actions)
    }
}

fn check_steps(steps: &[Step], num_states: usize, num_actions: usize) -> Result<()> {
    for (h, &(s, a)) in steps.iter().enumerate() {
        if s >= num_states || a >= num_actions {
            return Err(Error::OutOfBounds(format!("step {h} = ({s}, {a})")));
        }
    }
    Ok(())
}

/// A length-`H` sequence of (state, action) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Expert demonstrations plus where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub seed: u64,
    pub policy_tag: String,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, seed: u64, policy_tag: impl Into<String>) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            if trajectories.iter().any(|t| t.len() != first.len()) {
                return Err(Error::InvalidArgument("trajectories have different horizons".into()));
            }
        }
        Ok(Self { trajectories, seed, policy_tag: policy_tag.into() })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> Option<usize> {
        self.trajectories.first().map(Trajectory::len)
    }
}

/// `Σ_{h < prefix_len} r_h(s_h, a_h)`; `prefix_len = H` gives the full return.
pub fn return_of_trajectory(traj: &Trajectory, reward: &RewardTable, prefix_len: usize) -> Result<f64> {
    if prefix_len > traj.len() || prefix_len > reward.horizon {
        return Err(Error::OutOfBounds(format!(
            "prefix length {prefix_len} exceeds trajectory length {}",
            traj.len()
        )));
    }
    let steps = &traj.steps[..prefix_len];
    check_steps(steps, reward.num_states, reward.num_actions)?;
    Ok(steps.iter().enumerate().map(|(h, &(s, a))| reward.get(h, s, a)).sum())
}

/// The uniform grid `{0, θ, 2θ, …}` used to discretize rewards and cumulative returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardGrid {
    theta: f64,
    horizon: usize,
}

impl RewardGrid {
    pub fn new(theta: f64, horizon: usize) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("grid step {theta} not in (0, 1]")));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(Self { theta, horizon })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Largest multiple of θ a cumulative reward can reach before acting at
    /// stage `h` (0-based, `h <= H`): `⌊h/θ⌋`.
    pub fn stage_max(&self, h: usize) -> u32 {
        floor_div(h as f64, self.theta)
    }

    /// Number of grid cells before acting at stage `h` (0-based).
    pub fn stage_len(&self, h: usize) -> usize {
        self.stage_max(h) as usize + 1
    }

    /// Size of the full grid covering `[0, H]`.
    pub fn len(&self) -> usize {
        self.stage_len(self.horizon)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest multiple of θ a single discretized reward can take: `⌊1/θ⌋`.
    pub fn max_step(&self) -> u32 {
        floor_div(1.0, self.theta)
    }

    #[inline]
    pub fn value(&self, multiple: u32) -> f64 {
        multiple as f64 * self.theta
    }

    /// The multiple `k` with `|kθ − x| ≤ 1e-9`, if `x` lies on the full grid.
    pub fn multiple_of(&self, x: f64) -> Option<u32> {
        if !(x.is_finite() && x > -1e-9) {
            return None;
        }
        let k = libm::round(x / self.theta);
        (k <= self.len() as f64 - 1.0 && (k * self.theta - x).abs() <= 1e-9).then_some(k as u32)
    }
}

/// A reward table whose entries are integer multiples of a grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReward {
    grid: RewardGrid,
    num_states: usize,
    num_actions: usize,
    multiples: Vec<u32>,
}

impl GridReward {
    pub fn grid(&self) -> &RewardGrid {
        &self.grid
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> u32 {
        self.multiples[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn multiples(&self) -> &[u32] {
        &self.multiples
    }

    /// The table of real values `kθ`.
    pub fn to_table(&self) -> RewardTable {
        RewardTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.grid.horizon,
            values: self.multiples.iter().map(|&k| self.grid.value(k)).collect(),
        }
    }

    /// Cumulative multiple over the first `prefix_len` steps.
    pub fn prefix_sum(&self, steps: &[Step], prefix_len: usize) -> u32 {
        steps[..prefix_len].iter().enumerate().map(|(h, &(s, a))| self.get(h, s, a)).sum()
    }
}

/// Rounds every reward entry to the nearest value in `{0, θ, …, ⌊1/θ⌋θ}`,
/// breaking ties toward the smaller value.
pub fn discretize_reward(reward: &RewardTable, grid: &RewardGrid) -> Result<GridReward> {
    if reward.horizon != grid.horizon {
        return Err(Error::GridMismatch(format!(
            "reward horizon {} vs grid horizon {}",
            reward.horizon, grid.horizon
        )));
    }
    let theta = grid.theta;
    let top = grid.max_step();
    let multiples = reward
        .values
        .iter()
        .map(|&r| {
            let below = (libm::floor(r / theta).max(0.0) as u32).min(top);
            if below == top {
                return top;
            }
            let lo = (r - below as f64 * theta).abs();
            let hi = ((below + 1) as f64 * theta - r).abs();
            if hi < lo {
                below + 1
            } else {
                below
            }
        })
        .collect();
    Ok(GridReward { grid: *grid, num_states: reward.num_states, num_actions: reward.num_actions, multiples })
}

/// The MDP over augmented states `(s, g)`, where `g` is the cumulative
/// discretized reward as a multiple of θ.
///
/// Playing `a` in `(s, g)` at stage `h` moves to `(s', g + k_h(s, a))` with
/// probability `p_h(s'|s, a)`.
#[derive(Debug, Clone)]
pub struct AugmentedMdp<'a> {
    base: &'a TabularMdp,
    reward: GridReward,
    reachable: Vec<Vec<(usize, u32)>>,
}

/// Builds the augmented MDP and its forward-reachable state sets.
pub fn build_augmented_mdp<'a>(mdp: &'a TabularMdp, reward: &GridReward) -> Result<AugmentedMdp<'a>> {
    if reward.num_states != mdp.num_states
        || reward.num_actions != mdp.num_actions
        || reward.grid.horizon != mdp.horizon
    {
        return Err(Error::GridMismatch("discretized reward does not match the MDP shape".into()));
    }
    let grid = reward.grid;
    let mut reachable = Vec::with_capacity(mdp.horizon);
    let mut current: BTreeSet<(usize, u32)> = BTreeSet::new();
    current.insert((mdp.initial_state, 0));
    for h in 0..mdp.horizon {
        let layer: Vec<(usize, u32)> = current.iter().copied().collect();
        let mut next = BTreeSet::new();
        for &(s, g) in &layer {
            for a in 0..mdp.num_actions {
                let g_next = g + reward.get(h, s, a);
                let max = grid.stage_max(h + 1);
                if g_next > max {
                    return Err(Error::GridOverflow { stage: h + 1, multiple: g_next, max });
                }
                if h + 1 < mdp.horizon {
                    for (s_next, &p) in mdp.transition(h, s, a).iter().enumerate() {
                        if p > 0.0 {
                            next.insert((s_next, g_next));
                        }
                    }
                }
            }
        }
        reachable.push(layer);
        current = next;
    }
    Ok(AugmentedMdp { base: mdp, reward: reward.clone(), reachable })
}

impl<'a> AugmentedMdp<'a> {
    pub fn base(&self) -> &'a TabularMdp {
        self.base
    }

    pub fn grid(&self) -> &RewardGrid {
        &self.reward.grid
    }

    pub fn reward(&self) -> &GridReward {
        &self.reward
    }

    /// `|S̄| = S·|Y^θ|`.
    pub fn num_states(&self) -> usize {
        self.base.num_states * self.reward.grid.len()
    }

    pub fn initial_state(&self) -> (usize, u32) {
        (self.base.initial_state, 0)
    }

    /// Augmented states reachable at stage `h` under some policy, sorted.
    pub fn reachable(&self, h: usize) -> &[(usize, u32)] {
        &self.reachable[h]
    }

    /// Successors of `(s, g)` under action `a` at stage `h` with their probabilities.
    pub fn successors(&self, h: usize, s: usize, g: u32, a: usize) -> impl Iterator<Item = ((usize, u32), f64)> + '_ {
        let g_next = g + self.reward.get(h, s, a);
        self.base
            .transition(h, s, a)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(s_next, &p)| ((s_next, g_next), p))
    }

    /// Cumulative multiple after the last action.
    pub fn final_multiple(&self, s: usize, g: u32, a: usize) -> u32 {
        g + self.reward.get(self.base.horizon - 1, s, a)
    }
}
