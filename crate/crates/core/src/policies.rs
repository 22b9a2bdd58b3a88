//! Policy classes, trajectory sampling, and exact or sampled evaluation of
//! return distributions.
//!
//! Every policy answers the same question through [`PolicyHandle::act_into`]:
//! given the current state and the history of earlier (state, action) pairs,
//! what is the action distribution? Markovian and reward-augmented policies
//! only look at a summary of the history, which is what makes them
//! evaluable by forward dynamic programming.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::distributions::{empirical_return_distribution, DiscreteReturnDistribution};
use crate::error::{Error, Result};
use crate::mdp::{Dataset, GridReward, RewardGrid, RewardTable, Step, TabularMdp, Trajectory, PROB_TOL};

/// Largest `(S·A)^H` for which trajectory enumeration is attempted.
pub const ENUMERATION_CAP: u64 = 1 << 20;

/// Width of the history embedding used by [`ParametricHistoryPolicy`].
pub const FEATURE_DIM: usize = 16;

fn check_row(row: &[f64]) -> bool {
    row.iter().all(|p| p.is_finite() && *p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL
}

/// Draws a point uniformly from the probability simplex of dimension `n`.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Index `i` such that the cumulative weight first exceeds `u`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// `π_h(a|s)`, flattened as `[h][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovianPolicy {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl MarkovianPolicy {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions * horizon {
            return Err(Error::InvalidArgument(format!("policy table has {} entries", probs.len())));
        }
        if let Some(bad) = probs.chunks(num_actions).position(|row| !check_row(row)) {
            return Err(Error::InvalidArgument(format!(
                "policy row (h={}, s={}) is not a distribution",
                bad / num_states,
                bad % num_states
            )));
        }
        Ok(Self { num_states, num_actions, horizon, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { num_states, num_actions, horizon, probs: vec![p; num_states * num_actions * horizon] }
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(num_states * num_actions * horizon);
        for h in 0..horizon {
            for s in 0..num_states {
                probs.extend(f(h, s));
            }
        }
        Self::new(num_states, num_actions, horizon, probs)
    }

    /// Rows drawn independently and uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, horizon: usize, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(num_states * num_actions * horizon);
        for _ in 0..num_states * horizon {
            probs.extend(sample_simplex(rng, num_actions));
        }
        Self { num_states, num_actions, horizon, probs }
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
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
}

/// `φ_h(a|s, g)`: a policy that sees the stage, the state and the cumulative
/// discretized reward `g` (a multiple of θ, `g ≤ ⌊h/θ⌋` at 0-based stage `h`).
///
/// The discretized reward it accumulates is stored with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardAugmentedPolicy {
    reward: GridReward,
    offsets: Vec<usize>,
    probs: Vec<f64>,
}

impl RewardAugmentedPolicy {
    fn layout(reward: &GridReward) -> (Vec<usize>, usize) {
        let cell = reward.num_states() * reward.num_actions();
        let mut offsets = Vec::with_capacity(reward.horizon());
        let mut total = 0;
        for h in 0..reward.horizon() {
            offsets.push(total);
            total += reward.grid().stage_len(h) * cell;
        }
        (offsets, total)
    }

    pub fn uniform(reward: GridReward) -> Self {
        let (offsets, total) = Self::layout(&reward);
        let p = 1.0 / reward.num_actions() as f64;
        Self { reward, offsets, probs: vec![p; total] }
    }

    /// Normalizes per-cell weights into rows; rows with zero total become uniform.
    pub(crate) fn from_weights(reward: GridReward, mut weights: Vec<f64>) -> Self {
        let (offsets, total) = Self::layout(&reward);
        debug_assert_eq!(weights.len(), total);
        let na = reward.num_actions();
        for row in weights.chunks_mut(na) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|w| *w /= sum);
            } else {
                row.iter_mut().for_each(|w| *w = 1.0 / na as f64);
            }
        }
        Self { reward, offsets, probs: weights }
    }

    pub(crate) fn zero_weights(reward: &GridReward) -> Vec<f64> {
        vec![0.0; Self::layout(reward).1]
    }

    /// Rows drawn independently and uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(reward: GridReward, rng: &mut R) -> Self {
        let (offsets, total) = Self::layout(&reward);
        let na = reward.num_actions();
        let mut probs = Vec::with_capacity(total);
        for _ in 0..total / na {
            probs.extend(sample_simplex(rng, na));
        }
        Self { reward, offsets, probs }
    }

    pub fn reward(&self) -> &GridReward {
        &self.reward
    }

    pub fn grid(&self) -> &RewardGrid {
        self.reward.grid()
    }

    pub fn num_states(&self) -> usize {
        self.reward.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.reward.num_actions()
    }

    pub fn horizon(&self) -> usize {
        self.reward.horizon()
    }

    #[inline]
    pub(crate) fn index(&self, h: usize, s: usize, g: u32) -> usize {
        self.offsets[h] + (g as usize * self.num_states() + s) * self.num_actions()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    /// Action distribution at `(h, s, g)`; panics if `g` is outside the stage grid.
    #[inline]
    pub fn row(&self, h: usize, s: usize, g: u32) -> &[f64] {
        assert!(g <= self.grid().stage_max(h), "cumulative multiple {g} outside stage {h} grid");
        let i = self.index(h, s, g);
        &self.probs[i..i + self.num_actions()]
    }

    pub fn set_row(&mut self, h: usize, s: usize, g: u32, row: &[f64]) -> Result<()> {
        if h >= self.horizon() || s >= self.num_states() || g > self.grid().stage_max(h) {
            return Err(Error::OutOfBounds(format!("cell (h={h}, s={s}, g={g})")));
        }
        if row.len() != self.num_actions() || !check_row(row) {
            return Err(Error::InvalidArgument(format!("row for (h={h}, s={s}, g={g}) is not a distribution")));
        }
        let i = self.index(h, s, g);
        self.probs[i..i + row.len()].copy_from_slice(row);
        Ok(())
    }

    /// All `(h, s, g, row)` cells in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u32, &[f64])> + '_ {
        let ns = self.num_states();
        (0..self.horizon()).flat_map(move |h| {
            (0..self.grid().stage_len(h) as u32)
                .flat_map(move |g| (0..ns).map(move |s| (h, s, g, self.row(h, s, g))))
        })
    }
}

/// A history-dependent expert: the `(2H, 16)` projection embeds the
/// zero-padded integer encoding `(s_1, a_1, s_2, a_2, …)` of the history, and
/// the current state's `(16, A)` weight matrix maps the embedding to logits,
/// normalized by a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricHistoryPolicy {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    projection: Vec<f64>,
    weights: Vec<f64>,
}

impl ParametricHistoryPolicy {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        projection: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if projection.len() != 2 * horizon * FEATURE_DIM || weights.len() != num_states * FEATURE_DIM * num_actions {
            return Err(Error::InvalidArgument("parametric policy matrices have wrong shapes".into()));
        }
        if projection.iter().chain(&weights).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("parametric policy matrices contain non-finite values".into()));
        }
        Ok(Self { num_states, num_actions, horizon, projection, weights })
    }

    /// Projection and weights drawn i.i.d. from the standard normal law.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, horizon: usize, rng: &mut R) -> Self {
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let projection = (0..2 * horizon * FEATURE_DIM).map(|_| normal()).collect();
        let weights = (0..num_states * FEATURE_DIM * num_actions).map(|_| normal()).collect();
        Self { num_states, num_actions, horizon, projection, weights }
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

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Interleaved integer encoding of the history, zero-padded to `2H`.
    pub fn encode_history(&self, history: &[Step]) -> Vec<f64> {
        let mut code = vec![0.0; 2 * self.horizon];
        for (i, &(s, a)) in history.iter().enumerate() {
            code[2 * i] = s as f64;
            code[2 * i + 1] = a as f64;
        }
        code
    }

    /// Action distribution in state `s` after `history` (of length `h`).
    pub fn act_parametric(&self, history: &[Step], s: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_actions);
        self.act_into(history, s, &mut out);
        out
    }

    fn act_into(&self, history: &[Step], s: usize, out: &mut Vec<f64>) {
        let mut features = [0.0; FEATURE_DIM];
        for (i, &(hs, ha)) in history.iter().enumerate() {
            for (k, &code) in [hs as f64, ha as f64].iter().enumerate() {
                if code != 0.0 {
                    let row = &self.projection[(2 * i + k) * FEATURE_DIM..(2 * i + k + 1) * FEATURE_DIM];
                    features.iter_mut().zip(row).for_each(|(f, w)| *f += code * w);
                }
            }
        }
        let w = &self.weights[s * FEATURE_DIM * self.num_actions..(s + 1) * FEATURE_DIM * self.num_actions];
        out.clear();
        out.extend((0..self.num_actions).map(|a| {
            features.iter().enumerate().map(|(k, f)| f * w[k * self.num_actions + a]).sum::<f64>()
        }));
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.iter_mut().for_each(|x| *x = libm::exp(*x - max));
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|x| *x /= total);
    }
}

/// Signature of an arbitrary history-dependent policy: `(state, history) → action distribution`.
pub type HistoryFn = dyn Fn(usize, &[Step]) -> Vec<f64> + Send + Sync;

/// A policy given directly as a function of the full history.
#[derive(Clone)]
pub struct HistoryPolicy {
    name: String,
    num_actions: usize,
    f: Arc<HistoryFn>,
}

impl HistoryPolicy {
    pub fn new(name: impl Into<String>, num_actions: usize, f: Arc<HistoryFn>) -> Self {
        Self { name: name.into(), num_actions, f }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for HistoryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoryPolicy").field("name", &self.name).field("num_actions", &self.num_actions).finish()
    }
}

/// Any policy of the crate behind one interface.
#[derive(Debug, Clone)]
pub enum PolicyHandle {
    Markovian(MarkovianPolicy),
    RewardAugmented(RewardAugmentedPolicy),
    Parametric(ParametricHistoryPolicy),
    History(HistoryPolicy),
}

impl PolicyHandle {
    pub fn tag(&self) -> &'static str {
        match self {
            PolicyHandle::Markovian(_) => "markovian",
            PolicyHandle::RewardAugmented(_) => "reward-augmented",
            PolicyHandle::Parametric(_) => "parametric-history",
            PolicyHandle::History(_) => "history",
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            PolicyHandle::Markovian(p) => p.num_actions,
            PolicyHandle::RewardAugmented(p) => p.num_actions(),
            PolicyHandle::Parametric(p) => p.num_actions,
            PolicyHandle::History(p) => p.num_actions,
        }
    }

    /// Writes the action distribution at state `s` after `history` into `out`.
    /// The stage is `history.len()`.
    pub fn act_into(&self, s: usize, history: &[Step], out: &mut Vec<f64>) {
        let h = history.len();
        match self {
            PolicyHandle::Markovian(p) => {
                out.clear();
                out.extend_from_slice(p.row(h, s));
            }
            PolicyHandle::RewardAugmented(p) => {
                let g = p.reward.prefix_sum(history, h);
                out.clear();
                out.extend_from_slice(p.row(h, s, g));
            }
            PolicyHandle::Parametric(p) => p.act_into(history, s, out),
            PolicyHandle::History(p) => {
                out.clear();
                out.extend((p.f)(s, history));
            }
        }
    }

    pub fn act(&self, s: usize, history: &[Step]) -> Vec<f64> {
        let mut out = Vec::new();
        self.act_into(s, history, &mut out);
        out
    }
}

impl From<MarkovianPolicy> for PolicyHandle {
    fn from(p: MarkovianPolicy) -> Self {
        PolicyHandle::Markovian(p)
    }
}

impl From<RewardAugmentedPolicy> for PolicyHandle {
    fn from(p: RewardAugmentedPolicy) -> Self {
        PolicyHandle::RewardAugmented(p)
    }
}

impl From<ParametricHistoryPolicy> for PolicyHandle {
    fn from(p: ParametricHistoryPolicy) -> Self {
        PolicyHandle::Parametric(p)
    }
}

impl From<HistoryPolicy> for PolicyHandle {
    fn from(p: HistoryPolicy) -> Self {
        PolicyHandle::History(p)
    }
}

/// `n` i.i.d. trajectories of `pol` in `mdp`, reproducible from `seed`.
pub fn sample_trajectories(mdp: &TabularMdp, pol: &PolicyHandle, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(mdp.num_actions());
    for _ in 0..n {
        let mut steps: Vec<Step> = Vec::with_capacity(mdp.horizon());
        let mut s = mdp.initial_state();
        for h in 0..mdp.horizon() {
            pol.act_into(s, &steps, &mut probs);
            let a = sample_index(&probs, rng.random::<f64>());
            steps.push((s, a));
            if h + 1 < mdp.horizon() {
                s = sample_index(mdp.transition(h, s, a), rng.random::<f64>());
            }
        }
        trajectories.push(Trajectory::new(steps));
    }
    Dataset::new(trajectories, seed, pol.tag())
}

/// `(S·A)^H`, saturating.
pub fn enumeration_size(mdp: &TabularMdp) -> u64 {
    let base = (mdp.num_states() * mdp.num_actions()) as u64;
    (0..mdp.horizon()).fold(1u64, |acc, _| acc.saturating_mul(base))
}

fn check_enumeration_cap(mdp: &TabularMdp) -> Result<()> {
    let count = enumeration_size(mdp);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { count, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// Depth-first walk over every positive-probability prefix. `visit` sees each
/// prefix ending in an action together with its probability.
fn walk(
    mdp: &TabularMdp,
    pol: &PolicyHandle,
    s: usize,
    history: &mut Vec<Step>,
    prob: f64,
    visit: &mut dyn FnMut(&[Step], f64),
) {
    let h = history.len();
    let mut probs = Vec::with_capacity(mdp.num_actions());
    pol.act_into(s, history, &mut probs);
    for (a, &pa) in probs.iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        history.push((s, a));
        let pr = prob * pa;
        visit(history, pr);
        if h + 1 < mdp.horizon() {
            for (s_next, &p) in mdp.transition(h, s, a).iter().enumerate() {
                if p > 0.0 {
                    walk(mdp, pol, s_next, history, pr * p, visit);
                }
            }
        }
        history.pop();
    }
}

/// Every positive-probability trajectory with its probability under `P^π`.
pub fn enumerate_trajectories(mdp: &TabularMdp, pol: &PolicyHandle) -> Result<Vec<(Trajectory, f64)>> {
    check_enumeration_cap(mdp)?;
    let mut out = Vec::new();
    let mut history = Vec::with_capacity(mdp.horizon());
    walk(mdp, pol, mdp.initial_state(), &mut history, 1.0, &mut |prefix, p| {
        if prefix.len() == mdp.horizon() {
            out.push((Trajectory::new(prefix.to_vec()), p));
        }
    });
    Ok(out)
}

/// Return distribution by full trajectory enumeration; works for any policy kind.
pub fn enumerated_return_distribution(
    mdp: &TabularMdp,
    pol: &PolicyHandle,
    reward: &RewardTable,
) -> Result<DiscreteReturnDistribution> {
    mdp.check_reward_shape(reward)?;
    let trajectories = enumerate_trajectories(mdp, pol)?;
    DiscreteReturnDistribution::from_atoms(trajectories.iter().map(|(t, p)| {
        (t.steps.iter().enumerate().map(|(h, &(s, a))| reward.get(h, s, a)).sum::<f64>(), *p)
    }))
}

/// The policy `π_r` that, at `(h, s, g)`, plays each action with the
/// expert's probability conditioned on reaching `s` at stage `h` with
/// cumulative discretized reward `g`. Cells the expert never reaches are uniform.
///
/// Computed exactly by enumerating the expert's trajectory tree.
pub fn construct_pi_r(mdp: &TabularMdp, expert: &PolicyHandle, reward: &GridReward) -> Result<RewardAugmentedPolicy> {
    check_enumeration_cap(mdp)?;
    check_grid_reward(mdp, reward)?;
    let template = RewardAugmentedPolicy::uniform(reward.clone());
    let mut weights = RewardAugmentedPolicy::zero_weights(reward);
    let mut history = Vec::with_capacity(mdp.horizon());
    walk(mdp, expert, mdp.initial_state(), &mut history, 1.0, &mut |prefix, p| {
        let h = prefix.len() - 1;
        let (s, a) = prefix[h];
        let g = reward.prefix_sum(prefix, h);
        weights[template.index(h, s, g) + a] += p;
    });
    Ok(RewardAugmentedPolicy::from_weights(reward.clone(), weights))
}

fn check_grid_reward(mdp: &TabularMdp, reward: &GridReward) -> Result<()> {
    if reward.num_states() != mdp.num_states()
        || reward.num_actions() != mdp.num_actions()
        || reward.horizon() != mdp.horizon()
    {
        return Err(Error::GridMismatch("discretized reward does not match the MDP shape".into()));
    }
    Ok(())
}

/// The two policy kinds whose action choice depends on `(h, s, g)` only.
enum DpView<'a> {
    Markov(&'a MarkovianPolicy),
    Augmented(&'a RewardAugmentedPolicy),
}

impl<'a> DpView<'a> {
    fn new(mdp: &TabularMdp, pol: &'a PolicyHandle) -> Result<Self> {
        let view = match pol {
            PolicyHandle::Markovian(p) => DpView::Markov(p),
            PolicyHandle::RewardAugmented(p) => {
                check_grid_reward(mdp, &p.reward)?;
                DpView::Augmented(p)
            }
            other => return Err(Error::NotDpCompatible(other.tag())),
        };
        let (ns, na, nh) = match &view {
            DpView::Markov(p) => (p.num_states, p.num_actions, p.horizon),
            DpView::Augmented(p) => (p.num_states(), p.num_actions(), p.horizon()),
        };
        if (ns, na, nh) != (mdp.num_states(), mdp.num_actions(), mdp.horizon()) {
            return Err(Error::InvalidArgument("policy shape does not match the MDP".into()));
        }
        Ok(view)
    }

    #[inline]
    fn row(&self, h: usize, s: usize, g: u32) -> &'a [f64] {
        match self {
            DpView::Markov(p) => p.row(h, s),
            DpView::Augmented(p) => p.row(h, s, g),
        }
    }

    #[inline]
    fn increment(&self, h: usize, s: usize, a: usize) -> u32 {
        match self {
            DpView::Markov(_) => 0,
            DpView::Augmented(p) => p.reward.get(h, s, a),
        }
    }
}

/// Exact return distribution under `reward` of a Markovian or
/// reward-augmented policy.
///
/// Forward DP over `(s, g, return)`: `g` is whatever the policy conditions
/// on, while the return is accumulated with `reward`, which need not be the
/// policy's own discretized reward.
pub fn exact_return_distribution(
    mdp: &TabularMdp,
    pol: &PolicyHandle,
    reward: &RewardTable,
) -> Result<DiscreteReturnDistribution> {
    mdp.check_reward_shape(reward)?;
    let view = DpView::new(mdp, pol)?;
    let horizon = mdp.horizon();
    let mut layer: BTreeMap<(usize, u32, u64), f64> = BTreeMap::new();
    layer.insert((mdp.initial_state(), 0, 0f64.to_bits()), 1.0);
    let mut atoms = Vec::new();
    for h in 0..horizon {
        let mut next = BTreeMap::new();
        for (&(s, g, ret_bits), &mass) in &layer {
            let ret = f64::from_bits(ret_bits);
            for (a, &pa) in view.row(h, s, g).iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                let m = mass * pa;
                let ret_next = ret + reward.get(h, s, a);
                if h + 1 == horizon {
                    atoms.push((ret_next, m));
                    continue;
                }
                let g_next = g + view.increment(h, s, a);
                for (s_next, &p) in mdp.transition(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        *next.entry((s_next, g_next, ret_next.to_bits())).or_insert(0.0) += m * p;
                    }
                }
            }
        }
        layer = next;
    }
    DiscreteReturnDistribution::from_atoms(atoms)
}

/// `d_h(s, g, a)` over the reachable augmented states, one map per stage.
/// Markovian policies are treated as reward-augmented ones with `g ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedOccupancy {
    num_actions: usize,
    stages: Vec<BTreeMap<(usize, u32), Vec<f64>>>,
}

impl AugmentedOccupancy {
    pub(crate) fn from_stages(num_actions: usize, stages: Vec<BTreeMap<(usize, u32), Vec<f64>>>) -> Self {
        Self { num_actions, stages }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// The action vector `d_h(s, g, ·)`, if `(s, g)` carries an entry at stage `h`.
    pub fn get(&self, h: usize, s: usize, g: u32) -> Option<&[f64]> {
        self.stages[h].get(&(s, g)).map(Vec::as_slice)
    }

    pub fn stage(&self, h: usize) -> impl Iterator<Item = ((usize, u32), &[f64])> + '_ {
        self.stages[h].iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn stage_mass(&self, h: usize) -> f64 {
        self.stages[h].values().flatten().sum()
    }

    /// `Σ_g Σ_a d_h(s, g, a)` for each state.
    pub fn state_marginal(&self, h: usize, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        for (&(s, _), d) in &self.stages[h] {
            out[s] += d.iter().sum::<f64>();
        }
        out
    }

    /// Distribution of the final cumulative multiple, mapped to `kθ`.
    pub fn return_distribution(&self, reward: &GridReward) -> Result<DiscreteReturnDistribution> {
        let last = self.stages.len() - 1;
        let mut mass: BTreeMap<u32, f64> = BTreeMap::new();
        for (&(s, g), d) in &self.stages[last] {
            for (a, &x) in d.iter().enumerate() {
                *mass.entry(g + reward.get(last, s, a)).or_insert(0.0) += x;
            }
        }
        DiscreteReturnDistribution::from_atoms(mass.into_iter().map(|(k, p)| (reward.grid().value(k), p)))
    }
}

/// Occupancy measure of a DP-compatible policy in the reward-augmented MDP.
pub fn augmented_occupancy(mdp: &TabularMdp, pol: &PolicyHandle) -> Result<AugmentedOccupancy> {
    let view = DpView::new(mdp, pol)?;
    let na = mdp.num_actions();
    let mut stages = Vec::with_capacity(mdp.horizon());
    let mut states: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    states.insert((mdp.initial_state(), 0), 1.0);
    for h in 0..mdp.horizon() {
        let mut stage = BTreeMap::new();
        let mut next: BTreeMap<(usize, u32), f64> = BTreeMap::new();
        for (&(s, g), &mass) in &states {
            let row = view.row(h, s, g);
            let d: Vec<f64> = row.iter().map(|p| mass * p).collect();
            if h + 1 < mdp.horizon() {
                for (a, &da) in d.iter().enumerate() {
                    if da <= 0.0 {
                        continue;
                    }
                    let g_next = g + view.increment(h, s, a);
                    for (s_next, &p) in mdp.transition(h, s, a).iter().enumerate() {
                        if p > 0.0 {
                            *next.entry((s_next, g_next)).or_insert(0.0) += da * p;
                        }
                    }
                }
            }
            stage.insert((s, g), d);
        }
        stages.push(stage);
        states = next;
    }
    Ok(AugmentedOccupancy { num_actions: na, stages })
}

/// `d_h(s, a)` of a Markovian policy, flattened as `[h][s][a]`.
pub fn markov_occupancy(mdp: &TabularMdp, pol: &MarkovianPolicy) -> Vec<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut d = vec![0.0; mdp.horizon() * ns * na];
    let mut state_mass = vec![0.0; ns];
    state_mass[mdp.initial_state()] = 1.0;
    for h in 0..mdp.horizon() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if state_mass[s] == 0.0 {
                continue;
            }
            for (a, &pa) in pol.row(h, s).iter().enumerate() {
                let da = state_mass[s] * pa;
                d[(h * ns + s) * na + a] = da;
                if h + 1 < mdp.horizon() && da > 0.0 {
                    for (s_next, &p) in mdp.transition(h, s, a).iter().enumerate() {
                        next[s_next] += da * p;
                    }
                }
            }
        }
        state_mass = next;
    }
    d
}

/// Empirical return distribution of `m` sampled trajectories.
pub fn mc_return_distribution(
    mdp: &TabularMdp,
    pol: &PolicyHandle,
    reward: &RewardTable,
    m: usize,
    seed: u64,
) -> Result<DiscreteReturnDistribution> {
    let data = sample_trajectories(mdp, pol, m, seed)?;
    empirical_return_distribution(&data, reward, None)
}
