//! Finite-support return distributions and the metrics between them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::{discretize_reward, return_of_trajectory, Dataset, RewardGrid, RewardTable};

/// Atoms closer than this are merged into one.
pub const MERGE_TOL: f64 = 1e-12;

/// Accepted deviation of the raw mass from one before renormalizing.
const MASS_TOL: f64 = 1e-9;

/// A probability distribution on finitely many real return values.
///
/// Support values are strictly increasing, probabilities are positive and
/// sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteReturnDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteReturnDistribution {
    /// Builds a distribution from unsorted `(value, probability)` atoms.
    ///
    /// Values within `MERGE_TOL` of each other are merged, zero-probability
    /// atoms are dropped and the mass is renormalized if it is within 1e-9 of one.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(x, p) in &atoms {
            if !x.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!("bad atom ({x}, {p})")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut probs: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            if p == 0.0 {
                continue;
            }
            match support.last() {
                Some(&last) if x - last <= MERGE_TOL => *probs.last_mut().unwrap() += p,
                _ => {
                    support.push(x);
                    probs.push(p);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if support.is_empty() || (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("total mass {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { support, probs })
    }

    pub fn point_mass(value: f64) -> Self {
        Self { support: alloc::vec![value], probs: alloc::vec![1.0] }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability of the atom at `x` (0 if absent).
    pub fn prob_at(&self, x: f64) -> f64 {
        self.atoms().find(|(v, _)| (v - x).abs() <= MERGE_TOL).map_or(0.0, |(_, p)| p)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms().take_while(|(v, _)| *v <= x).map(|(_, p)| p).sum()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().unwrap()
    }
}

/// Renders one `value probability` pair per line.
impl fmt::Display for DiscreteReturnDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (x, p) in self.atoms() {
            writeln!(f, "{x} {p}")?;
        }
        Ok(())
    }
}

impl FromStr for DiscreteReturnDistribution {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64> {
                tok.and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::InvalidDistribution(format!("line {}: `{line}`", i + 1)))
            };
            let x = parse(parts.next())?;
            let p = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::InvalidDistribution(format!("line {}: trailing tokens", i + 1)));
            }
            atoms.push((x, p));
        }
        Self::from_atoms(atoms)
    }
}

/// Empirical distribution of the dataset's returns, optionally under the
/// reward discretized on `grid`. Only observed values are in the support.
pub fn empirical_return_distribution(
    data: &Dataset,
    reward: &RewardTable,
    grid: Option<&RewardGrid>,
) -> Result<DiscreteReturnDistribution> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len() as f64;
    match grid {
        Some(grid) => {
            let hist = empirical_grid_histogram(data, reward, grid)?;
            DiscreteReturnDistribution::from_atoms(
                hist.iter().enumerate().map(|(k, &p)| (grid.value(k as u32), p)),
            )
        }
        None => {
            let mut atoms = Vec::with_capacity(data.len());
            for traj in &data.trajectories {
                atoms.push((return_of_trajectory(traj, reward, traj.len())?, 1.0 / n));
            }
            DiscreteReturnDistribution::from_atoms(atoms)
        }
    }
}

/// `η̂(g)` for every multiple `g` of the full grid, from integer sums of the
/// discretized reward.
pub fn empirical_grid_histogram(data: &Dataset, reward: &RewardTable, grid: &RewardGrid) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let disc = discretize_reward(reward, grid)?;
    let mut hist = alloc::vec![0.0; grid.len()];
    let weight = 1.0 / data.len() as f64;
    for traj in &data.trajectories {
        if traj.len() != grid.horizon() {
            return Err(Error::OutOfBounds(format!("trajectory length {} vs horizon {}", traj.len(), grid.horizon())));
        }
        for &(s, a) in &traj.steps {
            if s >= disc.num_states() || a >= disc.num_actions() {
                return Err(Error::OutOfBounds(format!("step ({s}, {a})")));
            }
        }
        let g = disc.prefix_sum(&traj.steps, traj.len()) as usize;
        hist[g] += weight;
    }
    Ok(hist)
}

/// Merges the supports of `p` and `q` and calls `f(x, p(x), q(x))` in increasing `x`.
fn sweep(p: &DiscreteReturnDistribution, q: &DiscreteReturnDistribution, mut f: impl FnMut(f64, f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < p.support.len() || j < q.support.len() {
        let xp = p.support.get(i).copied().unwrap_or(f64::INFINITY);
        let xq = q.support.get(j).copied().unwrap_or(f64::INFINITY);
        if (xp - xq).abs() <= MERGE_TOL {
            f(xp.min(xq), p.probs[i], q.probs[j]);
            i += 1;
            j += 1;
        } else if xp < xq {
            f(xp, p.probs[i], 0.0);
            i += 1;
        } else {
            f(xq, 0.0, q.probs[j]);
            j += 1;
        }
    }
}

/// 1-Wasserstein distance `∫|F_p − F_q|`, computed by one sweep over the merged support.
pub fn wasserstein(p: &DiscreteReturnDistribution, q: &DiscreteReturnDistribution) -> f64 {
    let mut total = 0.0;
    let mut gap_cdf: f64 = 0.0;
    let mut prev: Option<f64> = None;
    sweep(p, q, |x, px, qx| {
        if let Some(prev) = prev {
            total += gap_cdf.abs() * (x - prev);
        }
        gap_cdf += px - qx;
        prev = Some(x);
    });
    total
}

pub fn total_variation(p: &DiscreteReturnDistribution, q: &DiscreteReturnDistribution) -> f64 {
    let mut total = 0.0;
    sweep(p, q, |_, px, qx| total += (px - qx).abs());
    (0.5 * total).min(1.0)
}

/// `CVaR_α(p) = (1/α) ∫_0^α F⁻¹(u) du`, the mean of the lower α-tail.
pub fn cvar(p: &DiscreteReturnDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("CVaR level {alpha} not in (0, 1)")));
    }
    let mut remaining = alpha;
    let mut integral = 0.0;
    for (x, prob) in p.atoms() {
        let take = prob.min(remaining);
        integral += take * x;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    Ok(integral / alpha)
}

pub fn mean(p: &DiscreteReturnDistribution) -> f64 {
    p.atoms().map(|(x, w)| x * w).sum()
}

pub fn variance(p: &DiscreteReturnDistribution) -> f64 {
    let m = mean(p);
    p.atoms().map(|(x, w)| w * (x - m) * (x - m)).sum::<f64>().max(0.0)
}

/// Uniform CDF deviation `√(ln(2/δ)/(2N))` that holds with probability `1 − δ`.
pub fn dkw_band(n: usize, delta: f64) -> Result<f64> {
    if n == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("dkw_band needs N ≥ 1 and δ in (0,1), got {n}, {delta}")));
    }
    Ok(libm::sqrt(libm::log(2.0 / delta) / (2.0 * n as f64)))
}

/// Text dump of a distribution (one `value probability` line per atom).
pub fn to_text(p: &DiscreteReturnDistribution) -> String {
    format!("{p}")
}
