//! Markovian imitation baselines: behavior cloning and a known-transition
//! occupancy-matching LP in the style of MIMIC-MD.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpStatus};
use crate::mdp::{Dataset, TabularMdp};
use crate::policies::MarkovianPolicy;

/// `N_h(s, a)` visitation counts, flattened as `[h][s][a]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovCountTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    counts: Vec<u64>,
    total: u64,
}

impl MarkovCountTable {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self { num_states, num_actions, horizon, counts: vec![0; num_states * num_actions * horizon], total: 0 }
    }

    pub fn from_dataset(data: &Dataset, num_states: usize, num_actions: usize) -> Result<Self> {
        let horizon = data.horizon().ok_or(Error::EmptyDataset)?;
        let mut table = Self::new(num_states, num_actions, horizon);
        table.add_dataset(data)?;
        Ok(table)
    }

    pub fn add_dataset(&mut self, data: &Dataset) -> Result<()> {
        for traj in &data.trajectories {
            if traj.len() != self.horizon {
                return Err(Error::OutOfBounds(format!("trajectory length {} vs horizon {}", traj.len(), self.horizon)));
            }
            for (h, &(s, a)) in traj.steps.iter().enumerate() {
                if s >= self.num_states || a >= self.num_actions {
                    return Err(Error::OutOfBounds(format!("step {h} = ({s}, {a})")));
                }
                self.counts[(h * self.num_states + s) * self.num_actions + a] += 1;
            }
            self.total += 1;
        }
        Ok(())
    }

    pub fn num_trajectories(&self) -> u64 {
        self.total
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sa(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn row(&self, h: usize, s: usize) -> &[u64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.counts[start..start + self.num_actions]
    }

    /// `N_h(s) = Σ_a N_h(s, a)`.
    pub fn state(&self, h: usize, s: usize) -> u64 {
        self.row(h, s).iter().sum()
    }

    /// `N_h(s, a) / N` flattened as `[h][s][a]`.
    pub fn empirical_occupancy(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn to_policy(&self) -> MarkovianPolicy {
        let uniform = 1.0 / self.num_actions as f64;
        let probs = self
            .counts
            .chunks(self.num_actions)
            .flat_map(|row| {
                let n: u64 = row.iter().sum();
                row.iter().map(move |&c| if n == 0 { uniform } else { c as f64 / n as f64 })
            })
            .collect();
        MarkovianPolicy::new(self.num_states, self.num_actions, self.horizon, probs).expect("normalized rows")
    }
}

/// Behavior cloning: `π_h(a|s) = N_h(s, a) / N_h(s)`, uniform at unvisited `(h, s)`.
pub fn bc(data: &Dataset, num_states: usize, num_actions: usize) -> Result<MarkovianPolicy> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(MarkovCountTable::from_dataset(data, num_states, num_actions)?.to_policy())
}

/// Occupancy-matching LP with known transitions.
///
/// The program searches Markovian occupancy measures `d_h(s, a)` of `mdp`,
/// pins the action ratios to the empirical ones wherever the expert visited
/// `(h, s)`, and minimizes `Σ |d − d̂|` against the empirical occupancy `d̂`.
/// The policy is read off by row normalization; rows with no mass are uniform.
pub fn mimic_md(data: &Dataset, mdp: &TabularMdp) -> Result<MarkovianPolicy> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let counts = MarkovCountTable::from_dataset(data, ns, na)?;
    if counts.horizon() != nh {
        return Err(Error::OutOfBounds(format!("dataset horizon {} vs MDP horizon {nh}", counts.horizon())));
    }
    let lp = mimic_md_lp(mdp, &counts);
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
    }
    let cells = nh * ns * na;
    let mut probs = Vec::with_capacity(cells);
    for row in sol.x[..cells].chunks(na) {
        let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
        if total > 0.0 {
            probs.extend(row.iter().map(|v| v.max(0.0) / total));
        } else {
            probs.extend(core::iter::repeat_n(1.0 / na as f64, na));
        }
    }
    MarkovianPolicy::new(ns, na, nh, probs)
}

/// The MIMIC-MD program: columns `[0, HSA)` hold `d`, `[HSA, 2HSA)` hold the
/// absolute deviations from the empirical occupancy.
pub fn mimic_md_lp(mdp: &TabularMdp, counts: &MarkovCountTable) -> LinearProgram {
    let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let cells = nh * ns * na;
    let col = |h: usize, s: usize, a: usize| (h * ns + s) * na + a;
    let target = counts.empirical_occupancy();
    let mut lp = LinearProgram::new(2 * cells);

    for s in 0..ns {
        let rhs = if s == mdp.initial_state() { 1.0 } else { 0.0 };
        lp.add_eq((0..na).map(|a| (col(0, s, a), 1.0)).collect(), rhs);
    }
    for h in 1..nh {
        let mut rows: Vec<Vec<(usize, f64)>> =
            (0..ns).map(|s| (0..na).map(|a| (col(h, s, a), 1.0)).collect()).collect();
        for sp in 0..ns {
            for ap in 0..na {
                for (s, &p) in mdp.transition(h - 1, sp, ap).iter().enumerate() {
                    if p > 0.0 {
                        rows[s].push((col(h - 1, sp, ap), -p));
                    }
                }
            }
        }
        for terms in rows {
            lp.add_eq(terms, 0.0);
        }
    }
    for h in 0..nh {
        for s in 0..ns {
            let n = counts.state(h, s);
            if n == 0 {
                continue;
            }
            for a in 0..na {
                let ratio = counts.sa(h, s, a) as f64 / n as f64;
                let mut terms: Vec<(usize, f64)> = (0..na).map(|b| (col(h, s, b), -ratio)).collect();
                terms[a].1 += 1.0;
                lp.add_eq(terms, 0.0);
            }
        }
    }
    for (j, &tj) in target.iter().enumerate() {
        lp.add_ge(vec![(cells + j, 1.0), (j, -1.0)], -tj);
        lp.add_ge(vec![(cells + j, 1.0), (j, 1.0)], tj);
        lp.set_cost(cells + j, 1.0);
    }
    lp
}
