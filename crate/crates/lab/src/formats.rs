//! On-disk formats.
//!
//! **MDP documents** are JSON objects
//!
//! ```json
//! {"S": 2, "A": 1, "H": 1, "s0": 0,
//!  "transitions": [[[[0.5, 0.5]], [[1.0, 0.0]]]],
//!  "reward": [[[0.25], [1.0]]]}
//! ```
//!
//! with `transitions[h][s][a][s']` and `reward[h][s][a]`. Stages are listed in
//! order, so the first entry is the first stage. Numbers are written in
//! shortest round-trip form, so save/load is value-exact.
//!
//! **Policy files** are line-oriented text. `#` starts a comment line. Stages in
//! policy files are 1-based.
//!
//! ```text
//! kind reward-augmented
//! theta 0.5
//! shape 2 2 3          # S A H
//! reward 1 0 1 2       # stage state action multiple-of-theta
//! row 2 1 0 0.25 0.75  # stage state g-multiple action probabilities
//! ```
//!
//! A reward-augmented file lists one `reward` line per (stage, state, action).
//! `row` lines may be omitted, in which case the row is uniform. A Markovian
//! file has `kind markovian`, a `shape` line, and `row <stage> <state> <probs>`
//! lines, one per (stage, state).
//!
//! **Distribution dumps** are one `value probability` pair per line.

use std::path::Path;

use rdm_core::mdp::{discretize_reward, MdpParts};
use rdm_core::{DiscreteReturnDistribution, MarkovianPolicy, PolicyHandle, RewardAugmentedPolicy, RewardGrid, RewardTable, TabularMdp};
use serde::{Deserialize, Serialize};

use crate::error::{read, write, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub s0: usize,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
}

impl From<&TabularMdp> for MdpDocument {
    fn from(mdp: &TabularMdp) -> Self {
        let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let transitions = (0..nh)
            .map(|h| (0..ns).map(|s| (0..na).map(|a| mdp.transition(h, s, a).to_vec()).collect()).collect())
            .collect();
        let reward = (0..nh)
            .map(|h| (0..ns).map(|s| (0..na).map(|a| mdp.reward().get(h, s, a)).collect()).collect())
            .collect();
        Self { num_states: ns, num_actions: na, horizon: nh, s0: mdp.initial_state(), transitions, reward }
    }
}

impl MdpDocument {
    /// Flattens the nested arrays, checking every dimension.
    pub fn to_parts(&self) -> Result<MdpParts> {
        let (ns, na, nh) = (self.num_states, self.num_actions, self.horizon);
        let shape_err = |what: &str, at: String| LabError::Shape(format!("{what} {at} has the wrong length"));
        if self.transitions.len() != nh {
            return Err(shape_err("transitions", String::new()));
        }
        if self.reward.len() != nh {
            return Err(shape_err("reward", String::new()));
        }
        let mut transitions = Vec::with_capacity(nh * ns * na * ns);
        let mut reward = Vec::with_capacity(nh * ns * na);
        for h in 0..nh {
            if self.transitions[h].len() != ns {
                return Err(shape_err("transitions", format!("[{h}]")));
            }
            if self.reward[h].len() != ns {
                return Err(shape_err("reward", format!("[{h}]")));
            }
            for s in 0..ns {
                if self.transitions[h][s].len() != na {
                    return Err(shape_err("transitions", format!("[{h}][{s}]")));
                }
                if self.reward[h][s].len() != na {
                    return Err(shape_err("reward", format!("[{h}][{s}]")));
                }
                for a in 0..na {
                    let row = &self.transitions[h][s][a];
                    if row.len() != ns {
                        return Err(shape_err("transitions", format!("[{h}][{s}][{a}]")));
                    }
                    transitions.extend_from_slice(row);
                }
                reward.extend_from_slice(&self.reward[h][s]);
            }
        }
        Ok(MdpParts {
            num_states: ns,
            num_actions: na,
            horizon: nh,
            initial_state: self.s0,
            transitions,
            reward,
        })
    }
}

pub fn mdp_to_json(mdp: &TabularMdp) -> String {
    serde_json::to_string_pretty(&MdpDocument::from(mdp)).expect("plain numeric document")
}

pub fn mdp_from_json(text: &str) -> Result<TabularMdp> {
    let doc: MdpDocument = serde_json::from_str(text)?;
    Ok(TabularMdp::try_from(doc.to_parts()?)?)
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    mdp_from_json(&read(path)?)
}

pub fn save_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    write(path, &(mdp_to_json(mdp) + "\n"))
}

/// A policy read from a policy file.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyFile {
    Markovian(MarkovianPolicy),
    RewardAugmented(RewardAugmentedPolicy),
}

impl From<PolicyFile> for PolicyHandle {
    fn from(p: PolicyFile) -> Self {
        match p {
            PolicyFile::Markovian(p) => p.into(),
            PolicyFile::RewardAugmented(p) => p.into(),
        }
    }
}

fn join(row: &[f64]) -> String {
    row.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn reward_augmented_to_text(pol: &RewardAugmentedPolicy) -> String {
    let (ns, na, nh) = (pol.num_states(), pol.num_actions(), pol.horizon());
    let mut out = format!("kind reward-augmented\ntheta {}\nshape {ns} {na} {nh}\n", pol.grid().theta());
    for h in 0..nh {
        for s in 0..ns {
            for a in 0..na {
                out += &format!("reward {} {s} {a} {}\n", h + 1, pol.reward().get(h, s, a));
            }
        }
    }
    for (h, s, g, row) in pol.cells() {
        out += &format!("row {} {s} {g} {}\n", h + 1, join(row));
    }
    out
}

pub fn markovian_to_text(pol: &MarkovianPolicy) -> String {
    let (ns, na, nh) = (pol.num_states(), pol.num_actions(), pol.horizon());
    let mut out = format!("kind markovian\nshape {ns} {na} {nh}\n");
    for h in 0..nh {
        for s in 0..ns {
            out += &format!("row {} {s} {}\n", h + 1, join(pol.row(h, s)));
        }
    }
    out
}

struct Line<'a> {
    number: usize,
    key: &'a str,
    rest: Vec<&'a str>,
}

impl Line<'_> {
    fn err(&self, msg: impl Into<String>) -> LabError {
        LabError::Format { line: self.number, msg: msg.into() }
    }

    fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.rest
            .get(i)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(format!("`{}`: field {} missing or malformed", self.key, i + 1)))
    }

    fn floats(&self, from: usize) -> Result<Vec<f64>> {
        (from..self.rest.len()).map(|i| self.num(i)).collect()
    }

    fn stage(&self, horizon: usize) -> Result<usize> {
        let h: usize = self.num(0)?;
        if h == 0 || h > horizon {
            return Err(self.err(format!("stage {h} not in 1..={horizon}")));
        }
        Ok(h - 1)
    }
}

fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        let key = tokens.next()?;
        Some(Line { number: i + 1, key, rest: tokens.collect() })
    })
}

pub fn policy_from_text(text: &str) -> Result<PolicyFile> {
    let all: Vec<Line> = lines(text).collect();
    let find = |key: &str| all.iter().find(|l| l.key == key);
    let kind = find("kind").ok_or(LabError::Format { line: 0, msg: "missing `kind` line".into() })?;
    let shape = find("shape").ok_or(LabError::Format { line: 0, msg: "missing `shape` line".into() })?;
    let (ns, na, nh): (usize, usize, usize) = (shape.num(0)?, shape.num(1)?, shape.num(2)?);
    let kind_name = kind.rest.first().copied().unwrap_or("");
    match kind_name {
        "markovian" => {
            let mut probs = vec![f64::NAN; ns * na * nh];
            for line in all.iter().filter(|l| l.key == "row") {
                let h = line.stage(nh)?;
                let s: usize = line.num(1)?;
                let row = line.floats(2)?;
                if s >= ns || row.len() != na {
                    return Err(line.err("row has the wrong state or width"));
                }
                probs[(h * ns + s) * na..(h * ns + s + 1) * na].copy_from_slice(&row);
            }
            if probs.iter().any(|p| p.is_nan()) {
                return Err(LabError::Format { line: 0, msg: "missing rows in Markovian policy".into() });
            }
            Ok(PolicyFile::Markovian(MarkovianPolicy::new(ns, na, nh, probs)?))
        }
        "reward-augmented" => {
            let theta_line = find("theta").ok_or(LabError::Format { line: 0, msg: "missing `theta` line".into() })?;
            let grid = RewardGrid::new(theta_line.num(0)?, nh)?;
            let mut values = vec![f64::NAN; ns * na * nh];
            for line in all.iter().filter(|l| l.key == "reward") {
                let h = line.stage(nh)?;
                let (s, a, k): (usize, usize, u32) = (line.num(1)?, line.num(2)?, line.num(3)?);
                if s >= ns || a >= na || k > grid.max_step() {
                    return Err(line.err("reward cell out of range"));
                }
                values[(h * ns + s) * na + a] = grid.value(k);
            }
            if values.iter().any(|v| v.is_nan()) {
                return Err(LabError::Format { line: 0, msg: "missing reward lines".into() });
            }
            let reward = discretize_reward(&RewardTable::new(ns, na, nh, values)?, &grid)?;
            let mut pol = RewardAugmentedPolicy::uniform(reward);
            for line in all.iter().filter(|l| l.key == "row") {
                let h = line.stage(nh)?;
                let (s, g): (usize, u32) = (line.num(1)?, line.num(2)?);
                pol.set_row(h, s, g, &line.floats(3)?).map_err(|e| line.err(e.to_string()))?;
            }
            Ok(PolicyFile::RewardAugmented(pol))
        }
        other => Err(kind.err(format!("unknown policy kind `{other}`"))),
    }
}

pub fn load_policy(path: &Path) -> Result<PolicyFile> {
    policy_from_text(&read(path)?)
}

pub fn save_policy(pol: &PolicyFile, path: &Path) -> Result<()> {
    let text = match pol {
        PolicyFile::Markovian(p) => markovian_to_text(p),
        PolicyFile::RewardAugmented(p) => reward_augmented_to_text(p),
    };
    write(path, &text)
}

pub fn save_distribution(dist: &DiscreteReturnDistribution, path: &Path) -> Result<()> {
    write(path, &rdm_core::distributions::to_text(dist))
}

pub fn load_distribution(path: &Path) -> Result<DiscreteReturnDistribution> {
    Ok(read(path)?.parse()?)
}
