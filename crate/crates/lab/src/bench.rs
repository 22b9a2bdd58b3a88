//! Experiment harness: random instances, dataset sweeps, the algorithm
//! comparison, aggregation and result files.
//!
//! Every random draw is seeded from the configuration's master seed through
//! [`derive_seed`], keyed by what the draw is for (instance, dataset, Monte
//! Carlo ground truth) and its indices. Tasks therefore do not share a random
//! stream and parallel runs reproduce serial ones bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rdm_core::baselines::{bc, mimic_md};
use rdm_core::distributions::{empirical_return_distribution, total_variation, wasserstein};
use rdm_core::fixtures::{make_prop2_fixture, make_tv_hard_reward, prop2_markov_policy};
use rdm_core::policies::{
    enumerate_trajectories, enumerated_return_distribution, enumeration_size, exact_return_distribution,
    mc_return_distribution, sample_simplex, sample_trajectories, ENUMERATION_CAP,
};
use rdm_core::rsbc::rs_bc;
use rdm_core::rskt::rs_kt;
use rdm_core::{
    DiscreteReturnDistribution, MarkovianPolicy, ParametricHistoryPolicy, PolicyHandle, RewardGrid, TabularMdp,
};
use serde::{Deserialize, Serialize};

use crate::error::{write, LabError, Result};
use crate::formats::save_distribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    RsBc,
    RsKt,
    Bc,
    MimicMd,
    /// Not a policy: the empirical grid histogram `η̂` itself, compared to the expert.
    EtaHat,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::RsBc, Algorithm::RsKt, Algorithm::Bc, Algorithm::MimicMd, Algorithm::EtaHat];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::RsBc => "rs-bc",
            Algorithm::RsKt => "rs-kt",
            Algorithm::Bc => "bc",
            Algorithm::MimicMd => "mimic-md",
            Algorithm::EtaHat => "eta-hat",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| LabError::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertKind {
    Markovian,
    ParametricHistory,
}

/// How the expert's return distribution is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Exact DP if the expert allows it, else enumeration under the cap, else Monte Carlo.
    #[default]
    Auto,
    ExactDp,
    Enumeration,
    MonteCarlo,
}

fn default_instances() -> usize {
    50
}

fn default_seeds() -> usize {
    3
}

fn default_mc_samples() -> usize {
    200_000
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::RsBc, Algorithm::RsKt, Algorithm::Bc, Algorithm::MimicMd]
}

/// An experiment, usually read from a TOML file:
///
/// ```toml
/// states = 2
/// actions = 2
/// horizon = 5
/// theta = 0.05
/// rho = 0.03
/// expert = "parametric-history"   # or "markovian"
/// n_sweep = [20, 80, 300, 1000, 10000]
/// instances = 50
/// seeds = 3
/// evaluation = "auto"             # "exact-dp", "enumeration", "monte-carlo"
/// mc_samples = 200000
/// algorithms = ["rs-bc", "rs-kt", "bc", "mimic-md"]   # also "eta-hat"
/// master_seed = 0
/// output = "results/q1"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub theta: f64,
    pub rho: f64,
    pub expert: ExpertKind,
    pub n_sweep: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::error::read(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.states == 0 || self.actions == 0 || self.horizon == 0 {
            return bad("states, actions and horizon must be positive".into());
        }
        for (name, v) in [("theta", self.theta), ("rho", self.rho)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} not in (0, 1]"));
            }
        }
        if self.n_sweep.is_empty() || self.n_sweep[0] == 0 || self.n_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_sweep must be positive and strictly increasing".into());
        }
        if self.instances == 0 || self.seeds == 0 {
            return bad("instances and seeds must be positive".into());
        }
        if self.evaluation == Evaluation::MonteCarlo && self.mc_samples == 0 {
            return bad("mc_samples must be positive".into());
        }
        Ok(())
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the draw identified by `path`, e.g. `[stream, instance, n, k]`.
/// Each component is folded in with a SplitMix64 step, so distinct paths give
/// unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |acc, &x| splitmix(acc ^ splitmix(x)))
}

const STREAM_INSTANCE: u64 = 0;
const STREAM_DATASET: u64 = 1;
const STREAM_TRUTH: u64 = 2;

/// Probability that a transition row is replaced by a deterministic one.
pub const DETERMINISTIC_ROW_PROB: f64 = 0.7;

/// A random MDP: uniform `s0`, rewards uniform on `{0, ρ, …, ⌊1/ρ⌋ρ}`,
/// flat-Dirichlet transition rows, each made deterministic (towards a
/// uniformly drawn state) with probability 0.7.
pub fn generate_mdp(ns: usize, na: usize, nh: usize, rho: f64, rng: &mut impl Rng) -> Result<TabularMdp> {
    let top = RewardGrid::new(rho, 1)?.max_step();
    let s0 = rng.random_range(0..ns);
    let reward = (0..nh * ns * na).map(|_| (rng.random_range(0..=top) as f64 * rho).min(1.0)).collect();
    let mut transitions = Vec::with_capacity(nh * ns * na * ns);
    for _ in 0..nh * ns * na {
        let row = sample_simplex(rng, ns);
        if rng.random::<f64>() < DETERMINISTIC_ROW_PROB {
            let mut det = vec![0.0; ns];
            det[rng.random_range(0..ns)] = 1.0;
            transitions.extend(det);
        } else {
            transitions.extend(row);
        }
    }
    Ok(TabularMdp::new(ns, na, nh, s0, transitions, reward)?)
}

/// The MDP and expert of one experiment instance.
pub fn generate_instance(cfg: &ExperimentConfig, seed: u64) -> Result<(TabularMdp, PolicyHandle)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na, nh) = (cfg.states, cfg.actions, cfg.horizon);
    let mdp = generate_mdp(ns, na, nh, cfg.rho, &mut rng)?;
    let expert = match cfg.expert {
        ExpertKind::Markovian => MarkovianPolicy::random(ns, na, nh, &mut rng).into(),
        ExpertKind::ParametricHistory => ParametricHistoryPolicy::random(ns, na, nh, &mut rng).into(),
    };
    Ok((mdp, expert))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMethod {
    ExactDp,
    Enumeration,
    MonteCarlo,
}

fn dp_compatible(pol: &PolicyHandle) -> bool {
    matches!(pol, PolicyHandle::Markovian(_) | PolicyHandle::RewardAugmented(_))
}

/// The expert's return distribution under the MDP's own reward.
pub fn expert_distribution(
    mdp: &TabularMdp,
    expert: &PolicyHandle,
    evaluation: Evaluation,
    mc_samples: usize,
    seed: u64,
) -> Result<(DiscreteReturnDistribution, TruthMethod)> {
    let method = match evaluation {
        Evaluation::Auto if dp_compatible(expert) => TruthMethod::ExactDp,
        Evaluation::Auto if enumeration_size(mdp) <= ENUMERATION_CAP => TruthMethod::Enumeration,
        Evaluation::Auto => TruthMethod::MonteCarlo,
        Evaluation::ExactDp => TruthMethod::ExactDp,
        Evaluation::Enumeration => TruthMethod::Enumeration,
        Evaluation::MonteCarlo => TruthMethod::MonteCarlo,
    };
    let reward = mdp.reward();
    let dist = match method {
        TruthMethod::ExactDp => exact_return_distribution(mdp, expert, reward)?,
        TruthMethod::Enumeration => enumerated_return_distribution(mdp, expert, reward)?,
        TruthMethod::MonteCarlo => mc_return_distribution(mdp, expert, reward, mc_samples, seed)?,
    };
    Ok((dist, method))
}

/// Return distribution reached by `algorithm` on `data`, under the MDP's reward.
pub fn run_algorithm(
    algorithm: Algorithm,
    data: &rdm_core::Dataset,
    mdp: &TabularMdp,
    grid: &RewardGrid,
) -> Result<DiscreteReturnDistribution> {
    let reward = mdp.reward();
    let policy: PolicyHandle = match algorithm {
        Algorithm::RsBc => rs_bc(data, reward, grid)?.into(),
        Algorithm::RsKt => rs_kt(data, mdp, reward, grid)?.0.into(),
        Algorithm::Bc => bc(data, mdp.num_states(), mdp.num_actions())?.into(),
        Algorithm::MimicMd => mimic_md(data, mdp)?.into(),
        Algorithm::EtaHat => return Ok(empirical_return_distribution(data, reward, Some(grid))?),
    };
    Ok(exact_return_distribution(mdp, &policy, reward)?)
}

/// One algorithm run on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: usize,
    pub algorithm: Algorithm,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub instance: usize,
    pub n: usize,
    pub seed: usize,
    pub algorithm: Algorithm,
    pub message: String,
}

/// Errors of one algorithm at one `N`, aggregated over instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub n: usize,
    /// Per-instance mean over the dataset seeds that ran successfully.
    pub per_instance: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across instances (0 for a single instance).
    pub std: f64,
    pub seeds: usize,
}

impl ResultRow {
    fn from_errors(algorithm: Algorithm, n: usize, seeds: usize, per_instance: Vec<f64>) -> Self {
        let k = per_instance.len();
        let mean = if k == 0 { f64::NAN } else { per_instance.iter().sum::<f64>() / k as f64 };
        let std = if k < 2 {
            0.0
        } else {
            (per_instance.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        };
        Self { algorithm, n, per_instance, mean, std, seeds }
    }

    pub fn instances(&self) -> usize {
        self.per_instance.len()
    }

    pub fn median(&self) -> f64 {
        median(&self.per_instance)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub truth_methods: Vec<TruthMethod>,
    /// Expert and per-algorithm distributions of instance 0, first dataset seed.
    pub expert_dump: Option<DiscreteReturnDistribution>,
    pub dumps: Vec<(Algorithm, usize, DiscreteReturnDistribution)>,
}

impl ExperimentResults {
    pub fn row(&self, algorithm: Algorithm, n: usize) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.n == n)
    }
}

struct Instance {
    mdp: TabularMdp,
    expert: PolicyHandle,
    truth: DiscreteReturnDistribution,
    method: TruthMethod,
}

type TaskOutput = Vec<(Algorithm, std::result::Result<DiscreteReturnDistribution, String>)>;

/// Runs every (instance, N, dataset seed) task in parallel and aggregates.
/// Algorithm failures are recorded in `failures` and left out of the means.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let grid = RewardGrid::new(cfg.theta, cfg.horizon)?;
    let instances: Vec<Instance> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let (mdp, expert) = generate_instance(cfg, derive_seed(cfg.master_seed, &[STREAM_INSTANCE, i as u64]))?;
            let truth_seed = derive_seed(cfg.master_seed, &[STREAM_TRUTH, i as u64]);
            let (truth, method) = expert_distribution(&mdp, &expert, cfg.evaluation, cfg.mc_samples, truth_seed)?;
            Ok(Instance { mdp, expert, truth, method })
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize, usize)> = (0..cfg.instances)
        .flat_map(|i| cfg.n_sweep.iter().flat_map(move |&n| (0..cfg.seeds).map(move |k| (i, n, k))))
        .collect();
    let outputs: Vec<TaskOutput> = tasks
        .par_iter()
        .map(|&(i, n, k)| {
            let inst = &instances[i];
            let seed = derive_seed(cfg.master_seed, &[STREAM_DATASET, i as u64, n as u64, k as u64]);
            match sample_trajectories(&inst.mdp, &inst.expert, n, seed) {
                Ok(data) => cfg
                    .algorithms
                    .iter()
                    .map(|&alg| (alg, run_algorithm(alg, &data, &inst.mdp, &grid).map_err(|e| e.to_string())))
                    .collect(),
                Err(e) => cfg.algorithms.iter().map(|&alg| (alg, Err(e.to_string()))).collect(),
            }
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut dumps = Vec::new();
    // (algorithm, n, instance) -> errors over seeds
    let mut cells: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for (&(i, n, k), output) in tasks.iter().zip(outputs) {
        for (alg_index, (algorithm, result)) in output.into_iter().enumerate() {
            match result {
                Ok(dist) => {
                    let error = wasserstein(&dist, &instances[i].truth);
                    runs.push(RunRecord { instance: i, n, seed: k, algorithm, error });
                    cells.entry((alg_index, n, i)).or_default().push(error);
                    if i == 0 && k == 0 {
                        dumps.push((algorithm, n, dist));
                    }
                }
                Err(message) => failures.push(RunFailure { instance: i, n, seed: k, algorithm, message }),
            }
        }
    }
    let mut rows = Vec::new();
    for (alg_index, &algorithm) in cfg.algorithms.iter().enumerate() {
        for &n in &cfg.n_sweep {
            let per_instance = (0..cfg.instances)
                .filter_map(|i| cells.get(&(alg_index, n, i)))
                .map(|errs| errs.iter().sum::<f64>() / errs.len() as f64)
                .collect();
            rows.push(ResultRow::from_errors(algorithm, n, cfg.seeds, per_instance));
        }
    }
    Ok(ExperimentResults {
        config: cfg.clone(),
        rows,
        runs,
        failures,
        truth_methods: instances.iter().map(|inst| inst.method).collect(),
        expert_dump: instances.first().map(|inst| inst.truth.clone()),
        dumps,
    })
}

/// The columns of `results.csv`, in order.
pub const CSV_HEADER: &str = "algorithm,N,mean,std,instances,seeds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: Algorithm,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub instances: usize,
    pub seeds: usize,
}

impl From<&ResultRow> for CsvRow {
    fn from(r: &ResultRow) -> Self {
        Self { algorithm: r.algorithm, n: r.n, mean: r.mean, std: r.std, instances: r.instances(), seeds: r.seeds }
    }
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV of numbers and tags is UTF-8"))
}

pub fn results_csv(results: &ExperimentResults) -> Result<String> {
    csv_string(results.rows.iter().map(CsvRow::from))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes into `dir`:
///
/// * `results.csv`: one row per (algorithm, N), header [`CSV_HEADER`];
/// * `runs.csv`: every individual run error;
/// * `failures.txt`: failed runs, if any;
/// * `dumps/expert.txt` and `dumps/<algorithm>_N<n>.txt`: the distributions of
///   instance 0 on its first dataset, one `value probability` pair per line.
pub fn emit_results(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write(&path, &text)?;
        written.push(path);
        Ok(())
    };
    put("results.csv", results_csv(results)?)?;
    put("runs.csv", csv_string(&results.runs)?)?;
    if !results.failures.is_empty() {
        let text = results
            .failures
            .iter()
            .map(|f| format!("instance={} N={} seed={} algorithm={}: {}\n", f.instance, f.n, f.seed, f.algorithm, f.message))
            .collect();
        put("failures.txt", text)?;
    }
    if let Some(expert) = &results.expert_dump {
        let path = dir.join("dumps").join("expert.txt");
        save_distribution(expert, &path)?;
        written.push(path);
    }
    for (alg, n, dist) in &results.dumps {
        let path = dir.join("dumps").join(format!("{alg}_N{n}.txt"));
        save_distribution(dist, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixtureReport {
    pub checks: Vec<FixtureCheck>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// `½ Σ_ω |P^p(ω) − P^q(ω)|` by enumerating both trajectory laws.
pub fn trajectory_tv(mdp: &TabularMdp, p: &PolicyHandle, q: &PolicyHandle) -> Result<f64> {
    let mut law: BTreeMap<Vec<(usize, usize)>, (f64, f64)> = BTreeMap::new();
    for (t, w) in enumerate_trajectories(mdp, p)? {
        law.entry(t.steps).or_default().0 += w;
    }
    for (t, w) in enumerate_trajectories(mdp, q)? {
        law.entry(t.steps).or_default().1 += w;
    }
    Ok(0.5 * law.values().map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// The Markovian gap on the history-dependent fixture and the TV identity
/// under the power-of-ten reward.
pub fn run_fixture_suite() -> FixtureReport {
    let mut report = FixtureReport::default();
    let mut check = |name: &str, outcome: Result<(bool, String)>| {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, e.to_string()));
        report.checks.push(FixtureCheck { name: name.into(), passed, detail });
    };

    let (mdp, expert) = make_prop2_fixture();
    let one = DiscreteReturnDistribution::point_mass(1.0);
    check(
        "history expert returns exactly 1",
        enumerated_return_distribution(&mdp, &expert, mdp.reward())
            .map(|d| (d == one, format!("distribution {:?}", d.atoms().collect::<Vec<_>>())))
            .map_err(Into::into),
    );
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let outcome = exact_return_distribution(&mdp, &prop2_markov_policy(alpha).into(), mdp.reward())
            .map(|d| {
                let w = wasserstein(&d, &one);
                ((w - 0.5).abs() <= 1e-9, format!("W = {w}"))
            })
            .map_err(Into::into);
        check(&format!("Markovian gap at alpha = {alpha}"), outcome);
    }

    let tv_check = || -> Result<(bool, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mdp = generate_mdp(2, 2, 2, 0.5, &mut rng)?;
        let reward = make_tv_hard_reward(2, 2, 2)?;
        let p: PolicyHandle = MarkovianPolicy::random(2, 2, 2, &mut rng).into();
        let q: PolicyHandle = MarkovianPolicy::random(2, 2, 2, &mut rng).into();
        let tv = total_variation(
            &enumerated_return_distribution(&mdp, &p, &reward)?,
            &enumerated_return_distribution(&mdp, &q, &reward)?,
        );
        let l1 = trajectory_tv(&mdp, &p, &q)?;
        Ok(((tv - l1).abs() <= 1e-12, format!("TV = {tv}, half L1 = {l1}")))
    };
    check("TV equals trajectory half-L1 under the power-of-ten reward", tv_check());
    report
}
