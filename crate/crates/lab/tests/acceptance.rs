//! The acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdm_core::distributions::{cvar, empirical_return_distribution, mean, total_variation, variance, wasserstein};
use rdm_core::fixtures::{make_prop2_fixture, make_tv_hard_reward, prop2_markov_policy};
use rdm_core::lp::solve_transport;
use rdm_core::mdp::{build_augmented_mdp, discretize_reward};
use rdm_core::policies::{
    augmented_occupancy, construct_pi_r, enumerated_return_distribution, exact_return_distribution,
    sample_trajectories,
};
use rdm_core::rsbc::rs_bc;
use rdm_core::rskt::{build_rskt_lp, occupancy_to_policy, solve_rskt_lp};
use rdm_core::{
    DiscreteReturnDistribution, MarkovianPolicy, ParametricHistoryPolicy, PolicyHandle, RewardAugmentedPolicy,
    RewardGrid, RewardTable, TabularMdp,
};
use rdm_lab::bench::{
    derive_seed, generate_instance, generate_mdp, median, run_experiment, Algorithm, Evaluation, ExpertKind,
    ExperimentConfig, ExperimentResults,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_instance(r: &mut ChaCha8Rng, rho: f64) -> TabularMdp {
    let (ns, na, nh) = (r.random_range(1..=3), r.random_range(1..=2), r.random_range(1..=4));
    generate_mdp(ns, na, nh, rho, r).unwrap()
}

fn expert_for(mdp: &TabularMdp, i: usize, r: &mut ChaCha8Rng) -> PolicyHandle {
    let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    if i.is_multiple_of(2) {
        ParametricHistoryPolicy::random(ns, na, nh, r).into()
    } else {
        MarkovianPolicy::random(ns, na, nh, r).into()
    }
}

fn pi_r_error(mdp: &TabularMdp, expert: &PolicyHandle, grid: &RewardGrid) -> f64 {
    let disc = discretize_reward(mdp.reward(), grid).unwrap();
    let pi_r = construct_pi_r(mdp, expert, &disc).unwrap();
    let got = exact_return_distribution(mdp, &pi_r.into(), mdp.reward()).unwrap();
    let want = enumerated_return_distribution(mdp, expert, mdp.reward()).unwrap();
    wasserstein(&got, &want)
}

/// Fifty instances up to (3, 2, 4) with rewards on their own θ grid.
fn oracle_instances() -> Vec<(TabularMdp, PolicyHandle, f64)> {
    let mut r = rng(101);
    (0..50)
        .map(|i| {
            let theta = [1.0, 0.5, 0.25, 0.1][i % 4];
            let mdp = small_instance(&mut r, theta);
            let expert = expert_for(&mdp, i, &mut r);
            (mdp, expert, theta)
        })
        .collect()
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (mdp, expert, theta) in oracle_instances() {
        worst = worst.max(pi_r_error(&mdp, &expert, &RewardGrid::new(theta, mdp.horizon()).unwrap()));
    }
    let t = start.elapsed();
    check(worst <= 1e-9 && t < Duration::from_secs(60), format!("max W = {worst:.2e} over 50 instances in {t:.2?}"))
}

fn c2_discretization_bound() -> Outcome {
    let start = Instant::now();
    let mut r = rng(102);
    let mut worst_ratio = 0.0f64;
    let mut violations = 0;
    for (mdp, expert, _) in oracle_instances() {
        let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let reward = RewardTable::from_fn(ns, na, nh, |_, _, _| r.random::<f64>());
        let mdp = mdp.with_reward(reward).unwrap();
        for theta in [0.5, 0.1] {
            let w = pi_r_error(&mdp, &expert, &RewardGrid::new(theta, nh).unwrap());
            let bound = nh as f64 * theta;
            worst_ratio = worst_ratio.max(w / bound);
            if w > bound + 1e-12 {
                violations += 1;
            }
        }
    }
    let t = start.elapsed();
    check(
        violations == 0 && t < Duration::from_secs(120),
        format!("{violations} violations, max W/(H theta) = {worst_ratio:.3} in {t:.2?}"),
    )
}

fn random_distribution(r: &mut ChaCha8Rng, max_atoms: usize, horizon: f64) -> DiscreteReturnDistribution {
    let k = r.random_range(1..=max_atoms);
    let atoms: Vec<(f64, f64)> =
        (0..k).map(|_| (r.random_range(0..=20) as f64 * horizon / 20.0, r.random_range(0.01..1.0))).collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    DiscreteReturnDistribution::from_atoms(atoms.into_iter().map(|(x, w)| (x, w / total))).unwrap()
}

fn c3_wasserstein_oracle() -> Outcome {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let p = random_distribution(&mut r, 6, 5.0);
        let q = random_distribution(&mut r, 6, 5.0);
        let costs: Vec<f64> = p.support().iter().flat_map(|x| q.support().iter().map(move |y| (x - y).abs())).collect();
        let lp = solve_transport(&costs, p.probs(), q.probs()).unwrap();
        worst = worst.max((wasserstein(&p, &q) - lp).abs());
    }
    check(worst <= 1e-9, format!("max |sweep - transport LP| = {worst:.2e} over 500 pairs"))
}

fn c4_functional_bounds() -> Outcome {
    const H: f64 = 5.0;
    let mut r = rng(104);
    let mut violations = 0;
    for _ in 0..1000 {
        let p = random_distribution(&mut r, 10, H);
        let q = random_distribution(&mut r, 10, H);
        let w = wasserstein(&p, &q);
        violations += usize::from((mean(&p) - mean(&q)).abs() > w + 1e-12);
        for alpha in [0.05, 0.1, 0.25, 0.5, 0.9, 0.99] {
            let gap = (cvar(&p, alpha).unwrap() - cvar(&q, alpha).unwrap()).abs();
            violations += usize::from(gap > w / alpha + 1e-12);
        }
        violations += usize::from((variance(&p) - variance(&q)).abs() > 4.0 * H * w + 1e-12);
    }
    check(violations == 0, format!("{violations} violations over 1000 pairs"))
}

fn c5_markovian_gap() -> Outcome {
    let (mdp, expert) = make_prop2_fixture();
    let one = DiscreteReturnDistribution::point_mass(1.0);
    let truth = enumerated_return_distribution(&mdp, &expert, mdp.reward()).unwrap();
    let gaps: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&alpha| {
            let d = exact_return_distribution(&mdp, &prop2_markov_policy(alpha).into(), mdp.reward()).unwrap();
            wasserstein(&d, &truth)
        })
        .collect();
    let data = sample_trajectories(&mdp, &expert, 10_000, 5).unwrap();
    let pol = rs_bc(&data, mdp.reward(), &RewardGrid::new(0.05, 3).unwrap()).unwrap();
    let w = wasserstein(&exact_return_distribution(&mdp, &pol.into(), mdp.reward()).unwrap(), &truth);
    let ok = truth == one && gaps.iter().all(|g| (g - 0.5).abs() <= 1e-9) && w <= 0.05;
    check(ok, format!("Markovian gaps {gaps:?}, RS-BC W = {w:.4} at N = 10000"))
}

/// Trajectory law of a Markovian policy, by direct recursion over the tables.
fn trajectory_law(mdp: &TabularMdp, pol: &MarkovianPolicy) -> BTreeMap<Vec<(usize, usize)>, f64> {
    fn go(
        mdp: &TabularMdp,
        pol: &MarkovianPolicy,
        prefix: &mut Vec<(usize, usize)>,
        s: usize,
        p: f64,
        out: &mut BTreeMap<Vec<(usize, usize)>, f64>,
    ) {
        let h = prefix.len();
        for (a, &pa) in pol.row(h, s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            prefix.push((s, a));
            if h + 1 == mdp.horizon() {
                *out.entry(prefix.clone()).or_default() += p * pa;
            } else {
                for (s2, &ps) in mdp.transition(h, s, a).iter().enumerate() {
                    if ps > 0.0 {
                        go(mdp, pol, prefix, s2, p * pa * ps, out);
                    }
                }
            }
            prefix.pop();
        }
    }
    let mut out = BTreeMap::new();
    go(mdp, pol, &mut Vec::new(), mdp.initial_state(), 1.0, &mut out);
    out
}

fn c6_tv_identity() -> Outcome {
    let mut r = rng(106);
    let reward = make_tv_hard_reward(2, 2, 2).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mdp = generate_mdp(2, 2, 2, 0.5, &mut r).unwrap().with_reward(reward.clone()).unwrap();
        let p = MarkovianPolicy::random(2, 2, 2, &mut r);
        let q = MarkovianPolicy::random(2, 2, 2, &mut r);
        let tv = total_variation(
            &enumerated_return_distribution(&mdp, &p.clone().into(), &reward).unwrap(),
            &enumerated_return_distribution(&mdp, &q.clone().into(), &reward).unwrap(),
        );
        let (lp, lq) = (trajectory_law(&mdp, &p), trajectory_law(&mdp, &q));
        let l1: f64 = lp
            .keys()
            .chain(lq.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|k| (lp.get(k).copied().unwrap_or(0.0) - lq.get(k).copied().unwrap_or(0.0)).abs())
            .sum();
        worst = worst.max((tv - 0.5 * l1).abs());
    }
    check(worst <= 1e-12, format!("max |TV - L1/2| = {worst:.2e} over 20 policy pairs"))
}

fn c7_rskt_optimality() -> Outcome {
    let mut r = rng(107);
    let mut envelope_violations = 0;
    let mut worst_fixed_point = 0.0f64;
    for _ in 0..20 {
        let theta = [1.0, 0.5, 0.25][r.random_range(0..3)];
        let mdp = small_instance(&mut r, 0.1);
        let (ns, na, nh) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let grid = RewardGrid::new(theta, nh).unwrap();
        let disc = discretize_reward(mdp.reward(), &grid).unwrap();
        let expert: PolicyHandle = ParametricHistoryPolicy::random(ns, na, nh, &mut r).into();
        let data = sample_trajectories(&mdp, &expert, 50, r.random()).unwrap();
        let eta_hat = empirical_return_distribution(&data, mdp.reward(), Some(&grid)).unwrap();
        let aug = build_augmented_mdp(&mdp, &disc).unwrap();
        let sol = solve_rskt_lp(&build_rskt_lp(&aug, &eta_hat).unwrap()).unwrap();
        let table = disc.to_table();
        for _ in 0..100 {
            let pol = RewardAugmentedPolicy::random(disc.clone(), &mut r);
            let eta = exact_return_distribution(&mdp, &pol.into(), &table).unwrap();
            envelope_violations += usize::from(sol.objective > wasserstein(&eta, &eta_hat) + 1e-7);
        }
        let recovered = occupancy_to_policy(&sol.d, &disc).unwrap();
        let occ = augmented_occupancy(&mdp, &recovered.into()).unwrap();
        for h in 0..nh {
            let keys: std::collections::BTreeSet<(usize, u32)> =
                occ.stage(h).map(|(k, _)| k).chain(sol.d.stage(h).map(|(k, _)| k)).collect();
            for (s, g) in keys {
                let zero = vec![0.0; na];
                let x = occ.get(h, s, g).unwrap_or(&zero);
                let y = sol.d.get(h, s, g).unwrap_or(&zero);
                for (a, b) in x.iter().zip(y) {
                    worst_fixed_point = worst_fixed_point.max((a - b).abs());
                }
            }
        }
    }
    check(
        envelope_violations == 0 && worst_fixed_point <= 1e-7,
        format!(
            "{envelope_violations} envelope violations over 2000 policies, occupancy round trip off by {worst_fixed_point:.2e}"
        ),
    )
}

fn table1_config(theta: f64) -> ExperimentConfig {
    ExperimentConfig {
        states: 2,
        actions: 2,
        horizon: 5,
        theta,
        rho: 0.03,
        expert: ExpertKind::ParametricHistory,
        n_sweep: vec![20, 300, 10_000],
        instances: 20,
        seeds: 2,
        evaluation: Evaluation::Auto,
        mc_samples: 200_000,
        algorithms: vec![Algorithm::RsBc, Algorithm::RsKt, Algorithm::Bc, Algorithm::MimicMd],
        master_seed: 2024,
        output: None,
    }
}

fn medians(res: &ExperimentResults, alg: Algorithm) -> Vec<f64> {
    res.config.n_sweep.iter().map(|&n| res.row(alg, n).unwrap().median()).collect()
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" > ")
}

fn c8_table1_trend() -> Outcome {
    let start = Instant::now();
    let res = run_experiment(&table1_config(0.05)).unwrap();
    let t = start.elapsed();
    if !res.failures.is_empty() {
        return Err(format!("{} failed runs", res.failures.len()));
    }
    let decreasing = |m: &[f64]| m.windows(2).all(|w| w[1] < w[0]);
    let (rsbc, rskt) = (medians(&res, Algorithm::RsBc), medians(&res, Algorithm::RsKt));
    let (bc, mimic) = (medians(&res, Algorithm::Bc), medians(&res, Algorithm::MimicMd));
    let ok = decreasing(&rsbc)
        && decreasing(&rskt)
        && rsbc[2] < 0.03
        && rskt[2] < 0.03
        && bc[2] > 0.04
        && mimic[2] > 0.04
        && t < Duration::from_secs(900);
    check(
        ok,
        format!(
            "medians RS-BC {} | RS-KT {} | BC at 1e4 {:.4} | MIMIC-MD at 1e4 {:.4} | {t:.2?}",
            fmt(&rsbc),
            fmt(&rskt),
            bc[2],
            mimic[2]
        ),
    )
}

fn c9_theta_sensitivity() -> Outcome {
    let res = run_experiment(&table1_config(0.5)).unwrap();
    if !res.failures.is_empty() {
        return Err(format!("{} failed runs", res.failures.len()));
    }
    let rskt = res.row(Algorithm::RsKt, 10_000).unwrap();
    let rsbc = res.row(Algorithm::RsBc, 10_000).unwrap();
    let ok = (0.05..=0.25).contains(&rskt.median()) && rsbc.median() < 0.05;
    check(
        ok,
        format!(
            "N = 1e4: RS-KT median {:.4} (mean {:.4}), RS-BC median {:.4} (mean {:.4})",
            rskt.median(),
            rskt.mean,
            rsbc.median(),
            rsbc.mean
        ),
    )
}

fn c10_q4_scaling() -> Outcome {
    let cfg = ExperimentConfig {
        states: 100,
        actions: 5,
        n_sweep: vec![1000],
        instances: 10,
        seeds: 1,
        algorithms: vec![Algorithm::EtaHat, Algorithm::RsBc, Algorithm::Bc],
        ..table1_config(0.05)
    };
    let res = run_experiment(&cfg).unwrap();
    if !res.failures.is_empty() {
        return Err(format!("{} failed runs", res.failures.len()));
    }
    let per = |alg| res.row(alg, 1000).unwrap().per_instance.clone();
    let (eta, rsbc, bc) = (per(Algorithm::EtaHat), per(Algorithm::RsBc), per(Algorithm::Bc));
    let wins = (0..eta.len()).filter(|&i| 2.0 * eta[i] < rsbc[i].min(bc[i])).count();
    check(
        eta.len() >= 10 && wins * 10 >= 8 * eta.len(),
        format!(
            "doubled eta-hat error wins on {wins}/{} instances; medians: 2x eta-hat {:.4}, RS-BC {:.4}, BC {:.4}",
            eta.len(),
            2.0 * median(&eta),
            median(&rsbc),
            median(&bc)
        ),
    )
}

fn c11_dkw_scaling() -> Outcome {
    let cfg = ExperimentConfig { n_sweep: vec![250, 1000, 4000], ..table1_config(0.05) };
    let grid = RewardGrid::new(cfg.theta, cfg.horizon).unwrap();
    let ns = cfg.n_sweep.clone();
    let errors: Vec<Vec<f64>> = (0..50u64)
        .map(|i| {
            let (mdp, expert) = generate_instance(&cfg, derive_seed(11, &[0, i])).unwrap();
            let table = discretize_reward(mdp.reward(), &grid).unwrap().to_table();
            let truth = enumerated_return_distribution(&mdp, &expert, &table).unwrap();
            ns.iter()
                .map(|&n| {
                    let data = sample_trajectories(&mdp, &expert, n, derive_seed(11, &[1, i, n as u64])).unwrap();
                    wasserstein(&empirical_return_distribution(&data, mdp.reward(), Some(&grid)).unwrap(), &truth)
                })
                .collect()
        })
        .collect();
    let avg: Vec<f64> = (0..ns.len()).map(|j| errors.iter().map(|e| e[j]).sum::<f64>() / errors.len() as f64).collect();
    let ratios: Vec<f64> = avg.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = ratios.iter().all(|r| (0.35..=0.65).contains(r));
    check(ok, format!("mean errors {} at N = {ns:?}, ratios {ratios:.3?}", fmt(&avg)))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle policy preserves the return distribution", c1_oracle_equivalence),
        ("discretization error at most H theta", c2_discretization_bound),
        ("CDF sweep equals transport LP", c3_wasserstein_oracle),
        ("mean, CVaR and variance bounded by W", c4_functional_bounds),
        ("Markovian gap and RS-BC on the history fixture", c5_markovian_gap),
        ("TV equals trajectory half-L1", c6_tv_identity),
        ("RS-KT LP optimality and round trip", c7_rskt_optimality),
        ("non-Markovian expert trend at theta = 0.05", c8_table1_trend),
        ("theta = 0.5 sensitivity", c9_theta_sensitivity),
        ("eta-hat beats RS-BC and BC at S = 100", c10_q4_scaling),
        ("eta-hat error halves when N quadruples", c11_dkw_scaling),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {:>2} {name} [{:.1?}]: {detail}", i + 1, start.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
