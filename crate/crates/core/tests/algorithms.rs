mod common;

use common::{grid_reward, random_mdp, rng};
use rand::Rng;
use rdm_core::baselines::{bc, mimic_md, MarkovCountTable};
use rdm_core::distributions::{dkw_band, empirical_return_distribution, wasserstein};
use rdm_core::fixtures::make_prop2_fixture;
use rdm_core::mdp::{build_augmented_mdp, discretize_reward, RewardGrid, RewardTable, TabularMdp};
use rdm_core::policies::{
    augmented_occupancy, construct_pi_r, enumerated_return_distribution, exact_return_distribution, markov_occupancy,
    sample_trajectories, MarkovianPolicy, ParametricHistoryPolicy, PolicyHandle, RewardAugmentedPolicy,
};
use rdm_core::rsbc::rs_bc;
use rdm_core::rskt::{build_rskt_lp, occupancy_to_policy, rs_kt, solve_rskt_lp};
use rdm_core::DiscreteReturnDistribution;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn deterministic_markov(ns: usize, na: usize, nh: usize, r: &mut impl Rng) -> MarkovianPolicy {
    MarkovianPolicy::from_fn(ns, na, nh, |_, _| {
        let mut row = vec![0.0; na];
        row[r.random_range(0..na)] = 1.0;
        row
    })
    .unwrap()
}

#[test]
fn rs_bc_on_history_fixture() {
    let (mdp, expert) = make_prop2_fixture();
    let data = sample_trajectories(&mdp, &expert, 10_000, 1).unwrap();
    let grid = RewardGrid::new(1.0, 3).unwrap();
    let pol = rs_bc(&data, mdp.reward(), &grid).unwrap();
    let dist = exact_return_distribution(&mdp, &pol.into(), mdp.reward()).unwrap();
    assert!(wasserstein(&dist, &DiscreteReturnDistribution::point_mass(1.0)) <= 0.02);
}

#[test]
fn rs_bc_reproduces_a_deterministic_expert_on_visited_cells() {
    let mut r = rng(2);
    let mdp = random_mdp(3, 3, 4, &mut r);
    let grid = RewardGrid::new(0.5, 4).unwrap();
    let disc = discretize_reward(mdp.reward(), &grid).unwrap();
    let mut expert = RewardAugmentedPolicy::random(disc.clone(), &mut r);
    for (h, s, g, _) in RewardAugmentedPolicy::uniform(disc.clone()).cells() {
        let mut row = vec![0.0; 3];
        row[(h + s + g as usize) % 3] = 1.0;
        expert.set_row(h, s, g, &row).unwrap();
    }
    let data = sample_trajectories(&mdp, &expert.clone().into(), 5_000, 3).unwrap();
    let learned = rs_bc(&data, mdp.reward(), &grid).unwrap();
    let occ = augmented_occupancy(&mdp, &expert.clone().into()).unwrap();
    for h in 0..4 {
        for ((s, g), d) in occ.stage(h) {
            if d.iter().sum::<f64>() > 0.0 {
                assert_eq!(learned.row(h, s, g), expert.row(h, s, g));
            }
        }
    }
}

#[test]
fn rs_bc_error_shrinks_with_data() {
    let mut r = rng(4);
    let grid = RewardGrid::new(0.5, 4).unwrap();
    let mdp = random_mdp(2, 2, 4, &mut r);
    let mdp = mdp.with_reward(grid_reward(2, 2, 4, &grid, &mut r)).unwrap();
    let expert: PolicyHandle = ParametricHistoryPolicy::random(2, 2, 4, &mut r).into();
    let truth = enumerated_return_distribution(&mdp, &expert, mdp.reward()).unwrap();
    let mut medians = Vec::new();
    for n in [100, 1_000, 10_000] {
        let errors = (0..20)
            .map(|seed| {
                let data = sample_trajectories(&mdp, &expert, n, seed).unwrap();
                let pol = rs_bc(&data, mdp.reward(), &grid).unwrap();
                wasserstein(&exact_return_distribution(&mdp, &pol.into(), mdp.reward()).unwrap(), &truth)
            })
            .collect();
        medians.push(median(errors));
    }
    assert!(medians[0] >= medians[1] && medians[1] >= medians[2], "{medians:?}");
    assert!(medians[2] < 0.05, "{medians:?}");
}

#[test]
fn rs_bc_converges_to_pi_r() {
    let mut r = rng(5);
    let grid = RewardGrid::new(1.0, 3).unwrap();
    let mdp = random_mdp(2, 2, 3, &mut r);
    let mdp = mdp.with_reward(grid_reward(2, 2, 3, &grid, &mut r)).unwrap();
    let disc = discretize_reward(mdp.reward(), &grid).unwrap();
    let expert: PolicyHandle = RewardAugmentedPolicy::random(disc.clone(), &mut r).into();
    let pi_r = construct_pi_r(&mdp, &expert, &disc).unwrap();
    let data = sample_trajectories(&mdp, &expert, 100_000, 6).unwrap();
    let learned = rs_bc(&data, mdp.reward(), &grid).unwrap();
    let occ = augmented_occupancy(&mdp, &expert).unwrap();
    let mut checked = 0;
    for h in 0..3 {
        for ((s, g), d) in occ.stage(h) {
            // per-cell sampling error at N = 10^5 exceeds 0.02 on cells rarer than this
            if d.iter().sum::<f64>() >= 0.05 {
                checked += 1;
                for (x, y) in learned.row(h, s, g).iter().zip(pi_r.row(h, s, g)) {
                    assert!((x - y).abs() <= 0.02, "cell ({h}, {s}, {g}): {x} vs {y}");
                }
            }
        }
    }
    assert!(checked >= 5);
}

#[test]
fn bc_and_rs_bc_agree_on_a_single_reward_cell() {
    let mut r = rng(7);
    let (ns, na, nh) = (3, 2, 4);
    let mdp = random_mdp(ns, na, nh, &mut r);
    // every reward rounds to 0 at θ = 1, so g stays at 0
    let mdp = mdp.with_reward(RewardTable::from_fn(ns, na, nh, |_, _, _| r.random_range(0.0..0.5))).unwrap();
    let expert: PolicyHandle = ParametricHistoryPolicy::random(ns, na, nh, &mut r).into();
    let data = sample_trajectories(&mdp, &expert, 3_000, 8).unwrap();
    let grid = RewardGrid::new(1.0, nh).unwrap();
    let a = bc(&data, ns, na).unwrap();
    let b = rs_bc(&data, mdp.reward(), &grid).unwrap();
    for h in 0..nh {
        for s in 0..ns {
            assert_eq!(a.row(h, s), b.row(h, s, 0));
        }
    }
}

#[test]
fn bc_recovers_a_deterministic_markov_expert() {
    let mut r = rng(9);
    let mdp = random_mdp(3, 3, 3, &mut r);
    let expert = deterministic_markov(3, 3, 3, &mut r);
    let data = sample_trajectories(&mdp, &expert.clone().into(), 2_000, 1).unwrap();
    let pol = bc(&data, 3, 3).unwrap();
    let occ = markov_occupancy(&mdp, &expert);
    for h in 0..3 {
        for s in 0..3 {
            let mass: f64 = occ[(h * 3 + s) * 3..(h * 3 + s + 1) * 3].iter().sum();
            if mass > 0.0 {
                assert_eq!(pol.row(h, s), expert.row(h, s));
            } else {
                assert_eq!(pol.row(h, s), &[1.0 / 3.0; 3]);
            }
        }
    }
}

fn dense_mdp(ns: usize, na: usize, nh: usize, r: &mut impl Rng) -> TabularMdp {
    let mut t = Vec::new();
    for _ in 0..nh * ns * na {
        let w: Vec<f64> = (0..ns).map(|_| r.random_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        t.extend(w.into_iter().map(|x| x / total));
    }
    let reward = (0..nh * ns * na).map(|_| r.random::<f64>()).collect();
    TabularMdp::new(ns, na, nh, 0, t, reward).unwrap()
}

#[test]
fn mimic_md_equals_bc_under_full_coverage() {
    let mut r = rng(10);
    for _ in 0..5 {
        let mdp = dense_mdp(3, 2, 4, &mut r);
        let expert = deterministic_markov(3, 2, 4, &mut r);
        let data = sample_trajectories(&mdp, &expert.into(), 3_000, r.random()).unwrap();
        let counts = MarkovCountTable::from_dataset(&data, 3, 2).unwrap();
        assert!((1..4).all(|h| (0..3).all(|s| counts.state(h, s) > 0)));
        let a = mimic_md(&data, &mdp).unwrap();
        let b = bc(&data, 3, 2).unwrap();
        for h in 0..4 {
            for s in 0..3 {
                for (x, y) in a.row(h, s).iter().zip(b.row(h, s)) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn mimic_md_satisfies_its_pins() {
    let mut r = rng(11);
    for _ in 0..10 {
        let mdp = random_mdp(3, 3, 4, &mut r);
        let expert: PolicyHandle = ParametricHistoryPolicy::random(3, 3, 4, &mut r).into();
        let data = sample_trajectories(&mdp, &expert, 200, r.random()).unwrap();
        let pol = mimic_md(&data, &mdp).unwrap();
        let counts = MarkovCountTable::from_dataset(&data, 3, 3).unwrap();
        let d = markov_occupancy(&mdp, &pol);
        for h in 0..4 {
            for s in 0..3 {
                let n = counts.state(h, s);
                if n == 0 {
                    continue;
                }
                let row = &d[(h * 3 + s) * 3..(h * 3 + s + 1) * 3];
                let mass: f64 = row.iter().sum();
                for (a, &x) in row.iter().enumerate() {
                    let pinned = counts.sa(h, s, a) as f64 / n as f64 * mass;
                    assert!((x - pinned).abs() <= 1e-7);
                }
            }
        }
    }
}

#[test]
fn rskt_objective_is_a_lower_envelope() {
    let mut r = rng(12);
    for _ in 0..20 {
        let (ns, na, nh) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=4));
        let grid = RewardGrid::new([1.0, 0.5, 0.25][r.random_range(0..3)], nh).unwrap();
        let mdp = random_mdp(ns, na, nh, &mut r);
        let disc = discretize_reward(mdp.reward(), &grid).unwrap();
        let expert: PolicyHandle = ParametricHistoryPolicy::random(ns, na, nh, &mut r).into();
        let data = sample_trajectories(&mdp, &expert, 50, r.random()).unwrap();
        let eta_hat = empirical_return_distribution(&data, mdp.reward(), Some(&grid)).unwrap();
        let aug = build_augmented_mdp(&mdp, &disc).unwrap();
        let program = build_rskt_lp(&aug, &eta_hat).unwrap();
        let sol = solve_rskt_lp(&program).unwrap();
        assert!((sol.objective - wasserstein(&sol.eta, &eta_hat)).abs() < 1e-7);

        let recovered = occupancy_to_policy(&sol.d, &disc).unwrap();
        let eval = exact_return_distribution(&mdp, &recovered.into(), &disc.to_table()).unwrap();
        assert!(wasserstein(&eval, &sol.eta) < 1e-7);

        for _ in 0..100 {
            let pol = RewardAugmentedPolicy::random(disc.clone(), &mut r);
            let eta = exact_return_distribution(&mdp, &pol.into(), &disc.to_table()).unwrap();
            assert!(sol.objective <= wasserstein(&eta, &eta_hat) + 1e-7);
        }
    }
}

#[test]
fn dp_occupancies_are_feasible_and_recovery_is_a_fixed_point() {
    let mut r = rng(13);
    for _ in 0..30 {
        let (ns, na, nh) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=4));
        let grid = RewardGrid::new([1.0, 0.5, 0.25][r.random_range(0..3)], nh).unwrap();
        let mdp = random_mdp(ns, na, nh, &mut r);
        let disc = discretize_reward(mdp.reward(), &grid).unwrap();
        let aug = build_augmented_mdp(&mdp, &disc).unwrap();
        let program = build_rskt_lp(&aug, &DiscreteReturnDistribution::point_mass(0.0)).unwrap();
        let pol = RewardAugmentedPolicy::random(disc.clone(), &mut r);
        let occ = augmented_occupancy(&mdp, &pol.clone().into()).unwrap();
        let v = program.assignment(&occ).unwrap();
        assert!(program.lp.max_violation(&v) <= 1e-9);

        let back = occupancy_to_policy(&occ, &disc).unwrap();
        for h in 0..nh {
            for ((s, g), d) in occ.stage(h) {
                if d.iter().sum::<f64>() > 0.0 {
                    for (x, y) in back.row(h, s, g).iter().zip(pol.row(h, s, g)) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn rskt_with_one_sample_finds_the_best_deterministic_policy() {
    let mut r = rng(14);
    for _ in 0..5 {
        let grid = RewardGrid::new(1.0, 2).unwrap();
        let mdp = random_mdp(2, 2, 2, &mut r);
        let mdp = mdp.with_reward(grid_reward(2, 2, 2, &grid, &mut r)).unwrap();
        let disc = discretize_reward(mdp.reward(), &grid).unwrap();
        let target = DiscreteReturnDistribution::point_mass(r.random_range(0..=2) as f64);
        let aug = build_augmented_mdp(&mdp, &disc).unwrap();
        let sol = solve_rskt_lp(&build_rskt_lp(&aug, &target).unwrap()).unwrap();

        let cells: Vec<(usize, usize, u32)> =
            RewardAugmentedPolicy::uniform(disc.clone()).cells().map(|(h, s, g, _)| (h, s, g)).collect();
        let mut best = f64::INFINITY;
        for code in 0..1u32 << cells.len() {
            let mut pol = RewardAugmentedPolicy::uniform(disc.clone());
            for (i, &(h, s, g)) in cells.iter().enumerate() {
                let a = ((code >> i) & 1) as usize;
                let mut row = vec![0.0; 2];
                row[a] = 1.0;
                pol.set_row(h, s, g, &row).unwrap();
            }
            let eta = exact_return_distribution(&mdp, &pol.into(), mdp.reward()).unwrap();
            best = best.min(wasserstein(&eta, &target));
        }
        assert!((sol.objective - best).abs() < 1e-9, "{} vs {best}", sol.objective);
    }
}

#[test]
fn rskt_fits_an_expert_in_the_class() {
    let mut r = rng(15);
    let n = 5_000;
    for _ in 0..5 {
        let grid = RewardGrid::new(0.5, 3).unwrap();
        let mdp = random_mdp(3, 2, 3, &mut r);
        let mdp = mdp.with_reward(grid_reward(3, 2, 3, &grid, &mut r)).unwrap();
        let disc = discretize_reward(mdp.reward(), &grid).unwrap();
        let expert: PolicyHandle = RewardAugmentedPolicy::random(disc, &mut r).into();
        let data = sample_trajectories(&mdp, &expert, n, r.random()).unwrap();
        let (_, diag) = rs_kt(&data, &mdp, mdp.reward(), &grid).unwrap();
        assert!(diag.objective <= 3.0 * dkw_band(n, 0.05).unwrap());
        assert!(diag.to_text().starts_with("objective="));
    }
}

#[test]
fn rskt_on_history_fixture() {
    let (mdp, expert) = make_prop2_fixture();
    let data = sample_trajectories(&mdp, &expert, 10_000, 2).unwrap();
    let grid = RewardGrid::new(1.0, 3).unwrap();
    let (pol, _) = rs_kt(&data, &mdp, mdp.reward(), &grid).unwrap();
    let dist = exact_return_distribution(&mdp, &pol.into(), mdp.reward()).unwrap();
    assert!(wasserstein(&dist, &DiscreteReturnDistribution::point_mass(1.0)) <= 0.05);
}
