mod common;

use common::*;
use matmix::evalgen::{adjusted_rand_index, ar_covariance, generate_scenario, Scenario, ScenarioSpec};
use matmix::flipflop::{flip_flop_mle, weighted_mean, FlipFlopConfig};
use matmix::linalg::{eigenvalues, singular_values};
use matmix::matnorm::*;
use matmix::mixture::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_model(k: usize, r: usize, p: usize, seed: u64) -> MixtureModel {
    let mut g = rng(seed);
    let comps: Vec<_> = (0..k).map(|_| random_component(r, p, &mut g)).collect();
    let raw: Vec<f64> = (0..k).map(|j| 1.0 + j as f64).collect();
    let total: f64 = raw.iter().sum();
    MixtureModel::new(comps, raw.iter().map(|w| w / total).collect()).unwrap()
}

fn stack_from(model: &MixtureModel, per: usize, seed: u64) -> MatrixStack {
    let mats = model
        .components
        .iter()
        .enumerate()
        .flat_map(|(j, c)| matnorm_sample(c, per, seed + j as u64).unwrap().matrices().to_vec())
        .collect();
    MatrixStack::new(mats).unwrap()
}

fn joint_oracle(stack: &MatrixStack, model: &MixtureModel) -> Vec<Vec<f64>> {
    stack
        .iter()
        .map(|y| model.components.iter().zip(&model.weights).map(|(c, w)| w.ln() + matnorm_oracle(y, c)).collect())
        .collect()
}

fn small_scenario(seed: u64) -> (MatrixStack, Vec<usize>) {
    let spec = ScenarioSpec { n: 30, r: 6, p: 6, mean_amplitude: 2.0, ..ScenarioSpec::new(Scenario::III, seed) };
    let d = generate_scenario(&spec).unwrap();
    (d.stack, d.labels)
}

#[test]
fn observed_loglik_matches_direct_sum() {
    let model = random_model(3, 2, 2, 5);
    let stack = stack_from(&model, 4, 50);
    let oracle: f64 =
        joint_oracle(&stack, &model).iter().map(|row| row.iter().map(|x| x.exp()).sum::<f64>().ln()).sum();
    assert!((observed_loglik(&stack, &model).unwrap() - oracle).abs() < 1e-8);
}

#[test]
fn single_component_loglik_is_stack_loglik() {
    let model = random_model(1, 3, 2, 8);
    let stack = stack_from(&model, 6, 1);
    let direct = matmix::flipflop::stack_loglik(&stack, &model.components[0], &[1.0; 6]).unwrap();
    assert!((observed_loglik(&stack, &model).unwrap() - direct).abs() < 1e-9);
    let doubled = MixtureModel::new(vec![model.components[0].clone(); 2], vec![0.5, 0.5]).unwrap();
    assert!((observed_loglik(&stack, &doubled).unwrap() - direct).abs() < 1e-9);
}

#[test]
fn no_underflow_at_large_dimension() {
    let theta = ComponentParams::identity(60, 60);
    let mut far = theta.clone();
    far.mean.fill(3.0);
    let model = MixtureModel::new(vec![theta.clone(), far], vec![0.5, 0.5]).unwrap();
    let stack = matnorm_sample(&theta, 3, 1).unwrap();
    let ll = observed_loglik(&stack, &model).unwrap();
    assert!(ll.is_finite());
    let resp = e_step(&stack, &model).unwrap();
    assert_eq!(resp.hard_labels(), vec![0, 0, 0]);
}

#[test]
fn nuclear_objective_subtracts_singular_value_sum() {
    // Rotation-free 2×2 with singular values 3 and 1.
    let mean = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -1.0]);
    let theta = ComponentParams { mean, ..ComponentParams::identity(2, 2) };
    let model = MixtureModel::new(vec![theta.clone()], vec![1.0]).unwrap();
    let stack = matnorm_sample(&theta, 5, 2).unwrap();
    let ll = observed_loglik(&stack, &model).unwrap();
    let pen = PenaltySpec::new(PenaltyKind::Nuclear, 1.0).unwrap();
    assert!((penalized_objective(&stack, &model, &pen).unwrap() - (ll - 4.0)).abs() < 1e-10);
    for kind in PenaltyKind::ALL {
        let zero_lambda = PenaltySpec::new(kind, 0.0).unwrap();
        assert_eq!(penalized_objective(&stack, &model, &zero_lambda).unwrap(), ll);
    }
    let zero_mean = MixtureModel::new(vec![ComponentParams::identity(2, 2)], vec![1.0]).unwrap();
    let ll0 = observed_loglik(&stack, &zero_mean).unwrap();
    for kind in PenaltyKind::ALL {
        let pen = PenaltySpec::new(kind, 2.5).unwrap();
        assert_eq!(penalized_objective(&stack, &zero_mean, &pen).unwrap(), ll0);
    }
}

#[test]
fn e_step_matches_bayes_rule() {
    let model = random_model(3, 2, 2, 13);
    let stack = stack_from(&model, 3, 7);
    let resp = e_step(&stack, &model).unwrap();
    for (i, row) in joint_oracle(&stack, &model).iter().enumerate() {
        let dens: Vec<f64> = row.iter().map(|x| x.exp()).collect();
        let total: f64 = dens.iter().sum();
        for (j, d) in dens.iter().enumerate() {
            assert!((resp.alpha[(i, j)] - d / total).abs() < 1e-10);
        }
    }
}

#[test]
fn e_step_special_cases() {
    let one = random_model(1, 2, 3, 1);
    let stack = stack_from(&one, 4, 3);
    assert!(e_step(&stack, &one).unwrap().alpha.iter().all(|&a| a == 1.0));
    let c = one.components[0].clone();
    let same = MixtureModel::new(vec![c.clone(), c.clone(), c], vec![0.2, 0.3, 0.5]).unwrap();
    let resp = e_step(&stack, &same).unwrap();
    for i in 0..stack.len() {
        for (j, w) in [0.2, 0.3, 0.5].iter().enumerate() {
            assert!((resp.alpha[(i, j)] - w).abs() < 1e-12);
        }
    }
}

#[test]
fn m_step_weights_and_clamped_spectra() {
    let (stack, labels) = small_scenario(3);
    let resp = Responsibilities::from_labels(&labels, 2);
    let prev = random_model(2, 6, 6, 4);
    let cfg = FitConfig::default();
    for kind in PenaltyKind::ALL {
        let next = m_step(&stack, &resp, &prev, &PenaltySpec::new(kind, 0.5).unwrap(), &cfg).unwrap();
        assert!((next.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for c in &next.components {
            for e in eigenvalues(&c.row_cov).into_iter().chain(eigenvalues(&c.col_cov)) {
                assert!(e >= cfg.eig_floor * (1.0 - 1e-9) && e <= cfg.eig_cap * (1.0 + 1e-9), "{e}");
            }
        }
    }
}

#[test]
fn m_step_zero_lambda_equals_unpenalized() {
    let (stack, labels) = small_scenario(5);
    let resp = Responsibilities::from_labels(&labels, 2);
    let prev = random_model(2, 6, 6, 6);
    let cfg = FitConfig::default();
    let base = m_step(&stack, &resp, &prev, &PenaltySpec::none(), &cfg).unwrap();
    for kind in PenaltyKind::ALL {
        let got = m_step(&stack, &resp, &prev, &PenaltySpec::new(kind, 0.0).unwrap(), &cfg).unwrap();
        assert_eq!(got, base);
    }
}

#[test]
fn huge_l1_zeroes_means() {
    let (stack, labels) = small_scenario(7);
    let resp = Responsibilities::from_labels(&labels, 2);
    let prev = MixtureModel::new(vec![ComponentParams::identity(6, 6); 2], vec![0.5, 0.5]).unwrap();
    let pen = PenaltySpec::new(PenaltyKind::L1, 1e9).unwrap();
    let next = m_step(&stack, &resp, &prev, &pen, &FitConfig::default()).unwrap();
    assert!(next.components.iter().all(|c| c.mean.iter().all(|&x| x == 0.0)));
}

#[test]
fn nuclear_m_step_shifts_singular_values() {
    let (stack, labels) = small_scenario(8);
    let resp = Responsibilities::from_labels(&labels, 2);
    let tilde: Vec<DMatrix<f64>> = (0..2).map(|j| weighted_mean(&stack, &resp.column(j)).unwrap()).collect();
    let prev = MixtureModel::new(
        tilde.iter().map(|m| ComponentParams { mean: m.clone(), ..ComponentParams::identity(6, 6) }).collect(),
        vec![0.5, 0.5],
    )
    .unwrap();
    // Keep every shifted singular value positive: half the smallest room.
    let lambda = (0..2)
        .map(|j| 0.5 * resp.mass(j) * singular_values(&tilde[j]).last().copied().unwrap())
        .fold(f64::INFINITY, f64::min);
    let next =
        m_step(&stack, &resp, &prev, &PenaltySpec::new(PenaltyKind::Nuclear, lambda).unwrap(), &FitConfig::default())
            .unwrap();
    for (j, t) in tilde.iter().enumerate() {
        let shift = lambda / resp.mass(j);
        let before = t.clone().svd(false, false).singular_values;
        let after = singular_values(&next.components[j].mean);
        let mut expected: Vec<f64> = before.iter().map(|s| s - shift).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        assert!(expected.iter().all(|&s| s > 0.0));
        for (a, e) in after.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-8, "{a} vs {e}");
        }
    }
}

#[test]
fn l1_only_shrinks_under_ar_covariances() {
    let (stack, labels) = small_scenario(9);
    let resp = Responsibilities::from_labels(&labels, 2);
    let u = ar_covariance(6, 0.9).unwrap();
    let comp = ComponentParams::new(DMatrix::zeros(6, 6), u.clone(), u).unwrap();
    let prev = MixtureModel::new(vec![comp.clone(), comp], vec![0.5, 0.5]).unwrap();
    let next =
        m_step(&stack, &resp, &prev, &PenaltySpec::new(PenaltyKind::L1, 0.2).unwrap(), &FitConfig::default()).unwrap();
    for j in 0..2 {
        let tilde = weighted_mean(&stack, &resp.column(j)).unwrap();
        for (a, b) in next.components[j].mean.iter().zip(tilde.iter()) {
            assert!(a.abs() <= b.abs());
            assert!(*a == 0.0 || a.signum() == b.signum());
        }
    }
}

#[test]
fn initialize_recovers_separated_clusters() {
    let near = ComponentParams::identity(3, 3);
    let far = ComponentParams { mean: DMatrix::from_element(3, 3, 100.0), ..near.clone() };
    let a = matnorm_sample(&near, 10, 1).unwrap();
    let b = matnorm_sample(&far, 10, 2).unwrap();
    let stack = MatrixStack::new(a.iter().chain(b.iter()).cloned().collect()).unwrap();
    let truth: Vec<usize> = (0..20).map(|i| i / 10).collect();
    let cfg = FitConfig::default();
    let (model, resp) = initialize(&stack, 2, &cfg).unwrap();
    assert_eq!(adjusted_rand_index(&resp.hard_labels(), &truth).unwrap(), 1.0);
    let (again, _) = initialize(&stack, 2, &cfg).unwrap();
    assert_eq!(model, again);
}

#[test]
fn initialize_single_cluster_is_flip_flop() {
    let (stack, _) = small_scenario(10);
    let (model, _) = initialize(&stack, 1, &FitConfig::default()).unwrap();
    let ff = flip_flop_mle(&stack, &FlipFlopConfig::default()).unwrap();
    assert_eq!(model.weights, vec![1.0]);
    assert!((&model.components[0].mean - &ff.params.mean).amax() < 1e-12);
    assert!((&model.components[0].row_cov - &ff.params.row_cov).amax() < 1e-9);
}

#[test]
fn single_component_fit_recovers_flip_flop() {
    let theta = ComponentParams::new(
        DMatrix::from_fn(3, 4, |i, j| (i * j) as f64 * 0.1),
        ar_covariance(3, 0.5).unwrap(),
        ar_covariance(4, 0.2).unwrap(),
    )
    .unwrap();
    let stack = matnorm_sample(&theta, 80, 4).unwrap();
    let fit = fit_em(&stack, 1, &PenaltySpec::none(), &FitConfig::default()).unwrap();
    let ff = flip_flop_mle(&stack, &FlipFlopConfig::default()).unwrap();
    let c = &fit.model.components[0];
    assert!((&c.mean - &ff.params.mean).amax() < 1e-6);
    assert!((&c.row_cov - &ff.params.row_cov).amax() < 1e-6);
    assert!((&c.col_cov - &ff.params.col_cov).amax() < 1e-6);
}

#[test]
fn unpenalized_trace_is_nondecreasing() {
    for seed in 0..4 {
        let (stack, _) = small_scenario(20 + seed);
        let fit = fit_em(&stack, 2, &PenaltySpec::none(), &FitConfig { seed, ..Default::default() }).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn zero_lambda_fits_are_bit_identical() {
    let (stack, _) = small_scenario(30);
    let cfg = FitConfig { seed: 4, ..Default::default() };
    let base = fit_em(&stack, 2, &PenaltySpec::none(), &cfg).unwrap();
    for kind in PenaltyKind::ALL {
        let got = fit_em(&stack, 2, &PenaltySpec::new(kind, 0.0).unwrap(), &cfg).unwrap();
        assert_eq!(got.model, base.model);
        assert_eq!(got.objective_trace, base.objective_trace);
        assert_eq!(got.hard_labels, base.hard_labels);
    }
}

#[test]
fn fits_are_deterministic() {
    let (stack, _) = small_scenario(31);
    let cfg = FitConfig { seed: 11, ..Default::default() };
    let pen = PenaltySpec::new(PenaltyKind::L1, 0.5).unwrap();
    let a = fit_em(&stack, 2, &pen, &cfg).unwrap();
    let b = fit_em(&stack, 2, &pen, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn capped_fit_reports_non_convergence() {
    let (stack, _) = small_scenario(32);
    for kind in [PenaltyKind::L2, PenaltyKind::Nuclear] {
        let cfg = FitConfig { max_iter: 1, mean_tol: Some(0.0), n_starts: 1, ..Default::default() };
        let fit = fit_em(&stack, 2, &PenaltySpec::new(kind, 1.0).unwrap(), &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }
}

#[test]
fn components_come_in_canonical_order() {
    let (stack, _) = small_scenario(33);
    let fit = fit_em(&stack, 3, &PenaltySpec::none(), &FitConfig::default()).unwrap();
    for w in fit.model.weights.windows(2) {
        assert!(w[0] >= w[1]);
    }
}

#[test]
fn relabeling_components_keeps_the_partition() {
    let model = random_model(3, 2, 2, 40);
    let stack = stack_from(&model, 5, 41);
    let order = [2, 0, 1];
    let permuted = MixtureModel::new(
        order.iter().map(|&j| model.components[j].clone()).collect(),
        order.iter().map(|&j| model.weights[j]).collect(),
    )
    .unwrap();
    let a = e_step(&stack, &model).unwrap().hard_labels();
    let b = e_step(&stack, &permuted).unwrap().hard_labels();
    assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    let mapped: Vec<usize> = b.iter().map(|&l| order[l]).collect();
    assert_eq!(mapped, a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn responsibilities_are_row_stochastic(seed in any::<u64>(), k in 1usize..5) {
        let model = random_model(k, 2, 3, seed);
        let stack = stack_from(&model, 3, seed ^ 1);
        let resp = e_step(&stack, &model).unwrap();
        for row in resp.alpha.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
            prop_assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }

    #[test]
    fn penalty_norms_are_nonnegative_and_vanish_at_zero(seed in any::<u64>()) {
        let m = random_matrix(3, 4, &mut rng(seed));
        for kind in PenaltyKind::ALL {
            let pen = PenaltySpec::new(kind, 1.0).unwrap();
            prop_assert!(pen.norm(&m) >= 0.0);
            prop_assert_eq!(pen.norm(&DMatrix::zeros(3, 4)), 0.0);
        }
    }
}
