use gradlens::grpo::{
    batch_gradient, clip_gradient, group_advantages, group_gradient, rollout_group, sgd_step,
    surrogate_objective, Regularizers, RolloutGroup, TrainConfig,
};
use gradlens::policy::PolicySpec;
use gradlens::rng::seeded;
use gradlens::tasks::{Family, TaskSpec};
use gradlens::ParamVector;
use proptest::prelude::*;
use rand::Rng;

fn random_params(spec: &PolicySpec, seed: u64, amp: f64) -> ParamVector {
    let mut rng = seeded(seed);
    let v = (0..spec.param_count()).map(|_| rng.random_range(-amp..amp)).collect();
    spec.params_from_values(v).unwrap()
}

fn groups(spec: &PolicySpec, params: &ParamVector, n: usize, g: usize, seed: u64) -> Vec<RolloutGroup> {
    let task = TaskSpec::new("t", Family::Parity, spec.context_dim, spec.action_count).with_difficulty(0.2);
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let mut grp = rollout_group(spec, params, &task, g, &mut rng).unwrap();
            grp.normalize().unwrap();
            grp
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn advantages_centered_and_scaled(rewards in prop::collection::vec(prop_oneof![Just(0.0), Just(0.1), Just(1.0), -5.0f64..5.0], 2..40)) {
        let adv = group_advantages(&rewards).unwrap();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        prop_assert!(mean.abs() <= 1e-10);
        let var = adv.iter().map(|a| a * a).sum::<f64>() / adv.len() as f64;
        prop_assert!(var <= 1.0 + 1e-9);
        if rewards.iter().all(|&r| r == rewards[0]) {
            prop_assert!(adv.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn advantages_invariant_to_affine_reward_shift(rewards in prop::collection::vec(-1.0f64..1.0, 2..20), shift in -3.0f64..3.0) {
        let a = group_advantages(&rewards).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = group_advantages(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_group_gradients(seed in any::<u64>(), n in 1usize..8) {
        let spec = PolicySpec::mlp(3, 4, 4, seed);
        let params = random_params(&spec, seed ^ 1, 0.8);
        let gs = groups(&spec, &params, n, 4, seed);
        let reg = Regularizers { entropy_coeff: 0.01, kl_coeff: 0.02 };
        let r = random_params(&spec, seed ^ 2, 0.8);
        let batch = batch_gradient(&spec, &params, &gs, &r, reg).unwrap();
        let mut avg = ParamVector::zeros_like(&params);
        for g in &gs {
            avg.axpy(1.0 / n as f64, &group_gradient(&spec, &params, g, &r, reg).unwrap()).unwrap();
        }
        prop_assert!(batch.sub(&avg).unwrap().norm() <= 1e-12 * avg.norm().max(1.0));
    }

    #[test]
    fn clip_never_exceeds_bound(v in prop::collection::vec(-100.0f64..100.0, 1..30), c in 0.01f64..10.0) {
        let g = ParamVector::from_vec(v.clone());
        let out = clip_gradient(&g, c);
        prop_assert!(out.norm() <= c * (1.0 + 1e-12));
        if g.norm() <= c {
            prop_assert_eq!(out.values(), g.values());
        }
    }
}

#[test]
fn batch_gradient_matches_surrogate_finite_differences() {
    for (i, spec) in [PolicySpec::linear(4, 3), PolicySpec::mlp(3, 4, 5, 9)].into_iter().enumerate() {
        let params = random_params(&spec, 40 + i as u64, 0.7);
        let r = random_params(&spec, 50 + i as u64, 0.7);
        let gs = groups(&spec, &params, 5, 6, 60 + i as u64);
        let reg = Regularizers { entropy_coeff: 0.05, kl_coeff: 0.1 };
        let g = batch_gradient(&spec, &params, &gs, &r, reg).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut e = vec![0.0; params.len()];
            e[k] = h;
            plus.axpy(1.0, &ParamVector::from_vec(e.clone())).unwrap();
            minus.axpy(-1.0, &ParamVector::from_vec(e)).unwrap();
            let fd = (surrogate_objective(&spec, &plus, &gs, &r, reg).unwrap()
                - surrogate_objective(&spec, &minus, &gs, &r, reg).unwrap())
                / (2.0 * h);
            worst = worst.max((fd - g.values()[k]).abs());
        }
        assert!(worst < 1e-5, "worst abs error {worst}");
    }
}

#[test]
fn gradient_is_linear_in_advantages() {
    let spec = PolicySpec::linear(4, 3);
    let params = random_params(&spec, 3, 1.0);
    let gs = groups(&spec, &params, 3, 5, 4);
    let g1 = batch_gradient(&spec, &params, &gs, &params, Regularizers::NONE).unwrap();
    let scaled: Vec<RolloutGroup> = gs
        .iter()
        .cloned()
        .map(|mut g| {
            g.advantages.iter_mut().for_each(|a| *a *= 2.5);
            g
        })
        .collect();
    let g2 = batch_gradient(&spec, &params, &scaled, &params, Regularizers::NONE).unwrap();
    assert!(g2.sub(&g1.scaled(2.5)).unwrap().norm() <= 1e-12);
}

#[test]
fn unnormalized_group_is_rejected() {
    let spec = PolicySpec::linear(4, 3);
    let params = spec.init_params().unwrap();
    let task = TaskSpec::new("t", Family::Parity, 4, 3);
    let g = rollout_group(&spec, &params, &task, 4, &mut seeded(1)).unwrap();
    assert!(batch_gradient(&spec, &params, &[g], &params, Regularizers::NONE).is_err());
}

#[test]
fn non_finite_gradient_aborts_step() {
    let params = ParamVector::from_vec(vec![0.0, 0.0]);
    let grad = ParamVector::from_vec(vec![f64::NAN, 1.0]);
    let err = sgd_step(&params, &grad, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, gradlens::Error::Numeric(_)));
}
