use gradlens::policy::{softmax, PolicySpec};
use gradlens::ParamVector;
use proptest::prelude::*;

fn rel_err(a: &ParamVector, b: &ParamVector) -> f64 {
    a.sub(b).unwrap().norm() / b.norm().max(1e-300)
}

fn triple(spec: PolicySpec) -> impl Strategy<Value = (PolicySpec, Vec<f64>, Vec<f64>, usize)> {
    let n = spec.param_count();
    let (d, k) = (spec.context_dim, spec.action_count);
    (
        prop::collection::vec(-1.5f64..1.5, n),
        prop::collection::vec(-2.0f64..2.0, d),
        0..k,
    )
        .prop_map(move |(p, c, a)| (spec.clone(), p, c, a))
}

fn any_spec() -> impl Strategy<Value = PolicySpec> {
    prop_oneof![
        (1usize..6, 2usize..6).prop_map(|(d, k)| PolicySpec::linear(d, k)),
        (1usize..5, 2usize..5, 1usize..6, any::<u64>()).prop_map(|(d, k, h, s)| PolicySpec::mlp(d, k, h, s)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn linear_score_matches_central_differences((spec, p, c, a) in triple(PolicySpec::linear(4, 3))) {
        let params = spec.params_from_values(p).unwrap();
        let g = spec.grad_log_prob(&params, &c, a).unwrap();
        let fd = spec.finite_diff_grad(&params, &c, a, 1e-5).unwrap();
        prop_assert!(rel_err(&g, &fd) < 1e-5);
    }

    #[test]
    fn mlp_score_matches_central_differences((spec, p, c, a) in triple(PolicySpec::mlp(3, 4, 5, 0))) {
        let params = spec.params_from_values(p).unwrap();
        let g = spec.grad_log_prob(&params, &c, a).unwrap();
        let fd = spec.finite_diff_grad(&params, &c, a, 1e-5).unwrap();
        prop_assert!(rel_err(&g, &fd) < 1e-4);
    }

    #[test]
    fn expected_score_is_zero(spec in any_spec(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = spec.params_from_values(values).unwrap();
        let ctx: Vec<f64> = (0..spec.context_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probs = spec.action_distribution(&params, &ctx).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(probs.iter().all(|&p| p > 0.0));
        let mut acc = ParamVector::zeros_like(&params);
        for (a, p) in probs.iter().enumerate() {
            acc.axpy(*p, &spec.grad_log_prob(&params, &ctx, a).unwrap()).unwrap();
        }
        prop_assert!(acc.values().iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn softmax_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|z| z + c).collect();
        for (x, y) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
