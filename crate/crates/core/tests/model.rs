mod common;

use ordlatent::model::{
    category_prob, conditional_log_density, cumulative_prob, logistic, LatentPoint, ModelConfig,
};
use ordlatent::simulate::{S1_THRESHOLDS, S2_THRESHOLDS};
use proptest::prelude::*;

#[test]
fn nominal_cumulative_probabilities() {
    let s1 = [0.01, 0.05, 0.70, 0.99];
    let s2 = [0.10, 0.20, 0.80, 0.90];
    for (a, p) in S1_THRESHOLDS.iter().zip(s1).chain(S2_THRESHOLDS.iter().zip(s2)) {
        assert!((logistic(*a) - p).abs() <= 0.005, "logistic({a}) vs {p}");
    }
}

fn config_strategy() -> impl Strategy<Value = (ModelConfig, u64)> {
    (1usize..4, 1usize..4, 2usize..7, any::<bool>(), any::<u64>())
        .prop_map(|(px, py, q, shared, seed)| (ModelConfig::new(px, py, q, shared).unwrap(), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn category_probabilities_normalize_and_cumulate(
        (config, seed) in config_strategy(),
        fx in -4.0f64..4.0,
        fy in -4.0f64..4.0,
    ) {
        let mut rng = common::rng(seed);
        let params = common::random_params(&mut rng, &config, 3.0);
        let f = LatentPoint::new(fx, fy);
        for var in 0..config.n_vars() {
            let probs: Vec<f64> = (1..=config.q).map(|s| category_prob(var, s, &f, &params).unwrap()).collect();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
            let mut running = 0.0;
            let mut last = 0.0;
            for (s, p) in probs.iter().enumerate() {
                running += p;
                let c = cumulative_prob(var, s + 1, &f, &params).unwrap();
                prop_assert!((c - running).abs() < 1e-12);
                prop_assert!(c >= last);
                last = c;
            }
            prop_assert_eq!(cumulative_prob(var, config.q, &f, &params).unwrap(), 1.0);
        }
    }

    #[test]
    fn cumulative_log_odds_shift_is_category_free(
        (config, seed) in config_strategy(),
        f1 in -3.0f64..3.0,
        f2 in -3.0f64..3.0,
    ) {
        let mut rng = common::rng(seed);
        let params = common::random_params(&mut rng, &config, 2.0);
        let a = LatentPoint::new(f1, f2);
        let b = LatentPoint::new(f2, f1);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        for var in 0..config.n_vars() {
            let shift: Vec<f64> = (1..config.q)
                .map(|s| {
                    logit(cumulative_prob(var, s, &a, &params).unwrap())
                        - logit(cumulative_prob(var, s, &b, &params).unwrap())
                })
                .collect();
            let expected = params.loading(var) * (a.get(params.block_of(var)) - b.get(params.block_of(var)));
            for d in shift {
                prop_assert!((d - expected).abs() < 1e-6 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn density_is_product_of_category_probabilities(
        (config, seed) in config_strategy(),
        fx in -3.0f64..3.0,
        fy in -3.0f64..3.0,
    ) {
        let mut rng = common::rng(seed);
        let params = common::random_params(&mut rng, &config, 3.0);
        let record = common::random_record(&mut rng, &config);
        let f = LatentPoint::new(fx, fy);
        let product: f64 = record
            .iter()
            .enumerate()
            .map(|(var, &k)| category_prob(var, k as usize + 1, &f, &params).unwrap())
            .product();
        let density = conditional_log_density(&record, &f, &params).unwrap().exp();
        prop_assert!((density - product).abs() <= 1e-12 * product.max(1e-300) + 1e-300);
    }
}
