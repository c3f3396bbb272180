mod common;

use common::{
    build_case, exact_log_likelihood, h, random_dataset, random_params, random_record, rng,
    QUADRATURE_CASES, STEEP_CASES,
};
use ordlatent::estimator::to_unconstrained;
use ordlatent::laplace::{
    approx_log_likelihood, approx_log_likelihood_gradient, correction_matrix, evaluate,
    finite_difference_gradient, laplace_log_integral, solve_latent_scores,
    solve_latent_scores_from, SolverOptions,
};
use ordlatent::model::{conditional_log_density, LatentPoint, ModelConfig, ParameterSet, Thresholds};
use ordlatent::OrdinalDataset;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn quadrature_oracle_matches_reference_integration() {
    for (i, case) in QUADRATURE_CASES.iter().chain(&STEEP_CASES).enumerate() {
        let (data, params, exact) = build_case(case);
        let quad = exact_log_likelihood(&data, &params, 48);
        assert!((quad - exact).abs() < 1e-7, "case {i}: {quad} vs {exact}");
    }
}

#[test]
fn laplace_within_two_percent_of_exact() {
    for (i, case) in QUADRATURE_CASES.iter().enumerate() {
        let (data, params, exact) = build_case(case);
        let approx = approx_log_likelihood(&data, &params, &opts()).unwrap();
        let rel = ((approx - exact) / exact).abs();
        assert!(rel <= 0.02, "case {i}: approx {approx}, exact {exact}, rel {rel}");
    }
}

#[test]
fn laplace_error_grows_for_steep_single_indicators() {
    for (i, case) in STEEP_CASES.iter().enumerate() {
        let (data, params, exact) = build_case(case);
        let approx = approx_log_likelihood(&data, &params, &opts()).unwrap();
        let rel = ((approx - exact) / exact).abs();
        // the approximation underestimates and stays within a few percent
        assert!(approx < exact, "case {i}");
        assert!(rel > 0.02 && rel < 0.03, "case {i}: rel {rel}");
    }
}

#[test]
fn per_observation_term_equals_generic_laplace_formula() {
    let mut r = rng(11);
    for trial in 0..1000 {
        let config = ModelConfig::new(1 + trial % 3, 1 + (trial / 3) % 3, 2 + trial % 4, trial % 2 == 0)
            .unwrap();
        let params = random_params(&mut r, &config, 3.0);
        let record = random_record(&mut r, &config);
        let data = OrdinalDataset::from_codes(
            config,
            &[record.iter().map(|&c| c as usize + 1).collect()],
        )
        .unwrap();
        let assembled = approx_log_likelihood(&data, &params, &opts()).unwrap();

        let sol = solve_latent_scores(&record, &params, &opts()).unwrap();
        let g = correction_matrix(&record, &sol.f_hat, &params).unwrap();
        let log_det = (g[0][0] * g[1][1] - g[0][1] * g[1][0]).ln();
        // log of the normal density constant, then Laplace on the exponent
        let constant = -(2.0 * std::f64::consts::PI).ln() - 0.5 * params.log_det_r();
        let generic = constant + laplace_log_integral(h(&record, &sol.f_hat, &params), log_det, 2, 1.0);
        let tol = 1e-10 * (1.0 + assembled.abs());
        assert!(
            (assembled - generic).abs() <= tol,
            "trial {trial}: {assembled} vs {generic}"
        );
    }
}

#[test]
fn latent_score_matches_grid_search() {
    let mut r = rng(5);
    let config = ModelConfig::new(2, 2, 3, false).unwrap();
    for _ in 0..5 {
        let params = random_params(&mut r, &config, 2.0);
        let record = random_record(&mut r, &config);
        let sol = solve_latent_scores(&record, &params, &opts()).unwrap();
        // coarse scan of [-4, 4]^2, then successive local refinement
        let mut best = (f64::NEG_INFINITY, LatentPoint::ORIGIN);
        let coarse = 0.05;
        for i in 0..=160 {
            for j in 0..=160 {
                let f = LatentPoint::new(-4.0 + coarse * i as f64, -4.0 + coarse * j as f64);
                let v = h(&record, &f, &params);
                if v > best.0 {
                    best = (v, f);
                }
            }
        }
        let mut step = coarse;
        while step > 1e-4 {
            let centre = best.1;
            for i in -10..=10 {
                for j in -10..=10 {
                    let f = LatentPoint::new(
                        centre.f_x + step * i as f64 / 10.0,
                        centre.f_y + step * j as f64 / 10.0,
                    );
                    let v = h(&record, &f, &params);
                    if v > best.0 {
                        best = (v, f);
                    }
                }
            }
            step /= 10.0;
        }
        assert!((sol.f_hat.f_x - best.1.f_x).abs() < 1e-3);
        assert!((sol.f_hat.f_y - best.1.f_y).abs() < 1e-3);
    }
}

#[test]
fn correction_matrix_matches_finite_difference_hessian() {
    let mut r = rng(17);
    let e = 1e-4;
    for trial in 0..100 {
        let config = ModelConfig::new(1 + trial % 3, 1 + trial % 2, 2 + trial % 4, trial % 3 != 0).unwrap();
        let params = random_params(&mut r, &config, 3.0);
        let record = random_record(&mut r, &config);
        let sol = solve_latent_scores(&record, &params, &opts()).unwrap();
        let f = sol.f_hat;
        let at = |dx: f64, dy: f64| h(&record, &LatentPoint::new(f.f_x + dx, f.f_y + dy), &params);
        let hxx = (at(e, 0.0) - 2.0 * at(0.0, 0.0) + at(-e, 0.0)) / (e * e);
        let hyy = (at(0.0, e) - 2.0 * at(0.0, 0.0) + at(0.0, -e)) / (e * e);
        let hxy = (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e);
        let g = correction_matrix(&record, &f, &params).unwrap();
        let scale = 1.0 + g[0][0].abs().max(g[1][1].abs());
        for (analytic, fd) in [(g[0][0], -hxx), (g[1][1], -hyy), (g[0][1], -hxy), (g[1][0], -hxy)] {
            assert!(
                (analytic - fd).abs() <= 1e-5 * scale,
                "trial {trial}: {analytic} vs {fd}"
            );
        }
        assert_eq!(g[0][1], g[1][0]);
        assert_eq!(g, sol.gamma);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(23);
    for trial in 0..100 {
        let config = ModelConfig::new(1 + trial % 2, 1 + (trial / 2) % 2, 3 + trial % 2, trial % 2 == 0).unwrap();
        let params = random_params(&mut r, &config, 2.5);
        let data = random_dataset(&mut r, config, 6);
        let analytic = approx_log_likelihood_gradient(&data, &params, &opts()).unwrap();
        let fd = finite_difference_gradient(&data, &params, &opts(), 1e-5).unwrap();
        for (k, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            let tol = 1e-4 * a.abs().max(1e-2);
            assert!((a - f).abs() <= tol, "trial {trial} coordinate {k}: {a} vs {f}");
        }
    }
}

#[test]
fn zero_loadings_reduce_to_marginal_probabilities() {
    let config = ModelConfig::new(2, 2, 4, true).unwrap();
    let mut r = rng(3);
    let mut params = random_params(&mut r, &config, 1.0);
    params.loadings_x = vec![0.0; 2];
    params.loadings_y = vec![0.0; 2];
    let data = random_dataset(&mut r, config, 10);
    let value = approx_log_likelihood(&data, &params, &opts()).unwrap();
    let direct: f64 = data
        .rows()
        .map(|rec| conditional_log_density(rec, &LatentPoint::ORIGIN, &params).unwrap())
        .sum();
    assert!((value - direct).abs() < 1e-12);
    let g = approx_log_likelihood_gradient(&data, &params, &opts()).unwrap();
    assert!(g.last().unwrap().abs() < 1e-12);
}

#[test]
fn solution_satisfies_score_equation() {
    // F = R * d log g / dF at the solution, checked by differencing log g
    let mut r = rng(29);
    let config = ModelConfig::new(3, 2, 5, true).unwrap();
    for _ in 0..20 {
        let params = random_params(&mut r, &config, 3.0);
        let record = random_record(&mut r, &config);
        let sol = solve_latent_scores(&record, &params, &opts()).unwrap();
        let f = sol.f_hat;
        let e = 1e-6;
        let lg = |dx: f64, dy: f64| {
            conditional_log_density(&record, &LatentPoint::new(f.f_x + dx, f.f_y + dy), &params).unwrap()
        };
        let sx = (lg(e, 0.0) - lg(-e, 0.0)) / (2.0 * e);
        let sy = (lg(0.0, e) - lg(0.0, -e)) / (2.0 * e);
        let rho = params.rho;
        assert!((f.f_x - (sx + rho * sy)).abs() < 1e-6);
        assert!((f.f_y - (rho * sx + sy)).abs() < 1e-6);
        assert!(sol.residual_norm <= 1e-9 * (1.0 + sx.abs().max(sy.abs()) * 10.0));
    }
}

#[test]
fn warm_start_matches_cold_start() {
    let mut r = rng(31);
    let config = ModelConfig::new(2, 3, 4, true).unwrap();
    for _ in 0..20 {
        let params = random_params(&mut r, &config, 4.0);
        let data = random_dataset(&mut r, config, 8);
        let cold = evaluate(&data, &params, &opts(), None, false).unwrap();
        let warm: Vec<LatentPoint> = (0..data.n()).map(|i| LatentPoint::new(i as f64 - 3.0, 2.0)).collect();
        let hot = evaluate(&data, &params, &opts(), Some(&warm), false).unwrap();
        assert!(((cold.value - hot.value) / cold.value).abs() < 1e-10);
        let rec = data.row(0);
        let a = solve_latent_scores(rec, &params, &opts()).unwrap();
        let b = solve_latent_scores_from(rec, &params, &opts(), LatentPoint::new(3.0, -3.0)).unwrap();
        assert!((a.f_hat.f_x - b.f_hat.f_x).abs() < 1e-8);
    }
}

#[test]
fn reversing_symmetric_thresholds_negates_scores() {
    let config = ModelConfig::new(5, 5, 5, true).unwrap();
    let params = ParameterSet {
        thresholds: Thresholds::Shared(vec![-2.19, -1.39, 1.39, 2.19]),
        loadings_x: vec![1.60, 1.75, 1.70, 1.30, 1.50],
        loadings_y: vec![5.0, 9.0, 9.0, 5.0, 6.0],
        rho: 0.5,
    };
    let mut r = rng(37);
    let data = random_dataset(&mut r, config, 12);
    let rev = data.reversed();
    for i in 0..data.n() {
        let a = solve_latent_scores(data.row(i), &params, &opts()).unwrap();
        let b = solve_latent_scores(rev.row(i), &params, &opts()).unwrap();
        assert!((a.f_hat.f_x + b.f_hat.f_x).abs() < 1e-8);
        assert!((a.f_hat.f_y + b.f_hat.f_y).abs() < 1e-8);
    }
    let la = approx_log_likelihood(&data, &params, &opts()).unwrap();
    let lb = approx_log_likelihood(&rev, &params, &opts()).unwrap();
    assert!((la - lb).abs() < 1e-9 * la.abs());
}

#[test]
fn unconstrained_gradient_layout() {
    let config = ModelConfig::new(2, 1, 3, false).unwrap();
    let mut r = rng(41);
    let params = random_params(&mut r, &config, 1.0);
    let data = random_dataset(&mut r, config, 5);
    let g = approx_log_likelihood_gradient(&data, &params, &opts()).unwrap();
    assert_eq!(g.len(), to_unconstrained(&params).len());
    assert_eq!(g.len(), config.n_params());
}
