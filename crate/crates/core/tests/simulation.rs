use armadesign::designs::{generate, DesignSpec};
use armadesign::estimation::{estimate_ate, fit_varma_yw, FitParams, FitResult};
use armadesign::simulation::{
    bootstrap_oracle_ate, bootstrap_simulate, bootstrap_simulate_with, dispatch_oracle_ate, dispatch_run,
    dispatch_simulate, monte_carlo_mse, peak_dummy, simulate_arma, simulate_varma, BootstrapOptions, DispatchConfig,
    FitSpec, Generator, McConfig,
};
use armadesign::{ArmaModel, Error, Model, TreatmentSequence, VarmaModel};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Mean and batch-means standard error.
fn batch_mean(x: &[f64], batches: usize) -> (f64, f64) {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let v = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (v / batches as f64).sqrt())
}

fn seed_with_first(design: &DesignSpec, sign: i8, from: u64) -> u64 {
    (from..).find(|&s| generate(design, 1, s).values()[0] == sign).unwrap()
}

#[test]
fn ma2_residual_autocovariances() {
    let m = ArmaModel::new(0.0, vec![], 0.0, vec![0.3, 0.2], 1.0).unwrap();
    let truth = m.residual_autocov();
    let y = simulate_arma(&m, &DesignSpec::ur(), 1_000_000, 5, None).unwrap().outcome();
    for (k, g) in truth.iter().enumerate().chain([(3, &0.0)]) {
        let prods: Vec<f64> = (k..y.len()).map(|t| y[t] * y[t - k]).collect();
        let (mean, se) = batch_mean(&prods, 100);
        assert!((mean - g).abs() < 3.0 * se, "lag {k}: {mean} vs {g} (se {se})");
    }
}

#[test]
fn var1_covariance_matches_lyapunov_solution() {
    let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.4]);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let m = VarmaModel::new(DVector::zeros(2), vec![a.clone()], DVector::zeros(2), vec![], sigma.clone(), None).unwrap();
    let mut lyap = sigma.clone();
    for _ in 0..2000 {
        lyap = &a * &lyap * a.transpose() + &sigma;
    }
    let y = simulate_varma(&m, &DesignSpec::ur(), None, 1_000_000, 9, None).unwrap().y;
    let n = y.nrows() as f64;
    let mean = y.row_sum() / n;
    let centred = DMatrix::from_fn(y.nrows(), 2, |t, i| y[(t, i)] - mean[i]);
    let cov = centred.transpose() * &centred / n;
    for i in 0..2 {
        for j in 0..2 {
            let rel = (cov[(i, j)] - lyap[(i, j)]).abs() / lyap[(i, j)].abs();
            assert!(rel < 0.05, "({i},{j}): {} vs {}", cov[(i, j)], lyap[(i, j)]);
        }
    }
}

#[test]
fn d1_varma_simulation_matches_arma() {
    let m = ArmaModel::new(0.4, vec![0.5, -0.2], 0.3, vec![0.6], 1.5).unwrap();
    let d = DesignSpec::ad(12).unwrap();
    let a = simulate_arma(&m, &d, 3000, 17, None).unwrap();
    let v = simulate_varma(&VarmaModel::from_arma(&m), &d, None, 3000, 17, None).unwrap();
    assert_eq!(a.u, v.u);
    assert!((a.y - v.y).amax() < 1e-12);
}

#[test]
fn generators_are_deterministic() {
    let m = ArmaModel::new(0.0, vec![0.5], 0.1, vec![0.2], 1.0).unwrap();
    let d = DesignSpec::ur();
    assert_eq!(simulate_arma(&m, &d, 500, 3, None).unwrap(), simulate_arma(&m, &d, 500, 3, None).unwrap());
    let vm = VarmaModel::from_arma(&m);
    assert_eq!(simulate_varma(&vm, &d, None, 500, 3, None).unwrap(), simulate_varma(&vm, &d, None, 500, 3, None).unwrap());
    let fit = FitResult::from_model(&Model::Varma(vm));
    assert_eq!(bootstrap_simulate(&fit, 0.1, &d, 500, 3).unwrap(), bootstrap_simulate(&fit, 0.1, &d, 500, 3).unwrap());
    let cfg = DispatchConfig::default();
    assert_eq!(dispatch_simulate(&cfg, &d, 3, 3).unwrap(), dispatch_simulate(&cfg, &d, 3, 3).unwrap());
    assert_ne!(simulate_arma(&m, &d, 500, 3, None).unwrap(), simulate_arma(&m, &d, 500, 4, None).unwrap());
}

/// A VARMA(1,1) fit with a peak-hour coefficient, taken from simulated half-hourly data.
fn pilot_fit() -> FitResult {
    let mut m = VarmaModel::new(
        DVector::from_vec(vec![1.0, 0.5]),
        vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3])],
        DVector::from_vec(vec![0.05, 0.0]),
        vec![DMatrix::identity(2, 2) * 0.4],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
        None,
    )
    .unwrap();
    m.c = Some(DMatrix::from_row_slice(2, 1, &[0.7, 0.2]));
    let n = 20_000;
    let e = DMatrix::from_fn(n, 1, |t, _| peak_dummy(t as i64, 30.0));
    let panel = simulate_varma(&m, &DesignSpec::ur(), Some(&e), n, 21, None).unwrap();
    fit_varma_yw(&panel, 1, 1).unwrap()
}

#[test]
fn bootstrap_without_effect_keeps_fitted_mean() {
    let fit = pilot_fit();
    let (mu, a, c) = match &fit.params {
        FitParams::Varma { mu_hat, a_hat, c_hat, .. } => (DVector::from_column_slice(mu_hat), a_hat[0].clone(), c_hat.clone().unwrap()),
        _ => unreachable!(),
    };
    // Half of every day is peak time at 30-minute intervals.
    let rhs = mu + c.column(0) * 0.5;
    let implied = (DMatrix::identity(2, 2) - a).lu().solve(&rhs).unwrap();
    let panel = bootstrap_simulate(&fit, 0.0, &DesignSpec::ur(), 960_000, 8).unwrap();
    assert!(panel.e.is_some());
    for i in 0..2 {
        let col: Vec<f64> = panel.y.column(i).iter().copied().collect();
        let (mean, se) = batch_mean(&col, 100);
        assert!((mean - implied[i]).abs() < 3.0 * se, "coordinate {i}: {mean} vs {} (se {se})", implied[i]);
    }
}

#[test]
fn bootstrap_constant_runs_recover_oracle() {
    let fit = pilot_fit();
    let beta = 0.2;
    let oracle = bootstrap_oracle_ate(&fit, beta).unwrap();
    let constant = DesignSpec::ad_limit();
    let plus = seed_with_first(&constant, 1, 100);
    let minus = seed_with_first(&constant, -1, 100);
    let run = |seed| {
        let p = bootstrap_simulate(&fit, beta, &constant, 1_000_000, seed).unwrap();
        let y: Vec<f64> = p.y.column(0).iter().copied().collect();
        batch_mean(&y, 100)
    };
    let ((mp, sp), (mm, sm)) = (run(plus), run(minus));
    let se = (sp * sp + sm * sm).sqrt();
    assert!((mp - mm - oracle).abs() < 3.0 * se, "{} vs {oracle} (se {se})", mp - mm);
}

#[test]
fn bootstrap_block_fallback() {
    let mut fit = pilot_fit();
    if let FitParams::Varma { m_hat, .. } = &mut fit.params {
        *m_hat = None;
    }
    let panel = bootstrap_simulate(&fit, 0.1, &DesignSpec::ur(), 2000, 4).unwrap();
    assert!(panel.y.iter().all(|v| v.is_finite()));
    let strict = BootstrapOptions { allow_block_fallback: false, burn_in: None };
    assert!(matches!(
        bootstrap_simulate_with(&fit, 0.1, &DesignSpec::ur(), 2000, 4, &strict),
        Err(Error::BootstrapUnavailable(_))
    ));
    fit.residuals = None;
    assert!(matches!(bootstrap_simulate(&fit, 0.1, &DesignSpec::ur(), 2000, 4), Err(Error::BootstrapUnavailable(_))));
}

#[test]
fn dispatch_without_drivers() {
    let cfg = DispatchConfig { n_drivers: 0, ..DispatchConfig::default() };
    let u = generate(&DesignSpec::ur(), 10 * cfg.steps_per_day, 1);
    let out = dispatch_run(&cfg, &u, 1).unwrap();
    assert!(out.panel.y.column(0).iter().all(|&v| v == 0.0));
    assert!(out.panel.y.column(2).iter().all(|&v| v == 0.0));
    for (t, s) in out.trace.iter().enumerate() {
        assert_eq!(s.matched, 0);
        assert_eq!(s.waiting, s.spawned - s.cancelled);
        // Nothing is matched, so the pre-matching queue is the final one.
        assert_eq!(out.panel.y[(t, 1)], s.waiting as f64);
    }
    assert!(out.trace.last().unwrap().spawned > 0);
}

#[test]
fn dispatch_conservation() {
    for (seed, drivers) in [(1u64, 50usize), (2, 5), (3, 200)] {
        let cfg = DispatchConfig { n_drivers: drivers, ..DispatchConfig::default() };
        let u = generate(&DesignSpec::ad(7).unwrap(), 30 * cfg.steps_per_day, seed);
        let out = dispatch_run(&cfg, &u, seed).unwrap();
        for s in &out.trace {
            assert!(s.income >= 0.0);
            assert_eq!(s.idle + s.busy, drivers);
            assert!(s.completed <= s.matched && s.matched <= s.spawned);
            assert_eq!(s.spawned, s.matched + s.cancelled + s.waiting);
        }
        for (t, s) in out.trace.iter().enumerate().skip(1) {
            let matched_now = s.matched - out.trace[t - 1].matched;
            assert_eq!(out.panel.y[(t, 1)] as usize, s.waiting + matched_now);
            assert_eq!(out.panel.y[(t, 2)] as usize, s.idle + matched_now);
        }
        assert_eq!(out.panel.len(), 30 * cfg.steps_per_day);
        assert_eq!(out.panel.dt_label, "72min");
    }
}

#[test]
fn dispatch_oracle_is_bonus_times_matches() {
    let cfg = DispatchConfig::default();
    let days = 200;
    let (ate, se) = dispatch_oracle_ate(&cfg, days, 11).unwrap();
    let plus = dispatch_run(&cfg, &TreatmentSequence::constant(1, days * cfg.steps_per_day), 11).unwrap();
    let matched = plus.trace.last().unwrap().matched as f64;
    let expected = cfg.treatment_effect * matched / (days * cfg.steps_per_day) as f64;
    assert!((ate - expected).abs() < 1e-9, "{ate} vs {expected}");
    // Every order is served on both runs here, so the daily differences coincide.
    assert!(se.is_finite() && se >= 0.0);
}

#[test]
fn dispatch_null_effect() {
    let cfg = DispatchConfig { treatment_effect: 0.0, ..DispatchConfig::default() };
    let ates: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let panel = dispatch_simulate(&cfg, &DesignSpec::ur(), 100, 500 + s).unwrap();
            estimate_ate(&fit_varma_yw(&panel, 1, 0).unwrap()).unwrap()
        })
        .collect();
    let n = ates.len() as f64;
    let mean = ates.iter().sum::<f64>() / n;
    let se = (ates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn monte_carlo_ar1_ur() {
    let m = ArmaModel::new(0.0, vec![0.5], 0.005, vec![], 1.0).unwrap();
    let generator = Generator::Model { model: Model::Arma(m) };
    let mut cfg = McConfig::new(500, 2000, 2024, FitSpec::Fixed { p: 1, q: 0 });
    cfg.jobs = 8;
    let rep = monte_carlo_mse(&generator, &DesignSpec::ur(), &cfg).unwrap();
    assert!((rep.scaled_mse() - 16.0).abs() < 0.15 * 16.0, "T*mse {}", rep.scaled_mse());
    assert_eq!(rep.ate_estimates.len(), 500);
    let mse = rep.ate_estimates.iter().map(|a| (a - rep.oracle_ate).powi(2)).sum::<f64>() / 500.0;
    assert!((rep.mse - mse).abs() < 1e-15 && (rep.rmse - mse.sqrt()).abs() < 1e-15);
    assert!(rep.se_of_mse > 0.0);
}

#[test]
fn monte_carlo_single_replicate_and_jobs() {
    let m = ArmaModel::new(0.0, vec![0.5], 0.05, vec![0.3], 1.0).unwrap();
    let generator = Generator::Model { model: Model::Arma(m) };
    let one = McConfig::new(1, 1000, 5, FitSpec::Fixed { p: 1, q: 1 });
    let rep = monte_carlo_mse(&generator, &DesignSpec::ur(), &one).unwrap();
    assert_eq!(rep.mse, (rep.ate_estimates[0] - rep.oracle_ate).powi(2));

    let mut cfg = McConfig::new(40, 1000, 5, FitSpec::Auto { p_max: 2, q_max: 2, criterion: "bic".parse().unwrap() });
    let serial = monte_carlo_mse(&generator, &DesignSpec::at(), &cfg).unwrap();
    cfg.jobs = 8;
    let parallel = monte_carlo_mse(&generator, &DesignSpec::at(), &cfg).unwrap();
    assert_eq!(serial.ate_estimates, parallel.ate_estimates);
    assert_eq!(serial.config_digest, parallel.config_digest);
    assert_eq!(serial.mse.to_bits(), parallel.mse.to_bits());
}

#[test]
fn monte_carlo_records_failures() {
    // A constant design never identifies the effect.
    let m = ArmaModel::new(0.0, vec![0.5], 0.05, vec![], 1.0).unwrap();
    let generator = Generator::Model { model: Model::Arma(m) };
    let cfg = McConfig::new(3, 500, 1, FitSpec::Fixed { p: 1, q: 0 });
    match monte_carlo_mse(&generator, &DesignSpec::ad_limit(), &cfg) {
        Ok(rep) => panic!("expected failure, got {} estimates", rep.ate_estimates.len()),
        Err(Error::AllFitsFailed(_)) => {}
        Err(e) => panic!("{e}"),
    }
}
