use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dispatch::jackknife_se_of_mean;
use super::{bootstrap_oracle_ate, bootstrap_simulate, dispatch_oracle_ate, dispatch_simulate, simulate_arma, simulate_varma};
use crate::designs::DesignSpec;
use crate::error::{Error, Result};
use crate::estimation::{estimate_ate, fit_arma_yw, fit_varma_yw, select_order, Criterion, FitResult};
use crate::model::Model;
use crate::panel::PanelData;
use crate::rng::derive_seed;
use crate::simulation::DispatchConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Model { model: Model },
    Bootstrap { fit: FitResult, b_inject: f64 },
    Dispatch { config: DispatchConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FitSpec {
    Fixed { p: usize, q: usize },
    Auto { p_max: usize, q_max: usize, criterion: Criterion },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    /// Intervals per replicate, or days for the dispatch generator.
    pub horizon: usize,
    pub base_seed: u64,
    #[serde(skip)]
    pub jobs: usize,
    pub fit: FitSpec,
    pub burn_in: Option<usize>,
    /// Days per constant-treatment oracle run (dispatch only).
    pub oracle_days: usize,
}

impl McConfig {
    pub fn new(reps: usize, horizon: usize, base_seed: u64, fit: FitSpec) -> Self {
        McConfig { reps, horizon, base_seed, jobs: 1, fit, burn_in: None, oracle_days: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub rep: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    pub jobs: usize,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub design_label: String,
    pub design: DesignSpec,
    pub reps: usize,
    pub horizon: usize,
    /// Successful replicate estimates, in replicate order.
    pub ate_estimates: Vec<f64>,
    pub failures: Vec<ReplicateFailure>,
    pub oracle_ate: f64,
    /// Jackknife SE of a simulated oracle; zero for closed-form oracles.
    pub oracle_se: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Jackknife standard error of `mse`.
    pub se_of_mse: f64,
    pub mean: f64,
    pub variance: f64,
    pub config_digest: String,
    pub runtime: RuntimeMeta,
}

impl McReport {
    /// `horizon * variance`, the quantity compared with asymptotic MSEs.
    pub fn scaled_variance(&self) -> f64 {
        self.horizon as f64 * self.variance
    }

    pub fn scaled_mse(&self) -> f64 {
        self.horizon as f64 * self.mse
    }
}

fn generate(generator: &Generator, design: &DesignSpec, cfg: &McConfig, seed: u64) -> Result<PanelData> {
    match generator {
        Generator::Model { model: Model::Arma(m) } => simulate_arma(m, design, cfg.horizon, seed, cfg.burn_in),
        Generator::Model { model: Model::Varma(m) } => {
            if m.c.is_some() {
                return Err(Error::InvalidInput("Monte Carlo runs do not supply exogenous data; drop C".into()));
            }
            simulate_varma(m, design, None, cfg.horizon, seed, cfg.burn_in)
        }
        Generator::Bootstrap { fit, b_inject } => bootstrap_simulate(fit, *b_inject, design, cfg.horizon, seed),
        Generator::Dispatch { config } => dispatch_simulate(config, design, cfg.horizon, seed),
    }
}

fn fit_panel(panel: &PanelData, spec: &FitSpec) -> Result<FitResult> {
    let (p, q) = match spec {
        FitSpec::Fixed { p, q } => (*p, *q),
        FitSpec::Auto { p_max, q_max, criterion } => {
            let s = select_order(panel, *p_max, *q_max, *criterion)?;
            (s.p, s.q)
        }
    };
    if panel.d() == 1 && panel.e.is_none() {
        fit_arma_yw(panel, p, q)
    } else {
        fit_varma_yw(panel, p, q)
    }
}

fn oracle(generator: &Generator, cfg: &McConfig) -> Result<(f64, f64)> {
    match generator {
        Generator::Model { model } => Ok((model.true_ate()?, 0.0)),
        Generator::Bootstrap { fit, b_inject } => Ok((bootstrap_oracle_ate(fit, *b_inject)?, 0.0)),
        Generator::Dispatch { config } => dispatch_oracle_ate(config, cfg.oracle_days, cfg.base_seed),
    }
}

fn digest(generator: &Generator, design: &DesignSpec, cfg: &McConfig) -> Result<String> {
    let body = serde_json::json!({ "generator": generator, "design": design, "config": cfg });
    Ok(hex::encode(Sha256::digest(crate::io::to_json_string(&body)?.as_bytes())))
}

/// Empirical MSE of the ATE estimator under `design`.
///
/// Replicate `r` uses seed `derive_seed(base_seed, r)` and results are
/// gathered by index, so the report does not depend on `jobs`. Failed
/// replicates are listed and excluded from the statistics; an error is
/// returned only when every replicate fails.
pub fn monte_carlo_mse(generator: &Generator, design: &DesignSpec, cfg: &McConfig) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    let start = Instant::now();
    let (oracle_ate, oracle_se) = oracle(generator, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let panel = generate(generator, design, cfg, derive_seed(cfg.base_seed, r as u64))?;
                estimate_ate(&fit_panel(&panel, &cfg.fit)?)
            })
            .collect()
    });
    let mut ate_estimates = Vec::with_capacity(cfg.reps);
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ate_estimates.push(v),
            Err(e) => failures.push(ReplicateFailure { rep, error: e.to_string() }),
        }
    }
    let n = ate_estimates.len();
    if n == 0 {
        return Err(Error::AllFitsFailed(format!("all {} replicates failed; first: {}", cfg.reps, failures[0].error)));
    }
    let (mean, variance, mse, se_of_mse) = {
        let mean = ate_estimates.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            ate_estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sq: Vec<f64> = ate_estimates.iter().map(|v| (v - oracle_ate).powi(2)).collect();
        let mse = sq.iter().sum::<f64>() / n as f64;
        (mean, variance, mse, jackknife_se_of_mean(&sq))
    };
    Ok(McReport {
        design_label: design.label.clone(),
        design: design.clone(),
        reps: cfg.reps,
        horizon: cfg.horizon,
        ate_estimates,
        failures,
        oracle_ate,
        oracle_se,
        mse,
        rmse: mse.sqrt(),
        se_of_mse,
        mean,
        variance,
        config_digest: digest(generator, design, cfg)?,
        runtime: RuntimeMeta { jobs: cfg.jobs.max(1), elapsed_seconds: start.elapsed().as_secs_f64() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArmaModel;

    fn gen() -> Generator {
        Generator::Model { model: Model::Arma(ArmaModel::new(0.0, vec![0.5], 0.005, vec![], 1.0).unwrap()) }
    }

    #[test]
    fn single_replicate_mse() {
        let cfg = McConfig::new(1, 300, 7, FitSpec::Fixed { p: 1, q: 0 });
        let r = monte_carlo_mse(&gen(), &DesignSpec::ur(), &cfg).unwrap();
        assert_eq!(r.ate_estimates.len(), 1);
        assert_eq!(r.mse, (r.ate_estimates[0] - r.oracle_ate).powi(2));
        assert_eq!(r.rmse, r.mse.sqrt());
    }

    #[test]
    fn jobs_do_not_change_estimates() {
        let mut cfg = McConfig::new(16, 300, 99, FitSpec::Fixed { p: 1, q: 0 });
        let a = monte_carlo_mse(&gen(), &DesignSpec::ur(), &cfg).unwrap();
        cfg.jobs = 8;
        let b = monte_carlo_mse(&gen(), &DesignSpec::ur(), &cfg).unwrap();
        assert_eq!(a.ate_estimates, b.ate_estimates);
        assert_eq!(a.config_digest, b.config_digest);
    }

    #[test]
    fn failures_are_recorded() {
        // Switching about once per 300 steps: some replicates never switch and cannot be fit.
        let sticky = DesignSpec::balanced_markov(0.9965).unwrap();
        let cfg = McConfig::new(20, 200, 1, FitSpec::Fixed { p: 1, q: 0 });
        let r = monte_carlo_mse(&gen(), &sticky, &cfg).unwrap();
        assert!(!r.failures.is_empty() && r.failures.len() < 20, "{} failures", r.failures.len());
        assert_eq!(r.ate_estimates.len() + r.failures.len(), 20);
        assert!(r.mse.is_finite());
    }

    #[test]
    fn all_failures_is_an_error() {
        let cfg = McConfig::new(3, 200, 1, FitSpec::Fixed { p: 1, q: 0 });
        let e = monte_carlo_mse(&gen(), &DesignSpec::ad_limit(), &cfg).unwrap_err();
        assert!(matches!(e, crate::Error::AllFitsFailed(_)), "{e}");
    }
}
