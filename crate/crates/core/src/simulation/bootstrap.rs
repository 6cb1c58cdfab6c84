use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::designs::{generate_with, DesignSpec};
use crate::error::{Error, Result};
use crate::estimation::{ma_invertible, FitParams, FitResult};
use crate::linalg;
use crate::model::{leverage_solve, VarmaModel};
use crate::panel::{parse_dt_minutes, PanelData};
use crate::rng::{substream, streams};

/// Peak hours as `[start, end)` minutes after midnight.
const PEAK_START_MIN: f64 = 8.0 * 60.0;
const PEAK_END_MIN: f64 = 20.0 * 60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapOptions {
    /// Resample `Z_hat` in blocks of `q + 1` when no invertible MA stage exists.
    pub allow_block_fallback: bool,
    pub burn_in: Option<usize>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { allow_block_fallback: true, burn_in: None }
    }
}

/// 8am-8pm indicator for interval `t`, with interval 0 starting at midnight.
pub fn peak_dummy(t: i64, dt_minutes: f64) -> f64 {
    let minute = (t as f64 * dt_minutes).rem_euclid(24.0 * 60.0);
    f64::from(u8::from((PEAK_START_MIN..PEAK_END_MIN).contains(&minute)))
}

/// Single-column peak dummy for intervals `0..len` of length `dt_label`.
pub fn peak_dummy_column(len: usize, dt_label: &str) -> Result<DMatrix<f64>> {
    let dt = parse_dt_minutes(dt_label)?;
    Ok(DMatrix::from_fn(len, 1, |t, _| peak_dummy(t as i64, dt)))
}

struct Fitted {
    mu: DVector<f64>,
    a: Vec<DMatrix<f64>>,
    c: Option<DMatrix<f64>>,
    m: Option<Vec<DMatrix<f64>>>,
    sigma: Option<DMatrix<f64>>,
}

fn unpack(fit: &FitResult) -> Fitted {
    match &fit.params {
        FitParams::Arma { mu_hat, theta_hat, sigma2_hat, .. } => Fitted {
            mu: DVector::from_element(1, *mu_hat),
            a: fit.ar_matrices(),
            c: None,
            m: theta_hat.as_ref().map(|t| t.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect()),
            sigma: sigma2_hat.map(|s| DMatrix::from_element(1, 1, s)),
        },
        FitParams::Varma { mu_hat, a_hat, c_hat, m_hat, sigma_hat, .. } => Fitted {
            mu: DVector::from_column_slice(mu_hat),
            a: a_hat.clone(),
            c: c_hat.clone(),
            m: m_hat.clone(),
            sigma: sigma_hat.clone(),
        },
    }
}

/// `2 beta e^T (I - sum A_hat_j)^{-1} 1`: the ATE after injecting `beta` into every coordinate.
pub fn bootstrap_oracle_ate(fit: &FitResult, b_inject: f64) -> Result<f64> {
    let f = unpack(fit);
    let d = f.mu.len();
    let ar_sum = f.a.iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a);
    Ok(2.0 * b_inject * leverage_solve(&ar_sum, &DVector::from_element(d, 1.0))?[0])
}

pub fn bootstrap_simulate(fit: &FitResult, b_inject: f64, design: &DesignSpec, len: usize, seed: u64) -> Result<PanelData> {
    bootstrap_simulate_with(fit, b_inject, design, len, seed, &BootstrapOptions::default())
}

/// Parametric bootstrap from a fit with an injected effect `b_inject * 1`.
///
/// `Z_hat` is drawn first from the fitted MA process (or by block resampling
/// of the fit's residuals), then `Y_hat` is built from the fitted AR part, the
/// treatment, and `C_hat D_t` with `D_t` the peak-hour dummy.
pub fn bootstrap_simulate_with(
    fit: &FitResult,
    b_inject: f64,
    design: &DesignSpec,
    len: usize,
    seed: u64,
    opts: &BootstrapOptions,
) -> Result<PanelData> {
    if len == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let f = unpack(fit);
    let d = f.mu.len();
    let q = fit.q;
    let radius = linalg::spectral_radius(&linalg::block_companion(&f.a));
    if radius >= 1.0 - crate::model::STABILITY_MARGIN {
        return Err(Error::NonStationary { spectral_radius: radius });
    }
    if let Some(c) = &f.c {
        if c.ncols() != 1 {
            return Err(Error::InvalidInput(format!(
                "bootstrap drives a single peak-hour dummy, but the fit has {} exogenous columns",
                c.ncols()
            )));
        }
    }
    let burn = opts.burn_in.unwrap_or(10 * (fit.p + q + 1));
    let total = len + burn;

    let z = match (&f.m, &f.sigma) {
        (Some(m), Some(sigma)) if ma_invertible(m) => {
            let l = linalg::psd_factor(sigma)?;
            let mut rng = substream(seed, streams::NOISE);
            let mut eps = DMatrix::zeros(total + q, d);
            let mut draw = vec![0.0; d];
            for t in 0..total + q {
                for v in draw.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for i in 0..d {
                    eps[(t, i)] = (0..d).map(|k| l[(i, k)] * draw[k]).sum();
                }
            }
            DMatrix::from_fn(total, d, |t, i| {
                let mut v = eps[(t + q, i)];
                for (j, mj) in m.iter().enumerate() {
                    v += (0..d).map(|k| mj[(i, k)] * eps[(t + q - j - 1, k)]).sum::<f64>();
                }
                v
            })
        }
        _ => {
            let resid = match (&fit.residuals, opts.allow_block_fallback) {
                (Some(r), true) if r.nrows() > q => r,
                (_, false) => {
                    return Err(Error::BootstrapUnavailable("no invertible MA stage and block fallback disabled".into()))
                }
                _ => return Err(Error::BootstrapUnavailable("no invertible MA stage and no stored residuals".into())),
            };
            let block = q + 1;
            let n = resid.nrows();
            let mut rng = substream(seed, streams::RESAMPLE);
            let mut z = DMatrix::zeros(total, d);
            let mut t = 0;
            while t < total {
                let start = rng.random_range(0..=n - block);
                for k in 0..block.min(total - t) {
                    z.set_row(t + k, &resid.row(start + k));
                }
                t += block;
            }
            z
        }
    };

    let u = generate_with(design, total, &mut substream(seed, streams::DESIGN));
    let dt = parse_dt_minutes(&fit.dt_label)?;
    let dummy = f.c.as_ref().map(|_| DMatrix::from_fn(total, 1, |t, _| peak_dummy(t as i64 - burn as i64, dt)));
    let sim = VarmaModel {
        mu: f.mu.clone(),
        a: f.a.clone(),
        b: DVector::from_element(d, b_inject),
        m: Vec::new(),
        sigma: DMatrix::zeros(d, d),
        c: f.c.clone(),
    };
    let y = sim.filter(&z, &u.to_f64(), dummy.as_ref());
    let e = dummy.map(|dm| dm.rows(burn, len).into_owned());
    PanelData::new(y.rows(burn, len).into_owned(), u.tail(len), e, fit.dt_label.clone())
}
