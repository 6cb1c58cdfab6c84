//! Small-signal asymptotic MSEs and efficiency indicators.
//!
//! With `c_k = w^T Gamma_Z(k) w` and `w = (I - sum A_j)^{-T} e` (scalar case:
//! `c_k = gamma_Z(k) / (1 - sum a_j)^2`), a design with limiting mean `xi` and
//! lag-k covariance `rho(k)` has
//! `T * MSE -> 4 / (1 - xi^2)^2 * [(1 - xi^2) c_0 + 2 sum_{k=1..q} rho(k) c_k]`.
//! The noise scale is always folded into `c_k`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::designs::{self, DesignSpec};
use crate::error::{Error, Result};
use crate::estimation::{FitParams, FitResult};
use crate::model::{leverage_solve, STABILITY_MARGIN};

/// Tolerance on the relative residual of the EI-MSE identity.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CkSource {
    Arma,
    Varma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkCoefficients {
    pub c0: f64,
    /// `c_1..c_q`.
    pub c: Vec<f64>,
    pub source: CkSource,
    /// Always true: `c_k` include the noise variance.
    pub scale_folded: bool,
}

impl CkCoefficients {
    pub fn new(c0: f64, c: Vec<f64>) -> Self {
        CkCoefficients { c0, c, source: CkSource::Arma, scale_folded: true }
    }

    pub fn q(&self) -> usize {
        self.c.len()
    }
}

pub fn ck_from_fit(fit: &FitResult) -> Result<CkCoefficients> {
    match &fit.params {
        FitParams::Arma { a_hat, gamma_z, .. } => {
            let denom = 1.0 - a_hat.iter().sum::<f64>();
            if denom.abs() <= STABILITY_MARGIN {
                return Err(Error::NearUnitRoot);
            }
            let scale = denom * denom;
            Ok(CkCoefficients {
                c0: gamma_z[0] / scale,
                c: gamma_z[1..].iter().map(|g| g / scale).collect(),
                source: CkSource::Arma,
                scale_folded: true,
            })
        }
        FitParams::Varma { a_hat, gamma_z, mu_hat, .. } => {
            let d = mu_hat.len();
            let ar_sum_t = a_hat.iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a.transpose());
            let mut e = DVector::zeros(d);
            e[0] = 1.0;
            let w = leverage_solve(&ar_sum_t, &e)?;
            let sandwich = |g: &DMatrix<f64>| (w.transpose() * g * &w)[(0, 0)];
            Ok(CkCoefficients {
                c0: sandwich(&gamma_z[0]),
                c: gamma_z[1..].iter().map(sandwich).collect(),
                source: CkSource::Varma,
                scale_folded: true,
            })
        }
    }
}

/// Asymptotic `T * MSE` of the ATE estimator under `design`, from `c_k`.
pub fn mse_from_ck(ck: &CkCoefficients, design: &DesignSpec) -> Result<f64> {
    let xi = designs::xi(design).value();
    let var_u = 1.0 - xi * xi;
    if var_u <= 1e-12 {
        return Err(Error::InvalidInput(format!(
            "design '{}' has a degenerate limiting treatment variance",
            design.label
        )));
    }
    let lagged: f64 = ck.c.iter().enumerate().map(|(i, c)| designs::autocov(design, i + 1) * c).sum();
    Ok(4.0 / (var_u * var_u) * (var_u * ck.c0 + 2.0 * lagged))
}

pub fn asymptotic_mse(fit: &FitResult, design: &DesignSpec) -> Result<f64> {
    mse_from_ck(&ck_from_fit(fit)?, design)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recommendation {
    AD,
    UR,
    AT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub ei_ad: f64,
    pub ei_at: f64,
    /// `K` in `mse_AD - mse_UR = 8 K EI_AD`.
    pub k_scale: f64,
    /// Keyed by `AD` (the `tau -> infinity` limit), `UR` and `AT`.
    pub mse: BTreeMap<String, f64>,
    pub recommendation: Recommendation,
    /// Largest relative residual of the two EI-MSE identities.
    pub identity_residual: f64,
    pub identity_holds: bool,
    /// SHA-256 of the fit's JSON form.
    pub model_ref: String,
}

pub fn fit_digest(fit: &FitResult) -> String {
    let json = crate::io::to_json_string(fit).expect("fit results serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// EI_AD / EI_AT from residual autocovariances, with the per-design MSEs.
///
/// Scalar fits normalize by the innovation variance (MA stage if present,
/// else `gamma_Z(0)`); vector fits use the sandwiched `c_k` with `K = 1`.
pub fn efficiency_indicators(fit: &FitResult) -> Result<EfficiencyReport> {
    let ck = ck_from_fit(fit)?;
    let signed = |alternate: bool| -> f64 {
        ck.c.iter()
            .enumerate()
            .map(|(i, c)| if alternate && i % 2 == 0 { -c } else { *c })
            .sum()
    };
    let (ei_ad, ei_at, k_scale) = match &fit.params {
        FitParams::Arma { a_hat, gamma_z, sigma2_hat, .. } => {
            let s2 = sigma2_hat.filter(|s| *s > 0.0).unwrap_or(gamma_z[0]);
            let denom = 1.0 - a_hat.iter().sum::<f64>();
            if s2 > 0.0 {
                let ei = |alternate: bool| -> f64 {
                    gamma_z[1..]
                        .iter()
                        .enumerate()
                        .map(|(i, g)| if alternate && i % 2 == 0 { -g } else { *g })
                        .sum::<f64>()
                        / s2
                };
                (ei(false), ei(true), s2 / (denom * denom))
            } else {
                (0.0, 0.0, 0.0)
            }
        }
        FitParams::Varma { .. } => (signed(false), signed(true), 1.0),
    };

    let mse_ad = mse_from_ck(&ck, &DesignSpec::ad_limit())?;
    let mse_ur = mse_from_ck(&ck, &DesignSpec::ur())?;
    let mse_at = mse_from_ck(&ck, &DesignSpec::at())?;
    let scale = mse_ad.abs().max(mse_ur.abs()).max(mse_at.abs()).max(f64::MIN_POSITIVE);
    let identity_residual = ((mse_ad - mse_ur - 8.0 * k_scale * ei_ad).abs() / scale)
        .max((mse_at - mse_ur - 8.0 * k_scale * ei_at).abs() / scale);

    let recommendation = if ei_ad < 0.0 && ei_ad < ei_at {
        Recommendation::AD
    } else if ei_at < 0.0 && ei_at < ei_ad {
        Recommendation::AT
    } else if ei_ad > 0.0 && ei_at > 0.0 {
        Recommendation::UR
    } else {
        [(Recommendation::UR, mse_ur), (Recommendation::AD, mse_ad), (Recommendation::AT, mse_at)]
            .into_iter()
            .fold((Recommendation::UR, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
            .0
    };

    let mse = BTreeMap::from([("AD".to_string(), mse_ad), ("UR".to_string(), mse_ur), ("AT".to_string(), mse_at)]);
    Ok(EfficiencyReport {
        ei_ad,
        ei_at,
        k_scale,
        mse,
        recommendation,
        identity_residual,
        identity_holds: identity_residual <= IDENTITY_TOL,
        model_ref: fit_digest(fit),
    })
}
