//! Yule-Walker (instrumental-variable) fitting of controlled (V)ARMA models.
//!
//! One moment engine serves both model kinds. For rows `t >= p + q` it uses
//! regressors `X_t = (U_t, 1, Y_{t-1}, .., Y_{t-p}, E_t)` and instruments
//! `W_t = (U_t, 1, Y_{t-q-1}, .., Y_{t-q-p}, E_t)`; the MA residual is
//! uncorrelated with every instrument, so `S_WX Theta = S_WY` identifies
//! `Theta = [b; mu; A_1^T; ..; A_p^T; C^T]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix};
use crate::model::{leverage_solve, ArmaModel, Model, VarmaModel, STABILITY_MARGIN};
use crate::panel::{PanelData, DEFAULT_DT_LABEL};

/// Moment systems with a larger equilibrated condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

const MA_MAX_ITER: usize = 5000;
const MA_TOL: f64 = 1e-13;
const SPECTRAL_GRID: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
pub enum FitParams {
    Arma {
        mu_hat: f64,
        a_hat: Vec<f64>,
        b_hat: f64,
        /// `gamma_Z(0..=q)`.
        gamma_z: Vec<f64>,
        #[serde(default)]
        theta_hat: Option<Vec<f64>>,
        #[serde(default)]
        sigma2_hat: Option<f64>,
    },
    Varma {
        mu_hat: Vec<f64>,
        #[serde(rename = "A_hat", with = "serde_matrix::vec")]
        a_hat: Vec<DMatrix<f64>>,
        b_hat: Vec<f64>,
        #[serde(rename = "C_hat", default, with = "serde_matrix::option")]
        c_hat: Option<DMatrix<f64>>,
        /// `Gamma_Z(k) = Cov(Z_t, Z_{t-k})` for `k = 0..=q`.
        #[serde(with = "serde_matrix::vec")]
        gamma_z: Vec<DMatrix<f64>>,
        #[serde(rename = "M_hat", default, with = "option_vec")]
        m_hat: Option<Vec<DMatrix<f64>>>,
        #[serde(rename = "Sigma_hat", default, with = "serde_matrix::option")]
        sigma_hat: Option<DMatrix<f64>>,
    },
}

mod option_vec {
    use super::serde_matrix::{from_rows, to_rows};
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Vec<DMatrix<f64>>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(|v| v.iter().map(to_rows).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<DMatrix<f64>>>, D::Error> {
        let raw = Option::<Vec<Vec<Vec<f64>>>>::deserialize(d)?;
        raw.map(|all| all.iter().map(|r| from_rows(r).map_err(serde::de::Error::custom)).collect())
            .transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p: usize,
    pub q: usize,
    #[serde(flatten)]
    pub params: FitParams,
    /// `None` when the fitted AR part has a (near) unit root.
    pub ate_hat: Option<f64>,
    pub n_used: usize,
    pub ar_spectral_radius: f64,
    pub ar_stable: bool,
    pub dt_label: String,
    /// Moment-stage residuals `Z_hat`, `n_used x d`. Not serialized.
    #[serde(skip)]
    pub residuals: Option<DMatrix<f64>>,
}

impl FitResult {
    pub fn d(&self) -> usize {
        match &self.params {
            FitParams::Arma { .. } => 1,
            FitParams::Varma { mu_hat, .. } => mu_hat.len(),
        }
    }

    pub fn is_arma(&self) -> bool {
        matches!(self.params, FitParams::Arma { .. })
    }

    /// Residual autocovariances as matrices, whatever the model kind.
    pub fn gamma_z_matrices(&self) -> Vec<DMatrix<f64>> {
        match &self.params {
            FitParams::Arma { gamma_z, .. } => gamma_z.iter().map(|&g| DMatrix::from_element(1, 1, g)).collect(),
            FitParams::Varma { gamma_z, .. } => gamma_z.clone(),
        }
    }

    /// AR coefficient matrices, whatever the model kind.
    pub fn ar_matrices(&self) -> Vec<DMatrix<f64>> {
        match &self.params {
            FitParams::Arma { a_hat, .. } => a_hat.iter().map(|&a| DMatrix::from_element(1, 1, a)).collect(),
            FitParams::Varma { a_hat, .. } => a_hat.clone(),
        }
    }

    /// Fit-shaped view of a known model: population `Gamma_Z` and MA stage.
    pub fn from_model(model: &Model) -> Self {
        let stab = model.check_no_unit_root();
        let ate_hat = model.true_ate().ok();
        let params = match model {
            Model::Arma(m) => FitParams::Arma {
                mu_hat: m.mu,
                a_hat: m.a.clone(),
                b_hat: m.b,
                gamma_z: m.residual_autocov(),
                theta_hat: Some(m.theta.clone()),
                sigma2_hat: Some(m.sigma2),
            },
            Model::Varma(m) => FitParams::Varma {
                mu_hat: m.mu.iter().copied().collect(),
                a_hat: m.a.clone(),
                b_hat: m.b.iter().copied().collect(),
                c_hat: m.c.clone(),
                gamma_z: m.residual_autocov(),
                m_hat: Some(m.m.clone()),
                sigma_hat: Some(m.sigma.clone()),
            },
        };
        FitResult {
            p: model.p(),
            q: model.q(),
            params,
            ate_hat,
            n_used: 0,
            ar_spectral_radius: stab.spectral_radius,
            ar_stable: stab.stable,
            dt_label: DEFAULT_DT_LABEL.into(),
            residuals: None,
        }
    }

    /// The fitted parameters as a simulable model, when the MA stage exists.
    pub fn to_model(&self) -> Option<Model> {
        match &self.params {
            FitParams::Arma { mu_hat, a_hat, b_hat, theta_hat, sigma2_hat, .. } => Some(Model::Arma(ArmaModel {
                mu: *mu_hat,
                a: a_hat.clone(),
                b: *b_hat,
                theta: theta_hat.clone()?,
                sigma2: (*sigma2_hat)?,
            })),
            FitParams::Varma { mu_hat, a_hat, b_hat, c_hat, m_hat, sigma_hat, .. } => Some(Model::Varma(VarmaModel {
                mu: DVector::from_column_slice(mu_hat),
                a: a_hat.clone(),
                b: DVector::from_column_slice(b_hat),
                m: m_hat.clone()?,
                sigma: sigma_hat.clone()?,
                c: c_hat.clone(),
            })),
        }
    }
}

struct MomentSolution {
    theta: DMatrix<f64>,
    residuals: DMatrix<f64>,
}

fn regressor_names(d: usize, p: usize, m: usize) -> Vec<String> {
    let mut names = vec!["u".to_string(), "1".to_string()];
    for j in 1..=p {
        for i in 1..=d {
            names.push(if d == 1 { format!("y[t-{j}]") } else { format!("y{i}[t-{j}]") });
        }
    }
    names.extend((1..=m).map(|i| format!("e{i}")));
    names
}

fn solve_moments(panel: &PanelData, p: usize, q: usize) -> Result<MomentSolution> {
    let (t_len, d, m) = (panel.len(), panel.d(), panel.exog_dim());
    let r = 2 + d * p + m;
    let start = p + q;
    if t_len <= start + r {
        return Err(Error::InvalidInput(format!(
            "{t_len} rows are too few to fit p={p}, q={q} with {r} moment equations"
        )));
    }
    let n = t_len - start;
    let u = panel.u.values();
    let y = &panel.y;
    let mut s_wx = DMatrix::<f64>::zeros(r, r);
    let mut s_wy = DMatrix::<f64>::zeros(r, d);
    let mut x = vec![0.0; r];
    let mut w = vec![0.0; r];
    let fill = |buf: &mut [f64], t: usize, lag0: usize| {
        buf[0] = f64::from(u[t]);
        buf[1] = 1.0;
        for j in 1..=p {
            for i in 0..d {
                buf[2 + (j - 1) * d + i] = y[(t - lag0 - j, i)];
            }
        }
        if let Some(e) = &panel.e {
            for i in 0..m {
                buf[2 + d * p + i] = e[(t, i)];
            }
        }
    };
    for t in start..t_len {
        fill(&mut x, t, 0);
        fill(&mut w, t, q);
        for a in 0..r {
            for b in 0..r {
                s_wx[(a, b)] += w[a] * x[b];
            }
            for i in 0..d {
                s_wy[(a, i)] += w[a] * y[(t, i)];
            }
        }
    }
    s_wx /= n as f64;
    s_wy /= n as f64;

    let (cond, null) = linalg::equilibrated_condition(&s_wx);
    if !(cond <= MAX_CONDITION) {
        let names = regressor_names(d, p, m);
        let vmax = null.amax();
        let collinear = null
            .iter()
            .zip(names)
            .filter(|(v, _)| v.abs() > 0.1 * vmax)
            .map(|(_, n)| n)
            .collect();
        return Err(Error::NotIdentifying { condition: cond, collinear });
    }
    let theta = s_wx.col_piv_qr().solve(&s_wy).ok_or(Error::NotIdentifying {
        condition: f64::INFINITY,
        collinear: Vec::new(),
    })?;

    let mut residuals = DMatrix::zeros(n, d);
    for t in start..t_len {
        fill(&mut x, t, 0);
        for i in 0..d {
            let fitted: f64 = (0..r).map(|a| x[a] * theta[(a, i)]).sum();
            residuals[(t - start, i)] = y[(t, i)] - fitted;
        }
    }
    Ok(MomentSolution { theta, residuals })
}

/// `(1/n) sum_t Z_t Z_{t-k}^T` for `k = 0..=q`; lag 0 is symmetrized.
pub fn residual_autocov(z: &DMatrix<f64>, q: usize) -> Vec<DMatrix<f64>> {
    let (n, d) = (z.nrows(), z.ncols());
    (0..=q)
        .map(|k| {
            let mut g = DMatrix::zeros(d, d);
            for t in k..n {
                for i in 0..d {
                    for j in 0..d {
                        g[(i, j)] += z[(t, i)] * z[(t - k, j)];
                    }
                }
            }
            g /= n as f64;
            if k == 0 {
                linalg::symmetrize(&g)
            } else {
                g
            }
        })
        .collect()
}

/// Fits a scalar controlled ARMA(p, q) by Yule-Walker moments.
///
/// The MA stage (`theta_hat`, `sigma2_hat`) is attached when the residual
/// autocovariances are realizable.
pub fn fit_arma_yw(panel: &PanelData, p: usize, q: usize) -> Result<FitResult> {
    if panel.d() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "ARMA fit needs one observation column, got {}",
            panel.d()
        )));
    }
    if panel.e.is_some() {
        return Err(Error::InvalidInput("exogenous columns need the VARMA fit".into()));
    }
    let sol = solve_moments(panel, p, q)?;
    let th = &sol.theta;
    let a_hat: Vec<f64> = (0..p).map(|j| th[(2 + j, 0)]).collect();
    let (mu_hat, b_hat) = (th[(1, 0)], th[(0, 0)]);
    let gamma_z: Vec<f64> = residual_autocov(&sol.residuals, q).iter().map(|g| g[(0, 0)]).collect();
    let ma = fit_ma_innovations(&gamma_z, q).ok();
    let model = ArmaModel { mu: mu_hat, a: a_hat.clone(), b: b_hat, theta: vec![0.0; q], sigma2: 1.0 };
    let stab = model.check_no_unit_root();
    let denom = 1.0 - model.ar_sum();
    let ate_hat = (denom.abs() > STABILITY_MARGIN).then(|| 2.0 * b_hat / denom);
    Ok(FitResult {
        p,
        q,
        params: FitParams::Arma {
            mu_hat,
            a_hat,
            b_hat,
            gamma_z,
            theta_hat: ma.as_ref().map(|m| m.0.clone()),
            sigma2_hat: ma.map(|m| m.1),
        },
        ate_hat,
        n_used: sol.residuals.nrows(),
        ar_spectral_radius: stab.spectral_radius,
        ar_stable: stab.stable,
        dt_label: panel.dt_label.clone(),
        residuals: Some(sol.residuals),
    })
}

/// Fits a controlled VARMA(p, q), estimating `C` jointly when the panel has
/// exogenous columns. A non-stationary AR estimate is flagged, not rejected.
pub fn fit_varma_yw(panel: &PanelData, p: usize, q: usize) -> Result<FitResult> {
    let (d, m) = (panel.d(), panel.exog_dim());
    let sol = solve_moments(panel, p, q)?;
    let th = &sol.theta;
    let b_hat: Vec<f64> = th.row(0).iter().copied().collect();
    let mu_hat: Vec<f64> = th.row(1).iter().copied().collect();
    let a_hat: Vec<DMatrix<f64>> = (0..p).map(|j| th.rows(2 + j * d, d).transpose()).collect();
    let c_hat = (m > 0).then(|| th.rows(2 + d * p, m).transpose());
    let gamma_z = residual_autocov(&sol.residuals, q);
    let ma = fit_vma_innovations(&gamma_z, q).ok();
    let radius = linalg::spectral_radius(&linalg::block_companion(&a_hat));
    let ar_sum = a_hat.iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a);
    let ate_hat = leverage_solve(&ar_sum, &DVector::from_column_slice(&b_hat)).ok().map(|x| 2.0 * x[0]);
    Ok(FitResult {
        p,
        q,
        params: FitParams::Varma {
            mu_hat,
            a_hat,
            b_hat,
            c_hat,
            gamma_z,
            m_hat: ma.as_ref().map(|m| m.0.clone()),
            sigma_hat: ma.map(|m| m.1),
        },
        ate_hat,
        n_used: sol.residuals.nrows(),
        ar_spectral_radius: radius,
        ar_stable: radius < 1.0 - STABILITY_MARGIN,
        dt_label: panel.dt_label.clone(),
        residuals: Some(sol.residuals),
    })
}

/// The stored closed-form ATE; fails when the fit has a (near) unit root.
pub fn estimate_ate(fit: &FitResult) -> Result<f64> {
    fit.ate_hat.ok_or(Error::NearUnitRoot)
}

/// Scalar MA(q) coefficients and innovation variance matching `gamma[0..=q]`.
pub fn fit_ma_innovations(gamma: &[f64], q: usize) -> Result<(Vec<f64>, f64)> {
    let g: Vec<DMatrix<f64>> = gamma.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
    let (m, s) = fit_vma_innovations(&g, q)?;
    Ok((m.iter().map(|x| x[(0, 0)]).collect(), s[(0, 0)]))
}

/// Vector MA(q) coefficients `M_1..M_q` and `Sigma` matching `Gamma_Z(0..=q)`
/// by the multivariate innovations recursion. The limit is the invertible
/// factor when one exists.
pub fn fit_vma_innovations(gamma: &[DMatrix<f64>], q: usize) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    if gamma.len() < q + 1 {
        return Err(Error::InvalidInput(format!("need {} autocovariance lags, got {}", q + 1, gamma.len())));
    }
    let gamma = &gamma[..=q];
    let d = gamma[0].nrows();
    if gamma.iter().any(|g| g.nrows() != d || g.ncols() != d) {
        return Err(Error::DimensionMismatch("autocovariance lags differ in shape".into()));
    }
    // A prefix of a realizable sequence need not be realizable, so only the
    // variance and the full sequence are checked.
    if !spectral_density_psd(&gamma[..1]) {
        return Err(Error::Unrealizable { lag: 0 });
    }
    if !spectral_density_psd(gamma) {
        return Err(Error::Unrealizable { lag: q });
    }
    let g0 = linalg::symmetrize(&gamma[0]);
    if q == 0 {
        return Ok((Vec::new(), g0));
    }
    let scale = g0.amax().max(f64::MIN_POSITIVE);

    // Rolling window over n: thetas[n % (q+1)][j-1] = Theta_{n,j}, vs likewise.
    let zero = DMatrix::zeros(d, d);
    let mut thetas: Vec<Vec<DMatrix<f64>>> = vec![vec![zero.clone(); q]; q + 1];
    let mut vs: Vec<DMatrix<f64>> = vec![zero.clone(); q + 1];
    vs[0] = g0.clone();
    for n in 1..=MA_MAX_ITER {
        let slot = n % (q + 1);
        let mut cur: Vec<DMatrix<f64>> = vec![zero.clone(); q];
        for k in n.saturating_sub(q)..n {
            let j = n - k;
            let mut acc = gamma[j].clone();
            for i in n.saturating_sub(q)..k {
                acc -= &cur[n - i - 1] * &vs[i % (q + 1)] * thetas[k % (q + 1)][k - i - 1].transpose();
            }
            let vk = &vs[k % (q + 1)];
            let vk_inv = vk.clone().pseudo_inverse(1e-14 * scale).map_err(|_| Error::Unrealizable { lag: q })?;
            cur[j - 1] = acc * vk_inv;
        }
        let mut v = g0.clone();
        for i in n.saturating_sub(q)..n {
            let t = &cur[n - i - 1];
            v -= t * &vs[i % (q + 1)] * t.transpose();
        }
        let v = linalg::symmetrize(&v);
        let prev = &thetas[(n - 1) % (q + 1)];
        let change = cur
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b).amax())
            .fold((&v - &vs[(n - 1) % (q + 1)]).amax() / scale, f64::max);
        thetas[slot] = cur;
        vs[slot] = v;
        if n > q && change < MA_TOL {
            let s = n % (q + 1);
            return Ok((thetas[s].clone(), vs[s].clone()));
        }
    }
    let s = MA_MAX_ITER % (q + 1);
    Ok((thetas[s].clone(), vs[s].clone()))
}

/// Whether `f(w) = G0 + sum_k (G_k e^{-ikw} + G_k^T e^{ikw})` is PSD on a grid.
fn spectral_density_psd(gamma: &[DMatrix<f64>]) -> bool {
    let d = gamma[0].nrows();
    let scale = gamma[0].amax().max(f64::MIN_POSITIVE);
    let tol = -1e-10 * scale;
    for s in 0..=SPECTRAL_GRID {
        let w = std::f64::consts::PI * s as f64 / SPECTRAL_GRID as f64;
        let mut re = linalg::symmetrize(&gamma[0]);
        let mut im = DMatrix::<f64>::zeros(d, d);
        for (k, g) in gamma.iter().enumerate().skip(1) {
            let (sn, cs) = (k as f64 * w).sin_cos();
            re += (g + g.transpose()) * cs;
            im += (g.transpose() - g) * sn;
        }
        // Real symmetric embedding of the Hermitian matrix re + i im.
        let mut big = DMatrix::zeros(2 * d, 2 * d);
        big.view_mut((0, 0), (d, d)).copy_from(&re);
        big.view_mut((d, d), (d, d)).copy_from(&re);
        big.view_mut((0, d), (d, d)).copy_from(&(-&im));
        big.view_mut((d, 0), (d, d)).copy_from(&im);
        let min = if d == 1 {
            re[(0, 0)]
        } else {
            big.symmetric_eigenvalues().min()
        };
        if min < tol {
            return false;
        }
    }
    true
}

/// Whether all roots of `det(I + sum_j M_j z^j)` lie strictly outside the unit circle.
pub fn ma_invertible(m: &[DMatrix<f64>]) -> bool {
    let neg: Vec<DMatrix<f64>> = m.iter().map(|x| -x).collect();
    linalg::spectral_radius(&linalg::block_companion(&neg)) < 1.0 - STABILITY_MARGIN
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidInput(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub p: usize,
    pub q: usize,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub p: usize,
    pub q: usize,
    pub criterion: Criterion,
    pub scores: Vec<OrderScore>,
}

fn fit_auto(panel: &PanelData, p: usize, q: usize) -> Result<FitResult> {
    if panel.d() == 1 && panel.e.is_none() {
        fit_arma_yw(panel, p, q)
    } else {
        fit_varma_yw(panel, p, q)
    }
}

fn score_cell(panel: &PanelData, p: usize, q: usize, n_common: usize, criterion: Criterion) -> Result<f64> {
    let fit = fit_auto(panel, p, q)?;
    let z = fit.residuals.as_ref().expect("fresh fits carry residuals");
    let (n, d) = (z.nrows(), z.ncols());
    let (m_hat, _) = fit_vma_innovations(&fit.gamma_z_matrices(), q)?;
    // One-step prediction errors: e_t = Z_t - sum_j M_j e_{t-j}.
    let mut e = DMatrix::zeros(n, d);
    for t in 0..n {
        let mut v: DVector<f64> = z.row(t).transpose();
        for (j, mj) in m_hat.iter().enumerate() {
            if t > j {
                v -= mj * e.row(t - j - 1).transpose();
            }
        }
        e.set_row(t, &v.transpose());
    }
    let tail = e.rows(n - n_common, n_common);
    let cov = tail.transpose() * tail / n_common as f64;
    let logdet = match cov.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => return Err(Error::InvalidInput("degenerate prediction-error covariance".into())),
    };
    if !logdet.is_finite() {
        return Err(Error::InvalidInput("non-finite prediction-error variance".into()));
    }
    let m = panel.exog_dim();
    let k = if d == 1 { p + q + 2 + m } else { d * d * (p + q) + 2 * d + d * m } as f64;
    let penalty = match criterion {
        Criterion::Aic => 2.0 * k,
        Criterion::Bic => k * (n_common as f64).ln(),
    };
    Ok(n_common as f64 * logdet + penalty)
}

/// Grid search over `0..=p_max x 0..=q_max` by a Gaussian quasi-likelihood.
///
/// Every cell is scored on the same last `T - p_max - q_max` rows. Failed
/// cells are kept in the table with their error and skipped for the argmin;
/// ties go to the earlier cell in `(p, q)` order.
pub fn select_order(panel: &PanelData, p_max: usize, q_max: usize, criterion: Criterion) -> Result<OrderSelection> {
    let t_len = panel.len();
    if t_len <= 4 * (p_max + q_max) || t_len <= p_max + q_max + 2 {
        return Err(Error::OrderTooLarge(format!("{t_len} rows cannot support p_max={p_max}, q_max={q_max}")));
    }
    let n_common = t_len - p_max - q_max;
    let cells: Vec<(usize, usize)> = (0..=p_max).flat_map(|p| (0..=q_max).map(move |q| (p, q))).collect();
    let scores: Vec<OrderScore> = cells
        .par_iter()
        .map(|&(p, q)| match score_cell(panel, p, q, n_common, criterion) {
            Ok(s) => OrderScore { p, q, score: Some(s), error: None },
            Err(e) => OrderScore { p, q, score: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = scores
        .iter()
        .filter_map(|s| s.score.map(|v| (v, s.p, s.q)))
        .fold(None, |acc: Option<(f64, usize, usize)>, c| match acc {
            Some(a) if a.0 <= c.0 => Some(a),
            _ => Some(c),
        });
    match best {
        Some((_, p, q)) => Ok(OrderSelection { p, q, criterion, scores }),
        None => Err(Error::AllFitsFailed(
            scores.iter().filter_map(|s| s.error.clone()).next().unwrap_or_default(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::TreatmentSequence;

    #[test]
    fn ma1_by_hand() {
        let (th, s2) = fit_ma_innovations(&[1.25, 0.5], 1).unwrap();
        assert!((th[0] - 0.5).abs() < 1e-10, "{th:?}");
        assert!((s2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ma0_is_variance() {
        let (th, s2) = fit_ma_innovations(&[2.5], 0).unwrap();
        assert!(th.is_empty());
        assert_eq!(s2, 2.5);
    }

    #[test]
    fn unrealizable_ma1() {
        assert!(matches!(fit_ma_innovations(&[1.0, 0.9], 1), Err(Error::Unrealizable { lag: 1 })));
        assert!(matches!(fit_ma_innovations(&[-1.0], 0), Err(Error::Unrealizable { lag: 0 })));
    }

    #[test]
    fn innovations_prefers_invertible_factor() {
        // theta = 2, sigma2 = 1 has the same autocovariances as theta = 0.5, sigma2 = 4.
        let (th, s2) = fit_ma_innovations(&[5.0, 2.0], 1).unwrap();
        assert!((th[0] - 0.5).abs() < 1e-10);
        assert!((s2 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn constant_treatment_is_not_identifying() {
        let y: Vec<f64> = (0..200).map(|t| (t as f64 * 0.37).sin()).collect();
        let panel = PanelData::univariate(y, TreatmentSequence::constant(1, 200)).unwrap();
        match fit_arma_yw(&panel, 1, 0) {
            Err(Error::NotIdentifying { collinear, .. }) => {
                assert!(collinear.contains(&"u".to_string()));
                assert!(collinear.contains(&"1".to_string()));
            }
            other => panic!("expected identifiability failure, got {other:?}"),
        }
    }

    #[test]
    fn estimate_ate_examples() {
        let mut fit = FitResult::from_model(&Model::Arma(ArmaModel::new(0.0, vec![0.5], 0.25, vec![], 1.0).unwrap()));
        assert_eq!(estimate_ate(&fit).unwrap(), 1.0);
        fit.ate_hat = None;
        assert!(matches!(estimate_ate(&fit), Err(Error::NearUnitRoot)));
    }

    #[test]
    fn fit_json_round_trip() {
        let m = Model::Arma(ArmaModel::new(0.1, vec![0.5], 0.25, vec![0.3], 1.0).unwrap());
        let fit = FitResult::from_model(&m);
        let s = crate::io::to_json_string(&fit).unwrap();
        assert!(s.contains("\"model_kind\": \"arma\""));
        let back: FitResult = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fit);
    }
}
