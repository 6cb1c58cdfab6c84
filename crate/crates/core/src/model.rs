//! Controlled ARMA / VARMA parameter sets.
//!
//! The scalar model is
//! `Y_t = mu + sum_j a_j Y_{t-j} + b U_t + sum_{j=0..q} theta_j eps_{t-j}` with
//! `theta_0 = 1`; the vector model replaces the scalars by `mu`, `A_j`, `b`,
//! `M_j` (with `M_0 = I`) and adds an optional exogenous term `C E_t`.
//! Leading coefficients `theta_0` and `M_0` are never stored.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix};

/// Radii in `[1 - STABILITY_MARGIN, 1]` are reported unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    pub spectral_radius: f64,
}

impl Stability {
    fn from_radius(spectral_radius: f64) -> Self {
        Stability {
            stable: spectral_radius < 1.0 - STABILITY_MARGIN,
            spectral_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmaModel {
    pub mu: f64,
    pub a: Vec<f64>,
    pub b: f64,
    pub theta: Vec<f64>,
    pub sigma2: f64,
}

impl ArmaModel {
    pub fn new(mu: f64, a: Vec<f64>, b: f64, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        let m = ArmaModel { mu, a, b, theta, sigma2 };
        m.validate()?;
        Ok(m)
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    // sigma2 = 0 is accepted: it gives the noise-free recursion used in tests.
    pub fn validate(&self) -> Result<()> {
        let finite = self.mu.is_finite()
            && self.b.is_finite()
            && self.a.iter().chain(&self.theta).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite ARMA coefficient".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be a finite non-negative number, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    pub fn ar_sum(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Full MA polynomial `(1, theta_1, .., theta_q)`.
    pub fn ma_poly(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.theta.iter().copied()).collect()
    }

    pub fn check_no_unit_root(&self) -> Stability {
        let blocks: Vec<DMatrix<f64>> = self.a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        Stability::from_radius(linalg::spectral_radius(&linalg::block_companion(&blocks)))
    }

    pub fn true_ate(&self) -> Result<f64> {
        let s = self.check_no_unit_root();
        if !s.stable {
            return Err(Error::NonStationary { spectral_radius: s.spectral_radius });
        }
        Ok(2.0 * self.b / (1.0 - self.ar_sum()))
    }

    /// Long-run mean of `Y` with the treatment switched off.
    pub fn level(&self) -> f64 {
        let denom = 1.0 - self.ar_sum();
        if denom.abs() > STABILITY_MARGIN {
            self.mu / denom
        } else {
            0.0
        }
    }

    /// `gamma_Z(k) = sigma2 * sum_{j=k..q} theta_j theta_{j-k}` for `k = 0..=q`.
    pub fn residual_autocov(&self) -> Vec<f64> {
        let th = self.ma_poly();
        (0..th.len())
            .map(|k| self.sigma2 * (k..th.len()).map(|j| th[j] * th[j - k]).sum::<f64>())
            .collect()
    }

    /// Runs the recursion on a given noise and treatment stream.
    ///
    /// Pre-sample observations sit at [`ArmaModel::level`] and pre-sample
    /// noise is zero, so the output is a deterministic function of the inputs.
    pub fn filter(&self, noise: &[f64], u: &[f64]) -> Vec<f64> {
        assert_eq!(noise.len(), u.len(), "noise and treatment streams differ in length");
        let (p, q) = (self.p(), self.q());
        let level = self.level();
        let mut y = Vec::with_capacity(u.len());
        for t in 0..u.len() {
            let mut v = self.mu + self.b * u[t] + noise[t];
            for j in 1..=p {
                v += self.a[j - 1] * if t >= j { y[t - j] } else { level };
            }
            for j in 1..=q {
                if t >= j {
                    v += self.theta[j - 1] * noise[t - j];
                }
            }
            y.push(v);
        }
        y
    }

    /// Linear state-space form with a noise-free emission.
    ///
    /// Latent dimension is `max(p, q + 1)`. The state follows
    /// `X_{t+1} = F X_t + B_u U_t + R eps_{t+1}` and the observation is
    /// `Y_t = level + H X_t + C_u U_t`, where `level` is the intercept-induced
    /// mean. Starting from `X_0 = 0` reproduces [`ArmaModel::filter`].
    pub fn to_state_space(&self) -> StateSpaceForm {
        let (p, q) = (self.p(), self.q());
        let dim = p.max(q + 1);
        let coef = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let mut f = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            f[(i, 0)] = coef(&self.a, i);
            if i + 1 < dim {
                f[(i, i + 1)] = 1.0;
            }
        }
        let th = self.ma_poly();
        let noise = DVector::from_fn(dim, |i, _| coef(&th, i));
        let b_u = DVector::from_fn(dim, |i, _| self.b * coef(&self.a, i));
        let mut h = DVector::zeros(dim);
        h[0] = 1.0;
        StateSpaceForm { f, b_u, h, c_u: self.b, noise, level: self.level() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceForm {
    pub f: DMatrix<f64>,
    pub b_u: DVector<f64>,
    pub h: DVector<f64>,
    pub c_u: f64,
    pub noise: DVector<f64>,
    pub level: f64,
}

impl StateSpaceForm {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn filter(&self, noise: &[f64], u: &[f64]) -> Vec<f64> {
        assert_eq!(noise.len(), u.len(), "noise and treatment streams differ in length");
        let mut x = DVector::zeros(self.dim());
        let mut prev_u = 0.0;
        let mut out = Vec::with_capacity(u.len());
        for t in 0..u.len() {
            x = &self.f * &x + &self.b_u * prev_u + &self.noise * noise[t];
            out.push(self.level + self.h.dot(&x) + self.c_u * u[t]);
            prev_u = u[t];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarmaModel {
    pub mu: DVector<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    pub m: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    pub c: Option<DMatrix<f64>>,
}

impl VarmaModel {
    pub fn new(
        mu: DVector<f64>,
        a: Vec<DMatrix<f64>>,
        b: DVector<f64>,
        m: Vec<DMatrix<f64>>,
        sigma: DMatrix<f64>,
        c: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let model = VarmaModel { mu, a, b, m, sigma, c };
        model.validate()?;
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.m.len()
    }

    pub fn exog_dim(&self) -> usize {
        self.c.as_ref().map_or(0, |c| c.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::DimensionMismatch("VARMA dimension must be positive".into()));
        }
        let square = |m: &DMatrix<f64>| m.nrows() == d && m.ncols() == d;
        if self.b.len() != d {
            return Err(Error::DimensionMismatch(format!("b has length {}, expected {d}", self.b.len())));
        }
        if let Some(j) = self.a.iter().position(|m| !square(m)) {
            return Err(Error::DimensionMismatch(format!("A_{} is not {d}x{d}", j + 1)));
        }
        if let Some(j) = self.m.iter().position(|m| !square(m)) {
            return Err(Error::DimensionMismatch(format!("M_{} is not {d}x{d}", j + 1)));
        }
        if !square(&self.sigma) {
            return Err(Error::DimensionMismatch(format!("Sigma is not {d}x{d}")));
        }
        if let Some(c) = &self.c {
            if c.nrows() != d {
                return Err(Error::DimensionMismatch(format!("C has {} rows, expected {d}", c.nrows())));
            }
        }
        if (&self.sigma - self.sigma.transpose()).amax() > 1e-10 * self.sigma.amax().max(1.0) {
            return Err(Error::InvalidInput("Sigma is not symmetric".into()));
        }
        let eig = self.sigma.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * self.sigma.amax().max(1.0)) {
            return Err(Error::InvalidInput("Sigma is not positive semidefinite".into()));
        }
        Ok(())
    }

    pub fn from_arma(m: &ArmaModel) -> Self {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        VarmaModel {
            mu: DVector::from_element(1, m.mu),
            a: m.a.iter().map(|&v| one(v)).collect(),
            b: DVector::from_element(1, m.b),
            m: m.theta.iter().map(|&v| one(v)).collect(),
            sigma: one(m.sigma2),
            c: None,
        }
    }

    pub fn ar_sum(&self) -> DMatrix<f64> {
        let d = self.d();
        self.a.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m)
    }

    pub fn check_no_unit_root(&self) -> Stability {
        Stability::from_radius(linalg::spectral_radius(&linalg::block_companion(&self.a)))
    }

    pub fn true_ate(&self) -> Result<f64> {
        let s = self.check_no_unit_root();
        if !s.stable {
            return Err(Error::NonStationary { spectral_radius: s.spectral_radius });
        }
        let x = leverage_solve(&self.ar_sum(), &self.b)?;
        Ok(2.0 * x[0])
    }

    /// `(I - sum A_j)^{-1} mu`, the no-treatment mean.
    pub fn level(&self) -> DVector<f64> {
        leverage_solve(&self.ar_sum(), &self.mu).unwrap_or_else(|_| DVector::zeros(self.d()))
    }

    /// `Gamma_Z(k) = Cov(Z_t, Z_{t-k}) = sum_{j=k..q} M_j Sigma M_{j-k}^T`.
    pub fn residual_autocov(&self) -> Vec<DMatrix<f64>> {
        let d = self.d();
        let ident = DMatrix::identity(d, d);
        let mj = |j: usize| if j == 0 { &ident } else { &self.m[j - 1] };
        (0..=self.q())
            .map(|k| {
                (k..=self.q()).fold(DMatrix::zeros(d, d), |acc, j| {
                    acc + mj(j) * &self.sigma * mj(j - k).transpose()
                })
            })
            .collect()
    }

    /// Runs the recursion on a noise stream (`T x d`), treatments and optional
    /// exogenous rows (`T x m`). Returns `T x d` observations.
    pub fn filter(&self, noise: &DMatrix<f64>, u: &[f64], exog: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let n = u.len();
        let d = self.d();
        assert_eq!(noise.nrows(), n);
        assert_eq!(noise.ncols(), d);
        let level = self.level();
        let ce = match (&self.c, exog) {
            (Some(c), Some(e)) => Some(e * c.transpose()),
            _ => None,
        };
        let mut y = DMatrix::zeros(n, d);
        for t in 0..n {
            for i in 0..d {
                let mut v = self.mu[i] + self.b[i] * u[t] + noise[(t, i)];
                if let Some(ce) = &ce {
                    v += ce[(t, i)];
                }
                for (j, aj) in self.a.iter().enumerate() {
                    let lag = j + 1;
                    for k in 0..d {
                        let past = if t >= lag { y[(t - lag, k)] } else { level[k] };
                        v += aj[(i, k)] * past;
                    }
                }
                for (j, mj) in self.m.iter().enumerate() {
                    let lag = j + 1;
                    if t >= lag {
                        for k in 0..d {
                            v += mj[(i, k)] * noise[(t - lag, k)];
                        }
                    }
                }
                y[(t, i)] = v;
            }
        }
        y
    }
}

/// Solves `(I - a) x = rhs`, rejecting numerically singular systems.
pub(crate) fn leverage_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.nrows();
    let lhs = DMatrix::identity(d, d) - a;
    let (cond, _) = linalg::equilibrated_condition(&lhs);
    if !(cond < 1e12) {
        return Err(Error::NearUnitRoot);
    }
    lhs.lu().solve(rhs).ok_or(Error::NearUnitRoot)
}

/// Either kind of model, as stored in a model file.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Arma(ArmaModel),
    Varma(VarmaModel),
}

impl Model {
    pub fn check_no_unit_root(&self) -> Stability {
        match self {
            Model::Arma(m) => m.check_no_unit_root(),
            Model::Varma(m) => m.check_no_unit_root(),
        }
    }

    pub fn true_ate(&self) -> Result<f64> {
        match self {
            Model::Arma(m) => m.true_ate(),
            Model::Varma(m) => m.true_ate(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Model::Arma(m) => m.p(),
            Model::Varma(m) => m.p(),
        }
    }

    pub fn q(&self) -> usize {
        match self {
            Model::Arma(m) => m.q(),
            Model::Varma(m) => m.q(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Arma {
        p: usize,
        q: usize,
        mu: f64,
        a: Vec<f64>,
        b: f64,
        theta: Vec<f64>,
        sigma2: f64,
    },
    Varma {
        p: usize,
        q: usize,
        d: usize,
        mu: Vec<f64>,
        #[serde(rename = "A", with = "serde_matrix::vec")]
        a: Vec<DMatrix<f64>>,
        b: Vec<f64>,
        #[serde(rename = "M", with = "serde_matrix::vec")]
        m: Vec<DMatrix<f64>>,
        #[serde(rename = "Sigma", with = "serde_matrix")]
        sigma: DMatrix<f64>,
        #[serde(rename = "C", default, with = "serde_matrix::option", skip_serializing_if = "Option::is_none")]
        c: Option<DMatrix<f64>>,
    },
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Model> {
        match f {
            ModelFile::Arma { p, q, mu, a, b, theta, sigma2 } => {
                if a.len() != p || theta.len() != q {
                    return Err(Error::DimensionMismatch(format!(
                        "declared p={p}, q={q} but got {} AR and {} MA coefficients",
                        a.len(),
                        theta.len()
                    )));
                }
                Ok(Model::Arma(ArmaModel::new(mu, a, b, theta, sigma2)?))
            }
            ModelFile::Varma { p, q, d, mu, a, b, m, sigma, c } => {
                if a.len() != p || m.len() != q || mu.len() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "declared p={p}, q={q}, d={d} but got {} A, {} M, mu of length {}",
                        a.len(),
                        m.len(),
                        mu.len()
                    )));
                }
                Ok(Model::Varma(VarmaModel::new(
                    DVector::from_vec(mu),
                    a,
                    DVector::from_vec(b),
                    m,
                    sigma,
                    c,
                )?))
            }
        }
    }
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        match m {
            Model::Arma(m) => ModelFile::Arma {
                p: m.p(),
                q: m.q(),
                mu: m.mu,
                a: m.a.clone(),
                b: m.b,
                theta: m.theta.clone(),
                sigma2: m.sigma2,
            },
            Model::Varma(m) => ModelFile::Varma {
                p: m.p(),
                q: m.q(),
                d: m.d(),
                mu: m.mu.iter().copied().collect(),
                a: m.a.clone(),
                b: m.b.iter().copied().collect(),
                m: m.m.clone(),
                sigma: m.sigma.clone(),
                c: m.c.clone(),
            },
        }
    }
}

impl Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = ModelFile::deserialize(d)?;
        Model::try_from(f).map_err(serde::de::Error::custom)
    }
}
