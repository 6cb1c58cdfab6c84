use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::designs::{generate_with, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ArmaModel, VarmaModel};
use crate::panel::{PanelData, DEFAULT_DT_LABEL};
use crate::rng::{substream, streams};

pub fn default_burn_in(p: usize, q: usize) -> usize {
    10 * (p + q + 1)
}

fn burn_in_for(p: usize, q: usize, burn_in: Option<usize>) -> Result<usize> {
    let b = burn_in.unwrap_or_else(|| default_burn_in(p, q));
    if b < p + q {
        return Err(Error::InvalidInput(format!("burn-in {b} is shorter than p + q = {}", p + q)));
    }
    Ok(b)
}

/// Simulates a stable controlled ARMA model for `len` kept intervals.
///
/// Noise and treatments come from separate substreams of `seed`; the first
/// `burn_in` intervals (default `10 (p + q + 1)`) are discarded.
pub fn simulate_arma(model: &ArmaModel, design: &DesignSpec, len: usize, seed: u64, burn_in: Option<usize>) -> Result<PanelData> {
    if len == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    model.validate()?;
    let s = model.check_no_unit_root();
    if !s.stable {
        return Err(Error::NonStationary { spectral_radius: s.spectral_radius });
    }
    let burn = burn_in_for(model.p(), model.q(), burn_in)?;
    let total = len + burn;
    let u = generate_with(design, total, &mut substream(seed, streams::DESIGN));
    let sigma = model.sigma2.sqrt();
    let mut rng = substream(seed, streams::NOISE);
    let noise: Vec<f64> = (0..total).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let y = model.filter(&noise, &u.to_f64());
    PanelData::univariate(y[burn..].to_vec(), u.tail(len))
}

/// Simulates a stable controlled VARMA model.
///
/// `exog` must have `len` rows when the model has a `C` term; burn-in rows
/// reuse its first row. Noise is `L z` with `L L^T = Sigma`, so `d = 1`
/// draws the same stream as [`simulate_arma`].
pub fn simulate_varma(
    model: &VarmaModel,
    design: &DesignSpec,
    exog: Option<&DMatrix<f64>>,
    len: usize,
    seed: u64,
    burn_in: Option<usize>,
) -> Result<PanelData> {
    if len == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    model.validate()?;
    let s = model.check_no_unit_root();
    if !s.stable {
        return Err(Error::NonStationary { spectral_radius: s.spectral_radius });
    }
    let m = model.exog_dim();
    let exog = match (m, exog) {
        (0, None) => None,
        (0, Some(_)) => return Err(Error::InvalidInput("exogenous data given but the model has no C term".into())),
        (_, None) => return Err(Error::InvalidInput("model has a C term but no exogenous data was given".into())),
        (_, Some(e)) => {
            if e.nrows() != len || e.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "exogenous data is {}x{}, expected {len}x{m}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            Some(e)
        }
    };
    let burn = burn_in_for(model.p(), model.q(), burn_in)?;
    let total = len + burn;
    let d = model.d();
    let u = generate_with(design, total, &mut substream(seed, streams::DESIGN));
    let l = linalg::psd_factor(&model.sigma)?;
    let mut rng = substream(seed, streams::NOISE);
    let mut noise = DMatrix::zeros(total, d);
    let mut z = vec![0.0; d];
    for t in 0..total {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            noise[(t, i)] = (0..d).map(|k| l[(i, k)] * z[k]).sum();
        }
    }
    let full_exog = exog.map(|e| DMatrix::from_fn(total, m, |t, j| e[(t.saturating_sub(burn), j)]));
    let y = model.filter(&noise, &u.to_f64(), full_exog.as_ref());
    PanelData::new(y.rows(burn, len).into_owned(), u.tail(len), exog.cloned(), DEFAULT_DT_LABEL)
}
