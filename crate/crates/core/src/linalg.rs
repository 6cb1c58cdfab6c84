//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue modulus. Empty matrices have radius 0.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Block companion matrix of `y_t = sum_j coeffs[j] y_{t-j-1}`.
///
/// All blocks must be square with a common size `d`; the result is `d*p` square.
pub fn block_companion(coeffs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = coeffs.len();
    if p == 0 {
        return DMatrix::zeros(0, 0);
    }
    let d = coeffs[0].nrows();
    let mut c = DMatrix::zeros(d * p, d * p);
    for (j, a) in coeffs.iter().enumerate() {
        c.view_mut((0, j * d), (d, d)).copy_from(a);
    }
    for i in 0..d * (p - 1) {
        c[(d + i, i)] = 1.0;
    }
    c
}

/// Real roots of `sum_i coeffs[i] x^i`, from companion-matrix eigenvalues,
/// polished with a few Newton steps.
pub fn real_poly_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1] == 0.0 {
        deg -= 1;
    }
    if deg <= 1 {
        return Vec::new();
    }
    let n = deg - 1;
    let lead = coeffs[n];
    let scale = coeffs[..=n].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut comp = DMatrix::zeros(n, n);
    for i in 0..n {
        comp[(0, i)] = -coeffs[n - 1 - i] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    let eval = |x: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for &c in coeffs[..=n].iter().rev() {
            dv = dv * x + v;
            v = v * x + c;
        }
        (v, dv)
    };
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..8 {
                let (v, dv) = eval(x);
                if dv == 0.0 || v.abs() <= f64::EPSILON * scale {
                    break;
                }
                let next = x - v / dv;
                if !next.is_finite() {
                    break;
                }
                x = next;
            }
            x
        })
        .collect()
}

/// 2-norm condition number after scaling rows and columns to unit max-abs.
pub fn equilibrated_condition(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let mut s = m.clone();
    for mut row in s.row_iter_mut() {
        let mx = row.amax();
        if mx > 0.0 {
            row /= mx;
        }
    }
    for mut col in s.column_iter_mut() {
        let mx = col.amax();
        if mx > 0.0 {
            col /= mx;
        }
    }
    let svd = s.svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let smax = sv.max();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let null = match svd.v_t {
        Some(vt) => vt.row(imin).transpose(),
        None => DVector::zeros(m.ncols()),
    };
    (cond, null)
}

/// Lower factor `L` with `L Lᵀ = sigma`. Falls back to a symmetric
/// eigen-decomposition when `sigma` is only semidefinite.
pub fn psd_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = sigma.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = sigma.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::InvalidInput(
            "covariance matrix has negative eigenvalues".into(),
        ));
    }
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt_l)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Serde adapters storing matrices row-major as nested arrays.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}
