//! Cholesky factorization for the symmetric positive-definite systems of the
//! density-ratio fit, with a Hager 1-norm condition estimate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Systems whose 1-norm condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
    norm1: f64,
}

impl Cholesky {
    /// Factors `a`. Fails with `SingularSystem` when a pivot is not positive.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::SingularSystem(f64::INFINITY));
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        let norm1 = (0..n)
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self { lower: l, norm1 })
    }

    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.lower.nrows();
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    /// Hager's estimate of ‖A⁻¹‖₁ · ‖A‖₁, using a handful of solves.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.lower.nrows();
        let mut x = Array1::from_elem(n, 1.0 / n as f64);
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(x.view());
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let sign = y.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            // A is symmetric, so A⁻ᵀ = A⁻¹.
            let z = self.solve(sign.view());
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, v)| {
                    if v.abs() > bv { (j, v.abs()) } else { (bj, bv) }
                });
            if zmax <= z.dot(&x) {
                break;
            }
            x.fill(0.0);
            x[jmax] = 1.0;
        }
        estimate * self.norm1
    }
}

/// Solves the SPD system `a · x = b`, rejecting ill-conditioned systems.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
    }
    let chol = Cholesky::factor(a)?;
    let cond = chol.condition_estimate();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularSystem(cond));
    }
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(f64::INFINITY));
    }
    Ok(x)
}
