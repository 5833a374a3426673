//! Squared-loss mutual information via least-squares density-ratio fitting.
//!
//! The ratio `r(x, y) = p(x, y) / (p(x) p(y))` is modeled as
//! `r_θ(x, y) = Σ_l θ_l k(x, x_l) l(y, y_l)` with one basis function per
//! training sample. Minimizing the squared error against the true ratio
//! gives the ridge system `(Ĥ + λI) θ = ĥ` with
//!
//! ```text
//! Ĥ_ll' = (1/n²) (Σ_i K_il K_il') (Σ_j L_jl L_jl')
//! ĥ_l   = (1/n)  Σ_i K_il L_il
//! ```
//!
//! and the estimate is `SMI = (1/n) Σ_ij θ_i K_ij L_ij − 1`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsic::{centered_nondegenerate, DependenceEstimate, EstimatorKind};
use crate::kernels::{self, GramMatrix, KernelSpec, ResolvedKernel, SampleMatrix};
use crate::linalg;

/// A fitted density-ratio model; the centers are the training samples.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    pub theta: Array1<f64>,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
    pub resolved_x: ResolvedKernel,
    pub resolved_y: ResolvedKernel,
    pub centers_x: SampleMatrix,
    pub centers_y: SampleMatrix,
    pub lambda: f64,
}

impl DensityRatioModel {
    /// `r_θ` at each row of (x, y).
    pub fn ratio_at(&self, x: &SampleMatrix, y: &SampleMatrix) -> Result<Array1<f64>> {
        let (phi_x, phi_y) = self.design(x, y)?;
        Ok((&phi_x * &phi_y).dot(&self.theta))
    }

    fn design(&self, x: &SampleMatrix, y: &SampleMatrix) -> Result<(Array2<f64>, Array2<f64>)> {
        if x.n() != y.n() {
            return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
        }
        Ok((
            self.resolved_x.cross(x.view(), self.centers_x.view())?,
            self.resolved_y.cross(y.view(), self.centers_y.view())?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmiConfig {
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
}

impl Default for SmiConfig {
    fn default() -> Self {
        Self { lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0], cv_folds: 5 }
    }
}

impl SmiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidInput("lambda grid is empty".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput(format!("lambda grid entries must be positive, got {l}")));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput(format!("cv_folds must be ≥ 2, got {}", self.cv_folds)));
        }
        Ok(())
    }
}

/// Ĥ and ĥ from basis design matrices (rows = samples, columns = centers).
fn normal_equations(phi_x: ArrayView2<'_, f64>, phi_y: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let m = phi_x.nrows() as f64;
    let gx = phi_x.t().dot(&phi_x);
    let gy = phi_y.t().dot(&phi_y);
    let h_mat = (gx * gy) / (m * m);
    let h_vec = (&phi_x * &phi_y).sum_axis(Axis(0)) / m;
    (h_mat, h_vec)
}

fn ridge_solve(h_mat: &Array2<f64>, h_vec: ArrayView1<'_, f64>, lambda: f64) -> Result<Array1<f64>> {
    let mut a = h_mat.clone();
    a.diag_mut().mapv_inplace(|v| v + lambda);
    linalg::solve_spd(a.view(), h_vec)
}

/// Closed-form least-squares fit of the density-ratio model.
pub fn fit_density_ratio(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
    lambda: f64,
) -> Result<DensityRatioModel> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    let resolved_x = kx.resolve(x)?;
    let resolved_y = ky.resolve(y)?;
    let k = resolved_x.cross(x.view(), x.view())?;
    let l = resolved_y.cross(y.view(), y.view())?;
    let (h_mat, h_vec) = normal_equations(k.view(), l.view());
    let theta = ridge_solve(&h_mat, h_vec.view(), lambda)?;
    Ok(DensityRatioModel {
        theta,
        kernel_x: kx,
        kernel_y: ky,
        resolved_x,
        resolved_y,
        centers_x: x.clone(),
        centers_y: y.clone(),
        lambda,
    })
}

/// `(1/n) Σ_{i,j} θ_i K_ij L_ij − 1`, with i over centers and j over samples.
fn smi_sum(theta: ArrayView1<'_, f64>, k: ArrayView2<'_, f64>, l: ArrayView2<'_, f64>) -> f64 {
    let n = k.nrows() as f64;
    let total: f64 = k
        .rows()
        .into_iter()
        .zip(l.rows())
        .map(|(kr, lr)| {
            kr.iter()
                .zip(lr.iter())
                .zip(theta.iter())
                .map(|((a, b), t)| t * a * b)
                .sum::<f64>()
        })
        .sum();
    total / n - 1.0
}

/// SMI estimate of a fitted model over the sample (x, y).
pub fn smi_estimate(
    x: &SampleMatrix,
    y: &SampleMatrix,
    model: &DensityRatioModel,
) -> Result<DependenceEstimate> {
    let (phi_x, phi_y) = model.design(x, y)?;
    Ok(DependenceEstimate {
        value: smi_sum(model.theta.view(), phi_x.view(), phi_y.view()),
        estimator: EstimatorKind::Smi,
        n: x.n(),
        kernel_x: model.kernel_x,
        kernel_y: model.kernel_y,
    })
}

/// The SMI estimator with the centered Gram of X in place of K and every
/// θ_i fixed to `1 / (n · ‖HKH/n‖_F · ‖HLH/n‖_F)`; no ratio fitting.
/// Equals normalized HSIC minus one.
pub fn smi_fixed_theta(k: &GramMatrix, l: &GramMatrix) -> Result<DependenceEstimate> {
    if k.n() != l.n() {
        return Err(Error::DimensionMismatch { expected: k.n(), got: l.n() });
    }
    let n = k.n();
    let nf = n as f64;
    let (kc, kn) = centered_nondegenerate(k, "x")?;
    let (_, ln) = centered_nondegenerate(l, "y")?;
    let theta = Array1::from_elem(n, 1.0 / (nf * (kn / nf) * (ln / nf)));
    Ok(DependenceEstimate {
        value: smi_sum(theta.view(), kc.values(), l.values()),
        estimator: EstimatorKind::SmiFixedTheta,
        n,
        kernel_x: k.spec(),
        kernel_y: l.spec(),
    })
}

/// Builds Grams and evaluates [`smi_fixed_theta`].
pub fn smi_fixed_theta_samples(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
) -> Result<DependenceEstimate> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
    }
    smi_fixed_theta(&kernels::gram(x, kx)?, &kernels::gram(y, ky)?)
}

struct Fold {
    train_h: Array2<f64>,
    train_h_vec: Array1<f64>,
    test_h: Array2<f64>,
    test_h_vec: Array1<f64>,
}

fn build_fold(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
    train: &[usize],
    test: &[usize],
) -> Result<Fold> {
    let xt = x.select_rows(train)?;
    let yt = y.select_rows(train)?;
    let xv = x.view().select(Axis(0), test);
    let yv = y.view().select(Axis(0), test);
    let rx = kx.resolve(&xt)?;
    let ry = ky.resolve(&yt)?;
    let (train_h, train_h_vec) = normal_equations(
        rx.cross(xt.view(), xt.view())?.view(),
        ry.cross(yt.view(), yt.view())?.view(),
    );
    let (test_h, test_h_vec) = normal_equations(
        rx.cross(xv.view(), xt.view())?.view(),
        ry.cross(yv.view(), yt.view())?.view(),
    );
    Ok(Fold { train_h, train_h_vec, test_h, test_h_vec })
}

/// Held-out objective `½ θᵀ Ĥ θ − ĥᵀ θ` of one fold for one λ.
fn fold_score(fold: &Fold, lambda: f64) -> Result<f64> {
    let theta = ridge_solve(&fold.train_h, fold.train_h_vec.view(), lambda)?;
    Ok(0.5 * theta.dot(&fold.test_h.dot(&theta)) - fold.test_h_vec.dot(&theta))
}

/// Chooses λ by k-fold cross-validation, then refits on all samples.
///
/// Folds come from a seeded shuffle. Each fold's basis uses its training
/// samples as centers (and as the median-heuristic sample). A λ for which
/// any fold's system is singular is dropped; ties keep the earlier grid entry.
pub fn smi_cross_validated(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
    config: &SmiConfig,
    seed: u64,
) -> Result<(DependenceEstimate, f64)> {
    config.validate()?;
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
    }
    let n = x.n();
    let folds = config.cv_folds;
    if n < 2 * folds {
        return Err(Error::InvalidInput(format!(
            "{folds}-fold cross-validation needs at least {} samples, got {n}",
            2 * folds
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignments: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
                order.iter().copied().enumerate().partition(|(pos, _)| pos % folds == f);
            (
                train.into_iter().map(|(_, i)| i).collect(),
                test.into_iter().map(|(_, i)| i).collect(),
            )
        })
        .collect();
    let built: Vec<Fold> = assignments
        .par_iter()
        .map(|(train, test)| build_fold(x, y, kx, ky, train, test))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for &lambda in &config.lambda_grid {
        let scores: Result<Vec<f64>> = built.iter().map(|fold| fold_score(fold, lambda)).collect();
        match scores {
            Ok(s) => {
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                if best.is_none_or(|(_, b)| mean < b) {
                    best = Some((lambda, mean));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((lambda, _)) = best else {
        return Err(last_err.unwrap_or(Error::SingularSystem(f64::INFINITY)));
    };
    let model = fit_density_ratio(x, y, kx, ky, lambda)?;
    Ok((smi_estimate(x, y, &model)?, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsic::hsic_normalized;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, d: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleMatrix::new(Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng)))
            .unwrap()
    }

    #[test]
    fn two_point_hand_solve() {
        // Linear features e1, e2 give K = L = I.
        let x = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = fit_density_ratio(&x, &x, KernelSpec::Linear, KernelSpec::Linear, 0.0).unwrap();
        assert!((m.theta[0] - 2.0).abs() < 1e-12);
        assert!((m.theta[1] - 2.0).abs() < 1e-12);
        let (h_mat, h_vec) = normal_equations(Array2::eye(2).view(), Array2::eye(2).view());
        assert_eq!(h_mat, array![[0.25, 0.0], [0.0, 0.25]]);
        assert_eq!(h_vec, array![0.5, 0.5]);
    }

    #[test]
    fn large_lambda_shrinks_theta_monotonically() {
        let x = normal(20, 2, 1);
        let y = normal(20, 1, 2);
        let spec = KernelSpec::rbf_median();
        let norms: Vec<f64> = [1.0, 10.0, 100.0, 1e4, 1e6]
            .iter()
            .map(|&l| {
                let t = fit_density_ratio(&x, &y, spec, spec, l).unwrap().theta;
                t.dot(&t).sqrt()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
        assert!(*norms.last().unwrap() < 1e-5);
    }

    #[test]
    fn zero_theta_gives_minus_one() {
        let x = normal(10, 2, 3);
        let y = normal(10, 2, 4);
        let mut m = fit_density_ratio(&x, &y, KernelSpec::rbf_median(), KernelSpec::rbf_median(), 0.1)
            .unwrap();
        m.theta.fill(0.0);
        assert_eq!(smi_estimate(&x, &y, &m).unwrap().value, -1.0);
    }

    #[test]
    fn estimate_matches_double_loop() {
        let x = normal(30, 2, 5);
        let y = normal(30, 3, 6);
        let spec = KernelSpec::rbf_median();
        let m = fit_density_ratio(&x, &y, spec, spec, 0.1).unwrap();
        let k = kernels::gram(&x, spec).unwrap();
        let l = kernels::gram(&y, spec).unwrap();
        let mut s = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                s += m.theta[i] * k.values()[[i, j]] * l.values()[[i, j]];
            }
        }
        let expected = s / 30.0 - 1.0;
        let got = smi_estimate(&x, &y, &m).unwrap().value;
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn fixed_theta_with_centered_kernel_is_normalized_hsic_minus_one() {
        let x = normal(50, 3, 7);
        let y = normal(50, 2, 8);
        let spec = KernelSpec::rbf_median();
        let k = kernels::gram(&x, spec).unwrap();
        let l = kernels::gram(&y, spec).unwrap();
        let smi = smi_fixed_theta(&k, &l).unwrap();
        let hsic = hsic_normalized(&k, &l).unwrap();
        assert_eq!(smi.estimator, EstimatorKind::SmiFixedTheta);
        assert!((smi.value + 1.0 - hsic.value).abs() < 1e-10);
        let self_dep = smi_fixed_theta(&k, &k).unwrap().value;
        assert!(self_dep.abs() < 1e-10);
    }

    #[test]
    fn fixed_theta_rejects_constant() {
        let x = normal(10, 2, 9);
        let k = kernels::gram(&x, KernelSpec::rbf_median()).unwrap();
        let c = GramMatrix::from_values(Array2::ones((10, 10)), KernelSpec::Linear).unwrap();
        assert!(matches!(smi_fixed_theta(&k, &c), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn single_value_grid_is_chosen() {
        let x = normal(40, 1, 10);
        let y = normal(40, 1, 11);
        let cfg = SmiConfig { lambda_grid: vec![0.05], cv_folds: 4 };
        let spec = KernelSpec::rbf_median();
        let (_, lambda) = smi_cross_validated(&x, &y, spec, spec, &cfg, 0).unwrap();
        assert_eq!(lambda, 0.05);
    }

    #[test]
    fn cv_rejects_too_few_samples_and_bad_config() {
        let x = normal(9, 1, 0);
        let spec = KernelSpec::rbf_median();
        assert!(smi_cross_validated(&x, &x, spec, spec, &SmiConfig::default(), 0).is_err());
        let bad = SmiConfig { lambda_grid: vec![], cv_folds: 5 };
        assert!(bad.validate().is_err());
        let bad = SmiConfig { lambda_grid: vec![0.0], cv_folds: 5 };
        assert!(bad.validate().is_err());
        let bad = SmiConfig { lambda_grid: vec![1.0], cv_folds: 1 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cv_is_deterministic() {
        let x = normal(60, 2, 12);
        let y = normal(60, 2, 13);
        let spec = KernelSpec::rbf_median();
        let a = smi_cross_validated(&x, &y, spec, spec, &SmiConfig::default(), 3).unwrap();
        let b = smi_cross_validated(&x, &y, spec, spec, &SmiConfig::default(), 3).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn fit_matches_explicit_pair_regression() {
        // Oracle: Ĥ as the mean outer product of the basis over all n² (x_i, y_j)
        // pairings, ĥ as the mean over the n observed pairs, solved with LU.
        let n = 30;
        let x = normal(n, 2, 20);
        let y = SampleMatrix::new(x.view().mapv(|v| v * 0.5) + normal(n, 2, 21).view()).unwrap();
        let spec = KernelSpec::rbf_median();
        let lambda = 0.1;
        let model = fit_density_ratio(&x, &y, spec, spec, lambda).unwrap();

        let sx = kernels::median_heuristic_bandwidth(&x).unwrap();
        let sy = kernels::median_heuristic_bandwidth(&y).unwrap();
        let rbf = |a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>, s: f64| {
            let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
            (-d2 / (2.0 * s * s)).exp()
        };
        let basis = |i: usize, j: usize| {
            nalgebra::DVector::from_fn(n, |c, _| {
                rbf(x.view().row(i), x.view().row(c), sx) * rbf(y.view().row(j), y.view().row(c), sy)
            })
        };
        let mut h_mat = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let psi = basis(i, j);
                h_mat += &psi * psi.transpose();
            }
        }
        h_mat /= (n * n) as f64;
        let mut h_vec = nalgebra::DVector::<f64>::zeros(n);
        for i in 0..n {
            h_vec += basis(i, i);
        }
        h_vec /= n as f64;
        let a = h_mat + nalgebra::DMatrix::identity(n, n) * lambda;
        let theta = a.lu().solve(&h_vec).unwrap();
        for c in 0..n {
            assert!((model.theta[c] - theta[c]).abs() < 1e-8, "θ[{c}]: {} vs {}", model.theta[c], theta[c]);
        }
    }

    #[test]
    fn theta_follows_sample_permutation() {
        let x = normal(25, 2, 30);
        let y = normal(25, 1, 31);
        let spec = KernelSpec::rbf_median();
        let base = fit_density_ratio(&x, &y, spec, spec, 0.05).unwrap();
        let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
        let px = x.select_rows(&perm).unwrap();
        let py = y.select_rows(&perm).unwrap();
        let permuted = fit_density_ratio(&px, &py, spec, spec, 0.05).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert!((permuted.theta[k] - base.theta[p]).abs() < 1e-8);
        }
        let a = smi_estimate(&x, &y, &base).unwrap().value;
        let b = smi_estimate(&px, &py, &permuted).unwrap().value;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn cv_estimate_near_zero_when_independent() {
        let spec = KernelSpec::rbf_median();
        for seed in 0..3 {
            let x = normal(200, 1, 100 + seed);
            let y = normal(200, 1, 200 + seed);
            let (e, _) = smi_cross_validated(&x, &y, spec, spec, &SmiConfig::default(), seed).unwrap();
            assert!((-0.3..=0.3).contains(&e.value), "seed {seed}: {}", e.value);
        }
    }

    #[test]
    fn cv_estimate_grows_with_dependence() {
        let spec = KernelSpec::rbf_median();
        let x = normal(200, 1, 40);
        let noise = normal(200, 1, 41);
        let dependent = SampleMatrix::new(x.view().to_owned() + noise.view().mapv(|v| 0.1 * v)).unwrap();
        let independent = normal(200, 1, 42);
        let cfg = SmiConfig::default();
        let (dep, _) = smi_cross_validated(&x, &dependent, spec, spec, &cfg, 1).unwrap();
        let (ind, _) = smi_cross_validated(&x, &independent, spec, spec, &cfg, 1).unwrap();
        assert!(dep.value > ind.value + 0.5, "{} vs {}", dep.value, ind.value);
    }
}
