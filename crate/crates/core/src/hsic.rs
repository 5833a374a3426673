//! Empirical HSIC estimators and a permutation test.
//!
//! With centered Gram matrices `K̃ = HKH` and `L̃ = HLH`:
//!
//! ```text
//! HSIC_biased(X, Y) = tr(KHLH) / (n − 1)²
//! HSIC_norm(X, Y)   = tr(KHLH) / (‖K̃‖_F · ‖L̃‖_F)
//! ```
//!
//! `tr(KHLH) = Σ_ij K̃_ij L̃_ij` because H is idempotent and both Grams are
//! symmetric, so both forms cost O(n²) once the Grams exist.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, Bandwidth, CenteredGram, GramMatrix, KernelSpec, SampleMatrix};

/// Largest n accepted by [`hsic_brute_force`].
pub const BRUTE_FORCE_LIMIT: usize = 200;

/// Smallest permutation count accepted by [`permutation_test`].
pub const MIN_PERMUTATIONS: usize = 99;

/// Overshoot of [0, 1] attributed to rounding and clamped away.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    HsicUnnormalized,
    HsicNormalized,
    Smi,
    SmiFixedTheta,
}

/// A scalar dependence estimate and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceEstimate {
    pub value: f64,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub num_permutations: usize,
    pub seed: u64,
}

fn check_same_n(k: &GramMatrix, l: &GramMatrix) -> Result<()> {
    if k.n() != l.n() {
        return Err(Error::DimensionMismatch { expected: k.n(), got: l.n() });
    }
    Ok(())
}

/// Σ_ij A_ij B_ij, row by row in a fixed order.
pub(crate) fn frobenius_inner(a: &CenteredGram, b: &CenteredGram) -> f64 {
    a.values()
        .rows()
        .into_iter()
        .zip(b.values().rows())
        .map(|(ra, rb)| ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

/// Centered Gram plus its Frobenius norm; errors when the centered matrix
/// vanishes, i.e. the variable is constant under the kernel.
pub(crate) fn centered_nondegenerate(g: &GramMatrix, which: &str) -> Result<(CenteredGram, f64)> {
    let c = kernels::center(g);
    let norm = c.frobenius_norm();
    let scale = g.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12 * scale) {
        return Err(Error::DegenerateInput(format!(
            "centered Gram of {which} is zero; the variable is constant and dependence is undefined"
        )));
    }
    Ok((c, norm))
}

/// Maps a raw normalized ratio into [0, 1], tolerating rounding overshoot only.
pub(crate) fn clamp_unit(value: f64) -> Result<f64> {
    if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&value) {
        return Err(Error::RangeViolation(value));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Biased empirical HSIC, `tr(KHLH) / (n − 1)²`.
pub fn hsic_unnormalized(k: &GramMatrix, l: &GramMatrix) -> Result<DependenceEstimate> {
    check_same_n(k, l)?;
    let n = k.n();
    let kc = kernels::center(k);
    let lc = kernels::center(l);
    let denom = ((n - 1) * (n - 1)) as f64;
    Ok(DependenceEstimate {
        value: frobenius_inner(&kc, &lc) / denom,
        estimator: EstimatorKind::HsicUnnormalized,
        n,
        kernel_x: k.spec(),
        kernel_y: l.spec(),
    })
}

/// Normalized HSIC, `tr(KHLH) / (‖HKH‖_F ‖HLH‖_F)`, in [0, 1].
pub fn hsic_normalized(k: &GramMatrix, l: &GramMatrix) -> Result<DependenceEstimate> {
    check_same_n(k, l)?;
    let (kc, kn) = centered_nondegenerate(k, "x")?;
    let (lc, ln) = centered_nondegenerate(l, "y")?;
    let value = clamp_unit(frobenius_inner(&kc, &lc) / (kn * ln))?;
    Ok(DependenceEstimate {
        value,
        estimator: EstimatorKind::HsicNormalized,
        n: k.n(),
        kernel_x: k.spec(),
        kernel_y: l.spec(),
    })
}

/// Builds both Grams and returns normalized HSIC.
pub fn hsic_normalized_samples(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
) -> Result<DependenceEstimate> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
    }
    hsic_normalized(&kernels::gram(x, kx)?, &kernels::gram(y, ky)?)
}

/// Pointwise kernel evaluation, independent of the Gram construction path.
fn kernel_fn(spec: KernelSpec, sample: &SampleMatrix) -> Result<impl Fn(&[f64], &[f64]) -> f64> {
    let sigma = match spec {
        KernelSpec::Linear => None,
        KernelSpec::Rbf { bandwidth: Bandwidth::Fixed(s) } => Some(s),
        KernelSpec::Rbf { bandwidth: Bandwidth::MedianHeuristic } => {
            Some(kernels::median_heuristic_bandwidth(sample)?)
        }
    };
    Ok(move |a: &[f64], b: &[f64]| match sigma {
        None => a.iter().zip(b).map(|(p, q)| p * q).sum(),
        Some(s) => {
            let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
            (-d2 / (2.0 * s * s)).exp()
        }
    })
}

/// Test oracle for [`hsic_unnormalized`]: expands `tr(KHLH) / (n − 1)²` as
///
/// ```text
/// Σ_ij k_ij l_ij − (2/n) Σ_i Σ_j Σ_q k_ij l_iq + (1/n²) Σ_ij k_ij Σ_pq l_pq
/// ```
///
/// with explicit loops over kernel evaluations. The cross term is a genuine
/// triple sum, so the cost is O(n³); guarded at n ≤ 200.
pub fn hsic_brute_force(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
) -> Result<f64> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.n() });
    }
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge { n, limit: BRUTE_FORCE_LIMIT });
    }
    kx.validate()?;
    ky.validate()?;
    let k = kernel_fn(kx, x)?;
    let l = kernel_fn(ky, y)?;
    let xr: Vec<Vec<f64>> = x.view().rows().into_iter().map(|r| r.to_vec()).collect();
    let yr: Vec<Vec<f64>> = y.view().rows().into_iter().map(|r| r.to_vec()).collect();
    let kv: Vec<Vec<f64>> = xr.iter().map(|a| xr.iter().map(|b| k(a, b)).collect()).collect();
    let lv: Vec<Vec<f64>> = yr.iter().map(|a| yr.iter().map(|b| l(a, b)).collect()).collect();

    let mut paired = 0.0;
    let mut cross = 0.0;
    let mut k_total = 0.0;
    let mut l_total = 0.0;
    for i in 0..n {
        for j in 0..n {
            paired += kv[i][j] * lv[i][j];
            k_total += kv[i][j];
            l_total += lv[i][j];
            for q in 0..n {
                cross += kv[i][j] * lv[i][q];
            }
        }
    }
    let nf = n as f64;
    let trace = paired - 2.0 * cross / nf + k_total * l_total / (nf * nf);
    Ok(trace / ((nf - 1.0) * (nf - 1.0)))
}

/// Permutation test of independence using normalized HSIC as the statistic.
///
/// Permutation `b` shuffles the rows of Y with a ChaCha8 stream derived from
/// `(seed, b)`, so the result does not depend on scheduling or thread count.
/// `p = (1 + #{permuted ≥ observed}) / (1 + B)`.
pub fn permutation_test(
    x: &SampleMatrix,
    y: &SampleMatrix,
    kx: KernelSpec,
    ky: KernelSpec,
    num_permutations: usize,
    seed: u64,
) -> Result<PermutationTestResult> {
    if num_permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidInput(format!(
            "permutation test needs at least {MIN_PERMUTATIONS} permutations, got {num_permutations}"
        )));
    }
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), got: y.n() });
    }
    let k = kernels::gram(x, kx)?;
    let l = kernels::gram(y, ky)?;
    let (kc, kn) = centered_nondegenerate(&k, "x")?;
    let (lc, ln) = centered_nondegenerate(&l, "y")?;
    let denom = kn * ln;
    let observed = frobenius_inner(&kc, &lc) / denom;
    let statistic = clamp_unit(observed)?;

    let n = x.n();
    let kv = kc.values();
    let lv = lc.values();
    let exceed = (0..num_permutations)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut acc = 0.0;
            for i in 0..n {
                let pi = perm[i];
                let mut row = 0.0;
                for j in 0..n {
                    row += kv[[i, j]] * lv[[pi, perm[j]]];
                }
                acc += row;
            }
            acc / denom >= observed
        })
        .count();

    Ok(PermutationTestResult {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + num_permutations) as f64,
        num_permutations,
        seed,
    })
}
