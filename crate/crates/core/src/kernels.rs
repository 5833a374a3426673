//! Kernel functions, Gram matrices and double centering.
//!
//! Every dependence estimator in this crate consumes Gram matrices built here.
//! Two kernels are available:
//!
//! - RBF: `k(x, x') = exp(-‖x − x'‖² / (2σ²))`, with σ either fixed or taken
//!   from the median heuristic (median pairwise Euclidean distance).
//! - Linear: `k(x, x') = ⟨x, x'⟩`.
//!
//! Gram construction parallelizes over rows. Each entry is computed
//! independently with a fixed summation order, so the result is bitwise
//! identical across runs and thread counts, and exactly symmetric.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An n×d sample matrix, one row per sample. Always n ≥ 2, d ≥ 1, finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Array2<f64>,
}

impl SampleMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "sample matrix needs at least 2 rows, got {n}"
            )));
        }
        if d < 1 {
            return Err(Error::InvalidInput("sample matrix needs at least 1 column".into()));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} at row {i}, column {j}"
            )));
        }
        Ok(Self { data })
    }

    /// Builds a matrix from row vectors. Rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidInput(format!(
                "ragged rows: row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Returns the rows listed in `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.data.select(Axis(0), indices))
    }

    /// Reads a headerless CSV of decimal floats, one sample per row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .enumerate()
                .map(|(j, field)| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("row {i}, column {j}: cannot parse `{field}`"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the matrix as headerless CSV. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(self.data.view(), writer)
    }
}

/// Headerless CSV writer shared by sample matrices and dataset frames.
pub fn write_matrix_csv<W: Write>(matrix: ArrayView2<'_, f64>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in matrix.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// RBF bandwidth: an explicit σ, or the median heuristic resolved per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(s) => write!(f, "{s}"),
            Bandwidth::MedianHeuristic => f.write_str("median"),
        }
    }
}

// Serialized as a bare number or the string "median".
impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Fixed(v) => s.serialize_f64(*v),
            Bandwidth::MedianHeuristic => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "bandwidth must be positive and finite, got {v}"
            ))),
            Raw::Str(s) if s == "median" => Ok(Bandwidth::MedianHeuristic),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "bandwidth must be a positive number or \"median\", got \"{s}\""
            ))),
        }
    }
}

/// Which kernel to evaluate, and with what bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Rbf { bandwidth: Bandwidth },
    Linear,
}

impl KernelSpec {
    /// RBF with the median-heuristic bandwidth; the default for every estimator.
    pub const fn rbf_median() -> Self {
        KernelSpec::Rbf { bandwidth: Bandwidth::MedianHeuristic }
    }

    pub fn rbf(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { bandwidth: Bandwidth::Fixed(sigma) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { bandwidth: Bandwidth::Fixed(s) } if !(*s > 0.0 && s.is_finite()) => {
                Err(Error::InvalidInput(format!("RBF bandwidth must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::rbf_median()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { bandwidth } => write!(f, "rbf(σ={bandwidth})"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

/// A kernel with its bandwidth fixed, ready to evaluate between any two
/// samples of matching dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedKernel {
    Rbf { sigma: f64 },
    Linear,
}

impl KernelSpec {
    /// Fixes the bandwidth, resolving the median heuristic on `x`.
    pub fn resolve(&self, x: &SampleMatrix) -> Result<ResolvedKernel> {
        self.validate()?;
        Ok(match *self {
            KernelSpec::Linear => ResolvedKernel::Linear,
            KernelSpec::Rbf { bandwidth: Bandwidth::Fixed(sigma) } => ResolvedKernel::Rbf { sigma },
            KernelSpec::Rbf { bandwidth: Bandwidth::MedianHeuristic } => {
                ResolvedKernel::Rbf { sigma: median_heuristic_bandwidth(x)? }
            }
        })
    }
}

impl ResolvedKernel {
    /// `out[i][j] = k(a_i, b_j)`; rows of `a` against rows of `b`.
    pub fn cross(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch { expected: b.ncols(), got: a.ncols() });
        }
        let (na, nb) = (a.nrows(), b.nrows());
        let mut out = vec![0.0; na * nb];
        out.par_chunks_mut(nb.max(1)).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = match *self {
                    ResolvedKernel::Linear => dot(a.row(i), b.row(j)),
                    ResolvedKernel::Rbf { sigma } => {
                        (-squared_distance(a.row(i), b.row(j)) / (2.0 * sigma * sigma)).exp()
                    }
                };
            }
        });
        Ok(Array2::from_shape_vec((na, nb), out).expect("na*nb buffer"))
    }
}

/// n×n kernel evaluations over one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
    spec: KernelSpec,
    /// σ actually used, for RBF kernels.
    sigma: Option<f64>,
}

impl GramMatrix {
    /// Wraps precomputed kernel values. The matrix must be square, finite
    /// and symmetric to 1e-12.
    pub fn from_values(values: Array2<f64>, spec: KernelSpec) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, got: c });
        }
        if r < 2 {
            return Err(Error::InvalidInput("Gram matrix needs n ≥ 2".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Gram matrix has non-finite entries".into()));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "Gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values, spec, sigma: None })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }
}

/// The doubly-centered Gram matrix H·G·H with H = I − (1/n)11ᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredGram {
    values: Array2<f64>,
}

impl CenteredGram {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Centers again; H is idempotent so this is a no-op up to rounding.
    pub fn recenter(&self) -> CenteredGram {
        CenteredGram { values: center_values(self.values.view()) }
    }
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Fills an n×n matrix row-parallel with `f(i, j)`.
fn pairwise<F>(n: usize, f: F) -> Array2<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = f(i, j);
        }
    });
    Array2::from_shape_vec((n, n), out).expect("n*n buffer")
}

fn squared_distances(x: &SampleMatrix) -> Array2<f64> {
    let v = x.view();
    pairwise(x.n(), |i, j| if i == j { 0.0 } else { squared_distance(v.row(i), v.row(j)) })
}

/// Median of a distance list. Even counts average the two middle values.
fn median_of(dists: &mut [f64]) -> f64 {
    let m = dists.len();
    let mid = m / 2;
    let (lower_half, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if m % 2 == 1 {
        upper
    } else {
        let lower = lower_half.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median pairwise distance from a squared-distance matrix (strict upper
/// triangle). When more than half the pairs coincide the median is zero,
/// so the median over the positive distances is used instead.
fn median_from_squared(sq: &Array2<f64>) -> Result<f64> {
    let n = sq.nrows();
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq[[i, j]].sqrt());
        }
    }
    if dists.iter().all(|&d| d == 0.0) {
        return Err(Error::AllPointsIdentical);
    }
    let median = median_of(&mut dists);
    if median > 0.0 {
        return Ok(median);
    }
    let mut positive: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    Ok(median_of(&mut positive))
}

/// Median of the n(n−1)/2 pairwise Euclidean distances between rows.
pub fn median_heuristic_bandwidth(x: &SampleMatrix) -> Result<f64> {
    median_from_squared(&squared_distances(x))
}

/// Builds the Gram matrix `K[i][j] = k(x_i, x_j)`.
pub fn gram(x: &SampleMatrix, spec: KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    match spec {
        KernelSpec::Linear => {
            let v = x.view();
            let values = pairwise(x.n(), |i, j| {
                // Evaluate with the smaller index first so K is exactly symmetric.
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                dot(v.row(a), v.row(b))
            });
            Ok(GramMatrix { values, spec, sigma: None })
        }
        KernelSpec::Rbf { bandwidth } => {
            let sq = squared_distances(x);
            let sigma = match bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::MedianHeuristic => median_from_squared(&sq)?,
            };
            let scale = -1.0 / (2.0 * sigma * sigma);
            let values = sq.mapv(|d2| (d2 * scale).exp());
            Ok(GramMatrix { values, spec, sigma: Some(sigma) })
        }
    }
}

/// H·M·H for a symmetric matrix M, via row, column and grand mean
/// subtraction. Never forms H; O(n²).
pub fn center_values(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = m.rows().into_iter().map(|r| r.sum() / nf).collect();
    let col_means: Vec<f64> = m.columns().into_iter().map(|c| c.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = m[[i, j]] - row_means[i] - col_means[j] + grand;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Doubly centers a Gram matrix.
pub fn center(g: &GramMatrix) -> CenteredGram {
    CenteredGram { values: center_values(g.values.view()) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, d: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        SampleMatrix::new(Array2::from_shape_vec((n, d), v).unwrap()).unwrap()
    }

    #[test]
    fn median_single_pair() {
        let x = SampleMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(median_heuristic_bandwidth(&x).unwrap(), 2.0);
    }

    #[test]
    fn median_three_points() {
        let x = SampleMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(median_heuristic_bandwidth(&x).unwrap(), 2.0);
    }

    #[test]
    fn median_matches_brute_force_pairs() {
        let x = normal_matrix(50, 4, 11);
        let v = x.view();
        let mut all = Vec::new();
        for i in 0..50 {
            for j in (i + 1)..50 {
                let mut s = 0.0;
                for k in 0..4 {
                    let diff = v[[i, k]] - v[[j, k]];
                    s += diff * diff;
                }
                all.push(s.sqrt());
            }
        }
        all.sort_by(f64::total_cmp);
        let m = all.len();
        let expected = if m % 2 == 1 { all[m / 2] } else { 0.5 * (all[m / 2 - 1] + all[m / 2]) };
        assert_eq!(median_heuristic_bandwidth(&x).unwrap(), expected);
    }

    #[test]
    fn identical_points_rejected() {
        let x = SampleMatrix::from_rows(&vec![vec![1.0, 2.0]; 5]).unwrap();
        assert!(matches!(median_heuristic_bandwidth(&x), Err(Error::AllPointsIdentical)));
        assert!(matches!(gram(&x, KernelSpec::rbf_median()), Err(Error::AllPointsIdentical)));
    }

    #[test]
    fn mostly_duplicate_points_use_positive_distances() {
        // 4 copies of the origin and one point at 3: 6 zero pairs, 4 pairs at 3.
        let mut rows = vec![vec![0.0]; 4];
        rows.push(vec![3.0]);
        let x = SampleMatrix::from_rows(&rows).unwrap();
        assert_eq!(median_heuristic_bandwidth(&x).unwrap(), 3.0);
    }

    #[test]
    fn sample_matrix_validation() {
        assert!(SampleMatrix::from_rows(&[vec![1.0]]).is_err());
        assert!(SampleMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).is_err());
        assert!(SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn csv_loader_rejects_ragged_and_non_finite() {
        let ok = SampleMatrix::from_csv_reader("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!((ok.n(), ok.d()), (2, 2));
        assert!(SampleMatrix::from_csv_reader("1,2\n3\n".as_bytes()).is_err());
        assert!(SampleMatrix::from_csv_reader("1,2\n3,inf\n".as_bytes()).is_err());
        assert!(SampleMatrix::from_csv_reader("1,2\n3,x\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let x = normal_matrix(7, 3, 5);
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        assert_eq!(SampleMatrix::from_csv_reader(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn rbf_diagonal_is_one() {
        let x = normal_matrix(20, 3, 1);
        let k = gram(&x, KernelSpec::rbf_median()).unwrap();
        for i in 0..20 {
            assert_eq!(k.values()[[i, i]], 1.0);
        }
        assert!(k.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn linear_gram_of_identity() {
        let x = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let k = gram(&x, KernelSpec::Linear).unwrap();
        assert_eq!(k.values(), array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn rbf_unit_bandwidth_off_diagonal() {
        let x = SampleMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let k = gram(&x, KernelSpec::rbf(1.0).unwrap()).unwrap();
        assert!((k.values()[[0, 1]] - 0.135_335_283_236_612_7).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_bandwidth() {
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
    }

    #[test]
    fn gram_is_psd_on_small_instances() {
        let x = normal_matrix(12, 3, 9);
        for spec in [KernelSpec::rbf_median(), KernelSpec::Linear] {
            let k = gram(&x, spec).unwrap();
            let m = nalgebra::DMatrix::from_fn(12, 12, |i, j| k.values()[[i, j]]);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-8 * 12.0), "{spec}: {eig:?}");
        }
    }

    #[test]
    fn centering_constant_kernel_gives_zero() {
        let g = GramMatrix::from_values(Array2::ones((6, 6)), KernelSpec::Linear).unwrap();
        assert!(center(&g).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Array2<f64> =
            Array2::from_shape_fn((10, 10), |_| StandardNormal.sample(&mut rng));
        let sym = &a + &a.t();
        let g = GramMatrix::from_values(sym.clone(), KernelSpec::Linear).unwrap();
        let h = Array2::<f64>::eye(10) - Array2::<f64>::from_elem((10, 10), 0.1);
        let explicit = h.dot(&sym).dot(&h);
        let c = center(&g);
        for (a, b) in c.values().iter().zip(explicit.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_spec_json_forms() {
        let s: KernelSpec = serde_json::from_str(r#"{"kind":"rbf","bandwidth":"median"}"#).unwrap();
        assert_eq!(s, KernelSpec::rbf_median());
        let s: KernelSpec = serde_json::from_str(r#"{"kind":"rbf","bandwidth":0.5}"#).unwrap();
        assert_eq!(s, KernelSpec::rbf(0.5).unwrap());
        let s: KernelSpec = serde_json::from_str(r#"{"kind":"linear"}"#).unwrap();
        assert_eq!(s, KernelSpec::Linear);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"kind":"rbf","bandwidth":-1}"#).is_err());
        assert_eq!(
            serde_json::to_string(&KernelSpec::rbf_median()).unwrap(),
            r#"{"kind":"rbf","bandwidth":"median"}"#
        );
    }

    fn matrix_strategy() -> impl Strategy<Value = SampleMatrix> {
        (2usize..12, 1usize..4).prop_flat_map(|(n, d)| {
            prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| {
                SampleMatrix::new(Array2::from_shape_vec((n, d), v).unwrap()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn gram_is_permutation_equivariant(x in matrix_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..x.n()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let xp = x.select_rows(&perm).unwrap();
            for spec in [KernelSpec::rbf(1.3).unwrap(), KernelSpec::Linear] {
                let k = gram(&x, spec).unwrap();
                let kp = gram(&xp, spec).unwrap();
                for i in 0..x.n() {
                    for j in 0..x.n() {
                        prop_assert_eq!(kp.values()[[i, j]], k.values()[[perm[i], perm[j]]]);
                    }
                }
            }
        }

        #[test]
        fn rbf_is_translation_invariant(x in matrix_strategy(), shift in -3.0f64..3.0) {
            let shifted = SampleMatrix::new(x.view().mapv(|v| v + shift)).unwrap();
            let k = gram(&x, KernelSpec::rbf(0.9).unwrap()).unwrap();
            let ks = gram(&shifted, KernelSpec::rbf(0.9).unwrap()).unwrap();
            for (a, b) in k.values().iter().zip(ks.values().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn centering_zero_sums_symmetric_idempotent(x in matrix_strategy()) {
            let g = gram(&x, KernelSpec::Linear).unwrap();
            let c = center(&g);
            let n = c.n();
            let max = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tol = 1e-8 * n as f64 * max.max(1e-300);
            for i in 0..n {
                prop_assert!(c.values().row(i).sum().abs() <= tol);
                prop_assert!(c.values().column(i).sum().abs() <= tol);
                for j in 0..n {
                    prop_assert_eq!(c.values()[[i, j]], c.values()[[j, i]]);
                }
            }
            let cc = c.recenter();
            for (a, b) in c.values().iter().zip(cc.values().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * max.max(1.0));
            }
        }

        #[test]
        fn median_invariant_under_permutation_and_translation(
            x in matrix_strategy(), seed in any::<u64>(), shift in -3.0f64..3.0
        ) {
            use rand::seq::SliceRandom;
            let Ok(base) = median_heuristic_bandwidth(&x) else { return Ok(()); };
            let mut perm: Vec<usize> = (0..x.n()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let xp = x.select_rows(&perm).unwrap();
            prop_assert_eq!(median_heuristic_bandwidth(&xp).unwrap(), base);
            let shifted = SampleMatrix::new(x.view().mapv(|v| v + shift)).unwrap();
            prop_assert!((median_heuristic_bandwidth(&shifted).unwrap() - base).abs() < 1e-9);
        }
    }
}
