//! Kernel dependence measures between network layers.
//!
//! - [`kernels`]: sample matrices, RBF/linear Gram matrices, centering.
//! - [`hsic`]: biased and normalized HSIC, a brute-force oracle, permutation test.
//! - [`smi`]: squared-loss mutual information by least-squares density-ratio
//!   fitting, and its fixed-θ form that reduces to normalized HSIC.
//! - [`ae`]: synthetic frame sequences, fully connected sigmoid autoencoders
//!   trained with Adam for reconstruction or prediction, and an MLP probe.
//! - [`trace`]: per-epoch training records, JSONL persistence, SVG plots.

pub mod ae;
pub mod error;
pub mod hsic;
pub mod kernels;
pub mod linalg;
pub mod smi;
pub mod trace;

pub use error::{Error, Result};
pub use hsic::{
    hsic_brute_force, hsic_normalized, hsic_normalized_samples, hsic_unnormalized,
    permutation_test, DependenceEstimate, EstimatorKind, PermutationTestResult,
};
pub use kernels::{
    center, gram, median_heuristic_bandwidth, Bandwidth, CenteredGram, GramMatrix, KernelSpec,
    SampleMatrix,
};
pub use smi::{
    fit_density_ratio, smi_cross_validated, smi_estimate, smi_fixed_theta, DensityRatioModel,
    SmiConfig,
};
pub use trace::{Dependence, EpochRecord, TrainingTrace};
