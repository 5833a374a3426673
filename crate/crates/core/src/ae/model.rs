//! Fully connected sigmoid autoencoder with hand-written backpropagation.
//!
//! Layer widths run `input_dim → hidden_dims… → latent_dim` in the encoder
//! and mirror back to `input_dim` in the decoder. Every layer, including
//! the latent and output layers, applies the logistic sigmoid. The objective
//! on a batch is
//!
//! ```text
//! J = mean((f'(f(x)) − target)²) + β · ½ Σ ‖W‖²
//! ```
//!
//! where the mean runs over every output element and the penalty covers
//! weight matrices only.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::data::Task;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

fn default_input_dim() -> usize {
    256
}
fn default_hidden_dims() -> Vec<usize> {
    vec![128]
}
fn default_latent_dim() -> usize {
    32
}
fn default_task() -> Task {
    Task::Reconstruct
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    32
}
fn default_hsic_subsample() -> usize {
    256
}
fn default_validation_fraction() -> f64 {
    0.2
}

/// Architecture and training recipe. Every field has a default so a config
/// file only needs the fields it changes; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_task")]
    pub task: Task,
    /// Weight of the ½‖W‖² penalty.
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Held-out frames used for the per-epoch dependence readings.
    #[serde(default = "default_hsic_subsample")]
    pub hsic_subsample: usize,
    /// Fraction of sequences held out for validation loss and dependence.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Kernel applied to every layer when measuring dependence.
    #[serde(default)]
    pub kernel: KernelSpec,
    /// When set, also fit an SMI density-ratio model between X and Z each
    /// epoch with this ridge λ.
    #[serde(default)]
    pub smi_lambda: Option<f64>,
    /// Record per-epoch wall time. Off by default: timings make traces
    /// differ between otherwise identical runs.
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for AeConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_dims.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.latent_dim >= self.input_dim {
            return bad(format!(
                "latent_dim {} must be smaller than input_dim {}",
                self.latent_dim, self.input_dim
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if self.hsic_subsample < 2 {
            return bad("hsic_subsample must be at least 2".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)".into());
        }
        if let Task::Predict { horizon: 0 } = self.task {
            return bad("prediction horizon must be positive".into());
        }
        if let Some(l) = self.smi_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("smi_lambda must be nonnegative, got {l}"));
            }
        }
        self.kernel.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Widths from input through the latent layer.
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.latent_dim);
        w
    }
}

/// One affine layer followed by a sigmoid. `weights` is fan_in × fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn forward(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights);
        z += &self.bias;
        z.mapv_inplace(sigmoid);
        z
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Encoder layers followed by decoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub layers: Vec<Dense>,
    pub encoder_depth: usize,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub latent: Array2<f64>,
    pub output: Array2<f64>,
    /// Mean squared error between output and target.
    pub loss: f64,
    pub target: Array2<f64>,
    activations: Vec<Array2<f64>>,
}

/// Gradients in the same layout as [`AeModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Initializes a model: weights uniform on ±√(3 / fan_in), so each layer's
/// weight standard deviation is 1/√fan_in; biases zero.
pub fn init_model(config: &AeConfig) -> Result<AeModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let enc = config.encoder_widths();
    let mut widths = enc.clone();
    widths.extend(enc.iter().rev().skip(1));
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (3.0 / fan_in as f64).sqrt();
            Dense {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..=limit)
                }),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(AeModel { layers, encoder_depth: enc.len() - 1 })
}

impl AeModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.encoder_depth - 1].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty model").weights.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Checks that consecutive layer shapes chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.encoder_depth == 0 || self.encoder_depth >= self.layers.len() {
            return Err(Error::InvalidInput("model needs encoder and decoder layers".into()));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].weights.ncols() != w[1].weights.nrows() {
                return Err(Error::InvalidInput(format!("layer {i} output does not feed layer {}", i + 1)));
            }
        }
        if self.layers.iter().any(|l| l.bias.len() != l.weights.ncols()) {
            return Err(Error::InvalidInput("bias length differs from layer width".into()));
        }
        if self.input_dim() != self.output_dim() {
            return Err(Error::InvalidInput("decoder output width differs from input width".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    /// Latent activations for each row of `x`. Rows do not interact.
    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        for layer in &self.layers[..self.encoder_depth] {
            a = layer.forward(a.view());
        }
        Ok(a)
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<ForwardPass> {
        self.check_input(input)?;
        if target.dim() != (input.nrows(), self.output_dim()) {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: target.ncols() });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("seeded").view());
            activations.push(next);
        }
        let output = activations.last().expect("seeded").clone();
        let loss = mse(output.view(), target);
        Ok(ForwardPass {
            latent: activations[self.encoder_depth].clone(),
            output,
            loss,
            target: target.to_owned(),
            activations,
        })
    }

    /// Exact gradients of the batch objective with penalty weight `beta`.
    pub fn backward(
        &self,
        input: ArrayView2<'_, f64>,
        target: ArrayView2<'_, f64>,
        beta: f64,
    ) -> Result<(ForwardPass, Gradients)> {
        let pass = self.forward(input, target)?;
        let count = (pass.output.len()) as f64;
        // dJ/dz at the output layer through the sigmoid.
        let mut delta = (&pass.output - &target) * (2.0 / count);
        delta *= &pass.output.mapv(|a| a * (1.0 - a));

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &pass.activations[idx];
            let mut gw = a_prev.t().dot(&delta);
            if beta != 0.0 {
                gw.scaled_add(beta, &layer.weights);
            }
            let gb = delta.sum_axis(Axis(0));
            if idx > 0 {
                let mut back = delta.dot(&layer.weights.t());
                back *= &a_prev.mapv(|a| a * (1.0 - a));
                delta = back;
            }
            grads.push(Dense { weights: gw, bias: gb });
        }
        grads.reverse();
        Ok((pass, Gradients { layers: grads }))
    }

    /// Objective value: MSE plus the weight penalty.
    pub fn objective(&self, input: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, beta: f64) -> Result<f64> {
        let loss = self.forward(input, target)?.loss;
        let penalty: f64 = self.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>()).sum();
        Ok(loss + 0.5 * beta * penalty)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

pub fn mse(output: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    let n = output.len() as f64;
    output.iter().zip(target.iter()).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / n
}
