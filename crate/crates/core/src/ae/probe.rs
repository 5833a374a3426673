//! One-hidden-layer softmax MLP trained on frozen latent codes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};

fn default_hidden_width() -> usize {
    32
}
fn default_epochs() -> usize {
    300
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    /// Full-batch Adam steps.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-class share of samples used for training.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput("probe hidden_width and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("probe learning_rate must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput("probe train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Held-out accuracy.
    pub accuracy: f64,
    pub num_classes: usize,
    pub train_size: usize,
    pub test_size: usize,
}

/// Per class, shuffle its members and send the first `round(f·count)` to
/// training. Both splits must contain every class.
fn stratified_split(labels: &[usize], num_classes: usize, frac: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let k = (frac * members.len() as f64).round() as usize;
        if k == 0 || k == members.len() {
            return Err(Error::DegenerateLabels(format!(
                "class {c} has {} samples; it cannot appear in both splits",
                members.len()
            )));
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (3.0 / rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

struct Mlp {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Mlp {
    fn hidden(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.dot(&self.w1) + &self.b1;
        h.mapv_inplace(f64::tanh);
        h
    }

    fn probabilities(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut p = h.dot(&self.w2) + &self.b2;
        for mut row in p.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let p = self.probabilities(&self.hidden(x));
        p.rows()
            .into_iter()
            .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0)
            .collect()
    }
}

/// Trains the probe on a stratified split of (z, labels) and reports test
/// accuracy. Features are standardized with training-split statistics.
pub fn probe_classifier(z: ArrayView2<'_, f64>, labels: &[usize], config: &ProbeConfig) -> Result<ProbeResult> {
    config.validate()?;
    if z.nrows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: z.nrows(), got: labels.len() });
    }
    if z.ncols() == 0 || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("latent codes must be finite with at least one column".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(Error::DegenerateLabels("need at least 2 classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, test_idx) = stratified_split(labels, num_classes, config.train_fraction, &mut rng)?;

    let x_train = z.select(Axis(0), &train_idx);
    let mean = x_train.mean_axis(Axis(0)).expect("non-empty split");
    let std = x_train.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let standardize = |m: Array2<f64>| (m - &mean) / &std;
    let x_train = standardize(x_train);
    let x_test = standardize(z.select(Axis(0), &test_idx));
    let n = train_idx.len();
    let mut onehot = Array2::<f64>::zeros((n, num_classes));
    for (r, &i) in train_idx.iter().enumerate() {
        onehot[[r, labels[i]]] = 1.0;
    }

    let width = config.hidden_width;
    let mut mlp = Mlp {
        w1: uniform(&mut rng, z.ncols(), width),
        b1: Array1::zeros(width),
        w2: uniform(&mut rng, width, num_classes),
        b2: Array1::zeros(num_classes),
    };
    let adam = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::new();
    for _ in 0..config.epochs {
        let h = mlp.hidden(x_train.view());
        let p = mlp.probabilities(&h);
        // Mean cross-entropy gradient at the logits.
        let d_logits = (p - &onehot) / n as f64;
        let gw2 = h.t().dot(&d_logits);
        let gb2 = d_logits.sum_axis(Axis(0));
        let mut d_h = d_logits.dot(&mlp.w2.t());
        d_h *= &h.mapv(|a| 1.0 - a * a);
        let gw1 = x_train.t().dot(&d_h);
        let gb1 = d_h.sum_axis(Axis(0));
        let grads = [
            gw1.as_slice().expect("standard layout"),
            gb1.as_slice().expect("standard layout"),
            gw2.as_slice().expect("standard layout"),
            gb2.as_slice().expect("standard layout"),
        ];
        let mut params = [
            mlp.w1.as_slice_mut().expect("standard layout"),
            mlp.b1.as_slice_mut().expect("standard layout"),
            mlp.w2.as_slice_mut().expect("standard layout"),
            mlp.b2.as_slice_mut().expect("standard layout"),
        ];
        state.step(&adam, &mut params, &grads);
    }

    let predicted = mlp.predict(x_test.view());
    let correct = predicted.iter().zip(&test_idx).filter(|(p, &i)| **p == labels[i]).count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test_idx.len() as f64,
        num_classes,
        train_size: n,
        test_size: test_idx.len(),
    })
}

/// Probe accuracies after randomly permuting the labels, one per trial.
/// Trial `t` shuffles with stream `t + 1` of `seed`.
pub fn null_probe_accuracies(
    z: ArrayView2<'_, f64>,
    labels: &[usize],
    config: &ProbeConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng);
            probe_classifier(z, &shuffled, config).map(|r| r.accuracy)
        })
        .collect()
}

/// Empirical 95th percentile (nearest rank).
pub fn percentile_95(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.95 * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}
