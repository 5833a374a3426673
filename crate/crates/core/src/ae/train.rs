//! Minibatch Adam training with per-epoch dependence readings.
//!
//! Sequences, not frames, are split between training and validation so that
//! no validation frame has a near-duplicate neighbour in the training set.
//! The dependence subsample is drawn once from the validation pairs and
//! reused every epoch.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::data::{SyntheticSequenceDataset, Task};
use super::model::{init_model, mse, AeConfig, AeModel};
use crate::error::{Error, Result};
use crate::hsic::hsic_normalized;
use crate::kernels::{gram, GramMatrix, KernelSpec, SampleMatrix};
use crate::smi::{fit_density_ratio, smi_estimate};
use crate::trace::{Dependence, EpochRecord, TrainingTrace};

// Independent RNG streams derived from the config seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_SUBSAMPLE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_fingerprint(config: &AeConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&json);
    hex::encode(digest)[..16].to_string()
}

pub fn run_label(task: Task) -> String {
    match task {
        Task::Reconstruct => "reconstruct".into(),
        Task::Predict { horizon } => format!("predict+{horizon}"),
    }
}

/// Training and validation pairs after the sequence split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<(usize, usize)>,
    pub validation: Vec<(usize, usize)>,
}

pub fn split_pairs(config: &AeConfig, data: &SyntheticSequenceDataset) -> Result<Split> {
    let pairs = data.pairs(config.task)?;
    let num_seq = data.sequences.len();
    if num_seq < 2 {
        return Err(Error::InvalidInput("need at least 2 sequences to hold one out".into()));
    }
    let n_val = ((config.validation_fraction * num_seq as f64).round() as usize).clamp(1, num_seq - 1);
    let mut order: Vec<usize> = (0..num_seq).collect();
    order.shuffle(&mut rng(config.seed, STREAM_SPLIT));
    let mut held_out = vec![false; num_seq];
    for &s in &order[..n_val] {
        held_out[s] = true;
    }
    let mut seq_of = vec![0; data.len()];
    for (s, span) in data.sequences.iter().enumerate() {
        seq_of[span.start..span.start + span.len].fill(s);
    }
    let (validation, train): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|&(i, _)| held_out[seq_of[i]]);
    if train.is_empty() || validation.len() < 2 {
        return Err(Error::InvalidInput(
            "sequence split leaves too few training or validation pairs".into(),
        ));
    }
    Ok(Split { train, validation })
}

fn gather(data: &SyntheticSequenceDataset, pairs: &[(usize, usize)]) -> (Array2<f64>, Array2<f64>) {
    let inputs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    (data.frames.select(Axis(0), &inputs), data.frames.select(Axis(0), &targets))
}

fn degenerate_ok<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateInput(_) | Error::AllPointsIdentical) => Ok(None),
        Err(e) => Err(e),
    }
}

fn dependence(k: Option<&GramMatrix>, layer: &Array2<f64>, kernel: KernelSpec) -> Result<Dependence> {
    let Some(k) = k else { return Ok(Dependence::Degenerate) };
    let reading = degenerate_ok(
        SampleMatrix::new(layer.clone()).and_then(|m| gram(&m, kernel)).and_then(|l| hsic_normalized(k, &l)),
    )?;
    Ok(reading.map_or(Dependence::Degenerate, |e| Dependence::Value(e.value)))
}

/// Trains a fresh model and returns it with one trace record per epoch.
pub fn train(config: &AeConfig, data: &SyntheticSequenceDataset) -> Result<(AeModel, TrainingTrace)> {
    config.validate()?;
    if config.input_dim != data.input_dim() {
        return Err(Error::DimensionMismatch { expected: config.input_dim, got: data.input_dim() });
    }
    let split = split_pairs(config, data)?;
    let (x_train, t_train) = gather(data, &split.train);
    let (x_val, t_val) = gather(data, &split.validation);

    let mut sub: Vec<usize> = (0..split.validation.len()).collect();
    sub.shuffle(&mut rng(config.seed, STREAM_SUBSAMPLE));
    sub.truncate(config.hsic_subsample);
    sub.sort_unstable();
    let x_sub = SampleMatrix::new(x_val.select(Axis(0), &sub))?;
    let gram_x = degenerate_ok(gram(&x_sub, config.kernel))?;

    let mut model = init_model(config)?;
    let adam = config.adam();
    let mut state = AdamState::new();
    let mut shuffle_rng = rng(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    let mut trace = TrainingTrace::new(config_fingerprint(config), run_label(config.task));

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let tb = t_train.select(Axis(0), batch);
            let (_, grads) = model.backward(xb.view(), tb.view(), config.beta)?;
            let g = grads.slices();
            state.step(&adam, &mut model.param_slices_mut(), &g);
        }

        let train_pass = model.forward(x_train.view(), t_train.view())?;
        let val_pass = model.forward(x_val.view(), t_val.view())?;
        let z_sub = val_pass.latent.select(Axis(0), &sub);
        let y_sub = val_pass.output.select(Axis(0), &sub);
        let hsic_xz = dependence(gram_x.as_ref(), &z_sub, config.kernel)?;
        let hsic_zy = match degenerate_ok(SampleMatrix::new(z_sub.clone()).and_then(|z| gram(&z, config.kernel)))? {
            Some(gz) => dependence(Some(&gz), &y_sub, config.kernel)?,
            None => Dependence::Degenerate,
        };
        let smi_xz = match config.smi_lambda {
            Some(lambda) => smi_reading(&x_sub, &z_sub, config.kernel, lambda)?,
            None => None,
        };
        let wall_ms = if config.record_timing { started.elapsed().as_millis() as u64 } else { 0 };
        trace.append(EpochRecord {
            epoch: epoch as u32,
            train_loss: mse(train_pass.output.view(), t_train.view()),
            val_loss: val_pass.loss,
            hsic_xz,
            hsic_zy,
            smi_xz,
            wall_ms,
        })?;
    }
    Ok((model, trace))
}

fn smi_reading(x: &SampleMatrix, z: &Array2<f64>, kernel: KernelSpec, lambda: f64) -> Result<Option<f64>> {
    let fitted = SampleMatrix::new(z.clone()).and_then(|z| {
        let model = fit_density_ratio(x, &z, kernel, kernel, lambda)?;
        smi_estimate(x, &z, &model)
    });
    match fitted {
        Ok(e) => Ok(Some(e.value)),
        Err(Error::DegenerateInput(_) | Error::AllPointsIdentical | Error::SingularSystem(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
