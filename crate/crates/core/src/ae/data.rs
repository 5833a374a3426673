//! Synthetic moving-blob frame sequences.
//!
//! Each sequence shows one bright blob drifting in a straight line across a
//! `side × side` frame. The class fixes the direction of motion (class `c` of
//! `K` moves at angle `2πc/K`, with a small per-sequence jitter); speed varies
//! per sequence. The blob leaves a fading trail of its three previous
//! positions, so a single frame carries direction information much like
//! motion blur does in video.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{write_matrix_csv, SampleMatrix};

const BLOB_RADIUS: f64 = 1.5;
const EDGE_MARGIN: f64 = 2.0;
const TRAIL: [f64; 4] = [1.0, 0.55, 0.3, 0.15];
const NOISE: f64 = 0.05;
const ANGLE_JITTER: f64 = 0.15;
const MAX_SPEED: f64 = 1.5;

pub const DATASET_FORMAT: &str = "layerdep-dataset/v1";
const FRAMES_FILE: &str = "frames.csv";
const META_FILE: &str = "dataset.json";

/// Missing fields take their default values when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub side: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    /// 100 sequences of 20 frames: the 2000-frame default dataset.
    fn default() -> Self {
        Self { num_sequences: 100, frames_per_sequence: 20, side: 16, num_classes: 4, seed: 0 }
    }
}

/// Contiguous run of frames belonging to one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpan {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequenceDataset {
    /// T × side² flattened grayscale frames in [0, 1], row-major pixels.
    pub frames: Array2<f64>,
    /// Class of each frame's sequence.
    pub labels: Vec<usize>,
    pub sequences: Vec<SequenceSpan>,
    pub side: usize,
    pub num_classes: usize,
    pub generator: Option<GeneratorConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    format: String,
    side: usize,
    num_classes: usize,
    labels: Vec<usize>,
    sequences: Vec<SequenceSpan>,
    generator: Option<GeneratorConfig>,
}

/// Which output an autoencoder is trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Reproduce the input frame.
    Reconstruct,
    /// Produce the frame `horizon` steps later in the same sequence.
    Predict {
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
}

fn default_horizon() -> usize {
    2
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Reconstruct => "reconstruct",
            Task::Predict { .. } => "predict",
        }
    }
}

pub fn generate_synthetic_sequences(cfg: &GeneratorConfig) -> Result<SyntheticSequenceDataset> {
    if cfg.num_sequences == 0 || cfg.frames_per_sequence == 0 || cfg.side == 0 {
        return Err(Error::InvalidInput("generator sizes must be positive".into()));
    }
    if cfg.num_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {}",
            cfg.num_classes
        )));
    }
    let side = cfg.side as f64;
    let span = side - 1.0 - 2.0 * EDGE_MARGIN;
    if span <= 0.0 {
        return Err(Error::InvalidInput(format!("frame side {} is too small", cfg.side)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.num_sequences * cfg.frames_per_sequence;
    let dim = cfg.side * cfg.side;
    let mut frames = Array2::<f64>::zeros((total, dim));
    let mut labels = Vec::with_capacity(total);
    let mut sequences = Vec::with_capacity(cfg.num_sequences);
    let steps = (cfg.frames_per_sequence.max(2) - 1) as f64;

    for s in 0..cfg.num_sequences {
        let class = s % cfg.num_classes;
        let angle = 2.0 * PI * class as f64 / cfg.num_classes as f64
            + rng.random_range(-ANGLE_JITTER..=ANGLE_JITTER);
        let (dir_y, dir_x) = angle.sin_cos();
        // Image rows grow downward; flip y so class angles read counter-clockwise.
        let dir_y = -dir_y;
        let dominant = dir_x.abs().max(dir_y.abs());
        let speed = (rng.random_range(0.6..0.95) * span / steps / dominant).min(MAX_SPEED);
        let (vx, vy) = (speed * dir_x, speed * dir_y);
        let start_x = sample_start(&mut rng, vx * steps, side);
        let start_y = sample_start(&mut rng, vy * steps, side);

        let start = s * cfg.frames_per_sequence;
        sequences.push(SequenceSpan { start, len: cfg.frames_per_sequence });
        for f in 0..cfg.frames_per_sequence {
            let cx = start_x + vx * f as f64;
            let cy = start_y + vy * f as f64;
            let mut row = frames.row_mut(start + f);
            for py in 0..cfg.side {
                for px in 0..cfg.side {
                    let mut v = 0.0;
                    for (k, amp) in TRAIL.iter().enumerate() {
                        let tx = cx - vx * k as f64;
                        let ty = cy - vy * k as f64;
                        let d2 = (px as f64 - tx).powi(2) + (py as f64 - ty).powi(2);
                        v += amp * (-d2 / (2.0 * BLOB_RADIUS * BLOB_RADIUS)).exp();
                    }
                    v += rng.random_range(0.0..NOISE);
                    row[py * cfg.side + px] = v.clamp(0.0, 1.0);
                }
            }
            labels.push(class);
        }
    }

    Ok(SyntheticSequenceDataset {
        frames,
        labels,
        sequences,
        side: cfg.side,
        num_classes: cfg.num_classes,
        generator: Some(*cfg),
    })
}

/// Start coordinate keeping the whole trajectory `[start, start + travel]`
/// inside the margins.
fn sample_start(rng: &mut ChaCha8Rng, travel: f64, side: f64) -> f64 {
    let lo = EDGE_MARGIN - travel.min(0.0);
    let hi = side - 1.0 - EDGE_MARGIN - travel.max(0.0);
    if hi > lo { rng.random_range(lo..hi) } else { 0.5 * (lo + hi) }
}

impl SyntheticSequenceDataset {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames_view(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    fn sequence_of(&self, frame: usize) -> Option<&SequenceSpan> {
        self.sequences.iter().find(|s| frame >= s.start && frame < s.start + s.len)
    }

    /// Index of the frame `horizon` steps after `frame`, if it lies in the
    /// same sequence.
    pub fn prediction_target(&self, frame: usize, horizon: usize) -> Result<usize> {
        let seq = self.sequence_of(frame).ok_or_else(|| {
            Error::InvalidInput(format!("frame {frame} is outside every sequence"))
        })?;
        let target = frame + horizon;
        if target >= seq.start + seq.len {
            return Err(Error::HorizonOutOfRange { horizon, sequence_len: seq.len });
        }
        Ok(target)
    }

    /// All (input, target) frame pairs for `task`, sequence by sequence.
    /// Prediction pairs never cross a sequence boundary; if no sequence is
    /// longer than the horizon the task is impossible.
    pub fn pairs(&self, task: Task) -> Result<Vec<(usize, usize)>> {
        match task {
            Task::Reconstruct => Ok((0..self.len()).map(|i| (i, i)).collect()),
            Task::Predict { horizon } => {
                if horizon == 0 {
                    return Err(Error::InvalidInput("prediction horizon must be positive".into()));
                }
                let pairs: Vec<(usize, usize)> = self
                    .sequences
                    .iter()
                    .flat_map(|s| {
                        (s.start..(s.start + s.len).saturating_sub(horizon)).map(move |i| (i, i + horizon))
                    })
                    .collect();
                if pairs.is_empty() {
                    let longest = self.sequences.iter().map(|s| s.len).max().unwrap_or(0);
                    return Err(Error::HorizonOutOfRange { horizon, sequence_len: longest });
                }
                Ok(pairs)
            }
        }
    }

    /// Frames at `indices` as a sample matrix.
    pub fn select(&self, indices: &[usize]) -> Result<SampleMatrix> {
        SampleMatrix::new(self.frames.select(Axis(0), indices))
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} labels for {} frames",
                self.labels.len(),
                self.len()
            )));
        }
        if self.input_dim() != self.side * self.side {
            return Err(Error::SchemaMismatch(format!(
                "frame width {} does not match side {}",
                self.input_dim(),
                self.side
            )));
        }
        let mut next = 0;
        for s in &self.sequences {
            if s.start != next || s.len == 0 {
                return Err(Error::SchemaMismatch("sequences must tile the frames in order".into()));
            }
            next += s.len;
        }
        if next != self.len() {
            return Err(Error::SchemaMismatch("sequences do not cover every frame".into()));
        }
        if self.frames.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::SchemaMismatch("pixel values must lie in [0, 1]".into()));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::SchemaMismatch(format!("label {l} ≥ num_classes")));
        }
        Ok(())
    }

    /// Writes `frames.csv` and the `dataset.json` sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let file = std::fs::File::create(dir.join(FRAMES_FILE))?;
        write_matrix_csv(self.frames.view(), std::io::BufWriter::new(file))?;
        let meta = DatasetMeta {
            format: DATASET_FORMAT.to_string(),
            side: self.side,
            num_classes: self.num_classes,
            labels: self.labels.clone(),
            sequences: self.sequences.clone(),
            generator: self.generator,
        };
        std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(dir.join(META_FILE))?)?;
        if meta.format != DATASET_FORMAT {
            return Err(Error::SchemaMismatch(format!(
                "unknown dataset format `{}`",
                meta.format
            )));
        }
        let frames = SampleMatrix::from_csv_path(dir.join(FRAMES_FILE))?.into_inner();
        let data = Self {
            frames,
            labels: meta.labels,
            sequences: meta.sequences,
            side: meta.side,
            num_classes: meta.num_classes,
            generator: meta.generator,
        };
        data.validate()?;
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig { num_sequences: 10, frames_per_sequence: 20, side: 16, num_classes: 4, seed: 7 }
    }

    #[test]
    fn shape_contract() {
        let d = generate_synthetic_sequences(&small()).unwrap();
        assert_eq!(d.frames.dim(), (200, 256));
        assert_eq!(d.labels.len(), 200);
        assert!(d.labels.iter().all(|&l| l < 4));
        assert!(d.frames.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(d.sequences.len(), 10);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_sequences(&small()).unwrap();
        let b = generate_synthetic_sequences(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_sequences(&GeneratorConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    fn center_of_mass_x(frame: ndarray::ArrayView1<'_, f64>, side: usize) -> f64 {
        // Suppress the background noise floor before weighting.
        let (mut wsum, mut xsum) = (0.0, 0.0);
        for (i, &v) in frame.iter().enumerate() {
            let w = (v - 0.1).max(0.0);
            wsum += w;
            xsum += w * (i % side) as f64;
        }
        xsum / wsum
    }

    #[test]
    fn rightward_class_drifts_monotonically_in_x() {
        let d = generate_synthetic_sequences(&small()).unwrap();
        // Class 0 moves at angle 0, i.e. to the right.
        let mut checked = 0;
        for seq in d.sequences.iter().filter(|s| d.labels[s.start] == 0) {
            let xs: Vec<f64> = (seq.start..seq.start + seq.len)
                .map(|i| center_of_mass_x(d.frames.row(i), d.side))
                .collect();
            assert!(xs.windows(2).all(|w| w[1] > w[0]), "{xs:?}");
            checked += 1;
        }
        assert!(checked >= 2);
    }

    #[test]
    fn prediction_pairs_stay_inside_sequences() {
        let d = generate_synthetic_sequences(&small()).unwrap();
        for horizon in 1..20 {
            let pairs = d.pairs(Task::Predict { horizon }).unwrap();
            assert_eq!(pairs.len(), 10 * (20 - horizon));
            for (i, t) in pairs {
                assert_eq!(t, i + horizon);
                assert_eq!(i / 20, t / 20);
                assert_eq!(d.prediction_target(i, horizon).unwrap(), t);
            }
        }
        assert!(matches!(
            d.pairs(Task::Predict { horizon: 20 }),
            Err(Error::HorizonOutOfRange { horizon: 20, sequence_len: 20 })
        ));
        assert!(matches!(d.prediction_target(19, 1), Err(Error::HorizonOutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_generator_config() {
        assert!(generate_synthetic_sequences(&GeneratorConfig { num_classes: 1, ..small() }).is_err());
        assert!(generate_synthetic_sequences(&GeneratorConfig { side: 4, ..small() }).is_err());
        assert!(generate_synthetic_sequences(&GeneratorConfig { num_sequences: 0, ..small() }).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let d = generate_synthetic_sequences(&GeneratorConfig { num_sequences: 3, ..small() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(SyntheticSequenceDataset::load(dir.path()).unwrap(), d);
    }

    #[test]
    fn task_json_form() {
        let t: Task = serde_json::from_str(r#"{"type":"predict","horizon":3}"#).unwrap();
        assert_eq!(t, Task::Predict { horizon: 3 });
        let t: Task = serde_json::from_str(r#"{"type":"reconstruct"}"#).unwrap();
        assert_eq!(t, Task::Reconstruct);
        let t: Task = serde_json::from_str(r#"{"type":"predict"}"#).unwrap();
        assert_eq!(t, Task::Predict { horizon: 2 });
    }
}
