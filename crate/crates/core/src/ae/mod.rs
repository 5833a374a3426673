//! Autoencoder experiment harness: synthetic data, models, training, probe.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod model;
pub mod probe;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use data::{generate_synthetic_sequences, GeneratorConfig, SequenceSpan, SyntheticSequenceDataset, Task};
pub use model::{init_model, AeConfig, AeModel, Dense, ForwardPass, Gradients};
pub use probe::{null_probe_accuracies, percentile_95, probe_classifier, ProbeConfig, ProbeResult};
pub use train::{config_fingerprint, train};
