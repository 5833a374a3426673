//! Per-epoch training records.
//!
//! A [`TrainingTrace`] is append-only: epochs must arrive as 1, 2, 3, … and
//! the trace keeps track of the epoch with the lowest validation loss
//! (earliest wins on ties).

mod jsonl;
mod svg;

pub use jsonl::{export_csv, export_jsonl, import_jsonl, read_jsonl, write_jsonl, TRACE_FORMAT};
pub use svg::{render_plane_svg, Series, CHART_HEIGHT, CHART_WIDTH, MARGIN_TOP, PLOT_HEIGHT};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A dependence reading, or a flag that the estimator had nothing to
/// measure (a constant layer). Serialized as a number or `"degenerate"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dependence {
    Value(f64),
    Degenerate,
}

impl Dependence {
    pub fn value(&self) -> Option<f64> {
        match self {
            Dependence::Value(v) => Some(*v),
            Dependence::Degenerate => None,
        }
    }
}

impl Serialize for Dependence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dependence::Value(v) => s.serialize_f64(*v),
            Dependence::Degenerate => s.serialize_str("degenerate"),
        }
    }
}

impl<'de> Deserialize<'de> for Dependence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Dependence::Value(v)),
            Raw::Str(s) if s == "degenerate" => Ok(Dependence::Degenerate),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"degenerate\", got \"{s}\""
            ))),
        }
    }
}

// An explicit deserializer makes a missing `smi_xz` key an error rather
// than a silent `None`.
fn required_option<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<f64>::deserialize(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Dependence between the input frames and the latent code.
    pub hsic_xz: Dependence,
    /// Dependence between the latent code and the network output.
    pub hsic_zy: Dependence,
    #[serde(deserialize_with = "required_option")]
    pub smi_xz: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// Hash of the training configuration and kernel choice.
    pub fingerprint: String,
    /// Human-readable run name used in plot legends.
    pub label: String,
    records: Vec<EpochRecord>,
    best_val_epoch: Option<u32>,
}

impl TrainingTrace {
    pub fn new(fingerprint: impl Into<String>, label: impl Into<String>) -> Self {
        Self { fingerprint: fingerprint.into(), label: label.into(), records: Vec::new(), best_val_epoch: None }
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn best_val_epoch(&self) -> Option<u32> {
        self.best_val_epoch
    }

    pub fn last_epoch(&self) -> u32 {
        self.records.last().map_or(0, |r| r.epoch)
    }

    pub fn append(&mut self, record: EpochRecord) -> Result<()> {
        let expected = self.last_epoch() + 1;
        if record.epoch != expected {
            return Err(Error::NonMonotonicEpoch { expected, got: record.epoch });
        }
        if !record.train_loss.is_finite() || !record.val_loss.is_finite() {
            return Err(Error::InvalidInput(format!("epoch {}: losses must be finite", record.epoch)));
        }
        for (name, dep) in [("hsic_xz", record.hsic_xz), ("hsic_zy", record.hsic_zy)] {
            if let Some(v) = dep.value() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "epoch {}: {name} = {v} outside [0, 1]",
                        record.epoch
                    )));
                }
            }
        }
        if let Some(s) = record.smi_xz {
            if !s.is_finite() {
                return Err(Error::InvalidInput(format!("epoch {}: smi_xz is not finite", record.epoch)));
            }
        }
        let improves = match self.best_val_epoch {
            None => true,
            Some(b) => record.val_loss < self.records[(b - 1) as usize].val_loss,
        };
        if improves {
            self.best_val_epoch = Some(record.epoch);
        }
        self.records.push(record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(epoch: u32, val_loss: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.1,
            val_loss,
            hsic_xz: Dependence::Value(0.5),
            hsic_zy: Dependence::Value(0.25),
            smi_xz: None,
            wall_ms: 0,
        }
    }

    #[test]
    fn rejects_epoch_gap() {
        let mut t = TrainingTrace::new("f", "run");
        t.append(record(1, 0.5)).unwrap();
        assert!(matches!(t.append(record(3, 0.4)), Err(Error::NonMonotonicEpoch { expected: 2, got: 3 })));
        let mut empty = TrainingTrace::new("f", "run");
        assert!(empty.append(record(2, 0.4)).is_err());
    }

    #[test]
    fn tracks_best_validation_epoch() {
        let mut t = TrainingTrace::new("f", "run");
        t.append(record(1, 0.5)).unwrap();
        t.append(record(2, 0.3)).unwrap();
        assert_eq!(t.best_val_epoch(), Some(2));
    }

    #[test]
    fn ties_keep_earliest() {
        let mut t = TrainingTrace::new("f", "run");
        t.append(record(1, 0.3)).unwrap();
        t.append(record(2, 0.3)).unwrap();
        t.append(record(3, 0.4)).unwrap();
        assert_eq!(t.best_val_epoch(), Some(1));
    }

    #[test]
    fn rejects_out_of_range_dependence() {
        let mut t = TrainingTrace::new("f", "run");
        let mut r = record(1, 0.3);
        r.hsic_xz = Dependence::Value(1.5);
        assert!(t.append(r).is_err());
    }

    #[test]
    fn dependence_json_forms() {
        assert_eq!(serde_json::to_string(&Dependence::Degenerate).unwrap(), r#""degenerate""#);
        assert_eq!(serde_json::to_string(&Dependence::Value(0.5)).unwrap(), "0.5");
        assert_eq!(serde_json::from_str::<Dependence>("0.25").unwrap(), Dependence::Value(0.25));
        assert!(serde_json::from_str::<Dependence>(r#""nope""#).is_err());
    }
}
