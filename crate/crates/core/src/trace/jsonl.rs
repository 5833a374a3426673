use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, TrainingTrace};
use crate::error::{Error, Result};

pub const TRACE_FORMAT: &str = "layerdep-trace/v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    fingerprint: String,
    label: String,
    best_val_epoch: Option<u32>,
    num_records: usize,
}

/// Header line, then one [`EpochRecord`] object per line.
pub fn write_jsonl<W: Write>(trace: &TrainingTrace, mut out: W) -> Result<()> {
    let header = Header {
        format: TRACE_FORMAT.to_string(),
        fingerprint: trace.fingerprint.clone(),
        label: trace.label.clone(),
        best_val_epoch: trace.best_val_epoch(),
        num_records: trace.records().len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for record in trace.records() {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: Read>(input: R) -> Result<TrainingTrace> {
    let mut lines = BufReader::new(input).lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::SchemaMismatch("empty trace file; header line missing".into()))?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::SchemaMismatch(format!("line 1 is not a trace header: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(Error::SchemaMismatch(format!("unknown trace format `{}`", header.format)));
    }
    let mut trace = TrainingTrace::new(header.fingerprint, header.label);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpochRecord = serde_json::from_str(&line)
            .map_err(|e| Error::SchemaMismatch(format!("line {}: {e}", i + 2)))?;
        trace.append(record)?;
    }
    if trace.records().len() != header.num_records {
        return Err(Error::SchemaMismatch(format!(
            "header announces {} records, found {}",
            header.num_records,
            trace.records().len()
        )));
    }
    if trace.best_val_epoch() != header.best_val_epoch {
        return Err(Error::SchemaMismatch("header best_val_epoch disagrees with records".into()));
    }
    Ok(trace)
}

pub fn export_jsonl(trace: &TrainingTrace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_jsonl(trace, std::io::BufWriter::new(file))
}

pub fn import_jsonl(path: impl AsRef<Path>) -> Result<TrainingTrace> {
    read_jsonl(std::fs::File::open(path)?)
}

/// Numeric columns only; degenerate and absent readings become empty cells.
pub fn export_csv<W: Write>(trace: &TrainingTrace, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["epoch", "train_loss", "val_loss", "hsic_xz", "hsic_zy", "smi_xz", "wall_ms"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in trace.records() {
        wtr.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            opt(r.hsic_xz.value()),
            opt(r.hsic_zy.value()),
            opt(r.smi_xz),
            r.wall_ms.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Dependence;

    fn sample_trace(epochs: u32) -> TrainingTrace {
        let mut t = TrainingTrace::new("0123456789abcdef", "reconstruct");
        for e in 1..=epochs {
            let x = e as f64;
            t.append(EpochRecord {
                epoch: e,
                train_loss: 1.0 / x,
                val_loss: 1.0 / x + 0.01 * (x - 30.0).max(0.0),
                hsic_xz: if e % 7 == 0 { Dependence::Degenerate } else { Dependence::Value(0.1 + 0.8 / x) },
                hsic_zy: Dependence::Value((x * 0.013).fract()),
                smi_xz: if e % 2 == 0 { Some(-0.1 * x / 3.0) } else { None },
                wall_ms: e as u64 * 17,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn round_trip_fifty_epochs() {
        let t = sample_trace(50);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        export_jsonl(&t, &path).unwrap();
        let back = import_jsonl(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.records()[6].hsic_xz, Dependence::Degenerate);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.lines().nth(7).unwrap().contains(r#""hsic_xz":"degenerate""#));
    }

    #[test]
    fn missing_header_is_schema_mismatch() {
        let t = sample_trace(3);
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let without_header: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_jsonl(without_header.as_bytes()), Err(Error::SchemaMismatch(_))));
        assert!(matches!(read_jsonl("".as_bytes()), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn unknown_or_missing_fields_rejected() {
        let t = sample_trace(2);
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let extra = text.replacen(r#""wall_ms":17"#, r#""wall_ms":17,"extra":1"#, 1);
        assert!(matches!(read_jsonl(extra.as_bytes()), Err(Error::SchemaMismatch(_))));
        let missing = text.replacen(r#","smi_xz":null"#, "", 1);
        assert_ne!(missing, text);
        assert!(matches!(read_jsonl(missing.as_bytes()), Err(Error::SchemaMismatch(_))));
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_jsonl(truncated.as_bytes()), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn csv_has_empty_cells_for_flags() {
        let t = sample_trace(7);
        let mut buf = Vec::new();
        export_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("7,"));
        assert_eq!(last.split(',').nth(3), Some(""));
    }
}
