//! Binary model checkpoint.
//!
//! All integers little-endian:
//!
//! ```text
//! magic     8 bytes  "LDAECKPT"
//! version   u32      1
//! config    u32 length, then UTF-8 JSON of the AeConfig
//! tensors   u32 count, then per tensor:
//!             u32 name length, name bytes ("layer{i}.weight" / "layer{i}.bias")
//!             u32 rank, rank × u64 dims
//!             f64 values, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{AeConfig, AeModel, Dense};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LDAECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_tensor<W: Write>(w: &mut W, name: &str, dims: &[usize], values: &[f64]) -> Result<()> {
    put_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    put_u32(w, dims.len() as u32)?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, config: &AeConfig, model: &AeModel) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(&mut w, CHECKPOINT_VERSION)?;
    let json = serde_json::to_vec(config)?;
    put_u32(&mut w, json.len() as u32)?;
    w.write_all(&json)?;
    put_u32(&mut w, (2 * model.layers.len()) as u32)?;
    for (i, layer) in model.layers.iter().enumerate() {
        let (r, c) = layer.weights.dim();
        let weights = layer.weights.as_standard_layout();
        put_tensor(&mut w, &format!("layer{i}.weight"), &[r, c], weights.as_slice().expect("standard layout"))?;
        put_tensor(&mut w, &format!("layer{i}.bias"), &[c], layer.bias.as_slice().expect("contiguous"))?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::SchemaMismatch(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, expected_name: &str, expected_rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let name_len = self.u32()? as usize;
        let name = String::from_utf8(self.bytes(name_len)?)
            .map_err(|_| Error::SchemaMismatch("tensor name is not UTF-8".into()))?;
        if name != expected_name {
            return Err(Error::SchemaMismatch(format!("expected tensor `{expected_name}`, found `{name}`")));
        }
        let rank = self.u32()? as usize;
        if rank != expected_rank {
            return Err(Error::SchemaMismatch(format!("tensor `{name}` has rank {rank}")));
        }
        let dims = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = self.bytes(count * 8)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((dims, values))
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<(AeConfig, AeModel)> {
    let mut r = Reader { inner: input };
    if r.bytes(8)? != CHECKPOINT_MAGIC {
        return Err(Error::SchemaMismatch("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::SchemaMismatch(format!("unsupported checkpoint version {version}")));
    }
    let json_len = r.u32()? as usize;
    let config: AeConfig = serde_json::from_slice(&r.bytes(json_len)?)?;
    let count = r.u32()? as usize;
    if !count.is_multiple_of(2) {
        return Err(Error::SchemaMismatch(format!("odd tensor count {count}")));
    }
    let mut layers = Vec::with_capacity(count / 2);
    for i in 0..count / 2 {
        let (wd, wv) = r.tensor(&format!("layer{i}.weight"), 2)?;
        let (bd, bv) = r.tensor(&format!("layer{i}.bias"), 1)?;
        let weights = Array2::from_shape_vec((wd[0], wd[1]), wv)
            .map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        if bd[0] != wd[1] {
            return Err(Error::SchemaMismatch(format!("layer {i} bias length {} vs width {}", bd[0], wd[1])));
        }
        layers.push(Dense { weights, bias: Array1::from(bv) });
    }
    let model = AeModel { layers, encoder_depth: config.encoder_widths().len() - 1 };
    model.validate()?;
    if model.input_dim() != config.input_dim || model.latent_dim() != config.latent_dim {
        return Err(Error::SchemaMismatch("checkpoint tensors disagree with its config".into()));
    }
    Ok((config, model))
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &AeConfig, model: &AeModel) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), config, model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(AeConfig, AeModel)> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
