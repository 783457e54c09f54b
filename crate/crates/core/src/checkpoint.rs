//! Versioned model checkpoint container.
//!
//! ```text
//! bytes 0..4   magic "STCK"
//! u32 LE       format version (1)
//! u32 LE       byte length of the config block
//! ...          ModelConfig as `key = value` lines (UTF-8)
//! u32 LE       tensor count
//! per tensor:  u32 LE name length, UTF-8 name, DTM1 block
//! ```
//!
//! Tensors follow [`Weights::for_each_block`] order, then
//! `batchnorm.running_mean` and `batchnorm.running_var` when the decoder is
//! batch-normalized. Vectors are stored as `1 × n` matrices; values are f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::dtm::{read_dtm1, write_dtm1};
use crate::topicmodel::{BatchNormState, ModelConfig, ModelParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STCK";
pub const VERSION: u32 = 1;

fn tensors(params: &ModelParams) -> Vec<(String, Vec<f64>, (usize, usize))> {
    let w = &params.weights;
    let mut shapes = Vec::new();
    for layer in &w.encoder {
        shapes.push(layer.weight.dim());
        shapes.push((1, layer.bias.len()));
    }
    for head in [&w.mu_head, &w.logvar_head] {
        shapes.push(head.weight.dim());
        shapes.push((1, head.bias.len()));
    }
    shapes.push(w.beta.dim());
    shapes.push((1, w.prior_mu.len()));
    shapes.push((1, w.prior_logvar.len()));

    let mut out = Vec::new();
    let mut shape_iter = shapes.into_iter();
    w.for_each_block(|name, values| {
        out.push((name, values.to_vec(), shape_iter.next().expect("one shape per block")));
    });
    if let Some(bn) = &params.batchnorm {
        out.push(("batchnorm.running_mean".into(), bn.running_mean.to_vec(), (1, bn.running_mean.len())));
        out.push(("batchnorm.running_var".into(), bn.running_var.to_vec(), (1, bn.running_var.len())));
    }
    out
}

pub fn write_checkpoint<W: Write>(mut w: W, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let cfg = config.to_kv_text();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(cfg.as_bytes())?;
    let tensors = tensors(params);
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, values, shape) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let m = Array2::from_shape_vec(shape, values.into_iter().map(|v| v as f32).collect())
            .expect("shape matches tensor");
        write_dtm1(&mut w, &m)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    String::from_utf8(buf).map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelConfig, ModelParams)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file (magic mismatch)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let config = ModelConfig::from_kv_text(&read_string(&mut r, cfg_len)?)?;
    config.validate()?;

    let mut params = ModelParams::zeros(&config);
    let expected = tensors(&params);
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, _, shape) in &expected {
        let name_len = read_u32(&mut r)? as usize;
        let found = read_string(&mut r, name_len)?;
        if &found != name {
            return Err(Error::Format(format!("expected tensor `{name}`, found `{found}`")));
        }
        let m = read_dtm1(&mut r)?;
        if m.dim() != *shape {
            return Err(Error::Format(format!("tensor `{name}` has shape {:?}, expected {shape:?}", m.dim())));
        }
        loaded.push(m.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
    }

    let mut it = loaded.into_iter();
    params.weights.for_each_block_mut(|_, block| {
        block.copy_from_slice(&it.next().expect("tensor count checked"));
    });
    if let Some(bn) = &mut params.batchnorm {
        *bn = BatchNormState {
            running_mean: Array1::from(it.next().expect("tensor count checked")),
            running_var: Array1::from(it.next().expect("tensor count checked")),
            momentum: config.batchnorm_momentum,
            eps: config.batchnorm_eps,
        };
    }
    Ok((config, params))
}

pub fn save(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, config, params)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
