//! Reconstruction targets.
//!
//! Soft targets are the temperature-scaled softmax of language-model logits
//! restricted to the topic vocabulary. The bag-of-words ablation uses the
//! normalized count vector instead.

use ndarray::{Array1, Array2, ArrayView1};

use crate::corpus::BowVector;
use crate::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 3.0;

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(temperature))
    }
}

/// `softmax(logits / temperature)` for one row, max-subtracted.
pub fn soft_target_row(logits: ArrayView1<'_, f64>, temperature: f64) -> Result<Array1<f64>> {
    check_temperature(temperature)?;
    if let Some(col) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { row: 0, col });
    }
    Ok(softmax_scaled(logits, temperature))
}

fn softmax_scaled(logits: ArrayView1<'_, f64>, temperature: f64) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logits.mapv(|v| ((v - max) / temperature).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn soft_targets(logits: &Array2<f64>, temperature: f64) -> Result<Array2<f64>> {
    check_temperature(temperature)?;
    for ((row, col), v) in logits.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
    }
    let mut out = Array2::zeros(logits.dim());
    for (src, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        dst.assign(&softmax_scaled(src, temperature));
    }
    Ok(out)
}

/// Normalized counts; empty documents are degenerate.
pub fn bow_targets(bow: &BowVector, vocab_size: usize) -> Result<Array1<f64>> {
    if bow.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if let Some(max) = bow.max_index() {
        if max >= vocab_size {
            return Err(Error::DimensionMismatch(format!(
                "bow index {max} out of range for vocabulary of size {vocab_size}"
            )));
        }
    }
    let total = bow.total() as f64;
    let mut row = Array1::zeros(vocab_size);
    for (i, c) in bow.iter() {
        row[i] = f64::from(c) / total;
    }
    Ok(row)
}

/// Shannon entropy (nats) averaged over rows.
pub fn mean_entropy(targets: &Array2<f64>) -> f64 {
    if targets.nrows() == 0 {
        return 0.0;
    }
    let total: f64 = targets
        .rows()
        .into_iter()
        .map(|row| row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>())
        .sum();
    total / targets.nrows() as f64
}
