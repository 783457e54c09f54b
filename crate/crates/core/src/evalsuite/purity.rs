//! Harmonic purity: class-size-weighted best F1 between each class and the
//! documents assigned (by argmax) to any single topic.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use ndarray::{ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Argmax with ties resolved to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn purity_harmonic<L: Eq + Hash + Ord>(theta: ArrayView2<'_, f64>, labels: &[L]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("purity needs at least one labeled document".into()));
    }
    if labels.len() != theta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} theta rows but {} labels",
            theta.nrows(),
            labels.len()
        )));
    }
    let assignments: Vec<usize> = theta.rows().into_iter().map(argmax).collect();
    let mut topic_sizes: HashMap<usize, usize> = HashMap::new();
    for &k in &assignments {
        *topic_sizes.entry(k).or_default() += 1;
    }
    let mut class_topic: BTreeMap<&L, HashMap<usize, usize>> = BTreeMap::new();
    let mut class_sizes: BTreeMap<&L, usize> = BTreeMap::new();
    for (label, &k) in labels.iter().zip(&assignments) {
        *class_topic.entry(label).or_default().entry(k).or_default() += 1;
        *class_sizes.entry(label).or_default() += 1;
    }
    let n = labels.len() as f64;
    let mut purity = 0.0;
    for (label, overlaps) in &class_topic {
        let class_size = class_sizes[label] as f64;
        let best = overlaps
            .iter()
            .map(|(k, &hits)| 2.0 * hits as f64 / (class_size + topic_sizes[k] as f64))
            .fold(0.0, f64::max);
        purity += class_size / n * best;
    }
    Ok(purity)
}
