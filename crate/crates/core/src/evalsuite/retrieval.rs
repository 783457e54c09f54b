//! Document retrieval by KL divergence between topic distributions.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

pub const THETA_SMOOTHING: f64 = 1e-10;

/// Retrieval defaults: precision at 5 and at 10.
pub const DEFAULT_PRECISION_AT: [usize; 2] = [5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlDirection {
    /// `KL(θ_query || θ_doc)`
    #[default]
    QueryFirst,
    /// `KL(q || d) + KL(d || q)`
    Symmetric,
}

impl std::fmt::Display for KlDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KlDirection::QueryFirst => "query_first",
            KlDirection::Symmetric => "symmetric",
        })
    }
}

impl std::str::FromStr for KlDirection {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "query_first" => Ok(KlDirection::QueryFirst),
            "symmetric" => Ok(KlDirection::Symmetric),
            other => Err(crate::Error::InvalidArgument(format!("unknown KL direction `{other}`"))),
        }
    }
}

/// Adds `THETA_SMOOTHING` to every entry and renormalizes each row.
pub fn smooth(theta: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = theta.mapv(|v| v + THETA_SMOOTHING);
    for mut row in out.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    out
}

fn kl(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    p.iter().zip(q.iter()).map(|(&a, &b)| a * (a / b).ln()).sum()
}

fn divergence(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>, direction: KlDirection) -> f64 {
    match direction {
        KlDirection::QueryFirst => kl(p, q),
        KlDirection::Symmetric => kl(p, q) + kl(q, p),
    }
}

/// Every other document ranked by ascending divergence from `query`; ties
/// keep document order.
pub fn rank_by_kl(
    smoothed: ArrayView2<'_, f64>,
    query: usize,
    direction: KlDirection,
) -> Vec<(usize, f64)> {
    let q = smoothed.row(query);
    let mut scored: Vec<(usize, f64)> = (0..smoothed.nrows())
        .filter(|&d| d != query)
        .map(|d| (d, divergence(q, smoothed.row(d), direction)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored
}

/// Mean over all query documents of the fraction of the `n` nearest
/// documents that share the query's label.
pub fn retrieval_precision<L: PartialEq>(
    theta: ArrayView2<'_, f64>,
    labels: &[L],
    n: usize,
    direction: KlDirection,
) -> Result<f64> {
    if labels.len() != theta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} theta rows but {} labels",
            theta.nrows(),
            labels.len()
        )));
    }
    if n == 0 || n >= labels.len() {
        return Err(Error::InvalidArgument(format!(
            "precision@{n} needs 0 < N < number of documents ({})",
            labels.len()
        )));
    }
    let smoothed = smooth(theta);
    let mut total = 0.0;
    for q in 0..labels.len() {
        let hits = rank_by_kl(smoothed.view(), q, direction)
            .into_iter()
            .take(n)
            .filter(|&(d, _)| labels[d] == labels[q])
            .count();
        total += hits as f64 / n as f64;
    }
    Ok(total / labels.len() as f64)
}
