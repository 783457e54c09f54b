//! Rank-biased overlap and the inverted-RBO diversity score.

use std::collections::HashSet;
use std::hash::Hash;

use crate::{Error, Result};

/// Conventional persistence for topic-diversity RBO.
pub const DEFAULT_PERSISTENCE: f64 = 0.9;

/// Truncated RBO of two equal-length rankings with the residual
/// extrapolated from the overlap at the last depth:
///
/// `(1 - p) Σ_{d=1..n} p^(d-1) A_d + p^n A_n`, `A_d = |A[..d] ∩ B[..d]| / d`.
pub fn rbo<T: Eq + Hash>(a: &[T], b: &[T], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("RBO persistence must lie in (0, 1), got {p}")));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "RBO lists must have equal length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut seen_a = HashSet::with_capacity(n);
    let mut seen_b = HashSet::with_capacity(n);
    let mut overlap = 0usize;
    let mut sum = 0.0;
    let mut weight = 1.0;
    let mut agreement = 0.0;
    for d in 0..n {
        let (x, y) = (&a[d], &b[d]);
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        agreement = overlap as f64 / (d + 1) as f64;
        sum += weight * agreement;
        weight *= p;
    }
    Ok(((1.0 - p) * sum + weight * agreement).clamp(0.0, 1.0))
}

/// `1 −` mean RBO over all unordered topic pairs.
pub fn i_rbo<T: Eq + Hash>(topics: &[Vec<T>], p: f64) -> Result<f64> {
    if topics.len() < 2 {
        return Err(Error::UndefinedMetric("I-RBO needs at least two topics".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..topics.len() {
        for j in i + 1..topics.len() {
            total += rbo(&topics[i], &topics[j], p)?;
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let a = ["a", "b", "c", "d"];
        assert!((rbo(&a, &a, 0.9).unwrap() - 1.0).abs() < 1e-12);
        assert!((rbo(&a, &a, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rbo(&["a", "b"], &["c", "d"], 0.9).unwrap(), 0.0);
        // (1 - 0.9)(1 + 0.9 * 0.5) + 0.81 * 0.5
        assert!((rbo(&["a", "b"], &["a", "c"], 0.9).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn i_rbo_examples() {
        let same = vec![vec!["a", "b"], vec!["a", "b"], vec!["a", "b"]];
        assert!(i_rbo(&same, 0.9).unwrap().abs() < 1e-12);
        let disjoint = vec![vec!["a", "b"], vec!["c", "d"], vec!["e", "f"]];
        assert_eq!(i_rbo(&disjoint, 0.9).unwrap(), 1.0);
        let two = vec![vec!["a", "b"], vec!["a", "c"]];
        assert!((i_rbo(&two, 0.9).unwrap() - 0.45).abs() < 1e-12);
        assert!(matches!(i_rbo(&[vec!["a"]], 0.9), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn invalid_persistence() {
        assert!(rbo(&["a"], &["a"], 1.0).is_err());
        assert!(rbo(&["a"], &["a"], 0.0).is_err());
    }

    fn ranking() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                Just((0u8..30).collect::<Vec<_>>()).prop_shuffle(),
                Just((0u8..30).collect::<Vec<_>>()).prop_shuffle(),
            )
                .prop_map(move |(mut a, mut b)| {
                    a.truncate(n);
                    b.truncate(n);
                    (a, b)
                })
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((a, b) in ranking(), p in 0.05f64..0.99) {
            let ab = rbo(&a, &b, p).unwrap();
            let ba = rbo(&b, &a, p).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn matching_the_head_never_hurts((a, mut b) in ranking(), p in 0.05f64..0.99) {
            let before = rbo(&a, &b, p).unwrap();
            if let Some(pos) = b.iter().position(|x| *x == a[0]) {
                b.swap(0, pos);
            } else {
                b[0] = a[0];
            }
            let after = rbo(&a, &b, p).unwrap();
            prop_assert!(after >= before - 1e-12);
        }
    }
}
