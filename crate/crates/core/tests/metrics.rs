use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softtopic::corpus::{BowVector, Vocabulary};
use softtopic::evalsuite::{
    npmi_coherence, purity_harmonic, rank_by_kl, retrieval_precision, smooth, DocWordIncidence, KlDirection,
};

/// KL(q || d) written out directly from the smoothed rows.
fn brute_force_ranking(theta: &Array2<f64>, q: usize) -> Vec<usize> {
    let n = theta.nrows();
    let k = theta.ncols();
    let s: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            let raw: Vec<f64> = (0..k).map(|j| theta[[d, j]] + 1e-10).collect();
            let t: f64 = raw.iter().sum();
            raw.iter().map(|v| v / t).collect()
        })
        .collect();
    let mut scored: Vec<(usize, f64)> = (0..n)
        .filter(|&d| d != q)
        .map(|d| (d, (0..k).map(|j| s[q][j] * (s[q][j] / s[d][j]).ln()).sum()))
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(d, _)| d).collect()
}

#[test]
fn two_clusters_retrieve_their_own_label() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut theta = Array2::zeros((12, 2));
    let labels: Vec<usize> = (0..12).map(|d| d % 2).collect();
    for d in 0..12 {
        let major = 0.95 + 0.04 * rng.random::<f64>();
        theta[[d, labels[d]]] = major;
        theta[[d, 1 - labels[d]]] = 1.0 - major;
    }
    let smoothed = smooth(theta.view());
    for q in 0..12 {
        let ranked: Vec<usize> = rank_by_kl(smoothed.view(), q, KlDirection::QueryFirst).into_iter().map(|r| r.0).collect();
        assert_eq!(ranked, brute_force_ranking(&theta, q));
    }
    assert_eq!(retrieval_precision(theta.view(), &labels, 5, KlDirection::QueryFirst).unwrap(), 1.0);
}

#[test]
fn random_labels_give_chance_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, classes, cutoff) = (600, 4, 10);
    let theta = Array2::from_shape_simple_fn((n, 5), || rng.random::<f64>() + 1e-3);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let p = retrieval_precision(theta.view(), &labels, cutoff, KlDirection::QueryFirst).unwrap();
    let chance = 1.0 / classes as f64;
    let se = (chance * (1.0 - chance) / (n * cutoff) as f64).sqrt();
    assert!((p - chance).abs() < 3.0 * se, "precision {p}, chance {chance}, se {se}");
}

fn theta_and_labels() -> impl Strategy<Value = (Array2<f64>, Vec<u8>)> {
    (2usize..20, 1usize..5).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0.0f64..1.0, n * k).prop_map(move |v| {
                let mut m = Array2::from_shape_vec((n, k), v).unwrap();
                for mut row in m.rows_mut() {
                    let s = row.sum() + 1e-9;
                    row.mapv_inplace(|x| (x + 1e-9 / k as f64) / s);
                }
                m
            }),
            prop::collection::vec(0u8..4, n),
        )
    })
}

proptest! {
    #[test]
    fn purity_and_precision_are_bounded((theta, labels) in theta_and_labels()) {
        let p = purity_harmonic(theta.view(), &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let r = retrieval_precision(theta.view(), &labels, 1, KlDirection::QueryFirst).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn precision_ignores_label_names((theta, labels) in theta_and_labels(), seed: u64) {
        let mut names: Vec<u8> = (0..4).collect();
        names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let renamed: Vec<String> = labels.iter().map(|&l| format!("class{}", names[l as usize])).collect();
        let a = retrieval_precision(theta.view(), &labels, 1, KlDirection::QueryFirst).unwrap();
        let b = retrieval_precision(theta.view(), &renamed, 1, KlDirection::QueryFirst).unwrap();
        prop_assert_eq!(a, b);
        // Class order changes the summation order.
        let (pa, pb) = (purity_harmonic(theta.view(), &labels).unwrap(), purity_harmonic(theta.view(), &renamed).unwrap());
        prop_assert!((pa - pb).abs() < 1e-12);
    }

    #[test]
    fn npmi_pairs_are_bounded(docs in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..6), 1..30)) {
        let bows: Vec<BowVector> = docs.iter().map(|s| BowVector::from_counts(s.iter().map(|&i| (i, 1)))).collect();
        let inc = DocWordIncidence::from_bows(&bows, 6);
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    let v = inc.npmi(a, b);
                    prop_assert!((-1.0..=1.0).contains(&v), "npmi({a},{b}) = {v}");
                }
            }
        }
        let vocab = Vocabulary::from_words(["aa", "bb", "cc", "dd", "ee", "ff"]).unwrap();
        let topics = vec![vec!["aa", "bb", "cc"], vec!["dd", "ee", "ff"]];
        let c = npmi_coherence(&topics, &vocab, &inc).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}
