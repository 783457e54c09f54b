use std::collections::HashSet;

use ndarray::Array2;
use softtopic::corpus::BowVector;
use softtopic::synth::{self, generate, DocTopicMode, SynthSpec};

fn assert_row_stochastic(m: &Array2<f64>, tol: f64) {
    for row in m.rows() {
        assert!((row.sum() - 1.0).abs() < tol, "row sums to {}", row.sum());
        assert!(row.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn true_distributions_are_row_stochastic() {
    for mode in [DocTopicMode::Single, DocTopicMode::Mixed { alpha: 0.3 }] {
        let c = generate(&SynthSpec { doc_topic_mode: mode, docs_per_topic: 20, ..SynthSpec::default() }).unwrap();
        assert_row_stochastic(&c.true_beta, 1e-9);
        assert_row_stochastic(&c.true_theta, 1e-9);
    }
}

#[test]
fn blocks_hold_most_of_each_topic() {
    let spec = SynthSpec::default();
    let c = generate(&spec).unwrap();
    for k in 0..spec.num_topics {
        let mass: f64 = spec.block(k).map(|i| c.true_beta[[k, i]]).sum();
        assert!(mass >= 0.95, "topic {k} keeps {mass} in its block");
    }
}

#[test]
fn oracle_targets_at_unit_temperature_are_word_distributions() {
    let c = generate(&SynthSpec { docs_per_topic: 10, ..SynthSpec::default() }).unwrap();
    let t = synth::oracle_targets(&c, 1.0).unwrap();
    let w = c.word_distributions();
    for (a, b) in t.iter().zip(w.iter()) {
        assert!((a - b).abs() < 1e-6);
    }
    let hot = synth::oracle_targets(&c, 1e9).unwrap();
    let u = 1.0 / c.vocab.len() as f64;
    assert!(hot.iter().all(|&x| (x - u).abs() < 1e-6));
}

#[test]
fn single_topic_targets_concentrate_in_block() {
    let spec = SynthSpec { docs_per_topic: 4, ..SynthSpec::default() };
    let c = generate(&spec).unwrap();
    let t = synth::oracle_targets(&c, 1.0).unwrap();
    for (d, row) in t.rows().into_iter().enumerate() {
        let mass: f64 = spec.block(c.labels[d]).map(|i| row[i]).sum();
        assert!(mass >= 0.95);
    }
}

fn total_variation(bow: &BowVector, target: ndarray::ArrayView1<'_, f64>) -> f64 {
    let n = bow.total() as f64;
    0.5 * target.iter().enumerate().map(|(i, &p)| (f64::from(bow.get(i)) / n - p).abs()).sum::<f64>()
}

#[test]
fn empirical_tokens_converge_to_oracle_targets() {
    let c = generate(&SynthSpec { doc_length: 500.0, ..SynthSpec::default() }).unwrap();
    let t = synth::oracle_targets(&c, 1.0).unwrap();
    let tv: f64 =
        c.bows.iter().zip(t.rows()).map(|(b, r)| total_variation(b, r)).sum::<f64>() / c.bows.len() as f64;
    assert!(tv < 0.15, "mean total variation {tv}");
}

#[test]
fn noiseless_embeddings_of_two_topics_take_two_values() {
    let spec = SynthSpec { num_topics: 2, vocab_size: 20, docs_per_topic: 6, embed_noise_sigma: 0.0, ..SynthSpec::default() };
    let c = generate(&spec).unwrap();
    let e = synth::oracle_embeddings(&c, &spec);
    let distinct: HashSet<Vec<u64>> = e.rows().into_iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect();
    assert_eq!(distinct.len(), 2);
}

#[test]
fn noisy_embeddings_cluster_by_topic() {
    let spec = SynthSpec { embed_noise_sigma: 0.1, ..SynthSpec::default() };
    let c = generate(&spec).unwrap();
    let e = synth::oracle_embeddings(&c, &spec);
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..e.nrows() {
        for j in (i + 1)..e.nrows() {
            let d = (&e.row(i) - &e.row(j)).mapv(|x| x * x).sum().sqrt();
            if c.labels[i] == c.labels[j] {
                within += d;
                nw += 1;
            } else {
                between += d;
                nb += 1;
            }
        }
    }
    assert!(within / (nw as f64) < between / (nb as f64));
}

#[test]
fn artifacts_are_identical_across_runs() {
    let spec = SynthSpec { docs_per_topic: 5, ..SynthSpec::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth::write_artifacts(&generate(&spec).unwrap(), a.path()).unwrap();
    synth::write_artifacts(&generate(&spec).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for required in ["vocab.txt", "bow.dtm", "logits.dtm", "embeddings.dtm", "labels.csv", "corpus.jsonl"] {
        assert!(names.iter().any(|n| n == required), "missing {required}");
    }
    for name in names {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn realizable_targets_come_from_the_teacher() {
    let inst = synth::realizable_instance(16, 8, 3, 20, 0);
    assert_eq!(inst.embeddings.dim(), (16, 8));
    assert_row_stochastic(&inst.theta, 1e-12);
    assert_row_stochastic(&inst.targets, 1e-12);
    let logits = inst.theta.dot(&inst.beta);
    let expected = softtopic::targets::soft_targets(&logits, 1.0).unwrap();
    for (a, b) in inst.targets.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}
