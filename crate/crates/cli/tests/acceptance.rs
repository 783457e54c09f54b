//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softtopic::corpus::BowVector;
use softtopic::evalsuite::{purity_harmonic, rbo, welch_t, DocWordIncidence};
use softtopic::synth::realizable_instance;
use softtopic::targets::{soft_target_row, soft_targets};
use softtopic::topicmodel::{
    loss_and_gradients, loss_with_noise, Batch, LossMode, ModelConfig, ModelParams, StepNoise, Weights,
};
use softtopic::trainer::{total_steps, train, TrainConfig, TrainingData};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

// Gradient oracle

const FD_STEP: f64 = 1e-4;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_NEGLIGIBLE: f64 = 1e-8;

fn blocks(w: &Weights) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    w.for_each_block(|_, b| out.push(b.to_vec()));
    out
}

fn nudged(params: &ModelParams, block: usize, idx: usize, delta: f64) -> ModelParams {
    let mut p = params.clone();
    let mut i = 0;
    p.weights.for_each_block_mut(|_, b| {
        if i == block {
            b[idx] += delta;
        }
        i += 1;
    });
    p
}

fn gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, k, v, b) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(2..=6), rng.random_range(1..=5));
    let mut cfg = ModelConfig::new(k, d, v);
    cfg.hidden_dim = rng.random_range(1..=5);
    cfg.decoder_batchnorm = false;
    cfg.dropout_rate = if rng.random_bool(0.5) { 0.3 } else { 0.0 };
    cfg.loss_mode = LossMode::Kl;
    let mut params = ModelParams::init(&cfg, &mut rng);
    for m in params.weights.prior_mu.iter_mut() {
        *m = rng.random_range(-0.5..0.5);
    }
    let x = Array2::from_shape_simple_fn((b, d), || rng.random_range(-2.0..2.0));
    let y = soft_targets(&Array2::from_shape_simple_fn((b, v), || rng.random_range(-3.0..3.0)), 1.0).unwrap();
    let noise = StepNoise::draw(b, &cfg, &mut rng);
    let batch = Batch { embeddings: x.view(), targets: y.view() };
    let (_, grads, _) = loss_and_gradients(batch, &params, &cfg, &noise).unwrap();
    let mut worst: f64 = 0.0;
    for (bi, block) in blocks(&grads).iter().enumerate() {
        for (idx, &analytic) in block.iter().enumerate() {
            let lp = loss_with_noise(batch, &nudged(&params, bi, idx, FD_STEP), &cfg, &noise).unwrap().total;
            let lm = loss_with_noise(batch, &nudged(&params, bi, idx, -FD_STEP), &cfg, &noise).unwrap().total;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs());
            if scale >= GRAD_NEGLIGIBLE {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

fn gradient_oracle() -> Outcome {
    let worst = (0..20).map(gradient_error).fold(0.0, f64::max);
    check(
        worst < GRAD_TOLERANCE,
        format!("20 models, max relative error {worst:.2e}"),
        format!("max relative error {worst:.2e} >= {GRAD_TOLERANCE:e}"),
    )
}

// Soft-target algebra

fn soft_target_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for row in 0..1000 {
        let len = rng.random_range(2..50);
        let logits = Array1::from_shape_simple_fn(len, || rng.random_range(-20.0..20.0));
        let tau = 10f64.powf(rng.random_range(-1.0..2.0));
        let p = soft_target_row(logits.view(), tau).map_err(|e| e.to_string())?;
        if (p.sum() - 1.0).abs() > 1e-6 || p.iter().any(|&x| x < 0.0) {
            return Err(format!("row {row} not stochastic"));
        }
        let c = rng.random_range(-100.0..100.0);
        let shifted = soft_target_row(logits.mapv(|l| l + c).view(), tau).map_err(|e| e.to_string())?;
        let diff = (&p - &shifted).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        if diff > 1e-9 {
            return Err(format!("row {row}: shift changed output by {diff:e}"));
        }
        let argmax = (0..len).fold(0, |m, i| if logits[i] > logits[m] { i } else { m });
        let cold = soft_target_row(logits.view(), 1e-6).map_err(|e| e.to_string())?;
        if (cold[argmax] - 1.0).abs() > 1e-6 {
            return Err(format!("row {row}: cold limit puts {} on the argmax", cold[argmax]));
        }
        let hot = soft_target_row(logits.view(), 1e9).map_err(|e| e.to_string())?;
        if hot.iter().any(|&x| (x - 1.0 / len as f64).abs() > 1e-6) {
            return Err(format!("row {row}: hot limit is not uniform"));
        }
    }
    Ok("1000 rows".into())
}

// Realizability

const REAL_DOCS: usize = 256;
const REAL_MAX_STEPS: usize = 2000;
const REAL_KL_BOUND: f64 = 1e-2;

fn realizable_kl(seed: u64) -> f64 {
    let inst = realizable_instance(REAL_DOCS, 8, 3, 20, seed);
    let mut model = ModelConfig::new(3, 8, 20);
    model.hidden_dim = 32;
    model.hidden_layers = 1;
    model.decoder_batchnorm = false;
    model.dropout_rate = 0.0;
    model.detach_prior = true;
    let cfg = TrainConfig { learning_rate: 2e-2, epochs: 500, batch_size: 64, seed, ..TrainConfig::default() };
    assert!(total_steps(cfg.epochs, REAL_DOCS, cfg.batch_size) <= REAL_MAX_STEPS);
    let data = TrainingData { embeddings: inst.embeddings.clone(), targets: inst.targets.clone(), rows: (0..REAL_DOCS).collect() };
    let (params, _) = train(&model, &cfg, &data).unwrap();
    let batch = Batch { embeddings: inst.embeddings.view(), targets: inst.targets.view() };
    loss_with_noise(batch, &params, &model, &StepNoise::none(REAL_DOCS, &model)).unwrap().recon
}

fn realizability() -> Outcome {
    let kls: Vec<f64> = SEEDS.iter().map(|&s| realizable_kl(s)).collect();
    let passed = kls.iter().filter(|&&k| k < REAL_KL_BOUND).count();
    let shown: Vec<String> = kls.iter().map(|k| format!("{k:.1e}")).collect();
    let msg = format!("{passed}/5 seeds below {REAL_KL_BOUND:e}, KL [{}]", shown.join(", "));
    check(passed == 5, msg.clone(), msg)
}

// Metric oracles

fn metric_oracles() -> Outcome {
    let r = rbo(&["a", "b"], &["a", "c"], 0.9).map_err(|e| e.to_string())?;
    if (r - 0.550).abs() > 1e-9 {
        return Err(format!("rbo {r}"));
    }
    let perfect = ndarray::array![[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.3, 0.7]];
    let p1 = purity_harmonic(perfect.view(), &["a", "a", "b", "b"]).map_err(|e| e.to_string())?;
    let merged = ndarray::array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
    let p2 = purity_harmonic(merged.view(), &["a", "a", "b", "b"]).map_err(|e| e.to_string())?;
    if p1 != 1.0 || p2 != 2.0 / 3.0 {
        return Err(format!("purity {p1}, {p2}"));
    }
    let w = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    if (w.t + 1.0).abs() > 1e-9 || (w.p - 0.3466).abs() > 1e-3 {
        return Err(format!("welch t {} p {}", w.t, w.p));
    }
    let inc = |docs: &[&[usize]], v: usize| {
        let bows: Vec<BowVector> = docs.iter().map(|d| BowVector::from_counts(d.iter().map(|&i| (i, 1)))).collect();
        DocWordIncidence::from_bows(&bows, v)
    };
    let always = inc(&[&[0, 1], &[0, 1], &[0, 1]], 2).npmi(0, 1);
    let never = inc(&[&[0], &[0], &[1], &[1]], 2).npmi(0, 1);
    let independent = inc(&[&[0, 1], &[0], &[1], &[]], 2).npmi(0, 1);
    if (always - 1.0).abs() > 1e-6 || (never + 1.0).abs() > 1e-6 || independent.abs() > 1e-6 {
        return Err(format!("npmi {always}, {never}, {independent}"));
    }
    Ok(format!("rbo {r:.3}, purity {p1}/{p2:.4}, welch t {} p {:.4}, npmi {always}/{never}/{independent:.1e}", w.t, w.p))
}

// CLI-driven criteria

fn softtopic(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_softtopic")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("softtopic {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_config(dir: &Path, body: &str) -> Result<String, String> {
    let path = dir.join("run.toml");
    fs::write(&path, format!("out = \"{}\"\n{body}", dir.display())).map_err(|e| e.to_string())?;
    Ok(path.to_str().unwrap().to_string())
}

fn metric(json: &str, name: &str) -> Result<f64, String> {
    let v: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    v["metrics"][name].as_f64().ok_or_else(|| format!("eval.json has no {name}"))
}

const RECOVERY_CONFIG: &str = "[model]\nnum_topics = 5\ntemperature = 1.0\n\
    [eval]\nmetrics = [\"purity\", \"precision\"]\nprecision_at = [5]\n";
const RECOVERY_FLOOR: f64 = 0.8;

fn synthetic_recovery() -> Outcome {
    let mut passed = 0;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = write_config(dir.path(), RECOVERY_CONFIG)?;
        let seed_arg = seed.to_string();
        for cmd in ["synth", "train"] {
            softtopic(&["--config", &config, "--seed", &seed_arg, cmd])?;
        }
        let json = softtopic(&["--config", &config, "--seed", &seed_arg, "eval"])?;
        let (purity, p5) = (metric(&json, "purity")?, metric(&json, "precision@5")?);
        if purity >= RECOVERY_FLOOR && p5 >= RECOVERY_FLOOR {
            passed += 1;
        }
        detail.push(format!("{purity:.3}/{p5:.3}"));
    }
    let msg = format!("{passed}/5 seeds with purity and P@5 >= {RECOVERY_FLOOR} [{}]", detail.join(", "));
    check(passed >= 4, msg.clone(), msg)
}

fn mean_purity(csv: &str, value: &str) -> Result<f64, String> {
    let xs: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0] == value && f[2] == "purity").then(|| f[3].parse::<f64>().ok()).flatten()
        })
        .collect();
    if xs.len() != SEEDS.len() {
        return Err(format!("{} purity rows for {value}", xs.len()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn ablation_direction() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_config(
        dir.path(),
        // Model defaults, including the default temperature, for the full method.
        "[model]\nnum_topics = 5\n[eval]\nmetrics = [\"purity\"]\n[synth]\ndoc_length = 8\n",
    )?;
    softtopic(&["--config", &config, "synth"])?;
    softtopic(&["--config", &config, "ablate", "--axes", "ablation=full,nll+bow", "--seeds", "0,1,2,3,4"])?;
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).map_err(|e| e.to_string())?;
    let (soft, bow) = (mean_purity(&csv, "full")?, mean_purity(&csv, "nll+bow")?);
    let msg = format!("mean purity soft+KL {soft:.4} vs BoW+NLL {bow:.4}");
    check(soft >= bow, msg.clone(), msg)
}

fn temperature_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_config(
        dir.path(),
        "[model]\nnum_topics = 5\n[train]\nepochs = 5\n[eval]\nmetrics = [\"i_rbo\"]\n",
    )?;
    softtopic(&["--config", &config, "synth"])?;
    softtopic(&["--config", &config, "ablate", "--axes", "temperature=0.5,1,3,5,10", "--seeds", "0"])?;
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).map_err(|e| e.to_string())?;
    let entropy: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("target_entropy"))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let shown: Vec<String> = entropy.iter().map(|h| format!("{h:.3}")).collect();
    let msg = format!("entropy at tau 0.5..10: [{}]", shown.join(", "));
    check(entropy.len() == 5 && entropy.windows(2).all(|w| w[0] < w[1]), msg.clone(), msg)
}

fn determinism() -> Outcome {
    let mut artifacts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = write_config(dir.path(), "seed = 3\n[model]\nnum_topics = 5\n[train]\nepochs = 20\n")?;
        for cmd in ["synth", "train", "eval"] {
            softtopic(&["--config", &config, cmd])?;
        }
        let read = |f: &str| fs::read(dir.path().join(f)).map_err(|e| e.to_string());
        artifacts.push((read("checkpoint.bin")?, read("eval.json")?));
    }
    check(
        artifacts[0] == artifacts[1],
        format!("checkpoint.bin ({} bytes) and eval.json identical", artifacts[0].0.len()),
        "artifacts differ between runs".into(),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("gradient oracle", gradient_oracle, Duration::from_secs(30)),
        ("soft-target algebra", soft_target_algebra, Duration::from_secs(5)),
        ("realizability", realizability, Duration::from_secs(120)),
        ("metric oracles", metric_oracles, Duration::from_secs(60)),
        ("synthetic recovery", synthetic_recovery, Duration::from_secs(600)),
        ("ablation direction", ablation_direction, Duration::from_secs(900)),
        ("temperature sweep", temperature_sweep, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > budget {
            outcome = Err(format!("took {:.1}s, budget {}s", elapsed.as_secs_f64(), budget.as_secs()));
        }
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} ({:.1}s)", elapsed.as_secs_f64()),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg} ({:.1}s)", elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
