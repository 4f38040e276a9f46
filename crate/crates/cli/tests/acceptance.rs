//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 2 3`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symkfcv_core::constopt::{fit_constants, FitBudget};
use symkfcv_core::datagen::{generate_dataset, read_dataset, write_dataset, GrammarConfig, Point};
use symkfcv_core::eval::{curve_from_errors, read_cumulative_curve, score_with_skeleton};
use symkfcv_core::expression::{evaluate, parse, parse_skeleton, substitute};
use symkfcv_core::kfold::{average_losses, make_folds, read_summary, reference, relative_improvement};
use symkfcv_core::model::{
    encode_points, examples_from_dataset, generate, load_checkpoint, loss_and_gradient,
    save_checkpoint, validate, Batch, DecodeMode, Example, ModelConfig, ModelParams, Trainer,
};
use symkfcv_core::TokenVocabulary;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within_budget(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took <= limit, "took {took:.1?}, limit {limit:?}");
    Ok(took)
}

fn baseline_table_averaging() -> Outcome {
    let (t, v) = average_losses(&reference::baseline_summary().records).map_err(|e| e.to_string())?;
    ensure!((t - 0.293467).abs() < 1e-9 && (v - 0.5966445).abs() < 1e-9, "got ({t}, {v})");
    Ok(format!("({t:.7}, {v:.7})"))
}

fn kfcv_table_averaging() -> Outcome {
    let (t, v) = average_losses(&reference::kfcv_summary().records).map_err(|e| e.to_string())?;
    ensure!((t - 0.26947).abs() < 1e-5 && (v - 0.27858).abs() < 1e-5, "got ({t}, {v})");
    Ok(format!("({t:.6}, {v:.6})"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symkfcv"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| format!("spawn: {e}"))?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    ensure!(
        out.status.success(),
        "{cmd:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(stdout)
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn improvement_headline() -> Outcome {
    let pct = relative_improvement(0.5966445, 0.278576).map_err(|e| e.to_string())?;
    ensure!((pct - 53.31).abs() <= 0.01, "relative_improvement gave {pct}");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    run_ok(bin().args(["reference", "--out"]).arg(d))?;
    run_ok(
        bin()
            .arg("compare")
            .arg("--old")
            .arg(d.join("baseline_summary.json"))
            .arg("--new")
            .arg(d.join("kfcv_summary.json"))
            .arg("--out")
            .arg(d.join("cmp.json")),
    )?;
    let cli = json(&d.join("cmp.json"))?["relative_improvement_percent"]
        .as_f64()
        .ok_or("comparison lacks relative_improvement_percent")?;
    ensure!((cli - 53.31).abs() <= 0.01, "compare gave {cli}");
    Ok(format!("{pct:.4}% direct, {cli:.4}% via compare"))
}

fn fold_partition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(k..=5000);
        let seed: u64 = rng.random();
        let f = make_folds(n, k, seed).map_err(|e| e.to_string())?;
        ensure!(f.fold_of.len() == n && f.fold_of.iter().all(|&g| g < k), "fold ids do not cover 0..{n}");
        let mut validated = vec![0u8; n];
        for fold in 0..k {
            let val = f.validation_indices(fold);
            ensure!(!val.is_empty(), "empty fold (n={n}, k={k})");
            for &i in &val {
                validated[i] += 1;
            }
            let train = f.training_indices(fold);
            ensure!(val.len() + train.len() == n, "round {fold} does not cover (n={n}, k={k})");
            for &i in &train {
                ensure!(f.fold_of[i] != fold, "leak in round {fold}");
            }
        }
        ensure!(validated.iter().all(|&c| c == 1), "validation membership not exactly once (n={n}, k={k})");
        let sizes = f.fold_sizes();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        ensure!(spread <= 1, "size spread {spread} (n={n}, k={k})");
    }
    let took = within_budget(start, Duration::from_secs(5))?;
    Ok(format!("200 triples in {took:.2?}"))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point {
            x: vec![rng.random_range(-3.0..3.0)],
            y: rng.random_range(-50.0..50.0),
        })
        .collect()
}

fn permutation_invariance() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::desk();
    let params = ModelParams::init(&cfg, TokenVocabulary::new(1).len());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=cfg.max_points);
        let pts = random_points(&mut rng, n);
        let base = encode_points(&params, &pts).map_err(|e| e.to_string())?;
        let mut perm = pts.clone();
        perm.shuffle(&mut rng);
        let other = encode_points(&params, &perm).map_err(|e| e.to_string())?;
        for (a, b) in base.iter().zip(&other) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst < 1e-6, "max abs diff {worst}");
    let took = within_budget(start, Duration::from_secs(30))?;
    Ok(format!("max abs diff {worst:e} in {took:.2?}"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        embed_dim: 8,
        layers: 1,
        heads: 2,
        context_len: 8,
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 1,
        dropout: 0.0,
        seed: 12,
        max_points: 6,
        variable_count: 1,
    };
    let vocab = TokenVocabulary::new(1);
    let mut params = ModelParams::init(&cfg, vocab.len());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // the output head starts at zero, which would hide every upstream path
    for v in params.as_mut_slice() {
        *v += rng.random_range(-0.3..0.3);
    }
    let skeletons = ["C*x1+C", "sin(x1)", "x1-C*cos(x1)"];
    let examples: Vec<Example> = skeletons
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tokens = vocab.tokenize(&parse_skeleton(s).unwrap()).unwrap();
            Example::new(&random_points(&mut rng, 3 + i), tokens, &cfg).unwrap()
        })
        .collect();
    let rows: Vec<&Example> = examples.iter().collect();
    let batch = Batch::assemble(&rows, &vocab, &cfg);
    let (_, count, grad) = loss_and_gradient(&params, &batch, 0);
    let mean_loss = |p: &ModelParams| loss_and_gradient(p, &batch, 0).0 / count as f64;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut over = 0usize;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= h;
        let numeric = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        over += usize::from(rel >= 1e-4);
    }
    let ok_share = 1.0 - over as f64 / params.len() as f64;
    ensure!(ok_share >= 0.99, "only {:.2}% under 1e-4", ok_share * 100.0);
    ensure!(worst < 1e-3, "max relative error {worst:e}");
    let took = within_budget(start, Duration::from_secs(120))?;
    Ok(format!(
        "{} params, {:.2}% under 1e-4, max {worst:.2e}, {took:.2?}",
        params.len(),
        ok_share * 100.0
    ))
}

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let (data, _) = generate_dataset(&GrammarConfig::default(), 32, 11).map_err(|e| e.to_string())?;
    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let examples = examples_from_dataset(&data, &vocab, &cfg).map_err(|(i, e)| format!("index {i}: {e}"))?;
    let mut trainer = Trainer::new(ModelParams::init(&cfg, vocab.len()));
    let mut last = f64::NAN;
    for epoch in 0..300 {
        last = trainer.train_epoch(&examples, &vocab, epoch).map_err(|e| e.to_string())?;
    }
    let mut reproduced = 0;
    for (ix, ex) in data.iter().zip(&examples) {
        let emb = encode_points(&trainer.params, &ix.points).map_err(|e| e.to_string())?;
        let out = generate(&trainer.params, &emb, cfg.context_len - 1, DecodeMode::Greedy, &vocab)
            .map_err(|e| e.to_string())?;
        reproduced += usize::from(out == ex.tokens);
    }
    ensure!(last < 0.1, "final train loss {last}");
    ensure!(reproduced * 10 >= 9 * data.len(), "reproduced {reproduced}/32");
    let took = within_budget(start, Duration::from_secs(600))?;
    Ok(format!("final loss {last:.4}, reproduced {reproduced}/32, {took:.1?}"))
}

fn constant_fitting_oracle() -> Outcome {
    let start = Instant::now();
    let basis = ["x1", "sin(x1)", "cos(x1)", "x1*x1", "exp(x1)", "x1*cos(x1)", "x1*sin(x1)"];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_const: f64 = 0.0;
    for case in 0..100u64 {
        let terms = rng.random_range(1..=3);
        let mut picked = basis.to_vec();
        picked.shuffle(&mut rng);
        picked.truncate(terms);
        let text = picked
            .iter()
            .map(|t| format!("C*{t}"))
            .chain(std::iter::once("C".to_string()))
            .collect::<Vec<_>>()
            .join("+");
        let sk = parse_skeleton(&text).map_err(|e| e.to_string())?;
        let truth: Vec<f64> = (0..=terms).map(|_| rng.random_range(-4.0..4.0)).collect();
        let expr = substitute(&sk, &truth).map_err(|e| e.to_string())?;
        let points: Vec<Point> = (0..rng.random_range(30..=120))
            .map(|_| {
                let x = rng.random_range(-2.5..2.5);
                let y = evaluate(&expr, &[x]).unwrap() + rng.random_range(-0.01..0.01);
                Point { x: vec![x], y }
            })
            .collect();
        let design = DMatrix::from_fn(points.len(), terms + 1, |r, c| {
            if c == terms {
                1.0
            } else {
                evaluate(&parse(picked[c]).unwrap(), &points[r].x).unwrap()
            }
        });
        let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.y));
        let coef = design.clone().svd(true, true).solve(&y, 1e-14).map_err(|e| e.to_string())?;
        let ls = (&design * &coef - &y).norm_squared() / points.len() as f64;
        let fit = fit_constants(&sk, &points, &FitBudget::default(), case);
        worst_gap = worst_gap.max(fit.residual - ls);
        ensure!(fit.residual <= ls + 1e-6, "{text}: residual {} vs closed form {ls}", fit.residual);
        for (got, want) in fit.constants.iter().zip(coef.iter()) {
            worst_const = worst_const.max((got - want).abs());
            ensure!((got - want).abs() < 1e-2, "{text}: constants {:?} vs {:?}", fit.constants, coef.as_slice());
        }
    }
    let took = within_budget(start, Duration::from_secs(60))?;
    Ok(format!(
        "100 skeletons, worst residual gap {worst_gap:.2e}, worst constant diff {worst_const:.2e}, {took:.2?}"
    ))
}

fn oracle_skeleton_evaluation() -> Outcome {
    let start = Instant::now();
    let (data, _) = generate_dataset(&GrammarConfig::default(), 100, 9).map_err(|e| e.to_string())?;
    let budget = FitBudget::default();
    let scores: Vec<_> = data
        .iter()
        .enumerate()
        .map(|(i, ix)| score_with_skeleton(&parse_skeleton(&ix.skeleton).unwrap(), ix, i, &budget))
        .collect();
    let mut errors: Vec<f64> = scores.iter().map(|s| s.error).collect();
    let curve = curve_from_errors(&errors).map_err(|e| e.to_string())?;
    for p in &curve.points {
        let hits = errors
            .iter()
            .filter(|&&e| e.clamp(1e-12, 1e6).log10() <= p.log_error)
            .count();
        let want = hits as f64 / errors.len() as f64;
        ensure!(p.cumulative_frequency == want, "curve at {} gives {} vs {want}", p.log_error, p.cumulative_frequency);
    }
    errors.sort_by(f64::total_cmp);
    let median = (errors[49] + errors[50]) / 2.0;
    ensure!(median < 1e-4, "median relative squared error {median:e}");
    let took = within_budget(start, Duration::from_secs(120))?;
    Ok(format!(
        "median {median:.2e}, {} faulted, {} curve points, {took:.2?}",
        scores.iter().filter(|s| s.faulted).count(),
        curve.points.len()
    ))
}

/// Runs the full pipeline through the binary into `root`.
fn smoke_run(root: &Path) -> Result<f64, String> {
    let p = |s: &str| root.join(s);
    run_ok(bin().args(["generate", "--count", "2000", "--seed", "1", "--out"]).arg(p("data.jsonl")))?;
    run_ok(bin().args(["generate", "--count", "100", "--seed", "2", "--out"]).arg(p("heldout.jsonl")))?;
    for (protocol, dir) in [("baseline", "baseline"), ("kfcv", "kfcv")] {
        run_ok(
            bin()
                .args(["train", "--protocol", protocol, "--preset", "desk", "--seed", "7", "--data"])
                .arg(p("data.jsonl"))
                .arg("--out")
                .arg(p(dir)),
        )?;
    }
    run_ok(
        bin()
            .arg("evaluate")
            .arg("--checkpoint")
            .arg(p("kfcv/checkpoint.json"))
            .arg("--data")
            .arg(p("heldout.jsonl"))
            .arg("--out")
            .arg(p("evaluation")),
    )?;
    run_ok(
        bin()
            .arg("report")
            .arg("--summary")
            .arg(p("baseline/summary.json"))
            .arg("--summary")
            .arg(p("kfcv/summary.json"))
            .arg("--out")
            .arg(p("report"))
            .arg("--plots"),
    )?;
    run_ok(
        bin()
            .arg("compare")
            .arg("--old")
            .arg(p("baseline/summary.json"))
            .arg("--new")
            .arg(p("kfcv/summary.json"))
            .arg("--out")
            .arg(p("comparison.json")),
    )?;

    read_summary(&p("baseline/summary.json")).map_err(|e| e.to_string())?;
    let kf = read_summary(&p("kfcv/summary.json")).map_err(|e| e.to_string())?;
    ensure!(kf.summary.records.len() == 5 && kf.fold_trajectories.len() == 5, "k-fold summary lacks 5 folds");
    for i in 0..5 {
        ensure!(p(&format!("kfcv/fold_{i}/epochs.csv")).is_file(), "missing fold_{i}/epochs.csv");
    }
    let header = fs::read_to_string(p("report/learning_curve.csv"))
        .map_err(|e| e.to_string())?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    ensure!(
        (0..5).all(|i| header.contains(&format!("fold_{i}_val_loss"))) && header.contains("baseline_val_loss"),
        "learning curve header lacks the fold overlay: {header}"
    );
    let curve = read_cumulative_curve(&p("evaluation/cumulative_curve.csv")).map_err(|e| e.to_string())?;
    ensure!(!curve.points.is_empty(), "empty cumulative curve");
    let report = json(&p("report/report.json"))?;
    ensure!(report["relative_improvement_percent"].is_number(), "report lacks relative_improvement_percent");
    let pct = json(&p("comparison.json"))?["relative_improvement_percent"]
        .as_f64()
        .ok_or("comparison lacks relative_improvement_percent")?;
    ensure!(pct.is_finite(), "improvement {pct}");
    Ok(pct)
}

/// Every file under `root` except manifests, keyed by relative path.
fn artifact_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn end_to_end_smoke() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        fs::create_dir_all(d).map_err(|e| e.to_string())?;
    }
    let pct = smoke_run(&a)?;
    let first = start.elapsed();
    smoke_run(&b)?;
    let (fa, fb) = (artifact_bytes(&a), artifact_bytes(&b));
    ensure!(fa.keys().eq(fb.keys()), "reruns produced different file sets");
    for (path, bytes) in &fa {
        ensure!(fb[path] == *bytes, "{} differs between reruns", path.display());
    }
    ensure!(first <= Duration::from_secs(1200), "one run took {first:.1?}");
    Ok(format!(
        "improvement {pct:.3}% (reported, not asserted), {} identical files, {first:.0?} per run",
        fa.len()
    ))
}

fn format_round_trips() -> Outcome {
    let (data, _) = generate_dataset(&GrammarConfig::default(), 100, 13).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("d.jsonl");
    write_dataset(&data, &path).map_err(|e| e.to_string())?;
    let back = read_dataset(&path).map_err(|e| e.to_string())?;
    ensure!(back.len() == data.len(), "read {} of {} indices", back.len(), data.len());
    let mut worst: f64 = 0.0;
    for (a, b) in data.iter().zip(&back) {
        ensure!(a.eq == b.eq && a.skeleton == b.skeleton && a.points.len() == b.points.len(), "index text differs");
        for (p, q) in a.points.iter().zip(&b.points) {
            for (u, v) in p.x.iter().chain([&p.y]).zip(q.x.iter().chain([&q.y])) {
                worst = worst.max((u - v).abs() / u.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    ensure!(worst <= 1e-12, "float drift {worst:e}");

    let cfg = ModelConfig::desk();
    let vocab = TokenVocabulary::new(1);
    let examples = examples_from_dataset(&data[..20], &vocab, &cfg).map_err(|(i, e)| format!("{i}: {e}"))?;
    let mut trainer = Trainer::new(ModelParams::init(&cfg, vocab.len()));
    trainer.train_epoch(&examples, &vocab, 0).map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("c.json");
    save_checkpoint(&ckpt, &trainer.params, &vocab).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let before = validate(&trainer.params, &examples, &vocab).map_err(|e| e.to_string())?;
    let after = validate(&loaded.params, &examples, &vocab).map_err(|e| e.to_string())?;
    ensure!(before.to_bits() == after.to_bits(), "validation loss {before} became {after}");
    Ok(format!("max relative float drift {worst:e}, validation loss {before} bit-identical"))
}

const CRITERIA: [(&str, fn() -> Outcome); 11] = [
    ("baseline table averaging", baseline_table_averaging),
    ("k-fold table averaging", kfcv_table_averaging),
    ("relative improvement headline", improvement_headline),
    ("fold partition properties", fold_partition),
    ("encoder permutation invariance", permutation_invariance),
    ("gradient check", gradient_check),
    ("overfit sanity", overfit_sanity),
    ("constant fitting oracle", constant_fitting_oracle),
    ("oracle-skeleton evaluation", oracle_skeleton_evaluation),
    ("end-to-end smoke experiment", end_to_end_smoke),
    ("format round-trips", format_round_trips),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("acceptance {n:>2} {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("acceptance {n:>2} {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
