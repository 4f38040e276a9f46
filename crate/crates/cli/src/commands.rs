use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use symkfcv_core::constopt::FitBudget;
use symkfcv_core::datagen::{
    generate_dataset, read_dataset, reduction_percent, subsample, write_dataset, GrammarConfig,
};
use symkfcv_core::eval::{cumulative_curve, emit_report, score_dataset, ReportInputs};
use symkfcv_core::kfold::{
    read_summary, reference, relative_improvement, run_baseline, run_kfcv, write_baseline,
    write_kfcv, write_summary, ExperimentConfig, ExperimentSummary, Protocol,
};
use symkfcv_core::model::{config_hash, load_checkpoint, load_checkpoint_expecting, ModelConfig, Preset};
use symkfcv_core::TokenVocabulary;

use crate::args::{CompareArgs, EvaluateArgs, GenerateArgs, ReferenceArgs, ReportArgs, SubsampleArgs, TrainArgs};
use crate::manifest::RunManifest;
use crate::UsageError;

pub fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let mut cfg = GrammarConfig::default();
    if let Some(d) = args.max_depth {
        cfg.max_depth = d;
    }
    if let Some(v) = args.variables {
        cfg.variable_count = v;
    }
    if let Some(n) = args.min_points {
        cfg.points_range.0 = n;
    }
    if let Some(n) = args.max_points {
        cfg.points_range.1 = n;
    }
    if let Some(x) = args.x_min {
        cfg.x_range.0 = x;
    }
    if let Some(x) = args.x_max {
        cfg.x_range.1 = x;
    }
    if let Some(c) = args.const_min {
        cfg.constant_range.0 = c;
    }
    if let Some(c) = args.const_max {
        cfg.constant_range.1 = c;
    }
    cfg.validate().map_err(|e| UsageError(format!("grammar: {e}")))?;
    let (data, stats) = generate_dataset(&cfg, args.count, args.seed)?;
    write_dataset(&data, &args.out)?;
    println!(
        "wrote {} indices to {} (rejection rate {:.4})",
        data.len(),
        args.out.display(),
        stats.rejection_rate()
    );
    Ok(())
}

pub fn subsample_cmd(args: &SubsampleArgs) -> anyhow::Result<()> {
    let data = read_dataset(&args.data)?;
    let kept = subsample(&data, args.count, args.seed)?;
    write_dataset(&kept, &args.out)?;
    println!(
        "kept {} of {} indices ({:.2}% reduction)",
        kept.len(),
        data.len(),
        if data.is_empty() { 0.0 } else { reduction_percent(data.len(), kept.len()) }
    );
    Ok(())
}

/// Overrides accepted by `train --config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    train_fraction: Option<f64>,
    retrain_all: Option<bool>,
    model: Option<serde_json::Map<String, serde_json::Value>>,
}

pub fn experiment_config(args: &TrainArgs) -> anyhow::Result<ExperimentConfig> {
    let mut model = match args.preset {
        Preset::Desk => ModelConfig::desk(),
        Preset::Paper => ModelConfig::paper(),
    };
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    if let Some(overrides) = file.model {
        let mut value = serde_json::to_value(&model)?;
        let obj = value.as_object_mut().expect("config is an object");
        for (key, v) in overrides {
            if !obj.contains_key(&key) {
                return Err(UsageError(format!("unknown model field `{key}` in config file")).into());
            }
            obj.insert(key, v);
        }
        model = serde_json::from_value(value).map_err(|e| UsageError(format!("model config: {e}")))?;
    }
    if let Some(e) = args.epochs {
        model.epochs = e;
    }
    if let Some(b) = args.batch_size {
        model.batch_size = b;
    }
    if let Some(d) = args.embed_dim {
        model.embed_dim = d;
    }
    if let Some(lr) = args.learning_rate {
        model.learning_rate = lr;
    }
    model.seed = args.seed;

    let mut cfg = ExperimentConfig::new(args.protocol, model, args.seed);
    cfg.dataset = args.data.clone();
    cfg.output_dir = args.out.clone();
    if let Some(k) = file.k {
        cfg.k = k;
    }
    if let Some(f) = file.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(r) = file.retrain_all {
        cfg.retrain_all = r;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(f) = args.train_fraction {
        cfg.train_fraction = f;
    }
    cfg.retrain_all |= args.retrain_all;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = experiment_config(args)?;
    create_dir(&cfg.output_dir)?;
    let vocab = TokenVocabulary::new(cfg.model.variable_count);
    let mut manifest = RunManifest::start(serde_json::to_value(&cfg)?, Some(cfg.master_seed), vec![cfg.dataset.clone()]);
    manifest.model_config_hash = Some(config_hash(&cfg.model, &vocab));
    manifest.write(&cfg.output_dir)?;

    let data = read_dataset(&cfg.dataset)?;
    let dir = &cfg.output_dir;
    let (summary, mut outputs) = match cfg.protocol {
        Protocol::Baseline => {
            let outcome = run_baseline(&data, &cfg)?;
            let s = write_baseline(dir, &outcome, &cfg)?;
            (s, vec![dir.join("epochs.csv"), dir.join("checkpoint.json")])
        }
        Protocol::Kfcv => {
            let outcome = run_kfcv(&data, &cfg)?;
            let s = write_kfcv(dir, &outcome, &cfg)?;
            let mut files = vec![dir.join("epochs.csv"), dir.join("checkpoint.json"), dir.join("folds.json")];
            for i in 0..cfg.k {
                let f = dir.join(format!("fold_{i}"));
                files.push(f.join("epochs.csv"));
                files.push(f.join("checkpoint.json"));
            }
            (s, files)
        }
    };
    outputs.push(dir.join("summary.json"));
    manifest.finish(dir, outputs)?;
    println!(
        "{:?}: {} records, avg train {:.6}, avg val {:.6}",
        summary.protocol,
        summary.summary.records.len(),
        summary.summary.avg_train,
        summary.summary.avg_val
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    if !args.checkpoint.exists() {
        bail!("checkpoint {} does not exist", args.checkpoint.display());
    }
    let mut expected = args.expect_hash.clone();
    if let Some(path) = &args.expect_config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let model: ModelConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let hash = config_hash(&model, &TokenVocabulary::new(model.variable_count));
        if let Some(given) = &expected {
            if *given != hash {
                bail!("--expect-hash {given} disagrees with --expect-config hash {hash}");
            }
        }
        expected = Some(hash);
    }
    let checkpoint = match &expected {
        Some(h) => load_checkpoint_expecting(&args.checkpoint, h)?,
        None => load_checkpoint(&args.checkpoint)?,
    };
    let summaries = args
        .summaries
        .iter()
        .map(|p| read_summary(p))
        .collect::<Result<Vec<_>, _>>()?;

    create_dir(&args.out)?;
    let mut manifest = RunManifest::start(
        serde_json::json!({ "restarts": args.restarts, "checkpoint_config_hash": checkpoint.config_hash }),
        None,
        [vec![args.checkpoint.clone(), args.data.clone()], args.summaries.clone()].concat(),
    );
    manifest.model_config_hash = Some(checkpoint.config_hash.clone());
    manifest.write(&args.out)?;

    let data = read_dataset(&args.data)?;
    let budget = FitBudget {
        restarts: args.restarts,
        ..FitBudget::default()
    };
    let scores = score_dataset(&checkpoint.params, &checkpoint.vocabulary, &data, &budget);
    let curve = cumulative_curve(&scores).ok();
    let report = emit_report(
        &ReportInputs {
            summaries,
            scores,
            curve,
            plots: args.plots,
        },
        &args.out,
    )?;
    manifest.finish(&args.out, report.files.iter().map(|f| args.out.join(f)).collect())?;
    if let Some(e) = &report.evaluation {
        println!(
            "scored {} indices: {} faulted, median log10 error {:.4}",
            e.indices, e.faulted, e.median_log_error
        );
    } else {
        println!("no indices to score");
    }
    Ok(())
}

pub fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let summaries = args
        .summaries
        .iter()
        .map(|p| read_summary(p))
        .collect::<Result<Vec<_>, _>>()?;
    let report = emit_report(
        &ReportInputs {
            summaries,
            plots: args.plots,
            ..Default::default()
        },
        &args.out,
    )?;
    match report.relative_improvement_percent {
        Some(p) => println!("relative improvement {p:.4}%"),
        None => println!("wrote {}", report.files.join(", ")),
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SideReport {
    pub protocol: Protocol,
    pub avg_train: f64,
    pub avg_val: f64,
}

/// Output of `compare`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub old: SideReport,
    pub new: SideReport,
    pub relative_improvement_percent: f64,
}

fn side(s: &ExperimentSummary) -> SideReport {
    SideReport {
        protocol: s.protocol,
        avg_train: s.summary.avg_train,
        avg_val: s.summary.avg_val,
    }
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    let old = read_summary(&args.old)?;
    let new = read_summary(&args.new)?;
    let pct = relative_improvement(old.summary.avg_val, new.summary.avg_val)
        .with_context(|| format!("{}", args.old.display()))?;
    let cmp = Comparison {
        old: side(&old),
        new: side(&new),
        relative_improvement_percent: pct,
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(&cmp)?;
    text.push('\n');
    fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "old avg val {:.6}, new avg val {:.6}, relative improvement {pct:.4}%",
        cmp.old.avg_val, cmp.new.avg_val
    );
    Ok(())
}

pub fn reference_cmd(args: &ReferenceArgs) -> anyhow::Result<()> {
    create_dir(&args.out)?;
    let files: [(PathBuf, ExperimentSummary); 2] = [
        (
            args.out.join("baseline_summary.json"),
            ExperimentSummary::bare(Protocol::Baseline, reference::baseline_summary()),
        ),
        (
            args.out.join("kfcv_summary.json"),
            ExperimentSummary::bare(Protocol::Kfcv, reference::kfcv_summary()),
        ),
    ];
    for (path, s) in &files {
        write_summary(path, s)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
