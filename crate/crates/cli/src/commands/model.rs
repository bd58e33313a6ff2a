use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use anyhow::{Context, Result};
use grbas::data::{balance_group, group_augmented, FoldPlan, LabeledClip};
use grbas::features::fit_stats;
use grbas::metrics::{accuracy, confusion, mae, ConfusionMatrix};
use grbas::net::{load_checkpoint, save_checkpoint, CheckpointMeta, GrbasNet};
use grbas::train::{
    cross_validate, evaluate, prepare, train, EpochStats, Evaluation, Precision, TrainConfig, TrainHistory,
};
use grbas::Scalar;

use super::data::ensure_dir;
use crate::config::{usage, RunConfig};
use crate::labels::{load_labels, load_samples, read_predictions};

const PROGRESS_EVERY: usize = 10;

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let precision = match cfg.get::<String>("precision")?.as_deref() {
        None => d.precision,
        Some(p) => p
            .trim_start_matches('f')
            .parse()
            .ok()
            .and_then(Precision::from_bits)
            .ok_or_else(|| usage(format!("invalid precision {p:?} (expected 32 or 64)")))?,
    };
    let tc = TrainConfig {
        epochs: cfg.get("epochs")?.unwrap_or(d.epochs),
        learning_rate: cfg.get("learning_rate")?.unwrap_or(d.learning_rate),
        batch_size: cfg.get("batch_size")?.unwrap_or(d.batch_size),
        lambda: cfg.get("lambda")?.unwrap_or(d.lambda),
        seed: cfg.require("seed")?,
        precision,
    };
    tc.validate().map_err(|e| usage(e.to_string()))?;
    Ok(tc)
}

fn progress(label: &str, total: usize, e: &EpochStats) {
    if e.epoch.is_multiple_of(PROGRESS_EVERY) || e.epoch == total || e.epoch == 1 {
        let val = match (e.val_acc, e.val_mae) {
            (Some(a), Some(m)) => format!(", val acc {a:.3}, val mae {m:.3}"),
            _ => String::new(),
        };
        eprintln!("{label}epoch {:>4}/{total}: loss {:.4}, train acc {:.3}{val}", e.epoch, e.loss, e.train_acc);
    }
}

fn save_run<T: Scalar>(
    dir: &Path,
    history: &TrainHistory,
    net: &GrbasNet<T>,
    best: Option<&GrbasNet<T>>,
    meta: CheckpointMeta,
) -> Result<()> {
    ensure_dir(dir)?;
    history.write_csv(dir.join("history.csv"))?;
    fs::write(dir.join("weights.csv"), history.weights_csv()).context("writing weights.csv")?;
    save_checkpoint(&dir.join("model.ckpt"), net, &meta)?;
    if let (Some(b), Some(epoch)) = (best, history.best_epoch) {
        save_checkpoint(&dir.join("best.ckpt"), b, &CheckpointMeta { epoch, ..meta })?;
    }
    Ok(())
}

/// Balanced clip sets, one per plan table.
fn plan_tables(plan: &FoldPlan, clips: &[LabeledClip], seed: u64) -> Result<Vec<Vec<LabeledClip>>> {
    plan.tables
        .iter()
        .enumerate()
        .map(|(i, table)| {
            let group = group_augmented(table, clips).with_context(|| format!("table {i}"))?;
            balance_group(&group, seed.wrapping_add(i as u64)).with_context(|| format!("balancing table {i}"))
        })
        .collect()
}

fn run_train<T: Scalar>(cfg: &RunConfig, tc: &TrainConfig) -> Result<()> {
    let features = cfg.path("features")?;
    let out_dir = cfg.path("out_dir")?;
    ensure_dir(&out_dir)?;
    cfg.echo(&out_dir)?;
    let rater = cfg.get::<String>("reference_rater")?;
    let clips = load_labels(&features, cfg.opt_path("labels")?.as_deref(), rater.as_deref())?;

    let Some(plan_path) = cfg.opt_path("plan")? else {
        let samples = load_samples::<T>(&features, &clips)?;
        let stats = fit_stats(samples.iter().map(|s| &s.features))?;
        let set = prepare(&samples, &stats);
        eprintln!("training on {} clips", set.len());
        let out = train(GrbasNet::init(tc.seed), &set, &[], tc, |e, _| {
            progress("", tc.epochs, e);
            ControlFlow::Continue(())
        })?;
        let epoch = out.history.epochs.len();
        save_run(&out_dir, &out.history, &out.net, None, CheckpointMeta { seed: tc.seed, epoch, stats })?;
        let ev = evaluate(&out.net, &set)?;
        println!("final train accuracy {:.3}, mae {:.3}", ev.accuracy, ev.mae);
        return Ok(());
    };

    let plan = FoldPlan::read(&plan_path)?;
    let balanced = plan_tables(&plan, &clips, tc.seed)?;
    let tables = balanced.iter().map(|t| load_samples::<T>(&features, t)).collect::<Result<Vec<_>>>()?;
    for (i, t) in tables.iter().enumerate() {
        eprintln!("table {i}: {} balanced clips{}", t.len(), if i == plan.test { " (test)" } else { "" });
    }
    let report = cross_validate(&tables, Some(plan.test), tc, |v, e| progress(&format!("fold {v} "), tc.epochs, e))?;

    let mut summary = String::from("table,val_accuracy,val_mae,test_accuracy,test_mae,best_epoch\n");
    for (run, f) in report.folds.iter().enumerate() {
        let meta = CheckpointMeta {
            seed: tc.seed.wrapping_add(run as u64),
            epoch: f.outcome.history.epochs.len(),
            stats: f.stats,
        };
        save_run(
            &out_dir.join(format!("fold{}", f.table)),
            &f.outcome.history,
            &f.outcome.net,
            f.outcome.best.as_ref(),
            meta,
        )?;
        let (ta, tm) = f.test.as_ref().map_or((f64::NAN, f64::NAN), |t| (t.accuracy, t.mae));
        let best = f.outcome.history.best_epoch.map(|b| b.to_string()).unwrap_or_default();
        writeln!(summary, "{},{:.6},{:.6},{ta:.6},{tm:.6},{best}", f.table, f.validation.accuracy, f.validation.mae)
            .unwrap();
        println!(
            "fold {}: val accuracy {:.3}, mae {:.3}; test accuracy {ta:.3}, mae {tm:.3}",
            f.table, f.validation.accuracy, f.validation.mae
        );
    }
    let (mta, mtm) = (report.mean_test_accuracy.unwrap_or(f64::NAN), report.mean_test_mae.unwrap_or(f64::NAN));
    writeln!(summary, "mean,{:.6},{:.6},{mta:.6},{mtm:.6},", report.mean_val_accuracy, report.mean_val_mae).unwrap();
    fs::write(out_dir.join("summary.csv"), summary).context("writing summary.csv")?;
    println!(
        "mean: val accuracy {:.3}, mae {:.3}; test accuracy {mta:.3}, mae {mtm:.3}",
        report.mean_val_accuracy, report.mean_val_mae
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let tc = train_config(cfg)?;
    match tc.precision {
        Precision::F32 => run_train::<f32>(cfg, &tc),
        Precision::F64 => run_train::<f64>(cfg, &tc),
    }
}

fn print_metrics(cm: &ConfusionMatrix) -> Result<()> {
    println!("confusion matrix (rows: reference grade, columns: predicted grade)");
    print!("{cm}");
    println!("accuracy {:.3} ({}/{})", accuracy(cm)?, cm.trace(), cm.total());
    println!("mae {:.3} ({}/{})", mae(cm)?, cm.weighted_error(), cm.total());
    Ok(())
}

fn write_metrics(dir: &Path, cm: &ConfusionMatrix) -> Result<()> {
    ensure_dir(dir)?;
    fs::write(dir.join("confusion.csv"), cm.to_csv()).context("writing confusion.csv")?;
    let metrics = format!(
        "metric,value,numerator,denominator\naccuracy,{:.6},{},{}\nmae,{:.6},{},{}\n",
        accuracy(cm)?,
        cm.trace(),
        cm.total(),
        mae(cm)?,
        cm.weighted_error(),
        cm.total()
    );
    fs::write(dir.join("metrics.csv"), metrics).context("writing metrics.csv")
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let out_dir = cfg.opt_path("out_dir")?;
    if let Some(p) = cfg.opt_path("predictions")? {
        let (reference, predicted) = read_predictions(&p)?;
        let cm = confusion(&reference, &predicted)?;
        print_metrics(&cm)?;
        if let Some(d) = out_dir {
            write_metrics(&d, &cm)?;
            cfg.echo(&d)?;
        }
        return Ok(());
    }
    let model = cfg.path("model")?;
    let features = cfg.path("features")?;
    let (net, meta) = load_checkpoint::<f32>(&model)?;
    let rater = cfg.get::<String>("reference_rater")?;
    let clips = load_labels(&features, cfg.opt_path("labels")?.as_deref(), rater.as_deref())?;
    let samples = load_samples::<f32>(&features, &clips)?;
    let set = prepare(&samples, &meta.stats);
    let Evaluation { matrix, predictions, .. } = evaluate(&net, &set)?;
    print_metrics(&matrix)?;
    if let Some(d) = out_dir {
        write_metrics(&d, &matrix)?;
        let mut s = String::from("clip_name,source_file_id,reference,predicted\n");
        for (c, p) in clips.iter().zip(&predictions) {
            writeln!(s, "{},{},{},{p}", c.clip_name, c.source_file_id, c.grade).unwrap();
        }
        fs::write(d.join("predictions.csv"), s).context("writing predictions.csv")?;
        cfg.echo(&d)?;
    }
    Ok(())
}
