use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grbas::data::read_assessments;
use grbas::features::{read_ceps, standardize};
use grbas::metrics::agreement_report;
use grbas::net::{load_checkpoint, to_input};
use grbas::nn::Tensor;

use super::data::ensure_dir;
use crate::config::{usage, RunConfig};
use crate::labels::feature_path;

const CHECKPOINT: &str = "model.ckpt";

pub fn agreement(cfg: &RunConfig) -> Result<()> {
    let ratings = cfg.path("ratings")?;
    let report = agreement_report(&read_assessments(&ratings)?)?;
    match cfg.opt_path("out")? {
        Some(out) => {
            report.write_csv(&out)?;
            cfg.echo_beside(&out)?;
        }
        None => print!("{}", report.to_csv()),
    }
    for (name, m) in [
        ("intra-rater", report.intra),
        ("inter-rater (all instance pairs)", report.inter_all),
        ("inter-rater (same instance)", report.inter_same_instance),
    ] {
        if let Some(m) = m {
            eprintln!("{name}: agreement {:.3}, mae {:.3} over {} pairs", m.agreement, m.mae, m.pairs);
        }
    }
    Ok(())
}

/// Run directories under `root`: `root` itself if it holds `file`, then `fold*` children that do.
fn runs(root: &Path, file: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    if root.join(file).is_file() {
        out.push(("all".to_string(), root.to_path_buf()));
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(file).is_file())
        .collect();
    children.sort();
    for p in children {
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), p));
    }
    Ok(out)
}

/// Prefixes every CSV row from each run with a `run` column.
fn stack(root: &Path, file: &str) -> Result<Option<String>> {
    let runs = runs(root, file)?;
    let mut out = String::new();
    for (name, dir) in &runs {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if out.is_empty() {
            writeln!(out, "run,{header}").unwrap();
        }
        for line in lines.filter(|l| !l.is_empty()) {
            writeln!(out, "{name},{line}").unwrap();
        }
    }
    Ok((!runs.is_empty()).then_some(out))
}

fn long_format<T: grbas::Scalar>(run: &str, tensors: &BTreeMap<String, Tensor<T>>, out: &mut String) {
    for (name, t) in tensors {
        let shape = t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        for (i, v) in t.data().iter().enumerate() {
            writeln!(out, "{run},{name},{shape},{i},{:e}", v.as_f64()).unwrap();
        }
    }
}

const LONG_HEADER: &str = "run,tensor,shape,index,value\n";

pub fn report(cfg: &RunConfig) -> Result<()> {
    let history = cfg.path("history")?;
    let out_dir = cfg.path("out")?;
    ensure_dir(&out_dir)?;
    let mut written = Vec::new();

    let curves = stack(&history, "history.csv")?
        .ok_or_else(|| usage(format!("no history.csv in {} or its fold directories", history.display())))?;
    written.push(("training_curves.csv", curves));
    if let Some(w) = stack(&history, "weights.csv")? {
        written.push(("weight_evolution.csv", w));
    }
    let summary = history.join("summary.csv");
    if summary.is_file() {
        let text = fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?;
        written.push(("fold_metrics.csv", text));
    }

    let mut checkpoints = Vec::new();
    if let Some(dir) = cfg.opt_path("weights")? {
        checkpoints = runs(&dir, CHECKPOINT)?;
        if checkpoints.is_empty() {
            return Err(usage(format!("no {CHECKPOINT} in {} or its fold directories", dir.display())));
        }
        let mut s = String::from(LONG_HEADER);
        for (run, dir) in &checkpoints {
            let (net, _) = load_checkpoint::<f64>(&dir.join(CHECKPOINT))?;
            long_format(run, &net.dump_weights(), &mut s);
        }
        written.push(("final_weights.csv", s));
    }

    match (cfg.opt_path("features")?, cfg.get::<String>("clip")?) {
        (Some(features), Some(clip)) => {
            let (run, model) = match cfg.opt_path("model")? {
                Some(m) => ("model".to_string(), m),
                None => checkpoints
                    .first()
                    .map(|(run, dir)| (run.clone(), dir.join(CHECKPOINT)))
                    .ok_or_else(|| usage("activation dumps need --model or --weights"))?,
            };
            let (net, meta) = load_checkpoint::<f64>(&model)?;
            let path = feature_path(&features, &clip);
            let ceps = read_ceps::<f64>(&path).with_context(|| format!("loading {}", path.display()))?;
            let acts = net.dump_activations(&to_input(&standardize(&ceps, &meta.stats)))?;
            let mut s = String::from(LONG_HEADER);
            long_format(&run, &acts, &mut s);
            written.push(("activations.csv", s));
        }
        (None, None) => {}
        _ => return Err(usage("activation dumps need both --features and --clip")),
    }

    for (name, text) in &written {
        let path = out_dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    cfg.echo(&out_dir)?;
    Ok(())
}
