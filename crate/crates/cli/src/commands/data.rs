use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use grbas::data::{
    apply_blinding, apply_review, blind_rename, build_manifest, read_assessments, read_manifest, read_review,
    read_speakers, stratified_partition, write_manifest, write_mapping, AssessmentRecord,
};

use crate::config::{usage, RunConfig};

/// The configured reference rater, or the only rater present.
pub fn pick_rater(cfg: &RunConfig, records: &[AssessmentRecord], source: &Path) -> Result<String> {
    if let Some(r) = cfg.get::<String>("reference_rater")? {
        return Ok(r);
    }
    let raters: BTreeSet<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
    match raters.len() {
        1 => Ok(raters.into_iter().next().unwrap().to_string()),
        0 => Ok(String::new()),
        n => Err(usage(format!(
            "{} has {n} raters ({}); choose one with --reference-rater",
            source.display(),
            raters.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn prep(cfg: &RunConfig) -> Result<()> {
    let audio_dir = cfg.path("audio_dir")?;
    let ratings = cfg.path("ratings")?;
    let out = cfg.path("out")?;
    let records = read_assessments(&ratings)?;
    let rater = pick_rater(cfg, &records, &ratings)?;
    let speakers = match cfg.opt_path("speakers")? {
        Some(p) => read_speakers(p)?,
        None => Default::default(),
    };
    let mut rows = build_manifest(&audio_dir, &records, &rater, &speakers)?;
    if let Some(p) = cfg.opt_path("review")? {
        apply_review(&mut rows, &read_review(p)?)?;
    }
    write_manifest(&out, &rows)?;
    cfg.echo_beside(&out)?;

    let mut counts = std::collections::BTreeMap::new();
    for r in &rows {
        *counts.entry(r.status.to_string()).or_insert(0usize) += 1;
    }
    println!("{} files, reference rater {rater:?}", rows.len());
    for (status, n) in counts {
        println!("  {status}: {n}");
    }
    Ok(())
}

pub fn blind(cfg: &RunConfig) -> Result<()> {
    let manifest = cfg.path("manifest")?;
    let seed: u64 = cfg.require("seed")?;
    let mapping_path = match cfg.opt_path("mapping")? {
        Some(p) => p,
        None => manifest.with_file_name("blind_map.csv"),
    };
    let mut rows = read_manifest(&manifest)?;
    let mapping = blind_rename(&rows, seed);
    apply_blinding(&mut rows, &mapping);
    write_manifest(&manifest, &rows)?;
    write_mapping(&mapping_path, &rows, &mapping)?;
    cfg.echo_beside(&mapping_path)?;
    println!("{} names written to {}", mapping.len(), mapping_path.display());
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let manifest = cfg.path("manifest")?;
    let k: usize = cfg.get("k")?.unwrap_or(5);
    let seed: u64 = cfg.require("seed")?;
    let out = cfg.path("out")?;
    let rows = read_manifest(&manifest)?;
    let part = stratified_partition(&rows, k, seed)?;
    part.plan.write(&out)?;
    cfg.echo_beside(&out)?;
    let grade_of: std::collections::HashMap<&str, grbas::Grade> =
        rows.iter().filter_map(|r| r.usable_grade().map(|g| (r.file_id.as_str(), g))).collect();
    for (i, t) in part.plan.tables.iter().enumerate() {
        let mut counts = [0usize; 4];
        t.iter().for_each(|f| counts[grade_of[f.as_str()].index()] += 1);
        let role = if i == part.plan.test { "test" } else { "cv" };
        println!("table {i} ({role}): {} files, per grade {counts:?}", t.len());
    }
    for d in &part.deviations {
        eprintln!(
            "warning: table {} grade {} has {} files, proportional share {:.1}",
            d.table, d.grade, d.count, d.share
        );
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
