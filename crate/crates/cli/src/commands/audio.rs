use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use grbas::audio::{read_wav, resample, write_wav};
use grbas::augment::{augment_file, read_index, write_index, CropPosition, IndexRow, PitchVariant};
use grbas::data::{
    label_clips, read_manifest, write_assessments, write_manifest, AssessmentRecord, FileStatus, ManifestRow,
};
use grbas::features::{cepstrogram, write_ceps, FEATURE_RATE};
use grbas::synth::make_synthetic_dataset_with;
use rayon::prelude::*;

use super::data::ensure_dir;
use crate::config::RunConfig;
use crate::labels::{feature_path, load_labels, write_labels, INDEX_FILE, LABELS_FILE};

pub fn augment(cfg: &RunConfig) -> Result<()> {
    let manifest = cfg.path("manifest")?;
    let audio_dir = match cfg.opt_path("audio_dir")? {
        Some(d) => d,
        None => manifest.parent().map(|p| p.to_path_buf()).unwrap_or_default(),
    };
    let out_dir = cfg.path("out_dir")?;
    ensure_dir(&out_dir)?;
    let rows: Vec<ManifestRow> = read_manifest(&manifest)?.into_iter().filter(|r| r.usable_grade().is_some()).collect();

    let per_file: Vec<Vec<IndexRow>> = rows
        .par_iter()
        .map(|row| {
            let path = audio_dir.join(&row.original_name);
            let mut clip = read_wav(&path)?.with_source_id(row.file_id.clone());
            if clip.rate() != FEATURE_RATE {
                clip = resample(&clip, FEATURE_RATE)?;
            }
            let clips = augment_file(&clip).with_context(|| format!("augmenting {}", path.display()))?;
            clips
                .iter()
                .map(|c| {
                    let name = c.name();
                    write_wav(&c.clip, out_dir.join(format!("{name}.wav")))?;
                    Ok(IndexRow::for_clip(c))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut index = Vec::new();
    for (row, clips) in rows.iter().zip(per_file) {
        println!("{}: {}", row.file_id, clips.len());
        index.extend(clips);
    }
    write_index(out_dir.join(INDEX_FILE), &index)?;
    write_labels(&out_dir.join(LABELS_FILE), &label_clips(&index, &rows))?;
    cfg.echo(&out_dir)?;
    println!("{} clips from {} files", index.len(), rows.len());
    Ok(())
}

pub fn featurize(cfg: &RunConfig) -> Result<()> {
    let index_path = cfg.path("index")?;
    let out_dir = cfg.path("out_dir")?;
    ensure_dir(&out_dir)?;
    let clip_dir = index_path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let index = read_index(&index_path)?;

    index.par_iter().try_for_each(|row| -> Result<()> {
        let path = clip_dir.join(format!("{}.wav", row.clip_name));
        let clip = read_wav(&path)?;
        let ceps = cepstrogram(&clip).with_context(|| format!("featurizing {}", path.display()))?;
        write_ceps(feature_path(&out_dir, &row.clip_name), &ceps)?;
        Ok(())
    })?;
    write_index(out_dir.join(INDEX_FILE), &index)?;
    let inherited = clip_dir.join(LABELS_FILE);
    let labels = cfg.opt_path("labels")?.or_else(|| inherited.is_file().then_some(inherited));
    if let Some(labels) = labels {
        let rater = cfg.get::<String>("reference_rater")?;
        let clips = load_labels(&out_dir, Some(&labels), rater.as_deref())?;
        write_labels(&out_dir.join(LABELS_FILE), &clips)?;
        println!("{} labelled clips", clips.len());
    }
    cfg.echo(&out_dir)?;
    println!("{} feature files written to {}", index.len(), out_dir.display());
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let n: usize = cfg.require("n")?;
    let seed: u64 = cfg.require("seed")?;
    let duration: f64 = cfg.get("duration")?.unwrap_or(1.0);
    let out_dir = cfg.path("out_dir")?;
    if n == 0 {
        bail!(crate::config::usage("--n must be at least 1"));
    }
    ensure_dir(&out_dir)?;
    let clips = make_synthetic_dataset_with(n, seed, duration)?;

    clips.par_iter().try_for_each(|c| -> Result<()> {
        write_wav(&c.clip, out_dir.join(format!("{}.wav", c.clip.source_id())))?;
        Ok(())
    })?;

    let mut records = Vec::new();
    let mut index = Vec::new();
    let mut manifest = Vec::new();
    let mut params = String::from("file_id,grade,f0,jitter,shimmer,hnr,seed\n");
    for c in &clips {
        let id = c.clip.source_id();
        records.push(AssessmentRecord::new(id, "synthetic", 1, Some(c.grade)));
        index.push(IndexRow {
            clip_name: id.to_string(),
            source_file_id: id.to_string(),
            pitch: PitchVariant::None,
            crop: CropPosition::C,
            flip: false,
        });
        manifest.push(ManifestRow {
            file_id: id.to_string(),
            original_name: format!("{id}.wav"),
            blinded_name: String::new(),
            speaker_id: id.to_string(),
            duration_s: c.clip.duration_seconds(),
            status: FileStatus::Kept,
            g_local: Some(c.grade),
        });
        let hnr = c.spec.hnr.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
        writeln!(params, "{id},{},{:.4},{},{},{hnr},{}", c.grade, c.spec.f0, c.spec.jitter, c.spec.shimmer, c.seed)
            .unwrap();
    }
    write_assessments(out_dir.join("ratings.csv"), &records)?;
    write_index(out_dir.join(INDEX_FILE), &index)?;
    write_manifest(out_dir.join("manifest.csv"), &manifest)?;
    write_labels(&out_dir.join(LABELS_FILE), &label_clips(&index, &manifest))?;
    std::fs::write(out_dir.join("params.csv"), params).context("writing params.csv")?;
    cfg.echo(&out_dir)?;
    println!("{} clips ({n} per grade) written to {}", clips.len(), out_dir.display());
    Ok(())
}
