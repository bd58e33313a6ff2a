//! Clip labels and feature loading shared by `train`, `evaluate` and `report`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use grbas::augment::read_index;
use grbas::data::{read_assessments, read_manifest, reference_grades, LabeledClip, ASSESSMENT_HEADER, MANIFEST_HEADER};
use grbas::features::read_ceps;
use grbas::train::Sample;
use grbas::{Grade, Scalar};
use rayon::prelude::*;

pub const LABELS_HEADER: &str = "clip_name,source_file_id,grade";
pub const INDEX_FILE: &str = "index.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const FEATURE_EXT: &str = "ceps";

pub fn write_labels(path: &Path, clips: &[LabeledClip]) -> Result<()> {
    let mut s = format!("{LABELS_HEADER}\n");
    for c in clips {
        s.push_str(&format!("{},{},{}\n", c.clip_name, c.source_file_id, c.grade));
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_clip_labels(path: &Path, text: &str) -> Result<Vec<LabeledClip>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [clip, source, grade] = fields[..] else {
            bail!("{}:{}: expected 3 fields, found {}", path.display(), i + 1, fields.len());
        };
        let grade: Grade = grade.parse().with_context(|| format!("{}:{}: bad grade", path.display(), i + 1))?;
        out.push(LabeledClip { clip_name: clip.to_string(), source_file_id: source.to_string(), grade });
    }
    Ok(out)
}

/// Grade per source file from a manifest (usable rows) or an assessments
/// file (reference rater, lowest instance; the only rater if unspecified).
fn file_grades(path: &Path, header: &str, reference_rater: Option<&str>) -> Result<HashMap<String, Grade>> {
    if header == MANIFEST_HEADER.join(",") {
        let rows = read_manifest(path)?;
        return Ok(rows.iter().filter_map(|r| r.usable_grade().map(|g| (r.file_id.clone(), g))).collect());
    }
    let records = read_assessments(path)?;
    let rater = match reference_rater {
        Some(r) => r.to_string(),
        None => {
            let mut raters: Vec<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
            raters.sort_unstable();
            raters.dedup();
            match raters[..] {
                [one] => one.to_string(),
                _ => bail!("{} has {} raters; pass --reference-rater", path.display(), raters.len()),
            }
        }
    };
    Ok(reference_grades(&records, &rater).into_iter().filter_map(|(f, g)| g.map(|g| (f, g))).collect())
}

/// Labelled clips for the features in `features_dir`. `labels` may be a clip
/// label file, a manifest or an assessments file; the latter two are joined
/// with the directory's index. Without `labels`, `<features_dir>/labels.csv` is used.
pub fn load_labels(
    features_dir: &Path,
    labels: Option<&Path>,
    reference_rater: Option<&str>,
) -> Result<Vec<LabeledClip>> {
    let default = features_dir.join(LABELS_FILE);
    let path = labels.unwrap_or(&default);
    let text = fs::read_to_string(path).with_context(|| format!("reading labels {}", path.display()))?;
    let header = text.lines().next().unwrap_or("").trim();
    if header == LABELS_HEADER {
        return read_clip_labels(path, &text);
    }
    if header != MANIFEST_HEADER.join(",") && header != ASSESSMENT_HEADER.join(",") {
        bail!("{}:1: unrecognised labels header {header:?}", path.display());
    }
    let grades = file_grades(path, header, reference_rater)?;
    let index_path = features_dir.join(INDEX_FILE);
    let index = read_index(&index_path)?;
    Ok(index
        .into_iter()
        .filter_map(|row| {
            grades.get(&row.source_file_id).map(|&grade| LabeledClip {
                clip_name: row.clip_name,
                source_file_id: row.source_file_id,
                grade,
            })
        })
        .collect())
}

pub fn feature_path(dir: &Path, clip: &str) -> PathBuf {
    dir.join(format!("{clip}.{FEATURE_EXT}"))
}

pub fn load_samples<T: Scalar>(dir: &Path, clips: &[LabeledClip]) -> Result<Vec<Sample<T>>> {
    clips
        .par_iter()
        .map(|c| {
            let path = feature_path(dir, &c.clip_name);
            Ok(Sample {
                name: c.clip_name.clone(),
                source_id: c.source_file_id.clone(),
                grade: c.grade,
                features: read_ceps(&path).with_context(|| format!("loading {}", path.display()))?,
            })
        })
        .collect()
}

/// Reads `reference,predicted` pairs from a CSV with those columns (others ignored).
pub fn read_predictions(path: &Path) -> Result<(Vec<Grade>, Vec<Grade>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = lines.next().map(|(_, h)| h.split(',').map(str::trim).collect()).unwrap_or_default();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).with_context(|| format!("{}:1: missing column {name:?}", path.display()))
    };
    let (rc, pc) = (col("reference")?, col("predicted")?);
    let (mut reference, mut predicted) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| -> Result<Grade> {
            f.get(c)
                .with_context(|| format!("{}:{}: too few fields", path.display(), i + 1))?
                .parse()
                .with_context(|| format!("{}:{}: bad grade", path.display(), i + 1))
        };
        reference.push(get(rc)?);
        predicted.push(get(pc)?);
    }
    Ok((reference, predicted))
}
