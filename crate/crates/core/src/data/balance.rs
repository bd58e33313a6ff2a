use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::IndexRow;
use crate::grade::Grade;

use super::manifest::ManifestRow;
use super::DataError;

/// An augmented clip with the grade of its source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledClip {
    pub clip_name: String,
    pub source_file_id: String,
    pub grade: Grade,
}

/// Attaches source grades to index rows; rows whose source is not usable are dropped.
pub fn label_clips(index: &[IndexRow], manifest: &[ManifestRow]) -> Vec<LabeledClip> {
    let grades: HashMap<&str, Grade> =
        manifest.iter().filter_map(|r| r.usable_grade().map(|g| (r.file_id.as_str(), g))).collect();
    index
        .iter()
        .filter_map(|row| {
            grades.get(row.source_file_id.as_str()).map(|&grade| LabeledClip {
                clip_name: row.clip_name.clone(),
                source_file_id: row.source_file_id.clone(),
                grade,
            })
        })
        .collect()
}

/// All clips derived from the files of one table.
pub fn group_augmented(table: &[String], clips: &[LabeledClip]) -> Result<Vec<LabeledClip>, DataError> {
    let members: HashSet<&str> = table.iter().map(String::as_str).collect();
    let group: Vec<LabeledClip> =
        clips.iter().filter(|c| members.contains(c.source_file_id.as_str())).cloned().collect();
    let covered: HashSet<&str> = group.iter().map(|c| c.source_file_id.as_str()).collect();
    if let Some(missing) = table.iter().find(|f| !covered.contains(f.as_str())) {
        return Err(DataError::MissingClips(missing.clone()));
    }
    Ok(group)
}

pub fn class_counts(clips: &[LabeledClip]) -> [usize; 4] {
    let mut counts = [0; 4];
    for c in clips {
        counts[c.grade.index()] += 1;
    }
    counts
}

/// Exactly `min class count` clips per class, sampled without replacement.
/// Output is ordered by grade, then by position in `group`.
pub fn balance_group(group: &[LabeledClip], seed: u64) -> Result<Vec<LabeledClip>, DataError> {
    let counts = class_counts(group);
    if let Some(empty) = Grade::ALL.into_iter().find(|g| counts[g.index()] == 0) {
        return Err(DataError::EmptyClass(empty));
    }
    let mc = *counts.iter().min().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(4 * mc);
    for g in Grade::ALL {
        let members: Vec<&LabeledClip> = group.iter().filter(|c| c.grade == g).collect();
        let mut picked = rand::seq::index::sample(&mut rng, members.len(), mc).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| members[i].clone()));
    }
    Ok(out)
}
