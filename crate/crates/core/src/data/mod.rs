//! Assessment and manifest persistence, partitioning, and class balancing.

mod balance;
mod manifest;
mod partition;
mod records;

use std::path::Path;

use thiserror::Error;

use crate::grade::Grade;

pub use balance::{balance_group, class_counts, group_augmented, label_clips, LabeledClip};
pub use manifest::{
    apply_blinding, apply_review, blind_rename, build_manifest, classify, read_manifest, read_review, read_speakers,
    reference_grades, write_manifest, write_mapping, FileStatus, ManifestRow, MANIFEST_HEADER, MIN_DURATION_S,
};
pub use partition::{stratified_partition, Deviation, FoldPlan, Partition};
pub use records::{
    check_unique, format_grade, parse_grade, read_assessments, write_assessments, AssessmentRecord, ASSESSMENT_HEADER,
    NOT_CLASSIFIABLE,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}{}: {message}", line_suffix(*line))]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("audio: {0}")]
    Audio(String),
    #[error("duplicate assessment for file {file_id}, rater {rater_id}, instance {instance}")]
    DuplicateAssessment { file_id: String, rater_id: String, instance: u8 },
    #[error("assessment references missing file {0}")]
    MissingFile(String),
    #[error("unknown file {0}")]
    UnknownFile(String),
    #[error("no augmented clips for file {0}")]
    MissingClips(String),
    #[error("class G={0} is empty")]
    EmptyClass(Grade),
    #[error("{0}")]
    Invalid(String),
}

fn line_suffix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" line {line}")
    }
}

impl DataError {
    pub(crate) fn at(path: &Path, line: usize, message: impl Into<String>) -> Self {
        DataError::Parse { path: path.display().to_string(), line, message: message.into() }
    }

    pub(crate) fn csv(path: &Path, line: usize, e: csv::Error) -> Self {
        let line = e.position().map_or(line, |p| p.line() as usize);
        Self::at(path, line, e.to_string())
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
