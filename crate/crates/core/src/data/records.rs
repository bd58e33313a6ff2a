use std::collections::HashSet;
use std::path::Path;

use crate::grade::Grade;

use super::DataError;

pub const ASSESSMENT_HEADER: [&str; 9] = ["file_id", "rater_id", "instance", "G", "R", "B", "A", "S", "comment"];

/// Literal used for a grade the rater could not assign.
pub const NOT_CLASSIFIABLE: &str = "NC";

/// One rater's GRBAS assessment of one file on one occasion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessmentRecord {
    pub file_id: String,
    pub rater_id: String,
    pub instance: u8,
    /// G, R, B, A, S in that order; `None` is not classifiable.
    pub grades: [Option<Grade>; 5],
    pub comment: String,
}

impl AssessmentRecord {
    pub fn new(file_id: &str, rater_id: &str, instance: u8, g: Option<Grade>) -> Self {
        Self {
            file_id: file_id.to_string(),
            rater_id: rater_id.to_string(),
            instance,
            grades: [g, None, None, None, None],
            comment: String::new(),
        }
    }

    pub fn g(&self) -> Option<Grade> {
        self.grades[0]
    }
}

pub fn format_grade(g: Option<Grade>) -> String {
    g.map_or_else(|| NOT_CLASSIFIABLE.to_string(), |g| g.to_string())
}

pub fn parse_grade(s: &str) -> Result<Option<Grade>, String> {
    let s = s.trim();
    if s == NOT_CLASSIFIABLE {
        return Ok(None);
    }
    s.parse::<Grade>().map(Some).map_err(|e| e.to_string())
}

/// Rejects duplicate `(file_id, rater_id, instance)` keys.
pub fn check_unique(records: &[AssessmentRecord]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((&r.file_id, &r.rater_id, r.instance)) {
            return Err(DataError::DuplicateAssessment {
                file_id: r.file_id.clone(),
                rater_id: r.rater_id.clone(),
                instance: r.instance,
            });
        }
    }
    Ok(())
}

pub fn read_assessments(path: impl AsRef<Path>) -> Result<Vec<AssessmentRecord>, DataError> {
    let path = path.as_ref();
    let mut reader =
        csv::ReaderBuilder::new().flexible(false).from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    let header = reader.headers().map_err(|e| DataError::csv(path, 1, e))?.clone();
    if header.iter().map(str::trim).ne(ASSESSMENT_HEADER) {
        return Err(DataError::at(path, 1, format!("expected header {}", ASSESSMENT_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DataError::csv(path, line, e))?;
        let field = |k: usize| row.get(k).unwrap_or("").trim();
        let instance = field(2)
            .parse::<u8>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| DataError::at(path, line, format!("bad instance {:?}", field(2))))?;
        let mut grades = [None; 5];
        for (k, g) in grades.iter_mut().enumerate() {
            *g = parse_grade(field(3 + k)).map_err(|e| DataError::at(path, line, e))?;
        }
        if field(0).is_empty() || field(1).is_empty() {
            return Err(DataError::at(path, line, "empty file_id or rater_id"));
        }
        out.push(AssessmentRecord {
            file_id: field(0).to_string(),
            rater_id: field(1).to_string(),
            instance,
            grades,
            comment: row.get(8).unwrap_or("").to_string(),
        });
    }
    check_unique(&out)?;
    Ok(out)
}

pub fn write_assessments(path: impl AsRef<Path>, records: &[AssessmentRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    w.write_record(ASSESSMENT_HEADER).map_err(|e| DataError::csv(path, 0, e))?;
    for r in records {
        let mut row = vec![r.file_id.clone(), r.rater_id.clone(), r.instance.to_string()];
        row.extend(r.grades.iter().map(|&g| format_grade(g)));
        row.push(r.comment.clone());
        w.write_record(&row).map_err(|e| DataError::csv(path, 0, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}
