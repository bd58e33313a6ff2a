use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::read_wav;
use crate::grade::Grade;

use super::records::{format_grade, parse_grade, AssessmentRecord};
use super::DataError;

pub const MANIFEST_HEADER: [&str; 7] =
    ["file_id", "original_name", "blinded_name", "speaker_id", "duration_s", "status", "g_local"];

/// Files shorter than this are dropped.
pub const MIN_DURATION_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileStatus {
    Kept,
    RemovedShort,
    RemovedFlagged,
    Edited,
}

impl FileStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, FileStatus::Kept | FileStatus::Edited)
    }
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileStatus::Kept => "kept",
            FileStatus::RemovedShort => "removed_short",
            FileStatus::RemovedFlagged => "removed_flagged",
            FileStatus::Edited => "edited",
        })
    }
}

impl FromStr for FileStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "kept" => Ok(FileStatus::Kept),
            "removed_short" => Ok(FileStatus::RemovedShort),
            "removed_flagged" => Ok(FileStatus::RemovedFlagged),
            "edited" => Ok(FileStatus::Edited),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub file_id: String,
    pub original_name: String,
    pub blinded_name: String,
    pub speaker_id: String,
    pub duration_s: f64,
    pub status: FileStatus,
    pub g_local: Option<Grade>,
}

impl ManifestRow {
    /// Usable row with a grade; removed and unassessed rows give `None`.
    pub fn usable_grade(&self) -> Option<Grade> {
        self.g_local.filter(|_| self.status.is_usable())
    }
}

/// Status for a file given its duration and reference grade.
pub fn classify(duration_s: f64, g: Option<Grade>) -> FileStatus {
    if duration_s < MIN_DURATION_S {
        FileStatus::RemovedShort
    } else if g.is_none() {
        FileStatus::RemovedFlagged
    } else {
        FileStatus::Kept
    }
}

/// Reference grade per file: the lowest-numbered instance from `reference_rater`.
pub fn reference_grades(records: &[AssessmentRecord], reference_rater: &str) -> HashMap<String, Option<Grade>> {
    let mut best: HashMap<String, (u8, Option<Grade>)> = HashMap::new();
    for r in records.iter().filter(|r| r.rater_id == reference_rater) {
        let entry = best.entry(r.file_id.clone()).or_insert((r.instance, r.g()));
        if r.instance < entry.0 {
            *entry = (r.instance, r.g());
        }
    }
    best.into_iter().map(|(k, (_, g))| (k, g)).collect()
}

/// One row per WAV in `audio_dir` (sorted by name). Files without a
/// reference grade, or graded not classifiable, are flagged for removal.
pub fn build_manifest(
    audio_dir: impl AsRef<Path>,
    records: &[AssessmentRecord],
    reference_rater: &str,
    speakers: &HashMap<String, String>,
) -> Result<Vec<ManifestRow>, DataError> {
    let dir = audio_dir.as_ref();
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();

    let grades = reference_grades(records, reference_rater);
    let mut rows = Vec::with_capacity(files.len());
    for path in &files {
        let clip = read_wav(path).map_err(|e| DataError::Audio(e.to_string()))?;
        let file_id = clip.source_id().to_string();
        let duration_s = clip.duration_seconds();
        let g_local = grades.get(&file_id).copied().flatten();
        rows.push(ManifestRow {
            original_name: path.file_name().unwrap().to_string_lossy().into_owned(),
            blinded_name: String::new(),
            speaker_id: speakers.get(&file_id).cloned().unwrap_or_else(|| file_id.clone()),
            duration_s,
            status: classify(duration_s, g_local),
            g_local,
            file_id,
        });
    }
    let known: std::collections::HashSet<&str> = rows.iter().map(|r| r.file_id.as_str()).collect();
    if let Some(r) = records.iter().find(|r| !known.contains(r.file_id.as_str())) {
        return Err(DataError::MissingFile(r.file_id.clone()));
    }
    Ok(rows)
}

/// Applies manual review decisions (`file_id` → `edited` or `removed_flagged`).
pub fn apply_review(rows: &mut [ManifestRow], review: &[(String, FileStatus)]) -> Result<(), DataError> {
    for (file_id, status) in review {
        let row =
            rows.iter_mut().find(|r| &r.file_id == file_id).ok_or_else(|| DataError::UnknownFile(file_id.clone()))?;
        if status.is_usable() && (row.duration_s < MIN_DURATION_S || row.g_local.is_none()) {
            return Err(DataError::Invalid(format!(
                "{file_id}: cannot mark {status}, file is too short or unassessed"
            )));
        }
        row.status = *status;
    }
    Ok(())
}

/// Seeded bijection from file id to a random 12-character name plus `.wav`.
pub fn blind_rename(rows: &[ManifestRow], seed: u64) -> BTreeMap<String, String> {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let mut ids: Vec<&str> = rows.iter().map(|r| r.file_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = std::collections::HashSet::new();
    let mut out = BTreeMap::new();
    for id in ids {
        let name = loop {
            let stem: String = (0..12).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char).collect();
            if used.insert(stem.clone()) {
                break format!("{stem}.wav");
            }
        };
        out.insert(id.to_string(), name);
    }
    out
}

pub fn apply_blinding(rows: &mut [ManifestRow], mapping: &BTreeMap<String, String>) {
    for r in rows {
        if let Some(name) = mapping.get(&r.file_id) {
            r.blinded_name = name.clone();
        }
    }
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| DataError::csv(path, 0, e))?;
    for r in rows {
        w.write_record([
            r.file_id.clone(),
            r.original_name.clone(),
            r.blinded_name.clone(),
            r.speaker_id.clone(),
            format!("{:.6}", r.duration_s),
            r.status.to_string(),
            format_grade(r.g_local),
        ])
        .map_err(|e| DataError::csv(path, 0, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>, DataError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    let header = reader.headers().map_err(|e| DataError::csv(path, 1, e))?.clone();
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(DataError::at(path, 1, format!("expected header {}", MANIFEST_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::csv(path, line, e))?;
        let f = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let duration_s = f(4)
            .parse::<f64>()
            .ok()
            .filter(|d| d.is_finite() && *d >= 0.0)
            .ok_or_else(|| DataError::at(path, line, format!("bad duration {:?}", f(4))))?;
        let status = f(5).parse().map_err(|e| DataError::at(path, line, e))?;
        let g_local = parse_grade(&f(6)).map_err(|e| DataError::at(path, line, e))?;
        let row = ManifestRow {
            file_id: f(0),
            original_name: f(1),
            blinded_name: f(2),
            speaker_id: f(3),
            duration_s,
            status,
            g_local,
        };
        if row.status.is_usable() && row.duration_s < MIN_DURATION_S {
            return Err(DataError::at(path, line, "usable row shorter than 1 s"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `file_id,speaker_id` pairs.
pub fn read_speakers(path: impl AsRef<Path>) -> Result<HashMap<String, String>, DataError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    let mut out = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(path, i + 2, e))?;
        match (rec.get(0), rec.get(1)) {
            (Some(f), Some(s)) => out.insert(f.trim().to_string(), s.trim().to_string()),
            _ => return Err(DataError::at(path, i + 2, "expected file_id,speaker_id")),
        };
    }
    Ok(out)
}

/// Reads `file_id,status` review decisions.
pub fn read_review(path: impl AsRef<Path>) -> Result<Vec<(String, FileStatus)>, DataError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::csv(path, i + 2, e))?;
        let status = rec.get(1).unwrap_or("").parse().map_err(|e| DataError::at(path, i + 2, e))?;
        out.push((rec.get(0).unwrap_or("").trim().to_string(), status));
    }
    Ok(out)
}

pub fn write_mapping(
    path: impl AsRef<Path>,
    rows: &[ManifestRow],
    mapping: &BTreeMap<String, String>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, 0, e))?;
    w.write_record(["file_id", "original_name", "blinded_name"]).map_err(|e| DataError::csv(path, 0, e))?;
    for r in rows {
        let blinded = mapping.get(&r.file_id).map(String::as_str).unwrap_or("");
        w.write_record([r.file_id.as_str(), r.original_name.as_str(), blinded])
            .map_err(|e| DataError::csv(path, 0, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_wav, AudioClip};

    fn write_tone(dir: &Path, name: &str, seconds: f64) {
        let n = (seconds * 8000.0) as usize;
        let s = (0..n).map(|i| 0.3 * (i as f64 * 0.2).sin()).collect();
        write_wav(&AudioClip::new(s, 8000, name).unwrap(), dir.join(format!("{name}.wav"))).unwrap();
    }

    #[test]
    fn short_and_unassessed_files_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        write_tone(dir.path(), "a", 1.5);
        write_tone(dir.path(), "b", 0.8);
        write_tone(dir.path(), "c", 2.0);
        write_tone(dir.path(), "d", 2.0);
        let recs = vec![
            AssessmentRecord::new("a", "local", 1, Grade::new(1)),
            AssessmentRecord::new("b", "local", 1, Grade::new(2)),
            AssessmentRecord::new("c", "local", 1, None),
            AssessmentRecord::new("a", "1", 1, Grade::new(3)),
        ];
        let m = build_manifest(dir.path(), &recs, "local", &HashMap::new()).unwrap();
        let status: Vec<_> = m.iter().map(|r| (r.file_id.as_str(), r.status)).collect();
        assert_eq!(
            status,
            [
                ("a", FileStatus::Kept),
                ("b", FileStatus::RemovedShort),
                ("c", FileStatus::RemovedFlagged),
                ("d", FileStatus::RemovedFlagged),
            ]
        );
        assert_eq!(m[0].g_local, Grade::new(1));
        assert_eq!(m[0].speaker_id, "a");
    }

    #[test]
    fn empty_directory_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_manifest(dir.path(), &[], "local", &HashMap::new()).unwrap().is_empty());
    }

    #[test]
    fn assessment_of_missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_tone(dir.path(), "a", 1.5);
        let recs = vec![AssessmentRecord::new("zz", "local", 1, Grade::new(1))];
        assert!(matches!(
            build_manifest(dir.path(), &recs, "local", &HashMap::new()),
            Err(DataError::MissingFile(f)) if f == "zz"
        ));
    }

    #[test]
    fn manifest_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ManifestRow {
                file_id: "x".into(),
                original_name: "x.wav".into(),
                blinded_name: "q.wav".into(),
                speaker_id: "s1".into(),
                duration_s: 1.25,
                status: FileStatus::Edited,
                g_local: Grade::new(3),
            },
            ManifestRow {
                file_id: "y".into(),
                original_name: "y.wav".into(),
                blinded_name: String::new(),
                speaker_id: "y".into(),
                duration_s: 0.5,
                status: FileStatus::RemovedShort,
                g_local: None,
            },
        ];
        let p = dir.path().join("m.csv");
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
    }

    #[test]
    fn blinding_is_a_seeded_bijection() {
        let rows: Vec<ManifestRow> = (0..50)
            .map(|i| ManifestRow {
                file_id: format!("file{i:03}"),
                original_name: format!("file{i:03}.wav"),
                blinded_name: String::new(),
                speaker_id: format!("file{i:03}"),
                duration_s: 2.0,
                status: FileStatus::Kept,
                g_local: Grade::new((i % 4) as u8),
            })
            .collect();
        let a = blind_rename(&rows, 3);
        assert_eq!(a, blind_rename(&rows, 3));
        assert_ne!(a, blind_rename(&rows, 4));
        let names: std::collections::HashSet<_> = a.values().collect();
        assert_eq!(names.len(), 50);
    }

    #[test]
    fn review_marks_and_validates() {
        let mut rows = vec![ManifestRow {
            file_id: "x".into(),
            original_name: "x.wav".into(),
            blinded_name: String::new(),
            speaker_id: "x".into(),
            duration_s: 0.5,
            status: FileStatus::RemovedShort,
            g_local: Grade::new(0),
        }];
        assert!(apply_review(&mut rows, &[("x".into(), FileStatus::Edited)]).is_err());
        apply_review(&mut rows, &[("x".into(), FileStatus::RemovedFlagged)]).unwrap();
        assert_eq!(rows[0].status, FileStatus::RemovedFlagged);
        assert!(matches!(
            apply_review(&mut rows, &[("nope".into(), FileStatus::Kept)]),
            Err(DataError::UnknownFile(_))
        ));
    }
}
