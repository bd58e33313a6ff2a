use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grade::Grade;

use super::manifest::ManifestRow;
use super::DataError;

/// Tables of file ids; one is held out for the final test, the rest are
/// cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub test: usize,
    pub tables: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.tables.len()
    }

    /// Indices of the cross-validation tables, in order.
    pub fn cv_tables(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| i != self.test).collect()
    }

    pub fn table_of(&self, file_id: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.iter().any(|f| f == file_id))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("seed={}\ntest={}\n", self.seed, self.test);
        for (i, t) in self.tables.iter().enumerate() {
            writeln!(s, "{i}: {}", t.join(",")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut seed = None;
        let mut test = None;
        let mut tables = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || format!("line {}: {line:?}", n + 1);
            if let Some(v) = line.strip_prefix("seed=") {
                seed = Some(v.trim().parse().map_err(|_| bad())?);
            } else if let Some(v) = line.strip_prefix("test=") {
                test = Some(v.trim().parse::<usize>().map_err(|_| bad())?);
            } else {
                let (idx, ids) = line.split_once(':').ok_or_else(bad)?;
                if idx.trim().parse::<usize>().map_err(|_| bad())? != tables.len() {
                    return Err(format!("line {}: tables out of order", n + 1));
                }
                tables.push(ids.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect());
            }
        }
        let test = test.ok_or("missing test= line")?;
        if test >= tables.len() {
            return Err(format!("test table {test} out of range"));
        }
        Ok(Self { seed: seed.ok_or("missing seed= line")?, test, tables })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_text(&text).map_err(|e| DataError::at(path, 0, e))
    }
}

/// A class count that misses its proportional share by more than one.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub table: usize,
    pub grade: Grade,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub plan: FoldPlan,
    pub deviations: Vec<Deviation>,
}

/// Splits usable rows into `k` speaker-disjoint tables with per-class counts
/// close to proportional.
///
/// Speakers form indivisible blocks labelled by their majority grade. Classes
/// are visited in descending size; each block goes to the table with the
/// fewest files of that class, then the fewest files overall, then the lowest
/// index. The test table is a seeded choice.
pub fn stratified_partition(rows: &[ManifestRow], k: usize, seed: u64) -> Result<Partition, DataError> {
    if k < 2 {
        return Err(DataError::Invalid(format!("need at least 2 tables, got {k}")));
    }
    let usable: Vec<(&ManifestRow, Grade)> = rows.iter().filter_map(|r| r.usable_grade().map(|g| (r, g))).collect();
    if usable.is_empty() {
        return Err(DataError::Invalid("no usable rows to partition".into()));
    }

    let mut blocks: BTreeMap<&str, Vec<(&str, Grade)>> = BTreeMap::new();
    for (r, g) in &usable {
        blocks.entry(r.speaker_id.as_str()).or_default().push((r.file_id.as_str(), *g));
    }
    let mut class_total = [0usize; 4];
    for (_, g) in &usable {
        class_total[g.index()] += 1;
    }
    let mut class_order: Vec<usize> = (0..4).collect();
    class_order.sort_by_key(|&c| std::cmp::Reverse(class_total[c]));

    let majority = |files: &[(&str, Grade)]| {
        let mut counts = [0usize; 4];
        for (_, g) in files {
            counts[g.index()] += 1;
        }
        *class_order
            .iter()
            .max_by_key(|&&c| (counts[c], std::cmp::Reverse(class_order.iter().position(|&o| o == c))))
            .unwrap()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<Vec<(&str, Grade)>>> = vec![Vec::new(); 4];
    for files in blocks.into_values() {
        by_class[majority(&files)].push(files);
    }
    let mut tables: Vec<Vec<(&str, Grade)>> = vec![Vec::new(); k];
    for &c in &class_order {
        let mut class_blocks = std::mem::take(&mut by_class[c]);
        class_blocks.shuffle(&mut rng);
        class_blocks.sort_by_key(|b| std::cmp::Reverse(b.len()));
        for block in class_blocks {
            let target = (0..k)
                .min_by_key(|&t| {
                    let in_class = tables[t].iter().filter(|(_, g)| g.index() == c).count();
                    (in_class, tables[t].len(), t)
                })
                .unwrap();
            tables[target].extend(block);
        }
    }

    let mut deviations = Vec::new();
    for (t, table) in tables.iter().enumerate() {
        for g in Grade::ALL {
            let count = table.iter().filter(|(_, x)| *x == g).count();
            let share = class_total[g.index()] as f64 / k as f64;
            if (count as f64 - share).abs() > 1.0 {
                deviations.push(Deviation { table: t, grade: g, count, share });
            }
        }
    }
    let test = rng.random_range(0..k);
    let tables = tables
        .into_iter()
        .map(|t| {
            let mut ids: Vec<String> = t.into_iter().map(|(f, _)| f.to_string()).collect();
            ids.sort();
            ids
        })
        .collect();
    Ok(Partition { plan: FoldPlan { seed, test, tables }, deviations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::FileStatus;

    pub(crate) fn rows(counts: [usize; 4]) -> Vec<ManifestRow> {
        let mut out = Vec::new();
        for (g, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let id = format!("g{g}_{i:03}");
                out.push(ManifestRow {
                    file_id: id.clone(),
                    original_name: format!("{id}.wav"),
                    blinded_name: String::new(),
                    speaker_id: id,
                    duration_s: 2.0,
                    status: FileStatus::Kept,
                    g_local: Grade::new(g as u8),
                });
            }
        }
        out
    }

    #[test]
    fn proportional_tables_for_unique_speakers() {
        let m = rows([40, 30, 20, 10]);
        let p = stratified_partition(&m, 5, 1).unwrap();
        assert!(p.deviations.is_empty());
        for t in &p.plan.tables {
            let count = |g: usize| t.iter().filter(|f| f.starts_with(&format!("g{g}_"))).count();
            assert_eq!([count(0), count(1), count(2), count(3)], [8, 6, 4, 2]);
        }
    }

    #[test]
    fn single_speaker_block_stays_together() {
        let mut m = rows([20, 20, 20, 10]);
        for r in m.iter_mut().filter(|r| r.g_local == Grade::new(3)) {
            r.speaker_id = "one".into();
        }
        let p = stratified_partition(&m, 5, 2).unwrap();
        let homes: std::collections::HashSet<_> =
            m.iter().filter(|r| r.speaker_id == "one").map(|r| p.plan.table_of(&r.file_id).unwrap()).collect();
        assert_eq!(homes.len(), 1);
        assert!(!p.deviations.is_empty());
    }

    #[test]
    fn deterministic_and_round_trips_as_text() {
        let m = rows([13, 9, 7, 5]);
        let a = stratified_partition(&m, 5, 9).unwrap();
        assert_eq!(a, stratified_partition(&m, 5, 9).unwrap());
        assert_eq!(FoldPlan::from_text(&a.plan.to_text()).unwrap(), a.plan);
        assert_eq!(a.plan.cv_tables().len(), 4);
    }

    #[test]
    fn removed_rows_are_excluded() {
        let mut m = rows([5, 5, 5, 5]);
        m[0].status = FileStatus::RemovedShort;
        let p = stratified_partition(&m, 5, 0).unwrap();
        assert!(p.plan.table_of(&m[0].file_id).is_none());
        assert_eq!(p.plan.tables.iter().map(Vec::len).sum::<usize>(), 19);
    }
}
