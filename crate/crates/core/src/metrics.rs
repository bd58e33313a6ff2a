//! Confusion matrices, accuracy, ordinal MAE, and rater agreement.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use thiserror::Error;

use crate::data::AssessmentRecord;
use crate::grade::Grade;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference has {reference} grades but comparison has {compared}")]
    LengthMismatch { reference: usize, compared: usize },
    #[error("no comparisons to score")]
    Empty,
    #[error("need at least 2 comparable assessment sets, found {0}")]
    TooFewSets(usize),
    #[error("{0}")]
    Io(String),
}

/// 4 x 4 counts; rows are the reference grade, columns the compared grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 4]; 4]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; 4]; 4] {
        &self.counts
    }

    pub fn get(&self, reference: Grade, compared: Grade) -> u64 {
        self.counts[reference.index()][compared.index()]
    }

    pub fn record(&mut self, reference: Grade, compared: Grade) {
        self.counts[reference.index()][compared.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// `sum counts[r][c] * |r - c|`
    pub fn weighted_error(&self) -> u64 {
        let mut s = 0;
        for (r, row) in self.counts.iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                s += n * r.abs_diff(c) as u64;
            }
        }
        s
    }

    pub fn row_totals(&self) -> [u64; 4] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn col_totals(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for row in &self.counts {
            for (o, &n) in out.iter_mut().zip(row) {
                *o += n;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0; 4]; 4];
        for (r, row) in self.counts.iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                t[c][r] = n;
            }
        }
        Self::new(t)
    }

    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.total()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("reference,pred_0,pred_1,pred_2,pred_3\n");
        for (r, row) in self.counts.iter().enumerate() {
            s.push_str(&format!("{r},{},{},{},{}\n", row[0], row[1], row[2], row[3]));
        }
        s
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ref\\cmp {:>6} {:>6} {:>6} {:>6}", 0, 1, 2, 3)?;
        for (r, row) in self.counts.iter().enumerate() {
            writeln!(f, "{r:>7} {:>6} {:>6} {:>6} {:>6}", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }
}

pub fn confusion(reference: &[Grade], compared: &[Grade]) -> Result<ConfusionMatrix, MetricsError> {
    if reference.len() != compared.len() {
        return Err(MetricsError::LengthMismatch { reference: reference.len(), compared: compared.len() });
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&r, &c) in reference.iter().zip(compared) {
        cm.record(r, c);
    }
    Ok(cm)
}

pub fn accuracy_exact(cm: &ConfusionMatrix) -> Result<Ratio<u64>, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::Empty),
        n => Ok(Ratio::new(cm.trace(), n)),
    }
}

pub fn mae_exact(cm: &ConfusionMatrix) -> Result<Ratio<u64>, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::Empty),
        n => Ok(Ratio::new(cm.weighted_error(), n)),
    }
}

/// Fraction of identical grades.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    Ok(ratio_to_f64(accuracy_exact(cm)?))
}

/// Mean absolute grade difference.
pub fn mae(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    Ok(ratio_to_f64(mae_exact(cm)?))
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// Same rater, different instances.
    Intra,
    /// Different raters.
    Inter,
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairKind::Intra => "intra",
            PairKind::Inter => "inter",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAgreement {
    pub ref_rater: String,
    pub ref_inst: u8,
    pub cmp_rater: String,
    pub cmp_inst: u8,
    pub kind: PairKind,
    pub matrix: ConfusionMatrix,
    pub agreement: f64,
    pub mae: f64,
}

impl PairAgreement {
    pub fn n(&self) -> u64 {
        self.matrix.total()
    }

    pub fn same_instance(&self) -> bool {
        self.ref_inst == self.cmp_inst
    }
}

/// Mean agreement and MAE over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanAgreement {
    pub agreement: f64,
    pub mae: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub pairs: Vec<PairAgreement>,
    pub intra: Option<MeanAgreement>,
    /// Inter-rater pairs across all instance combinations.
    pub inter_all: Option<MeanAgreement>,
    /// Inter-rater pairs comparing the same instance number only.
    pub inter_same_instance: Option<MeanAgreement>,
}

fn mean_of<'a>(pairs: impl Iterator<Item = &'a PairAgreement>) -> Option<MeanAgreement> {
    let (mut a, mut m, mut n) = (0.0, 0.0, 0usize);
    for p in pairs {
        a += p.agreement;
        m += p.mae;
        n += 1;
    }
    (n > 0).then(|| MeanAgreement { agreement: a / n as f64, mae: m / n as f64, pairs: n })
}

/// Every pair of `(rater, instance)` assessment sets, compared over the files
/// both graded; files graded NC on either side are dropped from that pair.
pub fn agreement_report(records: &[AssessmentRecord]) -> Result<AgreementReport, MetricsError> {
    let mut sets: BTreeMap<(String, u8), HashMap<&str, Option<Grade>>> = BTreeMap::new();
    for r in records {
        sets.entry((r.rater_id.clone(), r.instance)).or_default().insert(r.file_id.as_str(), r.g());
    }
    if sets.len() < 2 {
        return Err(MetricsError::TooFewSets(sets.len()));
    }
    let keys: Vec<&(String, u8)> = sets.keys().collect();
    let mut pairs = Vec::new();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let (sa, sb) = (&sets[*a], &sets[*b]);
            let mut files: Vec<&&str> = sa.keys().filter(|f| sb.contains_key(**f)).collect();
            files.sort();
            let mut cm = ConfusionMatrix::default();
            for f in files {
                if let (Some(ga), Some(gb)) = (sa[*f], sb[*f]) {
                    cm.record(ga, gb);
                }
            }
            if cm.total() == 0 {
                continue;
            }
            pairs.push(PairAgreement {
                ref_rater: a.0.clone(),
                ref_inst: a.1,
                cmp_rater: b.0.clone(),
                cmp_inst: b.1,
                kind: if a.0 == b.0 { PairKind::Intra } else { PairKind::Inter },
                agreement: accuracy(&cm)?,
                mae: mae(&cm)?,
                matrix: cm,
            });
        }
    }
    if pairs.is_empty() {
        return Err(MetricsError::TooFewSets(1));
    }
    Ok(AgreementReport {
        intra: mean_of(pairs.iter().filter(|p| p.kind == PairKind::Intra)),
        inter_all: mean_of(pairs.iter().filter(|p| p.kind == PairKind::Inter)),
        inter_same_instance: mean_of(pairs.iter().filter(|p| p.kind == PairKind::Inter && p.same_instance())),
        pairs,
    })
}

pub const AGREEMENT_HEADER: [&str; 8] =
    ["ref_rater", "ref_inst", "cmp_rater", "cmp_inst", "kind", "agreement", "mae", "n"];

impl AgreementReport {
    /// Pair rows followed by summary rows whose kind is `intra_mean`,
    /// `inter_mean` or `inter_same_instance_mean` and whose rater fields are `*`.
    pub fn to_csv(&self) -> String {
        let mut s = AGREEMENT_HEADER.join(",");
        s.push('\n');
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{}\n",
                p.ref_rater,
                p.ref_inst,
                p.cmp_rater,
                p.cmp_inst,
                p.kind,
                p.agreement,
                p.mae,
                p.n()
            ));
        }
        for (name, m) in [
            ("intra_mean", self.intra),
            ("inter_mean", self.inter_all),
            ("inter_same_instance_mean", self.inter_same_instance),
        ] {
            if let Some(m) = m {
                s.push_str(&format!("*,*,*,*,{name},{:.6},{:.6},{}\n", m.agreement, m.mae, m.pairs));
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))
    }
}
