//! Adam optimisation, the epoch loop, cross-validation and evaluation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{fit_stats, standardize, Cepstrogram, FeatureError, FeatureStats};
use crate::grade::Grade;
use crate::metrics::{accuracy, confusion, mae, ConfusionMatrix, MetricsError};
use crate::net::{predict, to_input, GrbasNet, NetError};
use crate::nn::Tensor;
use crate::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("leakage: source file {file_id} appears in both {a} and {b}")]
    Leakage { file_id: String, a: String, b: String },
    #[error("parameter/gradient shape mismatch at tensor {0}")]
    ShapeMismatch(usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::F32),
            64 => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 1e-3, batch_size: 32, lambda: 0.001, seed: 0, precision: Precision::F32 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config(format!("lambda {} must be non-negative", self.lambda)));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_params(params: &[&Tensor<T>]) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::ShapeMismatch(params.len().min(grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::ShapeMismatch(i));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPSILON));
    let c1 = T::one() - b1.powi(state.step as i32);
    let c2 = T::one() - b2.powi(state.step as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (T::one() - b1) * gv;
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// A network input with its label and provenance.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub name: String,
    pub source_id: String,
    pub grade: Grade,
    pub input: Tensor<T>,
}

/// A raw (unstandardised) labelled cepstrogram.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub name: String,
    pub source_id: String,
    pub grade: Grade,
    pub features: Cepstrogram<T>,
}

/// Standardises samples into network examples.
pub fn prepare<T: Scalar>(samples: &[Sample<T>], stats: &FeatureStats) -> Vec<Example<T>> {
    samples
        .iter()
        .map(|s| Example {
            name: s.name.clone(),
            source_id: s.source_id.clone(),
            grade: s.grade,
            input: to_input(&standardize(&s.features, stats)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean over batches of mean cross-entropy plus the L2 penalty.
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Name and length of each tensor snapshotted every epoch.
    pub snapshot_tensors: Vec<(String, usize)>,
    /// One flattened snapshot per epoch.
    pub snapshots: Vec<Vec<f64>>,
    /// Epoch with the best validation accuracy (then lowest MAE, then earliest).
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,loss,train_acc,val_acc,val_mae";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for e in &self.epochs {
            writeln!(s, "{},{:.8},{:.6},{},{}", e.epoch, e.loss, e.train_acc, opt(e.val_acc), opt(e.val_mae)).unwrap();
        }
        s
    }

    /// Wide CSV: `epoch` then one column per snapshotted scalar (`<tensor>.<index>`).
    pub fn weights_csv(&self) -> String {
        let mut s = String::from("epoch");
        for (name, len) in &self.snapshot_tensors {
            for i in 0..*len {
                write!(s, ",{name}.{i}").unwrap();
            }
        }
        s.push('\n');
        for (e, snap) in self.snapshots.iter().enumerate() {
            write!(s, "{e}").unwrap();
            for v in snap {
                write!(s, ",{v:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }
}

/// Tensors snapshotted each epoch: the path-1 convolution kernels.
pub fn default_snapshot_names() -> Vec<String> {
    (0..crate::net::SCALES).map(|i| format!("path1.conv.{i}.kernel")).collect()
}

fn snapshot<T: Scalar>(net: &GrbasNet<T>, names: &[String]) -> Vec<f64> {
    net.named_params()
        .into_iter()
        .filter(|(n, _)| names.contains(n))
        .flat_map(|(_, t)| t.data().iter().map(|v| v.as_f64()).collect::<Vec<_>>())
        .collect()
}

/// Result of [`train`]: the last-epoch network plus the best-validation copy.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub net: GrbasNet<T>,
    pub history: TrainHistory,
    pub best: Option<GrbasNet<T>>,
}

/// Mini-batch Adam on mean cross-entropy plus the L2 penalty, reshuffling
/// each epoch with the config seed. Per-example gradients may be computed in
/// parallel; they are summed in batch order so results do not depend on
/// thread scheduling. Epoch 0 of the snapshots is the initial network.
///
/// `observer` sees every finished epoch and the current network; returning
/// `Break` ends the run after that epoch.
pub fn train<T: Scalar>(
    net: GrbasNet<T>,
    train_set: &[Example<T>],
    val_set: &[Example<T>],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochStats, &GrbasNet<T>) -> ControlFlow<()>,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    let mut net = net;
    let snapshot_names = default_snapshot_names();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        snapshot_tensors: net
            .named_params()
            .into_iter()
            .filter(|(n, _)| snapshot_names.contains(n))
            .map(|(n, t)| (n, t.len()))
            .collect(),
        snapshots: vec![snapshot(&net, &snapshot_names)],
        best_epoch: None,
    };
    let mut best: Option<(f64, f64, GrbasNet<T>)> = None;
    let mut adam = AdamState::for_params(&net.named_params().iter().map(|(_, t)| *t).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lambda = T::of(cfg.lambda);
    let lr = T::of(cfg.learning_rate);
    let targets: Vec<[T; 4]> = train_set.iter().map(|e| e.grade.one_hot()).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| net.example_gradients(&train_set[i].input, &targets[i]))
                .collect::<Result<_, _>>()?;
            let mut grads = net.zeros_like();
            let mut data_loss = T::zero();
            for (&i, (loss, out, g)) in batch.iter().zip(&results) {
                data_loss += *loss;
                if predict(out) == train_set[i].grade {
                    correct += 1;
                }
                for (acc, gi) in grads.params_mut().into_iter().zip(g.named_params()) {
                    acc.add_assign(gi.1);
                }
            }
            let inv = T::one() / T::of(batch.len() as f64);
            for p in grads.params_mut() {
                p.scale(inv);
            }
            let penalty = net.add_l2(&mut grads, lambda);
            let batch_loss = (data_loss * inv + penalty).as_f64();
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            loss_sum += batch_loss;
            batches += 1;
            let grad_refs: Vec<&Tensor<T>> = grads.named_params().into_iter().map(|(_, t)| t).collect();
            adam_step(&mut net.params_mut(), &grad_refs, &mut adam, lr)?;
        }

        let (val_acc, val_mae) = if val_set.is_empty() {
            (None, None)
        } else {
            let ev = evaluate(&net, val_set)?;
            (Some(ev.accuracy), Some(ev.mae))
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / batches as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
            val_mae,
        };
        if let (Some(a), Some(m)) = (val_acc, val_mae) {
            let better = best.as_ref().is_none_or(|(ba, bm, _)| a > *ba || (a == *ba && m < *bm));
            if better {
                best = Some((a, m, net.clone()));
                history.best_epoch = Some(epoch);
            }
        }
        history.epochs.push(stats);
        history.snapshots.push(snapshot(&net, &snapshot_names));
        if observer(&stats, &net).is_break() {
            break;
        }
    }
    Ok(TrainOutcome { net, history, best: best.map(|(_, _, n)| n) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub mae: f64,
    pub predictions: Vec<Grade>,
}

/// Confusion matrix (rows reference, columns predicted), accuracy and MAE.
pub fn evaluate<T: Scalar>(net: &GrbasNet<T>, set: &[Example<T>]) -> Result<Evaluation, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let predictions: Vec<Grade> =
        set.par_iter().map(|e| net.infer(&e.input).map(|a| predict(&a))).collect::<Result<_, _>>()?;
    let reference: Vec<Grade> = set.iter().map(|e| e.grade).collect();
    let matrix = confusion(&reference, &predictions)?;
    Ok(Evaluation { accuracy: accuracy(&matrix)?, mae: mae(&matrix)?, matrix, predictions })
}

/// Fails if any source file contributes to both sets.
pub fn check_disjoint<T>(a: &[Sample<T>], a_name: &str, b: &[Sample<T>], b_name: &str) -> Result<(), TrainError> {
    let sources: HashSet<&str> = a.iter().map(|s| s.source_id.as_str()).collect();
    match b.iter().find(|s| sources.contains(s.source_id.as_str())) {
        Some(s) => {
            Err(TrainError::Leakage { file_id: s.source_id.clone(), a: a_name.to_string(), b: b_name.to_string() })
        }
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult<T> {
    /// Table used for validation.
    pub table: usize,
    pub outcome: TrainOutcome<T>,
    pub stats: FeatureStats,
    pub validation: Evaluation,
    pub test: Option<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct CvReport<T> {
    pub folds: Vec<FoldResult<T>>,
    pub mean_val_accuracy: f64,
    pub mean_val_mae: f64,
    pub mean_test_accuracy: Option<f64>,
    pub mean_test_mae: Option<f64>,
}

/// One training run per cross-validation table: validate on it, train on the
/// other CV tables, then score the held-out test table. Standardisation is
/// fitted on each run's training data only. Run `i` uses seed `cfg.seed + i`.
pub fn cross_validate<T: Scalar>(
    tables: &[Vec<Sample<T>>],
    test_table: Option<usize>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, &EpochStats),
) -> Result<CvReport<T>, TrainError> {
    let cv: Vec<usize> = (0..tables.len()).filter(|&i| Some(i) != test_table).collect();
    if cv.len() < 2 {
        return Err(TrainError::Config(format!("need at least 2 CV tables, got {}", cv.len())));
    }
    for (x, &i) in cv.iter().enumerate() {
        for &j in &cv[x + 1..] {
            check_disjoint(&tables[i], &format!("table {i}"), &tables[j], &format!("table {j}"))?;
        }
        if let Some(t) = test_table {
            check_disjoint(&tables[i], &format!("table {i}"), &tables[t], &format!("test table {t}"))?;
        }
    }

    let mut folds = Vec::with_capacity(cv.len());
    for (run, &v) in cv.iter().enumerate() {
        let train_samples: Vec<Sample<T>> =
            cv.iter().filter(|&&i| i != v).flat_map(|&i| tables[i].iter().cloned()).collect();
        check_disjoint(&train_samples, "training", &tables[v], "validation")?;
        let stats = fit_stats(train_samples.iter().map(|s| &s.features))?;
        let train_set = prepare(&train_samples, &stats);
        let val_set = prepare(&tables[v], &stats);
        let run_cfg = TrainConfig { seed: cfg.seed.wrapping_add(run as u64), ..cfg.clone() };
        let net = GrbasNet::init(run_cfg.seed);
        let outcome = train(net, &train_set, &val_set, &run_cfg, |e, _| {
            progress(v, e);
            ControlFlow::Continue(())
        })?;
        let validation = evaluate(&outcome.net, &val_set)?;
        let test = match test_table {
            Some(t) if !tables[t].is_empty() => Some(evaluate(&outcome.net, &prepare(&tables[t], &stats))?),
            _ => None,
        };
        folds.push(FoldResult { table: v, outcome, stats, validation, test });
    }
    let n = folds.len() as f64;
    let mean = |f: &dyn Fn(&FoldResult<T>) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let has_test = folds.iter().all(|f| f.test.is_some());
    Ok(CvReport {
        mean_val_accuracy: mean(&|f| f.validation.accuracy),
        mean_val_mae: mean(&|f| f.validation.mae),
        mean_test_accuracy: has_test.then(|| mean(&|f| f.test.as_ref().unwrap().accuracy)),
        mean_test_mae: has_test.then(|| mean(&|f| f.test.as_ref().unwrap().mae)),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensors() -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap(), Tensor::new(vec![3], vec![0.1, -0.2, 0.0]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut p, _) = tensors();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::for_params(&[&p]);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[&g], &mut st, 0.01).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        let (mut p, g) = tensors();
        let before = p.clone();
        let mut st = AdamState::for_params(&[&p]);
        adam_step(&mut [&mut p], &[&g], &mut st, 0.01).unwrap();
        for ((a, b), gv) in p.data().iter().zip(before.data()).zip(g.data()) {
            let expected = if *gv == 0.0 { 0.0 } else { -0.01 * gv.signum() };
            assert!((a - b - expected).abs() < 1e-9, "{a} {b} {gv}");
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = Tensor::<f64>::zeros(&[1]);
        let g = Tensor::filled(&[1], 3.0);
        let mut st = AdamState::for_params(&[&p]);
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut [&mut p], &[&g], &mut st, 1e-3).unwrap();
            let step = prev - p.data()[0];
            prev = p.data()[0];
            assert!((step - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, _) = tensors();
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::for_params(&[&p]);
        assert!(matches!(adam_step(&mut [&mut p], &[&g], &mut st, 0.01), Err(TrainError::ShapeMismatch(0))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_epochs_returns_the_input_network() {
        let net = GrbasNet::<f32>::init(1);
        let ex = Example {
            name: "a".into(),
            source_id: "a".into(),
            grade: Grade::new(0).unwrap(),
            input: Tensor::zeros(&[420, 117, 1]),
        };
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let out = train(net.clone(), &[ex], &[], &cfg, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(out.net, net);
        assert!(out.history.epochs.is_empty());
    }

    #[test]
    fn empty_sets_are_rejected() {
        let net = GrbasNet::<f32>::init(1);
        assert!(matches!(
            train(net.clone(), &[], &[], &TrainConfig::default(), |_, _| { ControlFlow::Continue(()) }),
            Err(TrainError::EmptySet(_))
        ));
        assert!(matches!(evaluate(&net, &[]), Err(TrainError::EmptySet(_))));
    }
}
