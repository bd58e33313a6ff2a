//! Power-cepstrogram network input.
//!
//! A one-second clip at 25 kSa/s is cut into 117 Hann-windowed frames of
//! 1024 samples (hop 206, no padding). Each frame's power cepstrum is
//! `|IDFT(log(|DFT(frame)|^2 + 1e-10))|^2`; quefrency bins 20..440 of every
//! frame form the 420 x 117 matrix (rows = quefrency, columns = time).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::Scalar;

pub const FEATURE_RATE: u32 = 25_000;
pub const CLIP_SAMPLES: usize = 25_000;
pub const FRAME_LEN: usize = 1024;
pub const HOP: usize = 206;
pub const FRAMES: usize = (CLIP_SAMPLES - FRAME_LEN) / HOP + 1;
/// First quefrency bin kept; lower bins carry the vocal-tract envelope.
pub const QUEFRENCY_START: usize = 20;
pub const ROWS: usize = 420;
pub const COLS: usize = FRAMES;
pub const LOG_FLOOR: f64 = 1e-10;

const CEPS_MAGIC: &[u8; 4] = b"CEPS";
const CEPS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("expected {expected} samples, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("expected a {expected} Sa/s clip, got {got} Sa/s")]
    WrongRate { expected: u32, got: u32 },
    #[error("cepstrogram must be {ROWS} x {COLS}, got {rows} x {cols} ({len} values)")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("cannot fit feature statistics on an empty set")]
    EmptySet,
    #[error("training features have zero variance")]
    ZeroVariance,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: not a feature file: {reason}")]
    BadFile { path: PathBuf, reason: String },
}

/// 420 x 117 quefrency-by-time matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrogram<T> {
    values: Vec<T>,
}

impl<T: Scalar> Cepstrogram<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self, FeatureError> {
        if values.len() != ROWS * COLS {
            return Err(FeatureError::Shape { rows: ROWS, cols: COLS, len: values.len() });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (ROWS, COLS)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * COLS + col]
    }

    pub fn cast<U: Scalar>(&self) -> Cepstrogram<U> {
        Cepstrogram { values: self.values.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    /// Row index of the maximum in `col` (first occurrence).
    pub fn argmax_in_column(&self, col: usize) -> usize {
        (0..ROWS).fold(0, |best, r| if self.get(r, col) > self.get(best, col) { r } else { best })
    }
}

/// Reusable FFT plans and analysis window.
pub struct CepstrumAnalyzer {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Default for CepstrumAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl CepstrumAnalyzer {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(FRAME_LEN),
            inverse: planner.plan_fft_inverse(FRAME_LEN),
            window: hann(FRAME_LEN),
        }
    }

    /// Hann-windowed power spectrum `|DFT|^2` of one frame (all 1024 bins).
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), FRAME_LEN, "frame length");
        let mut buf: Vec<Complex<f64>> =
            frame.iter().zip(&self.window).map(|(s, w)| Complex::new(s * w, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `|IDFT(log(power spectrum + eps))|^2` with the 1/N inverse normalisation.
    pub fn power_cepstrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> =
            self.power_spectrum(frame).into_iter().map(|p| Complex::new((p + LOG_FLOOR).ln(), 0.0)).collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / FRAME_LEN as f64;
        buf.iter().map(|c| (c * scale).norm_sqr()).collect()
    }
}

/// Symmetric Hann window.
fn hann(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos()).collect()
}

fn check_clip(clip: &AudioClip) -> Result<(), FeatureError> {
    if clip.rate() != FEATURE_RATE {
        return Err(FeatureError::WrongRate { expected: FEATURE_RATE, got: clip.rate() });
    }
    if clip.len() != CLIP_SAMPLES {
        return Err(FeatureError::WrongLength { expected: CLIP_SAMPLES, got: clip.len() });
    }
    Ok(())
}

/// The 117 analysis frames of a one-second clip; frame `j` covers samples
/// `[206 j, 206 j + 1024)`.
pub fn frame_signal(clip: &AudioClip) -> Result<Vec<&[f64]>, FeatureError> {
    check_clip(clip)?;
    Ok(frames_from(clip.samples(), 0))
}

/// Frames of length 1024 at hop 206 starting at `offset`, as many as fit.
pub fn frames_from(samples: &[f64], offset: usize) -> Vec<&[f64]> {
    let mut frames = Vec::new();
    let mut start = offset;
    while start + FRAME_LEN <= samples.len() {
        frames.push(&samples[start..start + FRAME_LEN]);
        start += HOP;
    }
    frames
}

/// One-shot power cepstrum of a single 1024-sample frame.
pub fn power_cepstrum(frame: &[f64]) -> Vec<f64> {
    CepstrumAnalyzer::new().power_cepstrum(frame)
}

/// Frame-by-frame power spectra (time-major) on the hop-206 grid starting at `offset`.
pub fn power_spectrogram(samples: &[f64], offset: usize) -> Vec<Vec<f64>> {
    let analyzer = CepstrumAnalyzer::new();
    frames_from(samples, offset).into_iter().map(|f| analyzer.power_spectrum(f)).collect()
}

pub fn cepstrogram(clip: &AudioClip) -> Result<Cepstrogram<f64>, FeatureError> {
    cepstrogram_with(&CepstrumAnalyzer::new(), clip)
}

pub fn cepstrogram_with(analyzer: &CepstrumAnalyzer, clip: &AudioClip) -> Result<Cepstrogram<f64>, FeatureError> {
    let frames = frame_signal(clip)?;
    let mut values = vec![0.0; ROWS * COLS];
    for (col, frame) in frames.iter().enumerate() {
        let cep = analyzer.power_cepstrum(frame);
        for row in 0..ROWS {
            values[row * COLS + col] = cep[QUEFRENCY_START + row];
        }
    }
    Cepstrogram::from_values(values)
}

/// Global scalar mean and standard deviation of a training set's features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    pub fn new(mean: f64, std: f64) -> Result<Self, FeatureError> {
        if std <= 0.0 || !std.is_finite() || !mean.is_finite() {
            return Err(FeatureError::ZeroVariance);
        }
        Ok(Self { mean, std })
    }
}

pub fn fit_stats<'a, T: Scalar>(
    train_set: impl IntoIterator<Item = &'a Cepstrogram<T>>,
) -> Result<FeatureStats, FeatureError> {
    let set: Vec<&Cepstrogram<T>> = train_set.into_iter().collect();
    if set.is_empty() {
        return Err(FeatureError::EmptySet);
    }
    let count = (set.len() * ROWS * COLS) as f64;
    let values = || set.iter().flat_map(|c| c.values.iter()).map(|v| v.as_f64());
    let mean = values().sum::<f64>() / count;
    let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    FeatureStats::new(mean, var.sqrt())
}

pub fn standardize<T: Scalar>(c: &Cepstrogram<T>, stats: &FeatureStats) -> Cepstrogram<T> {
    Cepstrogram { values: c.values.iter().map(|v| T::of((v.as_f64() - stats.mean) / stats.std)).collect() }
}

/// Writes the binary feature file: `CEPS`, version, rows, cols (u32 LE),
/// then row-major f32 LE values.
pub fn write_ceps<T: Scalar>(path: impl AsRef<Path>, c: &Cepstrogram<T>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + 4 * ROWS * COLS);
    out.extend_from_slice(CEPS_MAGIC);
    out.extend_from_slice(&CEPS_VERSION.to_le_bytes());
    out.extend_from_slice(&(ROWS as u32).to_le_bytes());
    out.extend_from_slice(&(COLS as u32).to_le_bytes());
    for v in &c.values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })
}

pub fn read_ceps<T: Scalar>(path: impl AsRef<Path>) -> Result<Cepstrogram<T>, FeatureError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })?;
    let bad = |reason: String| FeatureError::BadFile { path: path.to_path_buf(), reason };
    if bytes.len() < 16 || &bytes[0..4] != CEPS_MAGIC {
        return Err(bad("missing CEPS magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    if word(4) != CEPS_VERSION {
        return Err(bad(format!("version {} (expected {CEPS_VERSION})", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if (rows, cols) != (ROWS, COLS) {
        return Err(FeatureError::Shape { rows, cols, len: rows * cols });
    }
    let payload = &bytes[16..];
    if payload.len() != 4 * rows * cols {
        return Err(bad(format!("payload is {} bytes, header implies {}", payload.len(), 4 * rows * cols)));
    }
    let values = payload.chunks_exact(4).map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)).collect();
    Cepstrogram::from_values(values)
}
