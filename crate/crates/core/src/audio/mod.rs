//! Mono audio clips, 16-bit PCM WAV I/O, band-limited resampling, cropping
//! and time reversal.

mod resample;
mod wav;

use std::path::PathBuf;

use thiserror::Error;

pub use resample::{kaiser_sinc, resample, resampled_len, KAISER_BETA, ZERO_CROSSINGS};
pub use wav::{read_wav, write_wav, PCM_SCALE};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed WAV container: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: unsupported {field} = {value} (expected {expected})")]
    Unsupported { path: PathBuf, field: &'static str, value: u32, expected: &'static str },
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("audio clip has no samples")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("resampling {len} samples from {from} to {to} Sa/s yields {out} samples (need at least 2)")]
    TooShort { len: usize, from: u32, to: u32, out: usize },
    #[error("window [{start}, {end}) lies outside a clip of {len} samples")]
    OutOfBounds { start: i64, end: i64, len: usize },
}

/// Mono sample sequence with its nominal sample rate and the identity of
/// the file (or speaker) it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, rate: u32, source_id: impl Into<String>) -> Result<Self, AudioError> {
        if rate == 0 {
            return Err(AudioError::ZeroRate);
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self { samples, rate, source_id: source_id.into() })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    /// Same samples, different nominal rate. Playing the result back shifts
    /// every frequency by `rate / self.rate()` and scales duration inversely.
    pub fn relabel(&self, rate: u32) -> Result<Self, AudioError> {
        Self::new(self.samples.clone(), rate, self.source_id.clone())
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    /// Samples in reversed index order.
    pub fn reverse(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self { samples, rate: self.rate, source_id: self.source_id.clone() }
    }

    /// Sample window `[round(start_s * rate), round(start_s * rate) + round(dur_s * rate))`.
    pub fn crop(&self, start_s: f64, dur_s: f64) -> Result<Self, AudioError> {
        let rate = self.rate as f64;
        let start = round_half_up(start_s * rate);
        let end = start + round_half_up(dur_s * rate);
        self.crop_samples(start, end)
    }

    /// Crop by sample indices, `[start, end)`.
    pub fn crop_samples(&self, start: i64, end: i64) -> Result<Self, AudioError> {
        if start < 0 || end <= start || end > self.samples.len() as i64 {
            return Err(AudioError::OutOfBounds { start, end, len: self.samples.len() });
        }
        Ok(Self {
            samples: self.samples[start as usize..end as usize].to_vec(),
            rate: self.rate,
            source_id: self.source_id.clone(),
        })
    }
}

/// Rounds to the nearest integer, halves toward +infinity.
pub(crate) fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}
