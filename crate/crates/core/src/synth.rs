//! Synthetic sustained vowels with controlled jitter, shimmer and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::audio::{AudioClip, AudioError};
use crate::features::FEATURE_RATE;
use crate::grade::Grade;

pub const HARMONICS: usize = 20;
pub const PEAK_LEVEL: f64 = 0.9;
/// Perturbations are standard normals truncated to this many deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;
pub const F0_RANGE: (f64, f64) = (60.0, 400.0);
pub const DATASET_F0_RANGE: (f64, f64) = (90.0, 250.0);
/// `(jitter %, shimmer %, HNR dB)` for grades 0 to 3.
pub const SEVERITY_TIERS: [(f64, f64, f64); 4] =
    [(0.3, 2.0, 25.0), (1.0, 6.0, 18.0), (2.5, 12.0, 10.0), (5.0, 20.0, 3.0)];

/// Lowest and highest fundamental searched by [`estimate_hnr`].
pub const HNR_PITCH_RANGE: (f64, f64) = (60.0, 400.0);
/// Analysis frame length in seconds for [`estimate_hnr`].
pub const HNR_FRAME_S: f64 = 0.04;
/// Mean correlation peak at or below which a clip counts as unvoiced.
pub const HNR_MIN_PEAK: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible voice spec: {0}")]
    Infeasible(String),
    #[error("clip too short for HNR analysis ({0} samples)")]
    TooShort(usize),
    #[error("no periodicity: mean correlation peak {0:.3} is at most 0.1")]
    Unvoiced(f64),
    #[error("{0}")]
    Audio(String),
}

impl From<AudioError> for SynthError {
    fn from(e: AudioError) -> Self {
        SynthError::Audio(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub f0: f64,
    /// Standard deviation of the cycle-to-cycle period factor, in percent.
    pub jitter: f64,
    /// Standard deviation of the cycle amplitude factor, in percent.
    pub shimmer: f64,
    /// Harmonics-to-noise ratio in dB; `None` adds no noise.
    pub hnr: Option<f64>,
    pub duration: f64,
    pub rate: u32,
}

impl SynthSpec {
    pub fn clean(f0: f64) -> Self {
        Self { f0, jitter: 0.0, shimmer: 0.0, hnr: None, duration: 1.0, rate: FEATURE_RATE }
    }

    pub fn for_grade(grade: Grade, f0: f64) -> Self {
        let (jitter, shimmer, hnr) = SEVERITY_TIERS[grade.index()];
        Self { f0, jitter, shimmer, hnr: Some(hnr), duration: 1.0, rate: FEATURE_RATE }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        if !(F0_RANGE.0..=F0_RANGE.1).contains(&self.f0) {
            return bad(format!("f0 {} Hz outside [60, 400]", self.f0));
        }
        // Truncated perturbations must keep periods and amplitudes positive.
        let limit = 100.0 / TRUNCATION_SIGMAS;
        for (name, v) in [("jitter", self.jitter), ("shimmer", self.shimmer)] {
            if !(v >= 0.0 && v < limit) {
                return bad(format!("{name} {v}% outside [0, {limit:.2})"));
            }
        }
        if !(self.duration >= 1.0 && self.duration.is_finite()) {
            return bad(format!("duration {} s below 1 s", self.duration));
        }
        if let Some(h) = self.hnr {
            if !h.is_finite() {
                return bad(format!("HNR {h} dB is not finite"));
            }
        }
        if (self.rate as f64) <= 2.0 * self.f0 {
            return bad(format!("rate {} cannot carry f0 {}", self.rate, self.f0));
        }
        Ok(())
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let g: f64 = rng.sample(StandardNormal);
        if g.abs() <= TRUNCATION_SIGMAS {
            return g;
        }
    }
}

/// Generates a voice cycle by cycle. Each cycle is a band-limited sawtooth
/// (`sum sin(2 pi k phase) / k`) whose length and amplitude are perturbed by
/// jitter and shimmer; white noise is then added at the requested HNR and the
/// result is peak-normalised.
pub fn synth_voice(spec: &SynthSpec, seed: u64) -> Result<AudioClip, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = spec.rate as f64;
    let n = (spec.duration * rate).round() as usize;
    let nyquist_harmonics = ((rate / 2.0) / spec.f0).ceil() as usize - 1;
    let harmonics = HARMONICS.min(nyquist_harmonics.max(1));

    let mut samples = Vec::with_capacity(n);
    let mut cycle_start = 0.0;
    while samples.len() < n {
        let period = (1.0 + spec.jitter / 100.0 * truncated_normal(&mut rng)) / spec.f0;
        let amplitude = 1.0 + spec.shimmer / 100.0 * truncated_normal(&mut rng);
        let cycle_end = cycle_start + period;
        while samples.len() < n {
            let t = samples.len() as f64 / rate;
            if t >= cycle_end {
                break;
            }
            let phase = std::f64::consts::TAU * (t - cycle_start) / period;
            let v: f64 = (1..=harmonics).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            samples.push(amplitude * v);
        }
        cycle_start = cycle_end;
    }

    if let Some(hnr) = spec.hnr {
        let power = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sigma = (power / 10f64.powf(hnr / 10.0)).sqrt();
        for v in samples.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK_LEVEL / peak;
        samples.iter_mut().for_each(|v| *v *= g);
    }
    Ok(AudioClip::new(samples, spec.rate, format!("synth_{seed}"))?)
}

/// Autocorrelation harmonicity in dB.
///
/// For each frame the normalised cross-correlation between the frame and its
/// lagged copy is maximised over lags covering 60 to 400 Hz, refined by a
/// parabola through the best lag and its neighbours. The peaks are averaged
/// over frames and converted with `10 log10(r / (1 - r))`.
pub fn estimate_hnr(clip: &AudioClip) -> Result<f64, SynthError> {
    let x = clip.samples();
    let rate = clip.rate() as f64;
    let min_lag = (rate / HNR_PITCH_RANGE.1).floor().max(2.0) as usize;
    let max_lag = (rate / HNR_PITCH_RANGE.0).ceil() as usize;
    let frame = (HNR_FRAME_S * rate).round() as usize;
    if x.len() < frame + max_lag + 1 {
        return Err(SynthError::TooShort(x.len()));
    }
    let hop = frame / 2;
    let mut peaks = Vec::new();
    let mut start = 0;
    while start + frame + max_lag < x.len() {
        let a = &x[start..start + frame];
        let ea: f64 = a.iter().map(|v| v * v).sum();
        if ea > 0.0 {
            let corr = |lag: usize| {
                let b = &x[start + lag..start + lag + frame];
                let eb: f64 = b.iter().map(|v| v * v).sum();
                let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                if eb > 0.0 {
                    ab / (ea * eb).sqrt()
                } else {
                    0.0
                }
            };
            let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(corr).collect();
            let (best, &rb) = r[1..r.len() - 1].iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).unwrap();
            let (r0, r2) = (r[best], r[best + 2]);
            let curvature = r0 - 2.0 * rb + r2;
            let refined = if curvature < 0.0 { rb - (r2 - r0).powi(2) / (8.0 * curvature) } else { rb };
            peaks.push(refined.clamp(rb, 1.0));
        }
        start += hop;
    }
    if peaks.is_empty() {
        return Err(SynthError::Unvoiced(0.0));
    }
    let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
    if mean <= HNR_MIN_PEAK {
        return Err(SynthError::Unvoiced(mean));
    }
    let mean = mean.min(1.0 - 1e-12);
    Ok(10.0 * (mean / (1.0 - mean)).log10())
}

/// A generated clip and the parameters behind it.
#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub clip: AudioClip,
    pub grade: Grade,
    pub spec: SynthSpec,
    pub seed: u64,
}

/// `n_per_class` one-second clips per severity tier at the feature rate.
pub fn make_synthetic_dataset(n_per_class: usize, seed: u64) -> Result<Vec<SyntheticClip>, SynthError> {
    make_synthetic_dataset_with(n_per_class, seed, 1.0)
}

/// As [`make_synthetic_dataset`] with a chosen clip duration.
pub fn make_synthetic_dataset_with(
    n_per_class: usize,
    seed: u64,
    duration: f64,
) -> Result<Vec<SyntheticClip>, SynthError> {
    if n_per_class == 0 {
        return Err(SynthError::Infeasible("need at least one clip per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(4 * n_per_class);
    for grade in Grade::ALL {
        for i in 0..n_per_class {
            let f0 = rng.random_range(DATASET_F0_RANGE.0..DATASET_F0_RANGE.1);
            let clip_seed: u64 = rng.random();
            let spec = SynthSpec { duration, ..SynthSpec::for_grade(grade, f0) };
            let clip = synth_voice(&spec, clip_seed)?.with_source_id(format!("synth_g{grade}_{i:03}"));
            out.push(SyntheticClip { clip, grade, spec, seed: clip_seed });
        }
    }
    Ok(out)
}
