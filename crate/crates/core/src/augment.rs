//! Three-stage augmentation: pitch variants by resample-and-relabel, three
//! one-second crops, and time reversal. A source file yields 18 clips, or
//! 12 when its pitch-up variant would be shorter than one second.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{resample, round_half_up, AudioClip, AudioError};
use crate::features::FEATURE_RATE;

/// Rate that shortens a 25 kSa/s clip by 0.8 once relabelled (frequencies x1.25).
pub const PITCH_UP_RATE: u32 = 20_000;
/// Rate that lengthens a 25 kSa/s clip by 1.25 once relabelled (frequencies x0.8).
pub const PITCH_DOWN_RATE: u32 = 31_250;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("augmentation expects {expected} Sa/s input, got {got}")]
    WrongRate { expected: u32, got: u32 },
    #[error("clip {source_id} is {seconds:.3} s long; at least 1 s is required")]
    TooShort { source_id: String, seconds: f64 },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("augmentation index: {0}")]
    Index(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PitchVariant {
    Down,
    None,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CropPosition {
    L,
    C,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentTags {
    pub pitch: PitchVariant,
    pub crop: CropPosition,
    pub flipped: bool,
}

impl fmt::Display for PitchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PitchVariant::Down => "down",
            PitchVariant::None => "none",
            PitchVariant::Up => "up",
        })
    }
}

impl FromStr for PitchVariant {
    type Err = AugmentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "down" => Ok(PitchVariant::Down),
            "none" => Ok(PitchVariant::None),
            "up" => Ok(PitchVariant::Up),
            other => Err(AugmentError::Index(format!("unknown pitch variant {other:?}"))),
        }
    }
}

impl fmt::Display for CropPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CropPosition::L => "L",
            CropPosition::C => "C",
            CropPosition::R => "R",
        })
    }
}

impl FromStr for CropPosition {
    type Err = AugmentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(CropPosition::L),
            "C" => Ok(CropPosition::C),
            "R" => Ok(CropPosition::R),
            other => Err(AugmentError::Index(format!("unknown crop position {other:?}"))),
        }
    }
}

/// A one-second, 25 kSa/s clip derived from `source_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClip {
    pub clip: AudioClip,
    pub source_id: String,
    pub tags: AugmentTags,
}

impl AugmentedClip {
    /// `<source_id>__<pitch>_<crop>_<flip>`, without extension.
    pub fn name(&self) -> String {
        clip_name(&self.source_id, &self.tags)
    }
}

pub fn clip_name(source_id: &str, tags: &AugmentTags) -> String {
    format!("{source_id}__{}_{}_{}", tags.pitch, tags.crop, tags.flipped)
}

fn require_feature_rate(clip: &AudioClip) -> Result<(), AugmentError> {
    if clip.rate() != FEATURE_RATE {
        return Err(AugmentError::WrongRate { expected: FEATURE_RATE, got: clip.rate() });
    }
    Ok(())
}

/// Original, pitch-up and pitch-down versions of a 25 kSa/s clip, all
/// labelled 25 kSa/s. The pitch-up version is dropped when shorter than 1 s.
pub fn pitch_variants(clip: &AudioClip) -> Result<Vec<(PitchVariant, AudioClip)>, AugmentError> {
    require_feature_rate(clip)?;
    let mut out = vec![(PitchVariant::None, clip.clone())];
    let up = resample(clip, PITCH_UP_RATE)?.relabel(FEATURE_RATE)?;
    if up.len() >= FEATURE_RATE as usize {
        out.push((PitchVariant::Up, up));
    }
    let down = resample(clip, PITCH_DOWN_RATE)?.relabel(FEATURE_RATE)?;
    out.push((PitchVariant::Down, down));
    Ok(out)
}

/// Sample windows `[start, end)` of the L, C and R crops for a clip of
/// `len` samples at `rate`.
pub fn crop_windows(len: usize, rate: u32) -> [(usize, usize); 3] {
    let second = rate as usize;
    let (s0, slen) =
        if len > 2 * second { (round_half_up((len - 2 * second) as f64 / 2.0) as usize, 2 * second) } else { (0, len) };
    let centre = s0 + round_half_up((slen - second) as f64 / 2.0) as usize;
    [(s0, s0 + second), (centre, centre + second), (s0 + slen - second, s0 + slen)]
}

/// Left, centre and right one-second crops of the middle (at most) two
/// seconds of the clip.
pub fn crop_variants(clip: &AudioClip) -> Result<[AudioClip; 3], AugmentError> {
    if clip.len() < clip.rate() as usize {
        return Err(AugmentError::TooShort {
            source_id: clip.source_id().to_string(),
            seconds: clip.duration_seconds(),
        });
    }
    let w = crop_windows(clip.len(), clip.rate());
    let crop = |(a, b): (usize, usize)| clip.crop_samples(a as i64, b as i64);
    Ok([crop(w[0])?, crop(w[1])?, crop(w[2])?])
}

pub fn augment_file(clip: &AudioClip) -> Result<Vec<AugmentedClip>, AugmentError> {
    require_feature_rate(clip)?;
    if clip.len() < FEATURE_RATE as usize {
        return Err(AugmentError::TooShort {
            source_id: clip.source_id().to_string(),
            seconds: clip.duration_seconds(),
        });
    }
    let source_id = clip.source_id().to_string();
    let mut out = Vec::with_capacity(18);
    for (pitch, variant) in pitch_variants(clip)? {
        let crops = crop_variants(&variant)?;
        for (crop, cropped) in [CropPosition::L, CropPosition::C, CropPosition::R].into_iter().zip(crops) {
            let flipped = cropped.reverse();
            for (flag, c) in [(false, cropped), (true, flipped)] {
                out.push(AugmentedClip {
                    clip: c.with_source_id(source_id.clone()),
                    source_id: source_id.clone(),
                    tags: AugmentTags { pitch, crop, flipped: flag },
                });
            }
        }
    }
    Ok(out)
}

/// One row of the augmentation index CSV
/// (`clip_name,source_file_id,pitch,crop,flip`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRow {
    pub clip_name: String,
    pub source_file_id: String,
    pub pitch: PitchVariant,
    pub crop: CropPosition,
    pub flip: bool,
}

impl IndexRow {
    pub fn for_clip(clip: &AugmentedClip) -> Self {
        Self {
            clip_name: clip.name(),
            source_file_id: clip.source_id.clone(),
            pitch: clip.tags.pitch,
            crop: clip.tags.crop,
            flip: clip.tags.flipped,
        }
    }
}

pub fn write_index(path: impl AsRef<Path>, rows: &[IndexRow]) -> Result<(), AugmentError> {
    let path = path.as_ref();
    let err = |e: csv::Error| AugmentError::Index(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| AugmentError::Index(format!("{}: {e}", path.display())))
}

pub fn read_index(path: impl AsRef<Path>) -> Result<Vec<IndexRow>, AugmentError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| AugmentError::Index(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| AugmentError::Index(format!("{} line {}: {e}", path.display(), i + 2))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::power_spectrogram;
    use rustfft::{num_complex::Complex, FftPlanner};
    use std::collections::HashSet;
    use std::f64::consts::PI;

    fn tone(freq: f64, seconds: f64) -> AudioClip {
        let n = (seconds * FEATURE_RATE as f64).round() as usize;
        let samples = (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / FEATURE_RATE as f64).sin()).collect();
        AudioClip::new(samples, FEATURE_RATE, "src").unwrap()
    }

    fn magnitude_spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    }

    fn peak_frequency(clip: &AudioClip) -> f64 {
        let mag = magnitude_spectrum(clip.samples());
        let bin = (0..mag.len() / 2).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
        bin as f64 * clip.rate() as f64 / clip.len() as f64
    }

    #[test]
    fn two_second_input_gives_three_variants() {
        let v = pitch_variants(&tone(200.0, 2.0)).unwrap();
        let durations: Vec<_> = v.iter().map(|(p, c)| (*p, c.duration_seconds())).collect();
        assert_eq!(durations, vec![(PitchVariant::None, 2.0), (PitchVariant::Up, 1.6), (PitchVariant::Down, 2.5)]);
        assert!(v.iter().all(|(_, c)| c.rate() == FEATURE_RATE));
    }

    #[test]
    fn short_pitch_up_variant_is_discarded() {
        let v = pitch_variants(&tone(200.0, 1.1)).unwrap();
        let kinds: Vec<_> = v.iter().map(|(p, _)| *p).collect();
        assert_eq!(kinds, vec![PitchVariant::None, PitchVariant::Down]);
    }

    #[test]
    fn pitch_up_raises_frequency_by_a_quarter() {
        let v = pitch_variants(&tone(100.0, 2.0)).unwrap();
        let up = &v.iter().find(|(p, _)| *p == PitchVariant::Up).unwrap().1;
        assert!((peak_frequency(up) - 125.0).abs() <= 0.5);
        let down = &v.iter().find(|(p, _)| *p == PitchVariant::Down).unwrap().1;
        assert!((peak_frequency(down) - 80.0).abs() <= 0.5);
    }

    #[test]
    fn pitch_variants_require_feature_rate() {
        let clip = AudioClip::new(vec![0.0; 44_100], 44_100, "x").unwrap();
        assert!(matches!(pitch_variants(&clip), Err(AugmentError::WrongRate { .. })));
    }

    #[test]
    fn crop_windows_three_seconds() {
        let r = FEATURE_RATE as usize;
        let w = crop_windows(3 * r, FEATURE_RATE);
        assert_eq!(w, [(r / 2, 3 * r / 2), (r, 2 * r), (3 * r / 2, 5 * r / 2)]);
    }

    #[test]
    fn crop_windows_one_and_a_half_seconds() {
        let r = FEATURE_RATE as usize;
        let w = crop_windows(3 * r / 2, FEATURE_RATE);
        assert_eq!(w, [(0, r), (r / 4, r / 4 + r), (r / 2, 3 * r / 2)]);
    }

    #[test]
    fn one_second_crops_are_all_the_whole_clip() {
        let clip = tone(150.0, 1.0);
        let [l, c, r] = crop_variants(&clip).unwrap();
        assert_eq!(l, clip);
        assert_eq!(c, clip);
        assert_eq!(r, clip);
    }

    #[test]
    fn crops_need_one_second() {
        assert!(matches!(crop_variants(&tone(150.0, 0.9)), Err(AugmentError::TooShort { .. })));
    }

    #[test]
    fn two_seconds_yield_eighteen_unique_clips() {
        let out = augment_file(&tone(180.0, 2.0)).unwrap();
        assert_eq!(out.len(), 18);
        let tags: HashSet<_> = out.iter().map(|a| a.tags).collect();
        assert_eq!(tags.len(), 18);
        let names: HashSet<_> = out.iter().map(|a| a.name()).collect();
        assert_eq!(names.len(), 18);
        assert!(out.iter().all(|a| a.clip.len() == 25_000 && a.clip.rate() == 25_000 && a.source_id == "src"));
    }

    #[test]
    fn short_files_yield_twelve() {
        assert_eq!(augment_file(&tone(180.0, 1.1)).unwrap().len(), 12);
    }

    #[test]
    fn flipped_clips_are_reversed_siblings() {
        let out = augment_file(&tone(180.0, 2.3)).unwrap();
        for a in out.iter().filter(|a| a.tags.flipped) {
            let sibling = out.iter().find(|b| b.tags == AugmentTags { flipped: false, ..a.tags }).unwrap();
            assert_eq!(a.clip, sibling.clip.reverse());
        }
    }

    #[test]
    fn flipping_keeps_the_magnitude_spectrum() {
        let out = augment_file(&tone(210.0, 1.4)).unwrap();
        let a = &out[0].clip;
        let b = &out[1].clip;
        assert!(out[1].tags.flipped);
        let (ma, mb) = (magnitude_spectrum(a.samples()), magnitude_spectrum(b.samples()));
        let peak = ma.iter().cloned().fold(0.0, f64::max);
        for (x, y) in ma.iter().zip(&mb) {
            assert!((x - y).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn flipped_spectrogram_is_time_mirrored_on_centred_grid() {
        // 117 frames on the centred grid span 24920 samples, leaving 40 on each side.
        let n = 25_000usize;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FEATURE_RATE as f64;
                (1.0 + 2.0 * t) * (2.0 * PI * (150.0 + 80.0 * t) * t).sin()
            })
            .collect();
        let clip = AudioClip::new(samples, FEATURE_RATE, "chirp").unwrap();
        let offset = (n - 24_920) / 2;
        let a = power_spectrogram(clip.samples(), offset);
        let b = power_spectrogram(clip.reverse().samples(), offset);
        assert_eq!(a.len(), 117);
        let peak = a.iter().flatten().cloned().fold(0.0, f64::max);
        for (j, col) in b.iter().enumerate() {
            for (x, y) in col.iter().zip(&a[a.len() - 1 - j]) {
                assert!((x - y).abs() <= 1e-9 * peak);
            }
        }
    }

    #[test]
    fn index_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.csv");
        let rows: Vec<_> = augment_file(&tone(180.0, 1.0)).unwrap().iter().map(IndexRow::for_clip).collect();
        write_index(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("clip_name,source_file_id,pitch,crop,flip\n"));
        assert!(text.contains("src__none_L_false,src,none,L,false"));
        assert_eq!(read_index(&path).unwrap(), rows);
    }
}
