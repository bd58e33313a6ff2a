use std::fs;
use std::path::Path;

use super::{AudioClip, AudioError};

/// Full-scale magnitude of a 16-bit sample.
pub const PCM_SCALE: f64 = 32768.0;

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    channels: u16,
    rate: u32,
}

/// Reads a 16-bit PCM RIFF/WAVE file. Multichannel audio is averaged to mono.
/// The clip's `source_id` is the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Read { path: path.to_path_buf(), source })?;
    let malformed = |reason: &str| AudioError::Malformed { path: path.to_path_buf(), reason: reason.to_string() };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(malformed("missing RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed("RIFF form type is not WAVE"));
    }

    let mut format = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_le(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        // Truncated final chunks are tolerated for data, which some writers
        // leave with a stale size.
        let body_end = (body_start + size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_format(path, body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }

    let format = format.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;

    let frame_bytes = 2 * format.channels as usize;
    let frames = data.len() / frame_bytes;
    let channels = format.channels as usize;
    let samples = (0..frames)
        .map(|f| {
            let frame = &data[f * frame_bytes..(f + 1) * frame_bytes];
            let sum: f64 = frame.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f64).sum();
            sum / (channels as f64 * PCM_SCALE)
        })
        .collect();

    let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    AudioClip::new(samples, format.rate, source_id)
}

fn parse_format(path: &Path, body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed {
            path: path.to_path_buf(),
            reason: format!("fmt chunk is {} bytes, need 16", body.len()),
        });
    }
    let mut tag = u16_le(&body[0..2]);
    if tag == FORMAT_EXTENSIBLE && body.len() >= 26 {
        // First two bytes of the sub-format GUID carry the real format tag.
        tag = u16_le(&body[24..26]);
    }
    if tag != FORMAT_PCM {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            field: "format tag",
            value: tag as u32,
            expected: "1 (PCM)",
        });
    }
    let channels = u16_le(&body[2..4]);
    if channels == 0 {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            field: "channel count",
            value: 0,
            expected: ">= 1",
        });
    }
    let rate = u32_le(&body[4..8]);
    let bits = u16_le(&body[14..16]);
    if bits != 16 {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            field: "bits per sample",
            value: bits as u32,
            expected: "16",
        });
    }
    Ok(Format { channels, rate })
}

/// Writes a mono 16-bit PCM file. Samples are clamped to `[-1, 1 - 1/32768]`
/// and rounded to the nearest integer step.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.rate().to_le_bytes());
    out.extend_from_slice(&(clip.rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let max = 1.0 - 1.0 / PCM_SCALE;
    for &s in clip.samples() {
        let q = (s.clamp(-1.0, max) * PCM_SCALE).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    fs::write(path, out).map_err(|source| AudioError::Write { path: path.to_path_buf(), source })
}

fn u16_le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}
