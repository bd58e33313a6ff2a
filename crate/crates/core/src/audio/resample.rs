use std::collections::HashMap;
use std::f64::consts::PI;

use super::{round_half_up, AudioClip, AudioError};

/// Zero crossings of the interpolation sinc on each side of the centre tap.
pub const ZERO_CROSSINGS: usize = 64;
/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 12.0;

/// Phase tables larger than this are not cached; weights are computed per
/// output sample instead.
const MAX_CACHED_PHASES: u64 = 4096;

/// `round(len * to / from)`.
pub fn resampled_len(len: usize, from: u32, to: u32) -> usize {
    round_half_up(len as f64 * to as f64 / from as f64).max(0) as usize
}

/// Band-limited resampling by Kaiser-windowed sinc interpolation, cutoff at
/// `min(rate, target_rate) / 2`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    let from = clip.rate();
    if target_rate == from {
        return Ok(clip.clone());
    }
    let out_len = resampled_len(clip.len(), from, target_rate);
    if out_len < 2 {
        return Err(AudioError::TooShort { len: clip.len(), from, to: target_rate, out: out_len });
    }

    // Cutoff in cycles per input sample.
    let cutoff = 0.5 * (target_rate.min(from) as f64 / from as f64);
    let half_width = ZERO_CROSSINGS as f64 / (2.0 * cutoff);
    let reach = half_width.ceil() as i64 + 1;

    let divisor = gcd(from as u64, target_rate as u64);
    let phases = target_rate as u64 / divisor;
    let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();

    let x = clip.samples();
    let n_in = x.len() as i64;
    let to = target_rate as u64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        // Position of output sample n, in input samples: base + frac_num / to.
        let num = n * from as u64;
        let base = (num / to) as i64;
        let frac_num = num % to;
        let frac = frac_num as f64 / to as f64;

        let fresh;
        let weights: &[f64] = if phases <= MAX_CACHED_PHASES {
            cache.entry(frac_num).or_insert_with(|| phase_weights(frac, reach, cutoff, half_width))
        } else {
            fresh = phase_weights(frac, reach, cutoff, half_width);
            &fresh
        };

        let mut acc = 0.0;
        for (j, w) in (-reach..=reach).zip(weights) {
            let k = base + j;
            if (0..n_in).contains(&k) {
                acc += x[k as usize] * w;
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate, clip.source_id())
}

fn phase_weights(frac: f64, reach: i64, cutoff: f64, half_width: f64) -> Vec<f64> {
    (-reach..=reach).map(|j| kaiser_sinc(frac - j as f64, cutoff, half_width, KAISER_BETA)).collect()
}

/// Low-pass interpolation kernel evaluated at offset `t` (input samples):
/// `2 fc sinc(2 fc t)` under a Kaiser window of half-width `half_width`.
pub fn kaiser_sinc(t: f64, cutoff: f64, half_width: f64, beta: f64) -> f64 {
    let u = t / half_width;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let arg = 2.0 * cutoff * t;
    let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
    let window = bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta);
    2.0 * cutoff * sinc * window
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, amp: f64, rate: u32, seconds: f64) -> AudioClip {
        let n = (rate as f64 * seconds).round() as usize;
        let samples = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect();
        AudioClip::new(samples, rate, "sine").unwrap()
    }

    // Brute-force FFT peak: frequency of the largest magnitude bin.
    fn peak_frequency(clip: &AudioClip) -> f64 {
        let n = clip.len();
        let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (bin, _) = buf[..n / 2].iter().enumerate().map(|(i, c)| (i, c.norm())).fold((0, 0.0), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
        bin as f64 * clip.rate() as f64 / n as f64
    }

    #[test]
    fn identity_rate_leaves_samples_unchanged() {
        let clip = sine(440.0, 0.5, 25_000, 0.1);
        assert_eq!(resample(&clip, 25_000).unwrap(), clip);
    }

    #[test]
    fn tone_survives_downsampling() {
        let clip = sine(440.0, 0.5, 44_100, 3.0);
        let out = resample(&clip, 25_000).unwrap();
        assert_eq!(out.rate(), 25_000);
        assert!((peak_frequency(&out) - 440.0).abs() <= 0.5);
    }

    #[test]
    fn length_formula_three_seconds() {
        let clip = sine(440.0, 0.5, 44_100, 3.0);
        let out = resample(&clip, 25_000).unwrap();
        assert!((out.len() as i64 - 75_000).abs() <= 1);
    }

    #[test]
    fn round_trip_keeps_the_tone() {
        let clip = sine(300.0, 0.5, 25_000, 2.0);
        for target in [20_000, 31_250] {
            let there = resample(&clip, target).unwrap();
            let back = resample(&there, 25_000).unwrap();
            assert_eq!(back.len(), clip.len());
            assert!((peak_frequency(&back) - 300.0).abs() <= 0.5);
        }
    }

    #[test]
    fn interior_waveform_is_accurate() {
        // Well below the cutoff the interpolator should reproduce the analytic tone.
        let clip = sine(440.0, 0.5, 25_000, 1.0);
        let out = resample(&clip, 31_250).unwrap();
        let worst = (2000..out.len() - 2000)
            .map(|n| {
                let exact = 0.5 * (2.0 * PI * 440.0 * n as f64 / 31_250.0).sin();
                (out.samples()[n] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "worst deviation {worst}");
    }

    #[test]
    fn components_above_the_new_nyquist_are_removed() {
        // 11 kHz cannot be represented at 20 kHz.
        let clip = sine(11_000.0, 0.5, 25_000, 1.0);
        let out = resample(&clip, 20_000).unwrap();
        let rms = (out.samples()[2000..18_000].iter().map(|s| s * s).sum::<f64>() / 16_000.0).sqrt();
        assert!(rms < 1e-3, "residual rms {rms}");
    }

    #[test]
    fn too_short_output_is_rejected() {
        let clip = AudioClip::new(vec![0.1, 0.2, 0.3], 44_100, "s").unwrap();
        assert!(matches!(resample(&clip, 8000), Err(AudioError::TooShort { .. })));
        assert!(matches!(resample(&clip, 0), Err(AudioError::ZeroRate)));
    }

    #[test]
    fn kernel_is_unity_at_centre_for_full_band() {
        assert!((kaiser_sinc(0.0, 0.5, 64.0, KAISER_BETA) - 1.0).abs() < 1e-12);
        assert!(kaiser_sinc(3.0, 0.5, 64.0, KAISER_BETA).abs() < 1e-12);
        assert_eq!(kaiser_sinc(64.0, 0.5, 64.0, KAISER_BETA), 0.0);
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) and I0(12) from tables.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008).abs() < 1e-12);
        assert!((bessel_i0(12.0) / 18_948.925_349_296_3 - 1.0).abs() < 1e-10);
    }
}
