use grbas::features::FEATURE_RATE;
use grbas::synth::{estimate_hnr, make_synthetic_dataset, synth_voice, SynthSpec, TRUNCATION_SIGMAS};
use grbas::Grade;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Frequency of the largest magnitude bin of a zero-padded FFT.
fn spectral_peak(x: &[f64], rate: f64) -> f64 {
    let n = (x.len() * 4).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (bin, _) = buf[1..n / 2].iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap();
    (bin + 1) as f64 * rate / n as f64
}

/// Sample positions of the steep rise that starts every cycle.
fn cycle_marks(x: &[f64], nominal_period: usize) -> Vec<usize> {
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let threshold = 0.15 * d.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut marks = Vec::new();
    let mut i = 0;
    while i < d.len() {
        if d[i] > threshold {
            let end = (i + nominal_period / 4).min(d.len());
            let best = (i..end).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            marks.push(best);
            i = best + nominal_period / 2;
        } else {
            i += 1;
        }
    }
    marks
}

fn relative_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

/// Standard deviation of a unit normal truncated to the generator's range.
fn truncated_unit_std() -> f64 {
    let z = TRUNCATION_SIGMAS;
    let pdf = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let steps = 200_000;
    let h = 2.0 * z / steps as f64;
    let mass: f64 = (0..steps)
        .map(|i| {
            let t = -z + (i as f64 + 0.5) * h;
            (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * h
        })
        .sum();
    (1.0 - 2.0 * z * pdf / mass).sqrt()
}

#[test]
fn clean_voice_peaks_at_its_fundamental() {
    for (i, f0) in [92.5, 123.4, 187.0, 246.3].into_iter().enumerate() {
        let spec = SynthSpec { duration: 2.0, ..SynthSpec::clean(f0) };
        let clip = synth_voice(&spec, i as u64).unwrap();
        let peak = spectral_peak(clip.samples(), FEATURE_RATE as f64);
        assert!((peak - f0).abs() <= 1.0, "f0 {f0}: peak at {peak}");
        assert!(estimate_hnr(&clip).unwrap() >= 40.0);
    }
}

#[test]
fn perturbations_are_recovered_from_cycle_marks() {
    let sigma = truncated_unit_std();
    for (seed, (jitter, shimmer)) in [(1.0, 6.0), (2.5, 12.0), (5.0, 20.0)].into_iter().enumerate() {
        let spec = SynthSpec { jitter, shimmer, duration: 5.0, ..SynthSpec::clean(100.0) };
        let clip = synth_voice(&spec, seed as u64).unwrap();
        let x = clip.samples();
        let nominal = (FEATURE_RATE as f64 / 100.0) as usize;
        let marks = cycle_marks(x, nominal);
        assert!(marks.len() > 450, "{} marks", marks.len());

        let periods: Vec<f64> = marks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let rms: Vec<f64> = marks
            .windows(2)
            .map(|w| {
                let c = &x[w[0]..w[1]];
                (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt()
            })
            .collect();
        let measured_jitter = 100.0 * relative_std(&periods);
        let measured_shimmer = 100.0 * relative_std(&rms);
        let (want_j, want_s) = (jitter * sigma, shimmer * sigma);
        assert!(
            (measured_jitter / want_j - 1.0).abs() <= 0.3,
            "jitter {jitter}: measured {measured_jitter:.3}, expected {want_j:.3}"
        );
        assert!(
            (measured_shimmer / want_s - 1.0).abs() <= 0.3,
            "shimmer {shimmer}: measured {measured_shimmer:.3}, expected {want_s:.3}"
        );
    }
}

#[test]
fn estimated_hnr_falls_with_severity() {
    let clips = make_synthetic_dataset(6, 21).unwrap();
    let mut means = [0.0; 4];
    for c in &clips {
        means[c.grade.index()] += estimate_hnr(&c.clip).unwrap() / 6.0;
    }
    assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
}

#[test]
fn dataset_seeds_change_waveforms_not_labels() {
    let a = make_synthetic_dataset(3, 1).unwrap();
    let b = make_synthetic_dataset(3, 2).unwrap();
    let labels = |d: &[grbas::synth::SyntheticClip]| d.iter().map(|c| c.grade).collect::<Vec<Grade>>();
    assert_eq!(labels(&a), labels(&b));
    assert!(a.iter().zip(&b).all(|(x, y)| x.clip.samples() != y.clip.samples()));
    assert!(a.iter().all(|c| c.clip.len() == FEATURE_RATE as usize && (90.0..250.0).contains(&c.spec.f0)));
}
