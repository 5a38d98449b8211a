//! Band-limited resampling (windowed sinc) and speed perturbation.

use crate::error::{Error, Result};

use super::AudioClip;

/// Half-width of the interpolation kernel in input samples at unit ratio.
const KERNEL_TAPS: f64 = 24.0;

/// Resample by evaluating the band-limited signal at positions `n * ratio`.
///
/// `ratio > 1` reads the input faster (fewer output samples, anti-aliased);
/// `ratio < 1` reads it slower. Output length is `floor((n-1)/ratio) + 1`,
/// which stays within one sample of `round(n/ratio)`.
pub fn resample(samples: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio.is_finite() && ratio > 0.0, "resample ratio must be positive");
    if samples.is_empty() {
        return Vec::new();
    }
    if ratio == 1.0 {
        return samples.to_vec();
    }

    let n = samples.len();
    let out_len = ((n - 1) as f64 / ratio).floor() as usize + 1;
    // Cutoff below Nyquist of the slower side; kernel widens when decimating.
    let cutoff = (1.0 / ratio).min(1.0);
    let half_width = KERNEL_TAPS / cutoff;
    let pi = std::f64::consts::PI;

    // The tap loop walks dt = t - k in unit steps, so the sinc and window
    // angles advance by fixed deltas; angle-addition recurrences replace
    // per-tap trig calls.
    let (sin_da, cos_da) = (-pi * cutoff).sin_cos();
    let (sin_dw, cos_dw) = (-pi / half_width).sin_cos();

    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let t = i as f64 * ratio;
        let k_lo = ((t - half_width).ceil() as i64).max(0);
        let k_hi = ((t + half_width).floor() as i64).min(n as i64 - 1);

        let dt0 = t - k_lo as f64;
        let (mut sin_a, mut cos_a) = (pi * cutoff * dt0).sin_cos();
        let (mut sin_w, mut cos_w) = (pi * dt0 / half_width).sin_cos();
        let mut a = pi * cutoff * dt0;

        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            let sinc = if a.abs() < 1e-9 { 1.0 } else { sin_a / a };
            // Blackman via cos(pi*u) and cos(2*pi*u) = 2cos^2 - 1.
            let window = 0.42 + 0.5 * cos_w + 0.08 * (2.0 * cos_w * cos_w - 1.0);
            acc += samples[k as usize] * cutoff * sinc * window;

            let next_sin_a = sin_a * cos_da + cos_a * sin_da;
            cos_a = cos_a * cos_da - sin_a * sin_da;
            sin_a = next_sin_a;
            let next_sin_w = sin_w * cos_dw + cos_w * sin_dw;
            cos_w = cos_w * cos_dw - sin_w * sin_dw;
            sin_w = next_sin_w;
            a -= pi * cutoff;
        }
        out.push(acc);
    }
    out
}

/// Change playback speed by band-limited resampling. `rate` 1.1 plays 10%
/// faster (shorter, higher-pitched); 0.9 plays 10% slower. `rate == 1.0`
/// short-circuits to an exact identity.
pub fn speed_perturb(clip: &AudioClip, rate: f64) -> Result<AudioClip> {
    if !(0.5..2.0).contains(&rate) || !rate.is_finite() {
        return Err(Error::Dsp(format!(
            "speed_perturb rate {rate} outside (0.5, 2.0)"
        )));
    }
    if rate == 1.0 {
        return Ok(clip.clone());
    }
    Ok(AudioClip::new(
        resample(&clip.samples, rate),
        clip.sample_rate,
    ))
}
