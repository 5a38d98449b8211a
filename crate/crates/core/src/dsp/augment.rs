//! The per-view augmentation pipeline.
//!
//! Stage order: speed perturbation and circular shift act on the waveform,
//! noise is mixed last on the waveform so the realized SNR is exact on what
//! the frontend sees, and masking acts on the features.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{sample_noise_segment, LoadedNoiseBank};
use crate::error::Result;

use super::{fit_duration, mix_at_snr, spec_mask, speed_perturb, time_shift};
use super::{AudioClip, AugmentPolicy, FeatureMap, MelFrontend};

/// All views are fit to one second before the frontend.
pub const VIEW_SECS: f64 = 1.0;

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 < range.1 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Produce one augmented view of a clip as a feature map. Each enabled
/// stage draws fresh parameters from `rng`; a fixed seed reproduces the
/// view bit-for-bit. With every stage disabled this reduces to
/// `log_mel(fit_duration(clip))`.
pub fn augment_view(
    clip: &AudioClip,
    bank: &LoadedNoiseBank,
    rng: &mut ChaCha8Rng,
    policy: &AugmentPolicy,
    frontend: &MelFrontend,
) -> Result<FeatureMap> {
    let mut wave = if policy.enable_speed {
        let rate = uniform(rng, policy.speed_range);
        speed_perturb(clip, rate)?
    } else {
        clip.clone()
    };
    wave = fit_duration(&wave, VIEW_SECS);
    if policy.enable_shift {
        let shift_ms = uniform(rng, policy.shift_range_ms);
        wave = time_shift(&wave, shift_ms);
    }
    if policy.enable_noise {
        let segment = sample_noise_segment(bank, VIEW_SECS, rng, None)?;
        let snr_db = uniform(rng, policy.snr_range_db);
        let (mixed, _gain) = mix_at_snr(&wave, &segment, snr_db)?;
        wave = mixed;
    }
    let features = frontend.process(&wave)?;
    Ok(if policy.enable_mask {
        spec_mask(&features, rng, policy)
    } else {
        features
    })
}
