//! Time-frequency masking and the per-view augmentation policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::FeatureMap;

/// Fill value for masked blocks. `Zero` writes literal zeros into the
/// log-mel map; `Mean` writes the pre-mask mean of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    #[default]
    Zero,
    Mean,
}

/// Augmentation ranges applied to every training view.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub snr_range_db: (f64, f64),
    pub shift_range_ms: (f64, f64),
    pub speed_range: (f64, f64),
    pub n_time_masks: usize,
    pub n_freq_masks: usize,
    pub max_time_mask: usize,
    pub max_freq_mask: usize,
    pub mask_fill: MaskFill,
    pub enable_speed: bool,
    pub enable_shift: bool,
    pub enable_noise: bool,
    pub enable_mask: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            snr_range_db: (-10.0, 30.0),
            shift_range_ms: (-100.0, 100.0),
            speed_range: (0.90, 1.10),
            n_time_masks: 2,
            n_freq_masks: 2,
            max_time_mask: 25,
            max_freq_mask: 7,
            mask_fill: MaskFill::Zero,
            enable_speed: true,
            enable_shift: true,
            enable_noise: true,
            enable_mask: true,
        }
    }
}

impl AugmentPolicy {
    /// Everything off; `augment_view` then reduces to `log_mel(fit_duration(clip))`.
    pub fn disabled() -> Self {
        Self {
            enable_speed: false,
            enable_shift: false,
            enable_noise: false,
            enable_mask: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: (f64, f64)| r.0 <= r.1;
        if !ordered(self.snr_range_db) || !ordered(self.shift_range_ms) || !ordered(self.speed_range)
        {
            return Err(Error::Config("augment ranges must satisfy low <= high".into()));
        }
        if self.speed_range.0 <= 0.5 || self.speed_range.1 >= 2.0 {
            return Err(Error::Config("speed range must lie inside (0.5, 2.0)".into()));
        }
        Ok(())
    }
}

/// Zero out `n_time_masks` time blocks and `n_freq_masks` frequency blocks,
/// widths uniform in `[0, max]`, positions uniform over the valid range.
/// Blocks may overlap. Entries outside the masks are untouched.
pub fn spec_mask(features: &FeatureMap, rng: &mut ChaCha8Rng, policy: &AugmentPolicy) -> FeatureMap {
    let mut values = features.values.clone();
    let (frames, mels) = (features.frames(), features.mels());
    let fill = match policy.mask_fill {
        MaskFill::Zero => 0.0,
        MaskFill::Mean => features.values.mean().unwrap_or(0.0),
    };

    for _ in 0..policy.n_time_masks {
        let w = rng.gen_range(0..=policy.max_time_mask.min(frames));
        let t0 = rng.gen_range(0..=frames - w);
        for t in t0..t0 + w {
            for m in 0..mels {
                values[[t, m]] = fill;
            }
        }
    }
    for _ in 0..policy.n_freq_masks {
        let w = rng.gen_range(0..=policy.max_freq_mask.min(mels));
        let m0 = rng.gen_range(0..=mels - w);
        for m in m0..m0 + w {
            for t in 0..frames {
                values[[t, m]] = fill;
            }
        }
    }
    FeatureMap { values }
}
