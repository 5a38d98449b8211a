//! Waveform-level transforms: WAV decode, duration fitting, SNR mixing,
//! time shifting, speed perturbation, the log-mel frontend and feature
//! masking, composed into the per-view augmentation pipeline.

mod augment;
mod mask;
mod mel;
mod resample;

pub use augment::augment_view;
pub use mask::{spec_mask, AugmentPolicy, MaskFill};
pub use mel::{log_mel, FeatureMap, MelConfig, MelFrontend};
pub use resample::{resample, speed_perturb};

use std::path::Path;

use crate::error::{Error, Result};

/// Target sample rate for all ingested audio.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono waveform. The unit of all DSP operations.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Root-mean-square amplitude over the full clip.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sumsq: f64 = self.samples.iter().map(|s| s * s).sum();
        (sumsq / self.samples.len() as f64).sqrt()
    }
}

/// Decode a PCM WAV file to a mono 16 kHz clip.
///
/// Multi-channel files are averaged across channels; files at other sample
/// rates are resampled.
pub fn decode_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;

    let frames = interleaved.len() / channels;
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * channels;
        let sum: f64 = interleaved[start..start + channels].iter().sum();
        mono.push(sum / channels as f64);
    }

    if spec.sample_rate != SAMPLE_RATE {
        let ratio = f64::from(spec.sample_rate) / f64::from(SAMPLE_RATE);
        mono = resample(&mono, ratio);
    }
    Ok(AudioClip::new(mono, SAMPLE_RATE))
}

/// Write a clip as 16-bit PCM WAV (debug dumps, mix-demo output).
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16;
        writer.write_sample(v).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    }
    writer.finalize().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(())
}

/// Fit a clip to exactly `target` seconds: short clips are right-padded with
/// zeros, long clips keep their first `target` seconds.
pub fn fit_duration(clip: &AudioClip, target: f64) -> AudioClip {
    let want = (target * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(want, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

/// Mix noise into speech at an exact SNR.
///
/// Returns the mixture and the applied noise gain. The output is not
/// re-normalized and may exceed [-1, 1]; the realized SNR
/// `20*log10(rms(speech)/rms(gain*noise))` equals `snr_db` by construction.
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<(AudioClip, f64)> {
    if speech.len() != noise.len() {
        return Err(Error::Dsp(format!(
            "mix_at_snr length mismatch: speech {} vs noise {}",
            speech.len(),
            noise.len()
        )));
    }
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::Dsp(format!(
            "mix_at_snr sample-rate mismatch: {} vs {}",
            speech.sample_rate, noise.sample_rate
        )));
    }
    let rms_s = speech.rms();
    let rms_n = noise.rms();
    if rms_s == 0.0 {
        return Err(Error::Dsp("mix_at_snr: speech has zero RMS".into()));
    }
    if rms_n == 0.0 {
        return Err(Error::Dsp("mix_at_snr: noise has zero RMS".into()));
    }
    let gain = (rms_s / rms_n) * 10f64.powf(-snr_db / 20.0);
    let samples = speech
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok((AudioClip::new(samples, speech.sample_rate), gain))
}

/// Circular time shift. Positive shifts move samples toward later time;
/// samples rolling off the end re-enter at the start.
pub fn time_shift(clip: &AudioClip, shift_ms: f64) -> AudioClip {
    let n = clip.len();
    if n == 0 {
        return clip.clone();
    }
    let shift = (shift_ms * clip.sample_rate as f64 / 1000.0).round() as i64;
    let k = shift.rem_euclid(n as i64) as usize;
    let mut samples = clip.samples.clone();
    samples.rotate_right(k);
    AudioClip::new(samples, clip.sample_rate)
}
