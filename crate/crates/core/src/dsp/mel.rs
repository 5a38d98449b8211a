//! Log-mel filterbank frontend.
//!
//! A 1 s, 16 kHz clip with the default 25 ms window / 10 ms hop and no
//! center padding yields `1 + (16000-400)/160 = 98` frames of 64 log-mel
//! energies.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::AudioClip;

/// Frontend parameters. Defaults: 25 ms Hann window, 10 ms hop, 512-point
/// FFT, 64 HTK-scale mel bands spanning 0..8000 Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 64,
            fft_size: 512,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let win = self.window_len(sample_rate);
        let hop = self.hop_len(sample_rate);
        if win == 0 || hop == 0 {
            return Err(Error::Config("mel window/hop must be positive".into()));
        }
        if self.fft_size < win {
            return Err(Error::Config(format!(
                "fft_size {} smaller than window length {win}",
                self.fft_size
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0..nyquist + 1e-9).contains(&self.fmin_hz) || self.fmax_hz > nyquist + 1e-9 {
            return Err(Error::Config("mel band edges outside [0, nyquist]".into()));
        }
        if self.fmin_hz >= self.fmax_hz {
            return Err(Error::Config("fmin must be below fmax".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Time-frequency matrix of log-mel energies, shape (frames, mels).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Array2<f64>,
}

impl FeatureMap {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn mels(&self) -> usize {
        self.values.ncols()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, FFT plan and filterbank. Build once, reuse per clip;
/// `process` is pure and safe to call from several threads.
pub struct MelFrontend {
    cfg: MelConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    /// (n_mels, n_bins) triangular weights, peak 1.0.
    filter: Array2<f64>,
}

impl MelFrontend {
    pub fn new(cfg: &MelConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let win_len = cfg.window_len(sample_rate);
        // Periodic Hann.
        let window: Vec<f64> = (0..win_len)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / win_len as f64).cos()))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let filter = build_filterbank(cfg, sample_rate);
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window,
            fft,
            filter,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// Number of frames a clip of `n` samples produces.
    pub fn frames_for(&self, n: usize) -> usize {
        let win = self.cfg.window_len(self.sample_rate);
        let hop = self.cfg.hop_len(self.sample_rate);
        if n < win {
            0
        } else {
            1 + (n - win) / hop
        }
    }

    pub fn process(&self, clip: &AudioClip) -> Result<FeatureMap> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::Dsp(format!(
                "mel frontend built for {} Hz, clip is {} Hz",
                self.sample_rate, clip.sample_rate
            )));
        }
        let win = self.cfg.window_len(self.sample_rate);
        let hop = self.cfg.hop_len(self.sample_rate);
        let frames = self.frames_for(clip.len());
        if frames == 0 {
            return Err(Error::Dsp(format!(
                "clip of {} samples shorter than one {} sample window",
                clip.len(),
                win
            )));
        }
        let n_bins = self.cfg.fft_size / 2 + 1;
        let mut out = Array2::<f64>::zeros((frames, self.cfg.n_mels));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut mag = vec![0.0f64; n_bins];

        for f in 0..frames {
            let start = f * hop;
            for i in 0..self.cfg.fft_size {
                let v = if i < win {
                    clip.samples[start + i] * self.window[i]
                } else {
                    0.0
                };
                buf[i] = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            for (b, m) in mag.iter_mut().enumerate() {
                *m = buf[b].norm();
            }
            for m in 0..self.cfg.n_mels {
                let row = self.filter.row(m);
                let energy: f64 = row.iter().zip(&mag).map(|(w, v)| w * v).sum();
                out[[f, m]] = energy.max(self.cfg.log_floor).ln();
            }
        }
        Ok(FeatureMap { values: out })
    }

    /// Center frequencies of the mel bands, in Hz.
    pub fn band_centers_hz(&self) -> Vec<f64> {
        mel_points(&self.cfg)[1..=self.cfg.n_mels].to_vec()
    }
}

fn mel_points(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax_hz);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

fn build_filterbank(cfg: &MelConfig, sample_rate: u32) -> Array2<f64> {
    let n_bins = cfg.fft_size / 2 + 1;
    let pts = mel_points(cfg);
    let mut filter = Array2::<f64>::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (left, center, right) = (pts[m], pts[m + 1], pts[m + 2]);
        for b in 0..n_bins {
            let freq = b as f64 * sample_rate as f64 / cfg.fft_size as f64;
            let w = if freq >= left && freq <= center && center > left {
                (freq - left) / (center - left)
            } else if freq > center && freq <= right && right > center {
                (right - freq) / (right - center)
            } else {
                0.0
            };
            filter[[m, b]] = w;
        }
    }
    filter
}

/// One-shot convenience; builds a frontend per call.
pub fn log_mel(clip: &AudioClip, cfg: &MelConfig) -> Result<FeatureMap> {
    MelFrontend::new(cfg, clip.sample_rate)?.process(clip)
}
