//! Noise bank scanning and deterministic segment sampling.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{decode_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub path: String,
    pub category: String,
    pub partition: Partition,
}

/// Noise source collection. Entries carry a category (from a user-supplied
/// pattern map) and a train/eval partition tag.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    pub entries: Vec<NoiseEntry>,
    pub total_duration: f64,
}

/// Minimal wildcard matcher: `*` matches any run of characters (including
/// `/`), `?` matches one character.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let (mut star, mut mark) = (usize::MAX, 0usize);
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = pi;
            mark = ti;
            pi += 1;
        } else if star != usize::MAX {
            pi = star + 1;
            mark += 1;
            ti = mark;
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

fn wav_duration_secs(path: &Path) -> Result<f64> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    Ok(f64::from(reader.duration()) / f64::from(spec.sample_rate))
}

/// Recursively scan a directory of noise WAVs. Categories come from the
/// first matching `(pattern, category)` pair against the relative path;
/// unmatched files get "uncategorized". A bank with zero decodable files is
/// fatal.
pub fn scan_noise_bank(
    root: &Path,
    category_map: &[(String, String)],
    partition: Partition,
) -> Result<NoiseBank> {
    if !root.is_dir() {
        return Err(Error::NoiseBank(format!(
            "noise root {} does not exist",
            root.display()
        )));
    }
    let mut paths: Vec<_> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    paths.sort();

    let mut entries = Vec::new();
    let mut total = 0.0;
    for path in paths {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        match wav_duration_secs(&path) {
            Ok(d) if d > 0.0 => {
                let category = category_map
                    .iter()
                    .find(|(pat, _)| glob_match(pat, &rel))
                    .map(|(_, cat)| cat.clone())
                    .unwrap_or_else(|| "uncategorized".to_string());
                entries.push(NoiseEntry {
                    path: rel,
                    category,
                    partition,
                });
                total += d;
            }
            Ok(_) => log::warn!("skipping zero-length noise file {}", path.display()),
            Err(e) => log::warn!("skipping undecodable noise file: {e}"),
        }
    }
    if entries.is_empty() {
        return Err(Error::NoiseBank(format!(
            "no decodable noise files under {}",
            root.display()
        )));
    }
    Ok(NoiseBank {
        entries,
        total_duration: total,
    })
}

/// Persist bank metadata as JSON-lines `{path, category, partition}`.
pub fn save_noise_bank(bank: &NoiseBank, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in &bank.entries {
        let line = serde_json::to_string(e).map_err(|e| Error::NoiseBank(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Load bank metadata; durations are re-read from the referenced files.
pub fn load_noise_bank(path: &Path, root: &Path) -> Result<NoiseBank> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut total = 0.0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: NoiseEntry = serde_json::from_str(&line)
            .map_err(|err| Error::NoiseBank(format!("{}:{}: {err}", path.display(), i + 1)))?;
        total += wav_duration_secs(&root.join(&e.path))?;
        entries.push(e);
    }
    if entries.is_empty() {
        return Err(Error::NoiseBank(format!("{} lists no entries", path.display())));
    }
    Ok(NoiseBank {
        entries,
        total_duration: total,
    })
}

/// A noise bank with waveforms resident in memory, ready for sampling.
pub struct LoadedNoiseBank {
    pub entries: Vec<NoiseEntry>,
    samples: Vec<Vec<f64>>,
}

impl LoadedNoiseBank {
    pub fn load(bank: &NoiseBank, root: &Path) -> Result<Self> {
        let mut samples = Vec::with_capacity(bank.entries.len());
        for e in &bank.entries {
            let clip = decode_wav(&root.join(&e.path))?;
            if clip.is_empty() {
                return Err(Error::NoiseBank(format!("{} decodes to zero samples", e.path)));
            }
            samples.push(clip.samples);
        }
        Ok(Self {
            entries: bank.entries.clone(),
            samples,
        })
    }

    /// Build a bank directly from in-memory waveforms (tests, synthetic data).
    pub fn from_clips(clips: Vec<(String, Vec<f64>)>, partition: Partition) -> Self {
        let mut entries = Vec::new();
        let mut samples = Vec::new();
        for (i, (category, wave)) in clips.into_iter().enumerate() {
            assert!(!wave.is_empty(), "noise clip must be non-empty");
            entries.push(NoiseEntry {
                path: format!("mem/{i:04}.wav"),
                category,
                partition,
            });
            samples.push(wave);
        }
        Self { entries, samples }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Draw a contiguous noise segment of exactly `duration` seconds at 16 kHz.
///
/// The entry is chosen uniformly (optionally within a category) and the
/// start offset uniformly over the valid range. Clips shorter than the
/// requested duration are tiled by wraparound before extraction.
pub fn sample_noise_segment(
    bank: &LoadedNoiseBank,
    duration: f64,
    rng: &mut ChaCha8Rng,
    category: Option<&str>,
) -> Result<AudioClip> {
    if bank.is_empty() {
        return Err(Error::NoiseBank("empty noise bank".into()));
    }
    let candidates: Vec<usize> = match category {
        None => (0..bank.len()).collect(),
        Some(cat) => bank
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == cat)
            .map(|(i, _)| i)
            .collect(),
    };
    if candidates.is_empty() {
        return Err(Error::NoiseBank(format!(
            "no noise entries in category {:?}",
            category.unwrap_or("")
        )));
    }
    let need = (duration * f64::from(SAMPLE_RATE)).round() as usize;
    let idx = candidates[rng.gen_range(0..candidates.len())];
    let src = &bank.samples[idx];

    let samples: Vec<f64> = if src.len() >= need {
        let start = rng.gen_range(0..=src.len() - need);
        src[start..start + need].to_vec()
    } else {
        // Tile by wraparound: any phase is a valid start.
        let start = rng.gen_range(0..src.len());
        (0..need).map(|i| src[(start + i) % src.len()]).collect()
    };
    Ok(AudioClip::new(samples, SAMPLE_RATE))
}
