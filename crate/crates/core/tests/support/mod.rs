//! Shared fixtures: a synthetic 4-keyword corpus (tones and chirps) with a
//! colored-noise bank, written as real WAV trees so tests exercise the full
//! ingestion path.

#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use kws_core::dataio::{
    assign_splits, scan_keyword_corpus, ClassSubset, LoadedNoiseBank, Manifest, NoiseBank,
    Partition,
};
use kws_core::dsp::{write_wav, AudioClip, SAMPLE_RATE};
use kws_core::rngutil::rng_from;
use rand::Rng;

pub const CLASSES: [&str; 4] = ["low", "high", "rise", "fall"];

fn tone_or_chirp(class: &str, rng: &mut rand_chacha::ChaCha8Rng) -> AudioClip {
    let amp = rng.gen_range(0.25..0.6);
    let jitter = rng.gen_range(0.9..1.1);
    let phase = rng.gen_range(0.0..1.0);
    let n = 16_000usize;
    // Sweep pairs (f0 -> f1) per voice; two voices in distant bands so a
    // single frequency mask cannot erase the class evidence.
    let voices: [(f64, f64); 2] = match class {
        "low" => ([(350.0, 350.0), (900.0, 900.0)])
            .map(|(a, b)| (a * jitter, b * jitter)),
        "high" => ([(1800.0, 1800.0), (4500.0, 4500.0)])
            .map(|(a, b)| (a * jitter, b * jitter)),
        "rise" => ([(300.0, 3000.0), (600.0, 6000.0)])
            .map(|(a, b)| (a * jitter, b * jitter)),
        "fall" => ([(3000.0, 300.0), (6000.0, 600.0)])
            .map(|(a, b)| (a * jitter, b * jitter)),
        other => panic!("unknown toy class {other}"),
    };
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let mut v = 0.0;
            for (f0, f1) in voices {
                // Linear frequency sweep: instantaneous phase integral.
                let phi = f0 * t + 0.5 * (f1 - f0) * t * t;
                v += (2.0 * std::f64::consts::PI
                    * (phi * n as f64 / SAMPLE_RATE as f64 + phase))
                    .sin();
            }
            v * amp * 0.5
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

fn colored_noise(kind: usize, seed: u64, secs: f64) -> Vec<f64> {
    let mut rng = rng_from(&[0x6e6f697365, kind as u64, seed]);
    let n = (secs * SAMPLE_RATE as f64) as usize;
    match kind % 4 {
        // White.
        0 => (0..n).map(|_| rng.gen_range(-0.4..0.4)).collect(),
        // One-pole lowpass, mildly colored.
        1 => {
            let mut y = 0.0f64;
            (0..n)
                .map(|_| {
                    y = 0.95 * y + 0.05 * rng.gen_range(-1.0..1.0);
                    y * 4.0
                })
                .collect()
        }
        // Heavily lowpassed rumble.
        2 => {
            let mut y = 0.0f64;
            (0..n)
                .map(|_| {
                    y = 0.995 * y + 0.005 * rng.gen_range(-1.0..1.0);
                    y * 12.0
                })
                .collect()
        }
        // Hum plus hiss.
        _ => (0..n)
            .map(|i| {
                let hum =
                    (2.0 * std::f64::consts::PI * 120.0 * i as f64 / SAMPLE_RATE as f64).sin();
                0.25 * hum + rng.gen_range(-0.15..0.15)
            })
            .collect(),
    }
}

pub struct ToyData {
    pub root: tempfile::TempDir,
    pub manifest: Manifest,
    pub train_bank: LoadedNoiseBank,
    pub eval_bank: LoadedNoiseBank,
}

/// Build a corpus of `per_class` clips per class with an
/// (roughly 60/20/20) split, plus disjoint train/eval noise banks.
pub fn toy_data(per_class: usize, seed: u64) -> ToyData {
    let root = tempfile::tempdir().expect("tempdir");
    let mut val_list = HashSet::new();
    let mut test_list = HashSet::new();
    for class in CLASSES {
        fs::create_dir(root.path().join(class)).unwrap();
        for i in 0..per_class {
            let mut rng = rng_from(&[seed, kws_core::rngutil::fnv1a(class.as_bytes()), i as u64]);
            let clip = tone_or_chirp(class, &mut rng);
            let rel = format!("{class}/clip_{i:03}.wav");
            write_wav(&root.path().join(&rel), &clip).unwrap();
            match i % 5 {
                3 => {
                    val_list.insert(rel);
                }
                4 => {
                    test_list.insert(rel);
                }
                _ => {}
            }
        }
    }
    let subset = ClassSubset {
        name: "toy".into(),
        members: CLASSES.iter().map(|s| s.to_string()).collect(),
    };
    let (manifest, report) = scan_keyword_corpus(root.path(), &subset).unwrap();
    assert!(report.skipped.is_empty());
    let manifest = assign_splits(&manifest, &val_list, &test_list).unwrap();

    let train_bank = LoadedNoiseBank::from_clips(
        (0..8)
            .map(|k| (format!("color{}", k % 4), colored_noise(k, 100 + k as u64, 2.5)))
            .collect(),
        Partition::Train,
    );
    let eval_bank = LoadedNoiseBank::from_clips(
        (0..6)
            .map(|k| (format!("color{}", k % 4), colored_noise(k, 900 + k as u64, 2.5)))
            .collect(),
        Partition::Eval,
    );
    ToyData {
        root,
        manifest,
        train_bank,
        eval_bank,
    }
}

/// Write the noise banks to disk too, for CLI-level tests.
pub fn write_noise_dir(dir: &Path, partition: Partition, seed_base: u64) -> NoiseBank {
    fs::create_dir_all(dir).unwrap();
    for k in 0..6usize {
        let wave = colored_noise(k, seed_base + k as u64, 2.5);
        write_wav(
            &dir.join(format!("noise_{k}.wav")),
            &AudioClip::new(wave, SAMPLE_RATE),
        )
        .unwrap();
    }
    kws_core::dataio::scan_noise_bank(dir, &[], partition).unwrap()
}
