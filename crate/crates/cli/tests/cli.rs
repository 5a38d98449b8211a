//! End-to-end checks of the `kws` binary: exit codes, file outputs, and the
//! documented flag surface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kws_core::dsp::{write_wav, AudioClip, SAMPLE_RATE};

fn kws() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kws"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn kws")
}

fn tone(freq: f64, amp: f64) -> AudioClip {
    let samples = (0..16_000)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin() * amp)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Two-class corpus (distinct chords), a noise dir, split lists and a
/// desk-scale config.
fn fixture(root: &Path) {
    for (class, freqs) in [("beep", [400.0, 1000.0]), ("boop", [2000.0, 5000.0])] {
        fs::create_dir_all(root.join("corpus").join(class)).unwrap();
        for i in 0..6 {
            let mut clip = tone(freqs[0] * (1.0 + 0.01 * i as f64), 0.25);
            let other = tone(freqs[1] * (1.0 + 0.01 * i as f64), 0.25);
            for (a, b) in clip.samples.iter_mut().zip(&other.samples) {
                *a += b;
            }
            write_wav(
                &root.join(format!("corpus/{class}/c{i}.wav")),
                &clip,
            )
            .unwrap();
        }
    }
    fs::create_dir_all(root.join("noise")).unwrap();
    for k in 0..3 {
        let samples = (0..40_000u64)
            .map(|i| 0.3 * ((((i + 17 * k) * 2654435761) % 65536) as f64 / 65536.0 - 0.5))
            .collect();
        write_wav(
            &root.join(format!("noise/n{k}.wav")),
            &AudioClip::new(samples, SAMPLE_RATE),
        )
        .unwrap();
    }
    fs::write(
        root.join("val.txt"),
        "beep/c4.wav\nboop/c4.wav\n",
    )
    .unwrap();
    fs::write(
        root.join("test.txt"),
        "beep/c5.wav\nboop/c5.wav\n",
    )
    .unwrap();
    fs::write(
        root.join("kws.toml"),
        r#"
[data]
subset = "custom"
subset_members = ["beep", "boop"]

[model]
width = 2
depth = 1
latent_dim = 8
proj_dim = 8

[train]
epochs = 2
batch_size = 4
lr_init = 1e-3
seed = 3
"#,
    )
    .unwrap();
}

#[test]
fn mix_demo_gain_is_one_for_equal_rms_at_zero_snr() {
    let dir = tempfile::tempdir().unwrap();
    // Different waveforms, same RMS.
    write_wav(&dir.path().join("s.wav"), &tone(440.0, 0.4)).unwrap();
    write_wav(&dir.path().join("n.wav"), &tone(313.0, 0.4)).unwrap();
    let out = run(kws()
        .arg("mix-demo")
        .args(["--snr", "0"])
        .arg("--speech")
        .arg(dir.path().join("s.wav"))
        .arg("--noise")
        .arg(dir.path().join("n.wav"))
        .arg("--out")
        .arg(dir.path().join("mix.wav")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let gain_line = stdout.lines().find(|l| l.starts_with("gain = ")).unwrap();
    let gain: f64 = gain_line.trim_start_matches("gain = ").parse().unwrap();
    assert!((gain - 1.0).abs() < 1e-3, "gain {gain}");
    assert!(dir.path().join("mix.wav").exists());
}

#[test]
fn mix_demo_writes_feature_matrix() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(&dir.path().join("s.wav"), &tone(500.0, 0.4)).unwrap();
    write_wav(&dir.path().join("n.wav"), &tone(700.0, 0.2)).unwrap();
    let out = run(kws()
        .arg("mix-demo")
        .args(["--snr", "-5"])
        .arg("--speech")
        .arg(dir.path().join("s.wav"))
        .arg("--noise")
        .arg(dir.path().join("n.wav"))
        .arg("--out")
        .arg(dir.path().join("mix.wav"))
        .arg("--features-out")
        .arg(dir.path().join("mix.mat")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = kws_core::eval::read_matrix(&dir.path().join("mix.mat")).unwrap();
    assert_eq!(m.dim(), (98, 64));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(kws().arg("train").arg("--bogus-flag"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_epochs_is_a_config_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = run(kws()
        .arg("train")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .args(["--epochs", "0"]));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn make_manifest_writes_jsonl_with_splits() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let manifest_path = dir.path().join("manifest.jsonl");
    let out = run(kws()
        .arg("make-manifest")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--val-list")
        .arg(dir.path().join("val.txt"))
        .arg("--test-list")
        .arg(dir.path().join("test.txt"))
        .arg("--out")
        .arg(&manifest_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&manifest_path).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.contains("\"split\":\"val\""));
    assert!(text.contains("\"split\":\"test\""));

    // Noise mode.
    let noise_path = dir.path().join("noise.jsonl");
    let out = run(kws()
        .arg("make-manifest")
        .arg("--noise")
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .args(["--partition", "eval"])
        .args(["--category", "n*=synth"])
        .arg("--out")
        .arg(&noise_path));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&noise_path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("\"category\":\"synth\""));
    assert!(text.contains("\"partition\":\"eval\""));
}

#[test]
fn train_evaluate_export_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out_dir = dir.path().join("run");

    let out = run(kws()
        .arg("train")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--val-list")
        .arg(dir.path().join("val.txt"))
        .arg("--test-list")
        .arg(dir.path().join("test.txt"))
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .args(["--regularizer", "i2cr"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("epochs.csv").exists());
    assert!(out_dir.join("best.bin").exists() && out_dir.join("best.json").exists());

    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,step,lr,alpha,ce,i2cr,total\n"));
    // Two epochs x two batches + header.
    assert_eq!(metrics.lines().count(), 5);

    // The documented evaluation surface: four SNR columns per noise source.
    let out = run(kws()
        .arg("evaluate")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--val-list")
        .arg(dir.path().join("val.txt"))
        .arg("--test-list")
        .arg(dir.path().join("test.txt"))
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .arg("--checkpoint")
        .arg(out_dir.join("best"))
        .args(["--regularizer", "i2cr"])
        .args(["--snrs", "-10,-5,0,20"])
        .arg("--out-dir")
        .arg(&out_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    assert!(csv.starts_with("noise_source,snr_db,n,correct,accuracy\n"));
    let noise_rows: Vec<&str> = csv.lines().filter(|l| l.starts_with("noise,")).collect();
    assert_eq!(noise_rows.len(), 4, "one row per SNR: {csv}");
    for snr in ["-10", "-5", "0", "20"] {
        assert!(csv.contains(&format!("noise,{snr},2,")), "missing {snr} in {csv}");
    }
    let table = fs::read_to_string(out_dir.join("grid.txt")).unwrap();
    assert!(table.starts_with("regularizer: i2cr\n"));

    // Embedding export with PCA projection (needs n >= 3 rows: 2 test
    // clips is not enough, so skip --project here and check files only).
    let dump_base = dir.path().join("dump");
    let out = run(kws()
        .arg("export-embeddings")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--val-list")
        .arg(dir.path().join("val.txt"))
        .arg("--test-list")
        .arg(dir.path().join("test.txt"))
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .arg("--checkpoint")
        .arg(out_dir.join("best"))
        .args(["--condition", "any@0"])
        .arg("--out")
        .arg(&dump_base));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = kws_core::eval::read_matrix(&dir.path().join("dump.mat")).unwrap();
    assert_eq!(m.dim(), (2, 8));
    assert!(dir.path().join("dump.labels.jsonl").exists());
    assert!(dir.path().join("dump.meta.json").exists());
}

#[test]
fn missing_checkpoint_exits_nonzero_with_one_line_cause() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = run(kws()
        .arg("evaluate")
        .arg("--config")
        .arg(dir.path().join("kws.toml"))
        .arg("--data-dir")
        .arg(dir.path().join("corpus"))
        .arg("--test-list")
        .arg(dir.path().join("test.txt"))
        .arg("--noise-dir")
        .arg(dir.path().join("noise"))
        .arg("--checkpoint")
        .arg(dir.path().join("nope")));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().any(|l| l.starts_with("error: ")), "{stderr}");
}
