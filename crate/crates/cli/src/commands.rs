//! Subcommand implementations: config/flag resolution and wiring into the
//! core library.

use std::path::{Path, PathBuf};

use kws_core::config::Config;
use kws_core::dataio::{
    assign_splits, load_manifest, load_split_list, sample_noise_segment, save_manifest,
    save_noise_bank, scan_keyword_corpus, scan_noise_bank, LoadedNoiseBank, Manifest, Partition,
};
use kws_core::dsp::{decode_wav, log_mel, mix_at_snr, write_wav, AudioClip};
use kws_core::error::{Error, Result};
use kws_core::eval::{
    evaluate_grid, export_embeddings as export_dump, project_2d, write_matrix, NoiseCondition,
};
use kws_core::train::{load_checkpoint, train as run_train, TrainSetup};

use crate::{EvaluateArgs, ExportArgs, MakeManifestArgs, MixDemoArgs, TrainArgs};

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

/// Merge common data flags into the config (flags win).
fn apply_data_args(cfg: &mut Config, args: &crate::DataArgs) {
    if let Some(d) = &args.data_dir {
        cfg.data.data_dir = Some(d.clone());
    }
    if let Some(m) = &args.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    if let Some(v) = &args.val_list {
        cfg.data.val_list = Some(v.clone());
    }
    if let Some(t) = &args.test_list {
        cfg.data.test_list = Some(t.clone());
    }
    if let Some(n) = &args.noise_dir {
        cfg.data.noise_dir = Some(n.clone());
    }
    if let Some(s) = &args.subset {
        cfg.data.subset = s.clone();
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
}

fn data_root(cfg: &Config) -> Result<PathBuf> {
    cfg.data
        .data_dir
        .clone()
        .ok_or_else(|| Error::Config("no corpus root: pass --data-dir or set data.data_dir".into()))
}

/// Manifest from file when given, otherwise a fresh scan with the official
/// split lists applied.
fn resolve_manifest(cfg: &Config) -> Result<(Manifest, PathBuf)> {
    let root = data_root(cfg)?;
    let manifest = match &cfg.data.manifest {
        Some(path) => load_manifest(path)?,
        None => {
            let subset = cfg.data.subset()?;
            let (mut manifest, report) = scan_keyword_corpus(&root, &subset)?;
            if !report.skipped.is_empty() {
                log::warn!("skipped {} undecodable files during scan", report.skipped.len());
            }
            let val = match &cfg.data.val_list {
                Some(p) => load_split_list(p)?,
                None => Default::default(),
            };
            let test = match &cfg.data.test_list {
                Some(p) => load_split_list(p)?,
                None => Default::default(),
            };
            if !val.is_empty() || !test.is_empty() {
                manifest = assign_splits(&manifest, &val, &test)?;
            }
            manifest
        }
    };
    Ok((manifest, root))
}

fn resolve_noise_bank(cfg: &Config, partition: Partition) -> Result<LoadedNoiseBank> {
    let dir = match partition {
        Partition::Train => cfg.data.noise_dir.clone(),
        Partition::Eval => cfg.data.noise_eval_dir.clone().or_else(|| cfg.data.noise_dir.clone()),
    }
    .ok_or_else(|| {
        Error::Config("no noise bank: pass --noise-dir or set data.noise_dir".into())
    })?;
    let bank = scan_noise_bank(&dir, &cfg.data.category_map, partition)?;
    log::info!(
        "noise bank: {} files, {:.1} s total",
        bank.entries.len(),
        bank.total_duration
    );
    LoadedNoiseBank::load(&bank, &dir)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.data.config.as_deref())?;
    apply_data_args(&mut cfg, &args.data);
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(r) = &args.regularizer {
        cfg.train.regularizer = r.parse()?;
    }
    if let Some(enc) = &args.encoder {
        cfg.model.arch = enc.clone();
    }
    cfg.validate()?;

    let (manifest, root) = resolve_manifest(&cfg)?;
    let (n_train, n_val, n_test) = manifest.split_counts();
    log::info!(
        "manifest: {} classes, {n_train} train / {n_val} val / {n_test} test",
        manifest.classes.len()
    );
    let bank = resolve_noise_bank(&cfg, Partition::Train)?;

    let setup = TrainSetup {
        manifest: &manifest,
        root: &root,
        bank: &bank,
        mel: &cfg.mel,
        policy: &cfg.augment,
        loss: &cfg.loss,
        ramp: cfg.ramp_schedule(),
        encoder: &cfg.model.encoder()?,
        proj_dim: cfg.model.proj_dim,
        train: &cfg.train,
    };
    let outcome = run_train(&setup, &args.out_dir, args.resume.as_deref())?;
    println!(
        "best val accuracy {:.4}; checkpoints at {} / {}",
        outcome.best_val_accuracy,
        outcome.best_checkpoint.display(),
        outcome.last_checkpoint.display()
    );
    println!("metrics: {}", outcome.metrics_csv.display());
    Ok(())
}

fn parse_snrs(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad SNR value {t:?}")))
        })
        .collect()
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(args.data.config.as_deref())?;
    apply_data_args(&mut cfg, &args.data);
    if let Some(snrs) = &args.snrs {
        cfg.eval.snrs_db = parse_snrs(snrs)?;
    }
    cfg.validate()?;

    let (manifest, root) = resolve_manifest(&cfg)?;
    let needs_bank = cfg.eval.sources.iter().any(|s| !s.clean);
    let bank = if needs_bank {
        Some(resolve_noise_bank(&cfg, Partition::Eval)?)
    } else {
        None
    };
    let (model, _opt, state) = load_checkpoint(&args.checkpoint)?;
    log::info!(
        "checkpoint: epoch {}, best val accuracy {:.4}",
        state.epoch,
        state.best_val_accuracy
    );

    let grid = evaluate_grid(&model, &manifest, &root, bank.as_ref(), &cfg.eval, &cfg.mel)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let csv_path = args.out_dir.join("grid.csv");
    let txt_path = args.out_dir.join("grid.txt");
    grid.write_csv(&csv_path)?;

    let mut table = String::new();
    if let Some(reg) = &args.regularizer {
        table.push_str(&format!("regularizer: {reg}\n"));
    }
    table.push_str(&grid.to_text_table());
    std::fs::write(&txt_path, &table).map_err(|e| Error::io(&txt_path, e))?;
    print!("{table}");
    println!("wrote {} and {}", csv_path.display(), txt_path.display());
    Ok(())
}

pub fn export_embeddings(args: ExportArgs) -> Result<()> {
    let mut cfg = load_config(args.data.config.as_deref())?;
    apply_data_args(&mut cfg, &args.data);
    cfg.validate()?;

    let (manifest, root) = resolve_manifest(&cfg)?;
    let condition = NoiseCondition::parse(&args.condition)?;
    let bank = match condition {
        NoiseCondition::Clean => None,
        NoiseCondition::Noisy { .. } => Some(resolve_noise_bank(&cfg, Partition::Eval)?),
    };
    let (model, _opt, state) = load_checkpoint(&args.checkpoint)?;
    let checkpoint_id = format!(
        "{}@epoch{}",
        args.checkpoint.file_name().unwrap_or_default().to_string_lossy(),
        state.epoch
    );

    let dump = export_dump(
        &model,
        &manifest,
        &root,
        bank.as_ref(),
        &condition,
        &cfg.mel,
        cfg.eval.seed,
        &checkpoint_id,
        &args.out,
    )?;
    println!(
        "wrote {} ({} x {})",
        dump.matrix_path.display(),
        dump.vectors.nrows(),
        dump.vectors.ncols()
    );

    if args.project {
        let coords = project_2d(&dump.vectors)?;
        let pca_path = PathBuf::from(format!("{}.pca.csv", args.out.display()));
        let mut out = String::from("x,y,label,path\n");
        for (i, row) in coords.rows().into_iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row[0],
                row[1],
                manifest.classes[dump.labels[i]],
                dump.clip_ids[i]
            ));
        }
        std::fs::write(&pca_path, out).map_err(|e| Error::io(&pca_path, e))?;
        println!("wrote {}", pca_path.display());
    }
    Ok(())
}

pub fn mix_demo(args: MixDemoArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let speech = decode_wav(&args.speech)?;
    let noise_raw = decode_wav(&args.noise)?;
    if speech.is_empty() || noise_raw.is_empty() {
        return Err(Error::Dsp("empty input clip".into()));
    }
    // Tile or truncate the noise to the speech length.
    let samples: Vec<f64> = (0..speech.len())
        .map(|i| noise_raw.samples[i % noise_raw.len()])
        .collect();
    let noise = AudioClip::new(samples, noise_raw.sample_rate);
    let (mixed, gain) = mix_at_snr(&speech, &noise, args.snr)?;
    write_wav(&args.out, &mixed)?;
    println!("gain = {gain}");
    println!("wrote {}", args.out.display());
    if let Some(fpath) = &args.features_out {
        let features = log_mel(&mixed, &cfg.mel)?;
        write_matrix(fpath, &features.values)?;
        println!(
            "wrote {} ({} x {})",
            fpath.display(),
            features.frames(),
            features.mels()
        );
    }
    Ok(())
}

pub fn make_manifest(args: MakeManifestArgs) -> Result<()> {
    let mut cfg = load_config(args.data.config.as_deref())?;
    apply_data_args(&mut cfg, &args.data);

    if args.noise {
        let dir = cfg.data.noise_dir.clone().ok_or_else(|| {
            Error::Config("noise scan needs --noise-dir or data.noise_dir".into())
        })?;
        let partition = match args.partition.as_str() {
            "train" => Partition::Train,
            "eval" => Partition::Eval,
            other => {
                return Err(Error::Config(format!(
                    "partition must be train or eval, got {other:?}"
                )))
            }
        };
        let mut map = cfg.data.category_map.clone();
        for spec in &args.categories {
            let (pat, cat) = spec.split_once('=').ok_or_else(|| {
                Error::Config(format!("category {spec:?} is not pattern=category"))
            })?;
            map.push((pat.to_string(), cat.to_string()));
        }
        let bank = scan_noise_bank(&dir, &map, partition)?;
        save_noise_bank(&bank, &args.out)?;
        println!(
            "wrote {} ({} entries, {:.1} s total)",
            args.out.display(),
            bank.entries.len(),
            bank.total_duration
        );

        // Quick audibility check of the sampler on the fresh bank.
        let loaded = LoadedNoiseBank::load(&bank, &dir)?;
        let mut rng = kws_core::rngutil::rng_from(&[cfg.train.seed]);
        let _ = sample_noise_segment(&loaded, 1.0, &mut rng, None)?;
        return Ok(());
    }

    let root = data_root(&cfg)?;
    let subset = cfg.data.subset()?;
    let (mut manifest, report) = scan_keyword_corpus(&root, &subset)?;
    if !report.skipped.is_empty() {
        log::warn!("skipped {} undecodable files", report.skipped.len());
    }
    let val = match &cfg.data.val_list {
        Some(p) => load_split_list(p)?,
        None => Default::default(),
    };
    let test = match &cfg.data.test_list {
        Some(p) => load_split_list(p)?,
        None => Default::default(),
    };
    if !val.is_empty() || !test.is_empty() {
        manifest = assign_splits(&manifest, &val, &test)?;
    }
    save_manifest(&manifest, &args.out)?;
    let (n_train, n_val, n_test) = manifest.split_counts();
    println!(
        "wrote {} ({} classes, {n_train} train / {n_val} val / {n_test} test, {} skipped)",
        args.out.display(),
        manifest.classes.len(),
        report.skipped.len()
    );
    Ok(())
}
