//! The supervised training loop: dual-view batching, cosine-annealed Adam,
//! per-step metrics and checkpointing.

mod adam;
mod batch;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use batch::{Batcher, ViewBatch};
pub use checkpoint::{
    checkpoint_paths, load_checkpoint, save_checkpoint, TrainState, CHECKPOINT_VERSION,
};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{LoadedNoiseBank, Manifest, Split};
use crate::dsp::{decode_wav, fit_duration, AugmentPolicy, MelConfig, MelFrontend};
use crate::error::{Error, Result};
use crate::i2cr::{
    alpha, cross_entropy, i2cr_loss_and_grad, EmbeddingBatch, LossBreakdown, LossConfig, Pairing,
    RampSchedule,
};
use crate::model::{EncoderConfig, ModelBundle};

/// Which regularizer row a run trains: plain cross-entropy, the
/// intra-view-only contrastive term, or the full inter-intra term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    Intra,
    #[default]
    I2cr,
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Regularizer::None),
            "intra" => Ok(Regularizer::Intra),
            "i2cr" => Ok(Regularizer::I2cr),
            other => Err(Error::Config(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub seed: u64,
    pub regularizer: Regularizer,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr_init: 5e-4,
            lr_min: 1e-12,
            epochs: 100,
            seed: 17,
            regularizer: Regularizer::I2cr,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr_init > 0.0) || !(self.lr_min > 0.0) || self.lr_min > self.lr_init {
            return Err(Error::Config(
                "learning rates must satisfy 0 < lr_min <= lr_init".into(),
            ));
        }
        Ok(())
    }
}

/// Cosine annealing, applied per step, no restarts:
/// `lr_min + (lr_init - lr_min) * (1 + cos(pi * step / total)) / 2`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    if total_steps == 0 {
        return cfg.lr_init;
    }
    let progress = step as f64 / total_steps as f64;
    cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One optimization step on an assembled batch. Returns the loss record;
/// a non-finite loss aborts with the batch's seed context.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut ModelBundle,
    opt: &mut Adam,
    batch: &ViewBatch,
    epoch: usize,
    global_step: usize,
    total_steps: usize,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    sched: &RampSchedule,
) -> Result<LossBreakdown> {
    let x = model.batch_tensor(&batch.features)?;
    let out = model.forward_t(&x);
    let (ce, dlogits) = cross_entropy(&out.logits, &batch.labels)?;
    let a = alpha(epoch, sched);

    let (reg, dz) = match cfg.regularizer {
        Regularizer::None => (0.0, ndarray::Array2::zeros(out.z.raw_dim())),
        Regularizer::Intra | Regularizer::I2cr => {
            let pairing = if cfg.regularizer == Regularizer::Intra {
                Pairing::IntraOnly
            } else {
                Pairing::InterIntra
            };
            let embeds =
                EmbeddingBatch::new(out.z, batch.labels.clone(), batch.view_of.clone())?;
            i2cr_loss_and_grad(&embeds, loss_cfg, pairing)?
        }
    };

    let breakdown = LossBreakdown::compose(ce, reg, a);
    if !breakdown.total.is_finite() {
        return Err(Error::Train(format!(
            "non-finite loss (ce={ce}, reg={reg}) at epoch {epoch}, step {global_step}; \
             batch seed context ({}, epoch {epoch})",
            cfg.seed
        )));
    }

    model.zero_grad();
    model.backward(&(dz * a), &dlogits);
    opt.step(model, lr_at(global_step, total_steps, cfg));
    Ok(breakdown)
}

/// Clean (un-augmented) classification accuracy over a manifest split.
pub fn clean_accuracy(
    model: &ModelBundle,
    manifest: &Manifest,
    root: &Path,
    split: Split,
    frontend: &MelFrontend,
) -> Result<f64> {
    let entries = manifest.entries_for(split);
    if entries.is_empty() {
        return Err(Error::Train(format!("split {split:?} is empty")));
    }
    let mut correct = 0usize;
    for chunk in entries.chunks(64) {
        let mut feats = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        for e in chunk {
            let clip = fit_duration(&decode_wav(&root.join(&e.path))?, 1.0);
            feats.push(frontend.process(&clip)?);
            labels.push(manifest.class_index(&e.label).ok_or_else(|| {
                Error::Train(format!("label {:?} missing from class list", e.label))
            })?);
        }
        let h = model.encode(&feats)?;
        let logits = model.classify(&h);
        for (row, &label) in logits.rows().into_iter().zip(&labels) {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / entries.len() as f64)
}

/// Everything a training run needs.
pub struct TrainSetup<'a> {
    pub manifest: &'a Manifest,
    pub root: &'a Path,
    pub bank: &'a LoadedNoiseBank,
    pub mel: &'a MelConfig,
    pub policy: &'a AugmentPolicy,
    pub loss: &'a LossConfig,
    pub ramp: RampSchedule,
    pub encoder: &'a EncoderConfig,
    pub proj_dim: usize,
    pub train: &'a TrainConfig,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_val_accuracy: f64,
    pub last_val_accuracy: f64,
    pub metrics_csv: PathBuf,
    pub epochs_csv: PathBuf,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

/// Run the full training loop, writing per-step metrics, per-epoch
/// validation accuracy, and best/last checkpoints under `out_dir`.
pub fn train(setup: &TrainSetup, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    setup.train.validate()?;
    setup.loss.validate()?;
    setup.policy.validate()?;
    setup.encoder.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let frontend = MelFrontend::new(setup.mel, setup.manifest.sample_rate)?;
    let frames = frontend.frames_for(setup.manifest.sample_rate as usize);
    let input_shape = (frames, setup.mel.n_mels);
    let cfg = setup.train;

    let batcher = Batcher::new(
        setup.manifest,
        setup.root,
        setup.bank,
        &frontend,
        setup.policy,
        cfg.batch_size,
        cfg.seed,
    )?;
    let total_steps = cfg.epochs * batcher.batches_per_epoch();
    let sched = setup.ramp.clone();

    let n_classes = setup.manifest.classes.len();
    let (mut model, mut opt, mut state, start_epoch) = match resume {
        None => {
            let mut model = ModelBundle::new(
                setup.encoder,
                n_classes,
                setup.proj_dim,
                input_shape,
                cfg.seed,
            )?;
            let opt = Adam::new(&mut model, cfg.adam);
            let state = TrainState {
                epoch: 0,
                global_step: 0,
                best_val_accuracy: f64::NEG_INFINITY,
                seed: cfg.seed,
            };
            (model, opt, state, 0)
        }
        Some(base) => {
            let (model, opt, state) = load_checkpoint(base)?;
            if model.n_classes != n_classes {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was trained with {} classes, manifest has {n_classes}",
                    model.n_classes
                )));
            }
            if state.epoch + 1 >= cfg.epochs {
                return Err(Error::Train(format!(
                    "nothing to resume: checkpoint is at epoch {}, configured epochs {}",
                    state.epoch, cfg.epochs
                )));
            }
            let start = state.epoch + 1;
            (model, opt, state, start)
        }
    };

    let metrics_csv = out_dir.join("metrics.csv");
    let epochs_csv = out_dir.join("epochs.csv");
    let fresh = resume.is_none();
    let mut metrics = BufWriter::new(
        fs::OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(&metrics_csv)
            .map_err(|e| Error::io(&metrics_csv, e))?,
    );
    let mut epochs_log = BufWriter::new(
        fs::OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(&epochs_csv)
            .map_err(|e| Error::io(&epochs_csv, e))?,
    );
    if fresh {
        writeln!(metrics, "epoch,step,lr,alpha,ce,i2cr,total")
            .map_err(|e| Error::io(&metrics_csv, e))?;
        writeln!(epochs_log, "epoch,val_accuracy").map_err(|e| Error::io(&epochs_csv, e))?;
    }

    let best_base = out_dir.join("best");
    let last_base = out_dir.join("last");
    let mut last_val = f64::NAN;

    for epoch in start_epoch..cfg.epochs {
        let plan = batcher.epoch_plan(epoch);
        for (batch_idx, entries) in plan.iter().enumerate() {
            let batch = batcher.make_batch(epoch, batch_idx, entries)?;
            let lr = lr_at(state.global_step, total_steps, cfg);
            let b = train_step(
                &mut model,
                &mut opt,
                &batch,
                epoch,
                state.global_step,
                total_steps,
                cfg,
                setup.loss,
                &sched,
            )?;
            writeln!(
                metrics,
                "{},{},{},{},{},{},{}",
                epoch, state.global_step, lr, b.alpha, b.ce, b.i2cr, b.total
            )
            .map_err(|e| Error::io(&metrics_csv, e))?;
            state.global_step += 1;
        }
        state.epoch = epoch;

        let val = clean_accuracy(&model, setup.manifest, setup.root, Split::Val, &frontend)?;
        last_val = val;
        writeln!(epochs_log, "{epoch},{val}").map_err(|e| Error::io(&epochs_csv, e))?;
        metrics.flush().map_err(|e| Error::io(&metrics_csv, e))?;
        epochs_log.flush().map_err(|e| Error::io(&epochs_csv, e))?;

        // Ties go to the later epoch: under equal validation accuracy the
        // longer-trained model has seen more noise conditioning.
        if val >= state.best_val_accuracy {
            state.best_val_accuracy = val;
            save_checkpoint(&mut model, &opt, &state, &best_base)?;
        }
        save_checkpoint(&mut model, &opt, &state, &last_base)?;
        log::info!(
            "epoch {epoch}: val_accuracy {val:.4} (best {:.4})",
            state.best_val_accuracy
        );
    }

    Ok(TrainOutcome {
        best_val_accuracy: state.best_val_accuracy,
        last_val_accuracy: last_val,
        metrics_csv,
        epochs_csv,
        best_checkpoint: best_base,
        last_checkpoint: last_base,
    })
}
