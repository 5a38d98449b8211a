//! Noise-grid evaluation and embedding export.
//!
//! Each test clip is mixed with a noise segment chosen deterministically
//! from (clip path, source name, SNR, eval seed), so every model under
//! comparison sees exactly the same noisy test set.

mod matrixio;
mod pca;

pub use matrixio::{read_matrix, write_matrix};
pub use pca::project_2d;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataio::{sample_noise_segment, LoadedNoiseBank, Manifest, Split};
use crate::dsp::{decode_wav, fit_duration, mix_at_snr, FeatureMap, MelConfig, MelFrontend};
use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::rngutil;

/// One noise source in the evaluation grid, or the clean condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSource {
    pub name: String,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub clean: bool,
}

impl EvalSource {
    pub fn clean() -> Self {
        Self {
            name: "clean".into(),
            category: None,
            clean: true,
        }
    }

    pub fn noise(name: &str, category: Option<&str>) -> Self {
        Self {
            name: name.into(),
            category: category.map(str::to_string),
            clean: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub sources: Vec<EvalSource>,
    pub snrs_db: Vec<f64>,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            sources: vec![EvalSource::clean(), EvalSource::noise("noise", None)],
            snrs_db: vec![-10.0, -5.0, 0.0, 20.0],
            seed: 2024,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("eval spec has no sources".into()));
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.sources {
            if s.name.is_empty() || s.name.contains(',') {
                return Err(Error::Config(format!(
                    "source name {:?} must be non-empty and comma-free",
                    s.name
                )));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate source name {:?}", s.name)));
            }
        }
        if self.snrs_db.is_empty() && self.sources.iter().any(|s| !s.clean) {
            return Err(Error::Config(
                "snrs_db must be non-empty when a noise source is present".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that can classify feature maps and expose the latent used for
/// embedding dumps. Implemented by the model bundle; tests plug in stubs.
pub trait Scorer {
    fn n_classes(&self) -> usize;
    /// Returns (latents h, logits) for a chunk of feature maps.
    fn score(&self, feats: &[FeatureMap]) -> Result<(Array2<f64>, Array2<f64>)>;
}

impl Scorer for ModelBundle {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn score(&self, feats: &[FeatureMap]) -> Result<(Array2<f64>, Array2<f64>)> {
        let h = self.encode(feats)?;
        let logits = self.classify(&h);
        Ok((h, logits))
    }
}

/// One grid cell. Accuracy is the exact ratio of the stored counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub source: String,
    pub snr_db: Option<f64>,
    pub n: usize,
    pub correct: usize,
}

impl GridCell {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyGrid {
    pub cells: Vec<GridCell>,
}

impl AccuracyGrid {
    pub fn cell(&self, source: &str, snr_db: Option<f64>) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.source == source && c.snr_db == snr_db)
    }

    /// Canonical CSV: `noise_source,snr_db,n,correct,accuracy`; the clean
    /// condition leaves `snr_db` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("noise_source,snr_db,n,correct,accuracy\n");
        for c in &self.cells {
            let snr = c.snr_db.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.source,
                snr,
                c.n,
                c.correct,
                c.accuracy()
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Aligned table with sources as rows and SNR columns, for eyeballing.
    pub fn to_text_table(&self) -> String {
        let mut snrs: Vec<f64> = Vec::new();
        for c in &self.cells {
            if let Some(s) = c.snr_db {
                if !snrs.contains(&s) {
                    snrs.push(s);
                }
            }
        }
        let has_clean = self.cells.iter().any(|c| c.snr_db.is_none());
        let mut sources: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !sources.contains(&c.source.as_str()) {
                sources.push(&c.source);
            }
        }

        let width = 9;
        let name_width = sources
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(6)
            .max("source".len());
        let mut out = format!("{:<name_width$}", "source");
        for s in &snrs {
            out.push_str(&format!("{:>width$}", format!("{s} dB")));
        }
        if has_clean {
            out.push_str(&format!("{:>width$}", "clean"));
        }
        out.push('\n');
        for src in sources {
            out.push_str(&format!("{src:<name_width$}"));
            for s in &snrs {
                match self.cell(src, Some(*s)) {
                    Some(c) => out.push_str(&format!("{:>width$.3}", c.accuracy())),
                    None => out.push_str(&format!("{:>width$}", "-")),
                }
            }
            if has_clean {
                match self.cell(src, None) {
                    Some(c) => out.push_str(&format!("{:>width$.3}", c.accuracy())),
                    None => out.push_str(&format!("{:>width$}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text_table()).map_err(|e| Error::io(path, e))
    }
}

const EVAL_TAG: u64 = 0x6576616c; // "eval"

fn noise_rng(seed: u64, clip_path: &str, source: &str, snr_db: f64) -> rand_chacha::ChaCha8Rng {
    let snr_key = (snr_db * 1000.0).round() as i64 as u64;
    rngutil::rng_from(&[
        seed,
        EVAL_TAG,
        rngutil::fnv1a(clip_path.as_bytes()),
        rngutil::fnv1a(source.as_bytes()),
        snr_key,
    ])
}

fn features_for_condition(
    clip_path: &str,
    root: &Path,
    frontend: &MelFrontend,
    bank: Option<&LoadedNoiseBank>,
    source: &EvalSource,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<FeatureMap> {
    let clip = fit_duration(&decode_wav(&root.join(clip_path))?, 1.0);
    if source.clean {
        return frontend.process(&clip);
    }
    let snr = snr_db.expect("noise source requires an SNR");
    let bank = bank.ok_or_else(|| {
        Error::Eval(format!("source {:?} needs a noise bank", source.name))
    })?;
    let mut rng = noise_rng(seed, clip_path, &source.name, snr);
    let segment = sample_noise_segment(bank, 1.0, &mut rng, source.category.as_deref())?;
    let (mixed, _gain) = mix_at_snr(&clip, &segment, snr)?;
    frontend.process(&mixed)
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

/// Accuracy over the test split for every (source, SNR) condition.
/// Evaluation applies no training augmentations; with a fixed spec seed the
/// grid is identical across runs and across models.
pub fn evaluate_grid(
    scorer: &dyn Scorer,
    manifest: &Manifest,
    root: &Path,
    bank: Option<&LoadedNoiseBank>,
    spec: &EvalSpec,
    mel: &MelConfig,
) -> Result<AccuracyGrid> {
    spec.validate()?;
    if scorer.n_classes() != manifest.classes.len() {
        return Err(Error::Eval(format!(
            "model has {} classes, manifest has {}",
            scorer.n_classes(),
            manifest.classes.len()
        )));
    }
    let entries = manifest.entries_for(Split::Test);
    if entries.is_empty() {
        return Err(Error::Eval("test split is empty".into()));
    }
    let frontend = MelFrontend::new(mel, manifest.sample_rate)?;

    let mut cells = Vec::new();
    for source in &spec.sources {
        let snrs: Vec<Option<f64>> = if source.clean {
            vec![None]
        } else {
            spec.snrs_db.iter().map(|&s| Some(s)).collect()
        };
        for snr in snrs {
            let mut correct = 0usize;
            for chunk in entries.chunks(64) {
                let mut feats = Vec::with_capacity(chunk.len());
                let mut labels = Vec::with_capacity(chunk.len());
                for e in chunk {
                    feats.push(features_for_condition(
                        &e.path, root, &frontend, bank, source, snr, spec.seed,
                    )?);
                    labels.push(manifest.class_index(&e.label).unwrap());
                }
                let (_h, logits) = scorer.score(&feats)?;
                for (row, &label) in logits.rows().into_iter().zip(&labels) {
                    if argmax(row) == label {
                        correct += 1;
                    }
                }
            }
            cells.push(GridCell {
                source: source.name.clone(),
                snr_db: snr,
                n: entries.len(),
                correct,
            });
        }
    }
    Ok(AccuracyGrid { cells })
}

/// The noise condition an embedding dump was captured under.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseCondition {
    Clean,
    Noisy {
        source: String,
        category: Option<String>,
        snr_db: f64,
    },
}

impl NoiseCondition {
    /// Parse `clean` or `<source>@<snr>`; the source `any` draws from the
    /// whole bank, any other name selects that category.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "clean" {
            return Ok(NoiseCondition::Clean);
        }
        let (name, snr) = s.split_once('@').ok_or_else(|| {
            Error::Config(format!(
                "condition {s:?} is neither \"clean\" nor \"<source>@<snr>\""
            ))
        })?;
        let snr_db: f64 = snr
            .parse()
            .map_err(|_| Error::Config(format!("bad SNR in condition {s:?}")))?;
        let category = if name == "any" { None } else { Some(name.to_string()) };
        Ok(NoiseCondition::Noisy {
            source: name.to_string(),
            category,
            snr_db,
        })
    }

    pub fn label(&self) -> String {
        match self {
            NoiseCondition::Clean => "clean".into(),
            NoiseCondition::Noisy { source, snr_db, .. } => format!("{source}@{snr_db}"),
        }
    }
}

/// Files written by an embedding export.
#[derive(Debug, Clone)]
pub struct EmbeddingDump {
    pub vectors: Array2<f64>,
    pub labels: Vec<usize>,
    pub clip_ids: Vec<String>,
    pub matrix_path: PathBuf,
    pub labels_path: PathBuf,
    pub meta_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct DumpMeta {
    checkpoint: String,
    condition: String,
    rows: usize,
    dim: usize,
}

/// Export one latent vector per test clip under a noise condition:
/// `<base>.mat` (dense matrix), `<base>.labels.jsonl` (row/path/label),
/// `<base>.meta.json` (checkpoint id and condition).
pub fn export_embeddings(
    scorer: &dyn Scorer,
    manifest: &Manifest,
    root: &Path,
    bank: Option<&LoadedNoiseBank>,
    condition: &NoiseCondition,
    mel: &MelConfig,
    seed: u64,
    checkpoint_id: &str,
    out_base: &Path,
) -> Result<EmbeddingDump> {
    let entries = manifest.entries_for(Split::Test);
    if entries.is_empty() {
        return Err(Error::Eval("test split is empty".into()));
    }
    let frontend = MelFrontend::new(mel, manifest.sample_rate)?;
    let source = match condition {
        NoiseCondition::Clean => EvalSource::clean(),
        NoiseCondition::Noisy {
            source, category, ..
        } => EvalSource::noise(source, category.as_deref()),
    };
    let snr = match condition {
        NoiseCondition::Clean => None,
        NoiseCondition::Noisy { snr_db, .. } => Some(*snr_db),
    };

    let mut rows: Vec<Array2<f64>> = Vec::new();
    let mut labels = Vec::with_capacity(entries.len());
    let mut clip_ids = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(64) {
        let mut feats = Vec::with_capacity(chunk.len());
        for e in chunk {
            feats.push(features_for_condition(
                &e.path, root, &frontend, bank, &source, snr, seed,
            )?);
            labels.push(manifest.class_index(&e.label).unwrap());
            clip_ids.push(e.path.clone());
        }
        let (h, _logits) = scorer.score(&feats)?;
        rows.push(h);
    }
    let dim = rows[0].ncols();
    let mut vectors = Array2::zeros((entries.len(), dim));
    let mut at = 0;
    for block in rows {
        let n = block.nrows();
        vectors
            .slice_mut(ndarray::s![at..at + n, ..])
            .assign(&block);
        at += n;
    }

    let matrix_path = PathBuf::from(format!("{}.mat", out_base.display()));
    let labels_path = PathBuf::from(format!("{}.labels.jsonl", out_base.display()));
    let meta_path = PathBuf::from(format!("{}.meta.json", out_base.display()));
    write_matrix(&matrix_path, &vectors)?;

    let mut lf = fs::File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    for (row, (label, path)) in labels.iter().zip(&clip_ids).enumerate() {
        let rec = serde_json::json!({
            "row": row,
            "path": path,
            "label": manifest.classes[*label],
            "label_index": label,
        });
        writeln!(lf, "{rec}").map_err(|e| Error::io(&labels_path, e))?;
    }
    let meta = DumpMeta {
        checkpoint: checkpoint_id.to_string(),
        condition: condition.label(),
        rows: entries.len(),
        dim,
    };
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Eval(e.to_string()))?,
    )
    .map_err(|e| Error::io(&meta_path, e))?;

    Ok(EmbeddingDump {
        vectors,
        labels,
        clip_ids,
        matrix_path,
        labels_path,
        meta_path,
    })
}
