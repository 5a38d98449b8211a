//! Epoch planning and dual-view batch assembly.
//!
//! Every sample contributes two independently augmented views. View seeds
//! derive from (global seed, epoch, batch index, view index) so batches are
//! reproducible regardless of how the work is scheduled.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataio::{LoadedNoiseBank, Manifest, Split};
use crate::dsp::{augment_view, decode_wav, AugmentPolicy, FeatureMap, MelFrontend};
use crate::error::{Error, Result};
use crate::rngutil;

const EPOCH_TAG: u64 = 0x65706f6368; // "epoch"
const VIEW_TAG: u64 = 0x76696577; // "view"

/// One training batch: `2B` feature maps with labels and source indices.
pub struct ViewBatch {
    pub features: Vec<FeatureMap>,
    pub labels: Vec<usize>,
    /// Manifest entry index of each view's source sample.
    pub view_of: Vec<usize>,
}

/// Draws without-replacement batches of manifest train entries and builds
/// their augmented views.
pub struct Batcher<'a> {
    manifest: &'a Manifest,
    root: &'a Path,
    bank: &'a LoadedNoiseBank,
    frontend: &'a MelFrontend,
    policy: &'a AugmentPolicy,
    train_indices: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl<'a> Batcher<'a> {
    pub fn new(
        manifest: &'a Manifest,
        root: &'a Path,
        bank: &'a LoadedNoiseBank,
        frontend: &'a MelFrontend,
        policy: &'a AugmentPolicy,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::Train("batch_size must be at least 2".into()));
        }
        let train_indices: Vec<usize> = manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Split::Train)
            .map(|(i, _)| i)
            .collect();
        if train_indices.len() < batch_size {
            return Err(Error::Train(format!(
                "{} train entries is fewer than the batch size {batch_size}",
                train_indices.len()
            )));
        }
        Ok(Self {
            manifest,
            root,
            bank,
            frontend,
            policy,
            train_indices,
            batch_size,
            seed,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_indices.len()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.train_indices.len().div_ceil(self.batch_size)
    }

    /// Shuffled entry indices for an epoch, chunked into batches. The last
    /// batch may be short; each train entry appears exactly once.
    pub fn epoch_plan(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order = self.train_indices.clone();
        let mut rng = rngutil::rng_from(&[self.seed, EPOCH_TAG, epoch as u64]);
        order.shuffle(&mut rng);
        order
            .chunks(self.batch_size)
            .map(|chunk| chunk.to_vec())
            .collect()
    }

    /// Assemble the dual-view batch for `entries` (manifest indices).
    /// Samples are augmented in parallel; per-view seeds make the result
    /// independent of scheduling.
    pub fn make_batch(
        &self,
        epoch: usize,
        batch_idx: usize,
        entries: &[usize],
    ) -> Result<ViewBatch> {
        let per_sample: Vec<(usize, [FeatureMap; 2])> = entries
            .par_iter()
            .enumerate()
            .map(|(j, &entry_idx)| {
                let entry = &self.manifest.entries[entry_idx];
                let label = self.manifest.class_index(&entry.label).ok_or_else(|| {
                    Error::Train(format!("label {:?} missing from class list", entry.label))
                })?;
                let clip = decode_wav(&self.root.join(&entry.path))?;
                let mut views = Vec::with_capacity(2);
                for v in 0..2u64 {
                    let view_idx = 2 * j as u64 + v;
                    let mut rng = rngutil::rng_from(&[
                        self.seed,
                        VIEW_TAG,
                        epoch as u64,
                        batch_idx as u64,
                        view_idx,
                    ]);
                    views.push(augment_view(
                        &clip,
                        self.bank,
                        &mut rng,
                        self.policy,
                        self.frontend,
                    )?);
                }
                let second = views.pop().unwrap();
                let first = views.pop().unwrap();
                Ok((label, [first, second]))
            })
            .collect::<Result<_>>()?;

        let mut features = Vec::with_capacity(entries.len() * 2);
        let mut labels = Vec::with_capacity(entries.len() * 2);
        let mut view_of = Vec::with_capacity(entries.len() * 2);
        for ((label, views), &entry_idx) in per_sample.into_iter().zip(entries) {
            for fm in views {
                features.push(fm);
                labels.push(label);
                view_of.push(entry_idx);
            }
        }
        Ok(ViewBatch {
            features,
            labels,
            view_of,
        })
    }
}
