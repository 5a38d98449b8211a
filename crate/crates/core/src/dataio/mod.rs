//! Corpus ingestion: keyword manifests, split assignment, noise banks and
//! deterministic noise segment sampling.
//!
//! Manifests store paths relative to the corpus root with forward slashes,
//! matching the list files that ship with the speech-commands corpus.

mod noise;

pub use noise::{
    load_noise_bank, sample_noise_segment, save_noise_bank, scan_noise_bank, LoadedNoiseBank,
    NoiseBank, NoiseEntry, Partition,
};

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = crate::dsp::SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub split: Split,
}

/// The corpus index: one entry per audio file plus the ordered class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub classes: Vec<String>,
    pub sample_rate: u32,
}

impl Manifest {
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn entries_for(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for e in &self.entries {
            match e.split {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !self.classes.iter().any(|c| c == &e.label) {
                return Err(Error::Manifest(format!(
                    "entry {} has label {:?} not in class list",
                    e.path, e.label
                )));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip path {}", e.path)));
            }
        }
        Ok(())
    }
}

/// A named set of keyword classes, e.g. the 10-command subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubset {
    pub name: String,
    pub members: Vec<String>,
}

impl ClassSubset {
    /// The common 10-command vocabulary.
    pub fn ten_commands() -> Self {
        let members = ["up", "down", "left", "right", "yes", "no", "on", "off", "go", "stop"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Self {
            name: "10".into(),
            members,
        }
    }

    /// The full 35-word speech-commands vocabulary.
    pub fn all_words() -> Self {
        let members = [
            "backward", "bed", "bird", "cat", "dog", "down", "eight", "five", "follow", "forward",
            "four", "go", "happy", "house", "learn", "left", "marvin", "nine", "no", "off", "on",
            "one", "right", "seven", "sheila", "six", "stop", "three", "tree", "two", "up",
            "visual", "wow", "yes", "zero",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Self {
            name: "35".into(),
            members,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Config("class subset has no members".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.members {
            if m.is_empty() {
                return Err(Error::Config("empty class name in subset".into()));
            }
            if !seen.insert(m.as_str()) {
                return Err(Error::Config(format!("duplicate class {m:?} in subset")));
            }
        }
        Ok(())
    }
}

/// Files seen but skipped during a scan, with reasons.
#[derive(Debug, Clone, Default)]
pub struct ScanReport {
    pub scanned: usize,
    pub skipped: Vec<(String, String)>,
}

fn rel_path(class: &str, file_name: &str) -> String {
    format!("{class}/{file_name}")
}

/// Enumerate the corpus under `root`, one subdirectory per keyword.
///
/// Every subset member must have a directory. Files that fail a WAV header
/// check are skipped with a warning and counted in the report. All entries
/// start in the train split; entries are ordered lexicographically by path
/// and classes keep the subset order.
pub fn scan_keyword_corpus(root: &Path, subset: &ClassSubset) -> Result<(Manifest, ScanReport)> {
    subset.validate()?;
    if !root.is_dir() {
        return Err(Error::Manifest(format!(
            "corpus root {} does not exist",
            root.display()
        )));
    }
    let mut entries = Vec::new();
    let mut report = ScanReport::default();
    for class in &subset.members {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Manifest(format!(
                "missing directory for class {class:?} under {}",
                root.display()
            )));
        }
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|r| r.ok())
            .filter(|d| d.path().is_file())
            .filter_map(|d| d.file_name().into_string().ok())
            .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
            .collect();
        names.sort();
        for name in names {
            report.scanned += 1;
            let path = dir.join(&name);
            match hound::WavReader::open(&path) {
                Ok(_) => entries.push(ManifestEntry {
                    path: rel_path(class, &name),
                    label: class.clone(),
                    split: Split::Train,
                }),
                Err(e) => {
                    log::warn!("skipping undecodable {}: {e}", path.display());
                    report.skipped.push((rel_path(class, &name), e.to_string()));
                }
            }
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        entries,
        classes: subset.members.clone(),
        sample_rate: SAMPLE_RATE,
    };
    manifest.validate()?;
    Ok((manifest, report))
}

/// Assign validation/test splits from list files of relative paths.
/// Entries in neither list stay (or return to) train, so the operation is
/// idempotent and preserves the entry multiset.
pub fn assign_splits(
    manifest: &Manifest,
    val_list: &HashSet<String>,
    test_list: &HashSet<String>,
) -> Result<Manifest> {
    if let Some(dup) = val_list.intersection(test_list).next() {
        return Err(Error::Manifest(format!(
            "path {dup:?} appears in both validation and test lists"
        )));
    }
    let mut out = manifest.clone();
    for e in &mut out.entries {
        e.split = if val_list.contains(&e.path) {
            Split::Val
        } else if test_list.contains(&e.path) {
            Split::Test
        } else {
            Split::Train
        };
    }
    let present: HashSet<&str> = out.entries.iter().map(|e| e.path.as_str()).collect();
    let missing = val_list
        .iter()
        .chain(test_list.iter())
        .filter(|p| !present.contains(p.as_str()))
        .count();
    if missing > 0 {
        log::warn!("{missing} split-list paths are not in the manifest");
    }
    Ok(out)
}

/// Read a split list file: one relative path per line, blank lines skipped,
/// backslashes normalized.
pub fn load_split_list(path: &Path) -> Result<HashSet<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut set = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() {
            set.insert(t.replace('\\', "/"));
        }
    }
    Ok(set)
}

/// Persist a manifest as JSON-lines, one `{path, label, split}` per entry.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in &manifest.entries {
        let line = serde_json::to_string(e).map_err(|e| Error::Manifest(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Load a JSON-lines manifest. Classes are reconstructed in first-appearance
/// order, which for scanned manifests is the original subset order when that
/// order is alphabetical, and otherwise first appearance over the
/// lexicographically sorted entries.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(&line)
            .map_err(|err| Error::Manifest(format!("{}:{}: {err}", path.display(), i + 1)))?;
        if !classes.iter().any(|c| c == &e.label) {
            classes.push(e.label.clone());
        }
        entries.push(e);
    }
    let manifest = Manifest {
        entries,
        classes,
        sample_rate: SAMPLE_RATE,
    };
    manifest.validate()?;
    Ok(manifest)
}
