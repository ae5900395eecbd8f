use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::clip::{generate_clip, save_clip, ClipSpec, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, short_hash};

/// Per-class video totals of the recorded reference dataset (train + test).
pub const REFERENCE_CLASS_TOTALS: [usize; NUM_CLASSES] = [185, 165, 247, 261, 178, 201];

/// Reference training share: 715 of 1237 videos.
pub const DEFAULT_TRAIN_RATIO: f64 = 715.0 / 1237.0;

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Bumped whenever rendering changes, so cached datasets are not reused.
const GENERATOR_REVISION: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub class_counts: Vec<usize>,
    pub train_ratio: f64,
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub noise_level: f64,
}

impl Default for DatasetConfig {
    /// Reference class totals at 1/10 scale.
    fn default() -> Self {
        Self {
            class_counts: REFERENCE_CLASS_TOTALS
                .iter()
                .map(|&n| (n as f64 / 10.0).round() as usize)
                .collect(),
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 2024,
            num_frames: 30,
            height: 64,
            width: 64,
            noise_level: 0.02,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_counts.len() != NUM_CLASSES {
            return Err(Error::Config(format!("expected {NUM_CLASSES} class counts, got {}", self.class_counts.len())));
        }
        if let Some(c) = self.class_counts.iter().position(|&n| n < 2) {
            return Err(Error::Config(format!("class {c} needs at least 2 clips")));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train ratio must be in (0, 1), got {}", self.train_ratio)));
        }
        self.clip_spec(0, 0).validate(2).map_err(|e| match e {
            Error::Input(m) => Error::Config(m),
            other => other,
        })
    }

    /// Canonical text used for content hashing.
    pub fn canonical(&self) -> String {
        format!(
            "gen={GENERATOR_REVISION};counts={:?};ratio={:.17e};seed={};frames={};size={}x{};noise={:.17e}",
            self.class_counts, self.train_ratio, self.seed, self.num_frames, self.height, self.width, self.noise_level
        )
    }

    pub fn hash(&self) -> String {
        short_hash(&[self.canonical()])
    }

    /// Training clips of a class with `count` clips: `round(count * ratio)`,
    /// kept within `[1, count - 1]`.
    pub fn train_count(&self, count: usize) -> usize {
        ((count as f64 * self.train_ratio).round() as usize).clamp(1, count - 1)
    }

    pub fn clip_spec(&self, class_id: usize, index: usize) -> ClipSpec {
        ClipSpec {
            class_id,
            seed: derive_seed(derive_seed(self.seed, class_id as u64 + 1), index as u64 + 1),
            num_frames: self.num_frames,
            height: self.height,
            width: self.width,
            noise_level: self.noise_level,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub config_hash: String,
}

impl DatasetManifest {
    pub fn clip_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// `(train, test)` clip counts per class.
    pub fn class_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = vec![(0, 0); NUM_CLASSES];
        for e in &self.entries {
            match e.split {
                Split::Train => counts[e.label].0 += 1,
                Split::Test => counts[e.label].1 += 1,
            }
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# config_hash={}", self.config_hash);
        for (c, (tr, te)) in self.class_counts().iter().enumerate() {
            let _ = writeln!(s, "# class C{c}: train={tr} test={te}");
        }
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}", e.path.display(), e.label, e.split.as_str());
        }
        s
    }
}

/// Renders every clip, writes them under `dir/clips/` and the manifest to
/// `dir/manifest.tsv`.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let mut jobs = Vec::new();
    let mut entries = Vec::new();
    for (class_id, &count) in config.class_counts.iter().enumerate() {
        let mut order: Vec<usize> = (0..count).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1000 + class_id as u64));
        order.shuffle(&mut rng);
        let n_train = config.train_count(count);
        let mut split = vec![Split::Test; count];
        for &i in &order[..n_train] {
            split[i] = Split::Train;
        }
        for (index, split) in split.into_iter().enumerate() {
            let rel = PathBuf::from(format!("clips/c{class_id}_{index:04}.clip"));
            jobs.push((config.clip_spec(class_id, index), rel.clone()));
            entries.push(ManifestEntry {
                path: rel,
                label: class_id,
                split,
            });
        }
    }
    jobs.par_iter().try_for_each(|(spec, rel)| {
        let clip = generate_clip(spec)?;
        save_clip(&clip, &dir.join(rel))
    })?;
    let manifest = DatasetManifest {
        root: dir.to_path_buf(),
        entries,
        seed: config.seed,
        config_hash: config.hash(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Parses a manifest file; every referenced clip must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seed = None;
    let mut config_hash = None;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("seed=") {
                seed = v.parse().ok();
            } else if let Some(v) = comment.strip_prefix("config_hash=") {
                config_hash = Some(v.to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::data(format!("{}:{}: malformed manifest line", path.display(), lineno + 1));
        let mut fields = line.split('\t');
        let (p, l, s) = (fields.next(), fields.next(), fields.next());
        let (Some(p), Some(l), Some(s), None) = (p, l, s, fields.next()) else {
            return Err(bad());
        };
        let label: usize = l.parse().map_err(|_| bad())?;
        if label >= NUM_CLASSES {
            return Err(bad());
        }
        let split = Split::parse(s).ok_or_else(bad)?;
        let rel = PathBuf::from(p);
        if !root.join(&rel).is_file() {
            return Err(Error::data(format!("manifest references missing clip {}", root.join(&rel).display())));
        }
        entries.push(ManifestEntry { path: rel, label, split });
    }
    Ok(DatasetManifest {
        root,
        entries,
        seed: seed.ok_or_else(|| Error::data(format!("{}: missing seed header", path.display())))?,
        config_hash: config_hash.ok_or_else(|| Error::data(format!("{}: missing config_hash header", path.display())))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts_follow_reference_proportions() {
        let c = DatasetConfig::default();
        assert_eq!(c.class_counts, vec![19, 17, 25, 26, 18, 20]);
        let train: usize = c.class_counts.iter().map(|&n| c.train_count(n)).sum();
        let total: usize = c.class_counts.iter().sum();
        assert!((train as f64 / total as f64 - 0.578).abs() < 0.01);
        for &n in &c.class_counts {
            assert!((c.train_count(n) as f64 - n as f64 * c.train_ratio).abs() <= 1.0);
        }
    }

    #[test]
    fn ten_per_class_at_sixty_percent() {
        let c = DatasetConfig {
            class_counts: vec![10; 6],
            train_ratio: 0.6,
            ..DatasetConfig::default()
        };
        assert_eq!(c.train_count(10), 6);
    }

    #[test]
    fn rejects_tiny_classes() {
        let c = DatasetConfig {
            class_counts: vec![1, 2, 2, 2, 2, 2],
            ..DatasetConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
