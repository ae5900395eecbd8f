use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::flow::{FlowNormalization, FlowParams, PyramidLevels};
use crate::fusion::SvmHyper;
use crate::streams::{StreamConfig, StreamKind, TrainHyper};
use crate::tensor::SgdConfig;

/// The five compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    SpatialOnly,
    TemporalOnly,
    Early,
    Mid,
    Late,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::SpatialOnly,
        Strategy::TemporalOnly,
        Strategy::Early,
        Strategy::Mid,
        Strategy::Late,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SpatialOnly => "spatial_only",
            Strategy::TemporalOnly => "temporal_only",
            Strategy::Early => "early",
            Strategy::Mid => "mid",
            Strategy::Late => "late",
        }
    }

    /// Streams that must be trained before this strategy can be evaluated.
    pub fn streams(self) -> &'static [StreamKind] {
        match self {
            Strategy::SpatialOnly => &[StreamKind::Spatial],
            Strategy::TemporalOnly => &[StreamKind::Temporal],
            Strategy::Early => &[StreamKind::Early],
            Strategy::Mid | Strategy::Late => &[StreamKind::Spatial, StreamKind::Temporal],
        }
    }

    pub fn needs_flow(self) -> bool {
        self.streams().iter().any(|&k| k != StreamKind::Spatial)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}` (spatial_only, temporal_only, early, mid, late)")))
    }
}

/// Everything a run depends on. Parsed from `section.key = value` lines;
/// keys left out keep their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub flow: FlowParams,
    pub flow_len: usize,
    pub flow_norm: FlowNormalization,
    pub blocks: Vec<(usize, usize)>,
    pub fc_dims: Vec<usize>,
    pub train: TrainHyper,
    pub svm: SvmHyper,
    /// Anchors per clip for video-level prediction.
    pub eval_samples: usize,
    /// Anchors per training clip used as SVM training samples.
    pub svm_samples: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub out: PathBuf,
    /// Shared stage cache; defaults to `<out>/cache`.
    pub cache: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let desk = StreamConfig::desk(StreamKind::Spatial, 10, 64, 64);
        Self {
            dataset: DatasetConfig::default(),
            flow: FlowParams::default(),
            flow_len: 10,
            flow_norm: FlowNormalization::default(),
            blocks: desk.blocks,
            fc_dims: desk.fc_dims,
            train: TrainHyper {
                sgd: SgdConfig {
                    learning_rate: 0.03,
                    ..SgdConfig::default()
                },
                epochs: 30,
                ..TrainHyper::default()
            },
            svm: SvmHyper {
                c: 100.0,
                ..SvmHyper::default()
            },
            eval_samples: 5,
            svm_samples: 10,
            strategy: Strategy::Mid,
            seed: 0,
            out: PathBuf::from("out"),
            cache: None,
            jobs: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                e => Error::Config(format!("line {}: {e}", n + 1)),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.dataset;
        let f = &mut self.flow;
        let t = &mut self.train;
        match key {
            "dataset.counts" => d.class_counts = parse_list(key, v)?,
            "dataset.train_ratio" => d.train_ratio = parse(key, v)?,
            "dataset.seed" => d.seed = parse(key, v)?,
            "dataset.frames" => d.num_frames = parse(key, v)?,
            "dataset.height" => d.height = parse(key, v)?,
            "dataset.width" => d.width = parse(key, v)?,
            "dataset.noise" => d.noise_level = parse(key, v)?,
            "flow.alpha" => f.alpha = parse(key, v)?,
            "flow.gamma" => f.gamma = parse(key, v)?,
            "flow.pyramid_scale" => f.pyramid_scale = parse(key, v)?,
            "flow.levels" => {
                f.levels = if v == "auto" {
                    PyramidLevels::Auto
                } else {
                    PyramidLevels::Fixed(parse(key, v)?)
                }
            }
            "flow.outer_iterations" => f.outer_iterations = parse(key, v)?,
            "flow.inner_iterations" => f.inner_iterations = parse(key, v)?,
            "flow.sor_omega" => f.sor_omega = parse(key, v)?,
            "flow.sor_sweeps" => f.sor_sweeps = parse(key, v)?,
            "flow.presmooth_sigma" => f.presmooth_sigma = parse(key, v)?,
            "flow.robust_eps" => f.robust_eps = parse(key, v)?,
            "flow.length" => self.flow_len = parse(key, v)?,
            "flow.clip_mag" => self.flow_norm.clip_mag = parse(key, v)?,
            "flow.subtract_mean" => self.flow_norm.subtract_mean = parse(key, v)?,
            "stream.blocks" => {
                self.blocks = v
                    .split(',')
                    .map(|b| {
                        let (n, c) = b
                            .trim()
                            .split_once('x')
                            .ok_or_else(|| Error::Config(format!("block `{b}` is not NxC")))?;
                        Ok((parse(key, n)?, parse(key, c)?))
                    })
                    .collect::<Result<_>>()?
            }
            "stream.fc" => self.fc_dims = parse_list(key, v)?,
            "train.learning_rate" => t.sgd.learning_rate = parse(key, v)?,
            "train.momentum" => t.sgd.momentum = parse(key, v)?,
            "train.weight_decay" => t.sgd.weight_decay = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.frames_per_clip" => t.frames_per_clip_per_epoch = parse(key, v)?,
            "svm.c" => self.svm.c = parse(key, v)?,
            "svm.epochs" => self.svm.epochs = parse(key, v)?,
            "svm.samples_per_clip" => self.svm_samples = parse(key, v)?,
            "eval.samples" => self.eval_samples = parse(key, v)?,
            "run.strategy" => self.strategy = v.parse()?,
            "run.seed" => self.seed = parse(key, v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.cache" => self.cache = Some(PathBuf::from(v)),
            "run.jobs" => self.jobs = Some(parse(key, v)?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.flow.validate()?;
        self.train.validate()?;
        if self.flow_len == 0 || self.flow_len >= self.dataset.num_frames {
            return Err(Error::Config(format!(
                "flow length {} must be in [1, frames - 1]",
                self.flow_len
            )));
        }
        if self.eval_samples == 0 || self.svm_samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        for kind in [StreamKind::Spatial, StreamKind::Temporal, StreamKind::Early] {
            self.stream_config(kind).validate()?;
        }
        Ok(())
    }

    pub fn stream_config(&self, kind: StreamKind) -> StreamConfig {
        StreamConfig {
            kind,
            input_dims: (self.dataset.height, self.dataset.width, kind.channels(self.flow_len)),
            blocks: self.blocks.clone(),
            fc_dims: self.fc_dims.clone(),
            n_classes: self.fc_dims.last().copied().unwrap_or(0),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// All settings as `section.key = value` lines, parseable by
    /// [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let d = &self.dataset;
        let f = &self.flow;
        let t = &self.train;
        let list = |xs: &[usize]| xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let blocks: Vec<String> = self.blocks.iter().map(|(n, c)| format!("{n}x{c}")).collect();
        let levels = match f.levels {
            PyramidLevels::Auto => "auto".to_string(),
            PyramidLevels::Fixed(n) => n.to_string(),
        };
        let mut lines = vec![
            format!("dataset.counts = {}", list(&d.class_counts)),
            format!("dataset.train_ratio = {:?}", d.train_ratio),
            format!("dataset.seed = {}", d.seed),
            format!("dataset.frames = {}", d.num_frames),
            format!("dataset.height = {}", d.height),
            format!("dataset.width = {}", d.width),
            format!("dataset.noise = {:?}", d.noise_level),
            format!("flow.alpha = {:?}", f.alpha),
            format!("flow.gamma = {:?}", f.gamma),
            format!("flow.pyramid_scale = {:?}", f.pyramid_scale),
            format!("flow.levels = {levels}"),
            format!("flow.outer_iterations = {}", f.outer_iterations),
            format!("flow.inner_iterations = {}", f.inner_iterations),
            format!("flow.sor_omega = {:?}", f.sor_omega),
            format!("flow.sor_sweeps = {}", f.sor_sweeps),
            format!("flow.presmooth_sigma = {:?}", f.presmooth_sigma),
            format!("flow.robust_eps = {:?}", f.robust_eps),
            format!("flow.length = {}", self.flow_len),
            format!("flow.clip_mag = {:?}", self.flow_norm.clip_mag),
            format!("flow.subtract_mean = {}", self.flow_norm.subtract_mean),
            format!("stream.blocks = {}", blocks.join(",")),
            format!("stream.fc = {}", list(&self.fc_dims)),
            format!("train.learning_rate = {:?}", t.sgd.learning_rate),
            format!("train.momentum = {:?}", t.sgd.momentum),
            format!("train.weight_decay = {:?}", t.sgd.weight_decay),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.epochs = {}", t.epochs),
            format!("train.frames_per_clip = {}", t.frames_per_clip_per_epoch),
            format!("svm.c = {:?}", self.svm.c),
            format!("svm.epochs = {}", self.svm.epochs),
            format!("svm.samples_per_clip = {}", self.svm_samples),
            format!("eval.samples = {}", self.eval_samples),
            format!("run.strategy = {}", self.strategy),
            format!("run.seed = {}", self.seed),
            format!("run.out = {}", self.out.display()),
        ];
        if let Some(c) = &self.cache {
            lines.push(format!("run.cache = {}", c.display()));
        }
        if let Some(j) = self.jobs {
            lines.push(format!("run.jobs = {j}"));
        }
        lines.join("\n") + "\n"
    }
}
