use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use log::info;

use super::config::{RunConfig, Strategy};
use super::metrics::{confusion, report, EvalReport};
use crate::binio::{read_file, write_file};
use crate::dataset::{generate_dataset, load_clip, load_manifest, DatasetManifest, Split, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::flow::FlowStack;
use crate::fusion::{
    estimate_priors, interleave_features, l2_normalize, late_fuse, svm_predict, train_linear_svm, FusedFeature,
    SvmModel,
};
use crate::hashing::{derive_seed, short_hash};
use crate::scores::ScoreVector;
use crate::streams::{
    build_stream, channel_means, compute_clip_flows, history_csv, sample_taus, train_stream, ClipSamples,
    SampleSource, StreamInputs, StreamKind, StreamModel,
};
use crate::tensor::softmax;

const CHECKPOINT_FILE: &str = "model.ckpt";
const HISTORY_FILE: &str = "history.csv";
const LOCK_FILE: &str = ".lock";

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Config(format!(
                    "{} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )),
                _ => Error::io(&path, e),
            })?;
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Outcome of evaluating one strategy on the test split.
#[derive(Clone, Debug)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub report: EvalReport,
    /// Training accuracy of the mid-level SVM on its own samples.
    pub svm_train_accuracy: Option<f64>,
}

/// Cached, content-addressed stages: dataset, flows, streams and SVM.
/// Stage keys hash their own settings together with upstream keys.
pub struct Pipeline {
    cfg: RunConfig,
    cache: PathBuf,
    manifest: Option<DatasetManifest>,
    inputs: Option<StreamInputs>,
    with_flows: bool,
    streams: BTreeMap<&'static str, StreamModel<f32>>,
    allow_training: bool,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn text_file(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cache: cfg.cache_dir(),
            cfg,
            manifest: None,
            inputs: None,
            with_flows: false,
            streams: BTreeMap::new(),
            allow_training: true,
        })
    }

    /// When off, a missing stream checkpoint is an error instead of a
    /// training run.
    pub fn allow_training(mut self, allow: bool) -> Self {
        self.allow_training = allow;
        self
    }

    /// Loaded clips and flows, once [`Pipeline::ensure_inputs`] has run.
    pub fn inputs(&self) -> Option<&StreamInputs> {
        self.inputs.as_ref()
    }

    pub fn manifest(&self) -> Option<&DatasetManifest> {
        self.manifest.as_ref()
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Hash of every setting that affects results (not output paths).
    pub fn config_hash(&self) -> String {
        let text = self.cfg.to_text();
        let text: Vec<&str> = text
            .lines()
            .filter(|l| !(l.starts_with("run.out") || l.starts_with("run.cache") || l.starts_with("run.jobs") || l.starts_with("run.strategy")))
            .collect();
        short_hash(&text)
    }

    pub fn data_key(&self) -> String {
        self.cfg.dataset.hash()
    }

    pub fn flow_key(&self) -> String {
        short_hash(&[self.data_key(), format!("{:?}", self.cfg.flow)])
    }

    pub fn stream_key(&self, kind: StreamKind) -> String {
        let mut parts = vec![
            self.data_key(),
            self.cfg.stream_config(kind).to_text(),
            format!("{:?}", self.cfg.train),
            format!("seed={};L={}", self.cfg.seed, self.cfg.flow_len),
        ];
        if kind != StreamKind::Spatial {
            parts.push(self.flow_key());
            parts.push(format!("{:?}", self.cfg.flow_norm));
        }
        short_hash(&parts)
    }

    fn svm_key(&self) -> String {
        short_hash(&[
            self.stream_key(StreamKind::Spatial),
            self.stream_key(StreamKind::Temporal),
            format!("{:?};samples={}", self.cfg.svm, self.cfg.svm_samples),
        ])
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.cache.join("data").join(self.data_key())
    }

    pub fn flow_dir(&self) -> PathBuf {
        self.cache.join("flow").join(self.flow_key())
    }

    pub fn stream_dir(&self, kind: StreamKind) -> PathBuf {
        self.cache.join("streams").join(format!("{kind}-{}", self.stream_key(kind)))
    }

    pub fn checkpoint_path(&self, kind: StreamKind) -> PathBuf {
        self.stream_dir(kind).join(CHECKPOINT_FILE)
    }

    /// Generates the dataset unless a matching one is cached.
    pub fn ensure_dataset(&mut self) -> Result<&DatasetManifest> {
        if self.manifest.is_none() {
            let m = stage("gen-data", self.load_or_generate_dataset())?;
            self.manifest = Some(m);
        }
        Ok(self.manifest.as_ref().expect("manifest set"))
    }

    fn load_or_generate_dataset(&self) -> Result<DatasetManifest> {
        let dir = self.dataset_dir();
        if let Ok(m) = load_manifest(&dir.join(MANIFEST_FILE)) {
            if m.config_hash == self.data_key() {
                return Ok(m);
            }
        }
        info!("generating dataset in {}", dir.display());
        let _ = fs::remove_dir_all(&dir);
        generate_dataset(&self.cfg.dataset, &dir)
    }

    /// Loads every clip and, if `flows`, every flow stack, computing the
    /// ones that are missing or unreadable.
    pub fn ensure_inputs(&mut self, flows: bool) -> Result<()> {
        if self.inputs.is_some() && (self.with_flows || !flows) {
            return Ok(());
        }
        self.ensure_dataset()?;
        let manifest = self.manifest.clone().expect("dataset loaded");
        let mut clips = Vec::with_capacity(manifest.entries.len());
        let mut regenerated = false;
        for entry in &manifest.entries {
            let path = manifest.clip_path(entry);
            let clip = match load_clip(&path) {
                Ok(c) => c,
                Err(e) if !regenerated => {
                    // A damaged cache: regenerate the dataset once and retry.
                    info!("clip {} unreadable ({e}); regenerating dataset", path.display());
                    let _ = fs::remove_dir_all(self.dataset_dir());
                    stage("gen-data", generate_dataset(&self.cfg.dataset, &self.dataset_dir()))?;
                    regenerated = true;
                    stage("gen-data", load_clip(&path))?
                }
                Err(e) => return Err(e.in_stage("gen-data")),
            };
            if clip.label != entry.label {
                return Err(Error::data(format!("{} has label {}, manifest says {}", path.display(), clip.label, entry.label))
                    .in_stage("gen-data"));
            }
            clips.push(ClipSamples { clip, flows: None });
        }
        if flows {
            let dir = self.flow_dir();
            for (i, (entry, c)) in manifest.entries.iter().zip(clips.iter_mut()).enumerate() {
                let stem = entry.path.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
                let path = dir.join(format!("{stem}.flow"));
                let expected = (c.clip.height(), c.clip.width(), c.clip.num_frames() - 1);
                let cached = read_file(&path)
                    .and_then(|b| FlowStack::<f32>::from_bytes(&b))
                    .ok()
                    .filter(|s| (s.rows(), s.cols(), s.length()) == expected && s.start() == 0);
                let stack = match cached {
                    Some(s) => s,
                    None => {
                        info!("flow {}/{}: {}", i + 1, manifest.entries.len(), entry.path.display());
                        let s = stage("compute-flow", compute_clip_flows(&c.clip, &self.cfg.flow))?;
                        stage("compute-flow", write_file(&path, &s.to_bytes()))?;
                        s
                    }
                };
                c.flows = Some(stack);
            }
        }
        self.inputs = Some(StreamInputs::new(clips, self.cfg.flow_len, self.cfg.flow_norm.clone())?);
        self.with_flows = flows;
        Ok(())
    }

    fn split_indices(&self, split: Split) -> Vec<usize> {
        let m = self.manifest.as_ref().expect("dataset loaded");
        (0..m.entries.len()).filter(|&i| m.entries[i].split == split).collect()
    }

    fn labels(&self, idx: &[usize]) -> Vec<usize> {
        let m = self.manifest.as_ref().expect("dataset loaded");
        idx.iter().map(|&i| m.entries[i].label).collect()
    }

    /// Loads the stream checkpoint or trains it.
    pub fn ensure_stream(&mut self, kind: StreamKind) -> Result<&StreamModel<f32>> {
        if !self.streams.contains_key(kind.as_str()) {
            let model = stage("train", self.load_or_train(kind))?;
            self.streams.insert(kind.as_str(), model);
        }
        Ok(&self.streams[kind.as_str()])
    }

    fn load_or_train(&mut self, kind: StreamKind) -> Result<StreamModel<f32>> {
        let path = self.checkpoint_path(kind);
        let config = self.cfg.stream_config(kind);
        if let Ok(bytes) = read_file(&path) {
            match StreamModel::<f32>::from_bytes(&bytes) {
                Ok(m) if *m.config() == config => return Ok(m),
                Ok(_) => info!("{} does not match the stream config; retraining", path.display()),
                Err(e) => info!("{} unreadable ({e}); retraining", path.display()),
            }
        }
        if !self.allow_training {
            return Err(Error::data(format!("missing checkpoint {}", path.display())));
        }
        self.ensure_inputs(kind != StreamKind::Spatial || self.with_flows)?;
        let inputs = self.inputs.as_ref().expect("inputs loaded");
        let train = self.split_indices(Split::Train);
        let tag = match kind {
            StreamKind::Spatial => 1,
            StreamKind::Temporal => 2,
            StreamKind::Early => 3,
        };
        let mut model = build_stream::<f32>(&config, derive_seed(self.cfg.seed, tag))?;
        if kind != StreamKind::Temporal {
            let means = channel_means(&inputs.view(StreamKind::Spatial), &train, 3)?;
            let mut offsets = vec![0.0f32; config.input_dims.2];
            for (o, m) in offsets.iter_mut().zip(&means) {
                *o = *m as f32;
            }
            model.set_channel_offsets(offsets)?;
        }
        let mut hyper = self.cfg.train.clone();
        hyper.sgd.seed = derive_seed(self.cfg.seed, 100 + tag);
        info!("training {kind} stream on {} clips", train.len());
        let history = train_stream(&mut model, &inputs.view(kind), &train, &hyper)?;
        if let Some(last) = history.last() {
            info!("{kind}: epoch {} loss {:.4} train accuracy {:.3}", last.epoch, last.loss, last.train_accuracy);
        }
        let dir = self.stream_dir(kind);
        text_file(&dir.join(HISTORY_FILE), &history_csv(&history))?;
        write_file(&path, &model.to_bytes())?;
        Ok(model)
    }

    /// Video-level scores from logits softmaxed in `f64`, so products of
    /// small probabilities stay representable.
    pub fn video_scores(&self, kind: StreamKind, clip: usize) -> Result<ScoreVector<f64>> {
        let model = &self.streams[kind.as_str()];
        let view = self.inputs.as_ref().expect("inputs loaded").view(kind);
        let taus = sample_taus(view.num_anchors(clip), self.cfg.eval_samples)?;
        let per = taus
            .into_iter()
            .map(|tau| {
                let logits: Vec<f64> = model.logits(&view.input(clip, tau)?)?.into_iter().map(f64::from).collect();
                softmax(&logits)
            })
            .collect::<Result<Vec<_>>>()?;
        ScoreVector::mean(&per)
    }

    fn fused_features(&self, clip: usize, taus: &[usize]) -> Result<Vec<FusedFeature<f64>>> {
        let inputs = self.inputs.as_ref().expect("inputs loaded");
        let (sv, tv) = (inputs.view(StreamKind::Spatial), inputs.view(StreamKind::Temporal));
        let (sm, tm) = (&self.streams["spatial"], &self.streams["temporal"]);
        taus.iter()
            .map(|&tau| {
                let fs = sm.extract_feature(&sv.input(clip, tau)?)?;
                let ft = tm.extract_feature(&tv.input(clip, tau)?)?;
                let cast = |f: crate::streams::StreamFeature<f32>| crate::streams::StreamFeature {
                    values: f.values.into_iter().map(f64::from).collect(),
                    source: f.source,
                };
                Ok(l2_normalize(&interleave_features(&cast(fs), &cast(ft))?))
            })
            .collect()
    }

    fn ensure_svm(&mut self) -> Result<(SvmModel<f64>, f64)> {
        let path = self.cache.join("svm").join(self.svm_key()).join("model.svm");
        let train = self.split_indices(Split::Train);
        let labels = self.labels(&train);
        let inputs = self.inputs.as_ref().expect("inputs loaded");
        let view = inputs.view(StreamKind::Spatial);
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for (&c, &y) in train.iter().zip(&labels) {
            let taus = sample_taus(view.num_anchors(c), self.cfg.svm_samples)?;
            for f in self.fused_features(c, &taus)? {
                feats.push(f);
                ys.push(y);
            }
        }
        let model = match read_file(&path).and_then(|b| SvmModel::<f64>::from_bytes(&b)) {
            Ok(m) if m.feature_len() == feats[0].values.len() => m,
            _ => {
                let n = self.cfg.fc_dims.last().copied().unwrap_or(0);
                let m = train_linear_svm(&feats, &ys, n, &self.cfg.svm)?;
                write_file(&path, &m.to_bytes())?;
                // Reload so fresh and cached runs share the stored precision.
                SvmModel::from_bytes(&m.to_bytes())?
            }
        };
        let hits = feats
            .iter()
            .zip(&ys)
            .map(|(f, &y)| svm_predict(&model, f).map(|(p, _)| usize::from(p == y)))
            .sum::<Result<usize>>()?;
        Ok((model, hits as f64 / feats.len() as f64))
    }

    /// Runs every stage `strategy` needs and evaluates the test split.
    pub fn evaluate(&mut self, strategy: Strategy) -> Result<StrategyResult> {
        self.ensure_inputs(strategy.needs_flow())?;
        for &kind in strategy.streams() {
            self.ensure_stream(kind)?;
        }
        let test = self.split_indices(Split::Test);
        let labels = self.labels(&test);
        let n = self.cfg.fc_dims.last().copied().unwrap_or(0);
        let mut svm_train_accuracy = None;
        let preds: Vec<usize> = match strategy {
            Strategy::SpatialOnly | Strategy::TemporalOnly | Strategy::Early => {
                let kind = strategy.streams()[0];
                test.iter()
                    .map(|&c| Ok(self.video_scores(kind, c)?.argmax()))
                    .collect::<Result<_>>()?
            }
            Strategy::Late => {
                let priors = estimate_priors(&self.labels(&self.split_indices(Split::Train)), n)?;
                test.iter()
                    .map(|&c| {
                        let s = self.video_scores(StreamKind::Spatial, c)?;
                        let t = self.video_scores(StreamKind::Temporal, c)?;
                        Ok(late_fuse(&s, &t, &priors)?.argmax())
                    })
                    .collect::<Result<_>>()?
            }
            Strategy::Mid => {
                let (svm, acc) = stage("svm", self.ensure_svm())?;
                svm_train_accuracy = Some(acc);
                let view = self.inputs.as_ref().expect("inputs loaded").view(StreamKind::Spatial);
                test.iter()
                    .map(|&c| {
                        let taus = sample_taus(view.num_anchors(c), self.cfg.eval_samples)?;
                        let mut votes = vec![0usize; n];
                        for f in self.fused_features(c, &taus)? {
                            votes[svm_predict(&svm, &f)?.0] += 1;
                        }
                        Ok(crate::scores::argmax(&votes))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let matrix = stage("eval", confusion(&preds, &labels, n))?;
        let report = stage("eval", report(&matrix, strategy.as_str()))?;
        Ok(StrategyResult {
            strategy,
            report,
            svm_train_accuracy,
        })
    }

    /// Report CSVs, confusion CSV and image, and the run manifest under
    /// `<out>/<strategy>/`.
    pub fn write_outputs(&self, result: &StrategyResult) -> Result<PathBuf> {
        let dir = self.cfg.out.join(result.strategy.as_str());
        let r = &result.report;
        text_file(&dir.join("report.csv"), &r.to_csv())?;
        text_file(
            &dir.join("report_ratios.csv"),
            &(EvalReport::csv_header(r.matrix.n()) + &r.csv_ratio_row()),
        )?;
        text_file(&dir.join("confusion.csv"), &r.matrix.to_csv())?;
        write_file(&dir.join("confusion.pgm"), &r.matrix.to_pgm(16)?)?;
        let mut manifest = vec![
            format!("strategy={}", result.strategy),
            format!("config_hash={}", self.config_hash()),
            format!("run_seed={}", self.cfg.seed),
            format!("dataset_seed={}", self.cfg.dataset.seed),
            format!("dataset_key={}", self.data_key()),
            "per_class_metric=recall".to_string(),
        ];
        if result.strategy.needs_flow() {
            manifest.push(format!("flow_key={}", self.flow_key()));
        }
        for &kind in result.strategy.streams() {
            manifest.push(format!("{kind}_stream_key={}", self.stream_key(kind)));
            let hist = self.stream_dir(kind).join(HISTORY_FILE);
            if let Ok(h) = fs::read(&hist) {
                write_file(&dir.join(format!("history_{kind}.csv")), &h)?;
            }
        }
        if let Some(a) = result.svm_train_accuracy {
            manifest.push(format!("svm_train_accuracy={a:.6}"));
        }
        manifest.push(format!("total_accuracy={}/{}", r.matrix.trace(), r.matrix.total()));
        text_file(&dir.join("run_manifest.txt"), &(manifest.join("\n") + "\n"))?;
        text_file(&dir.join("config.txt"), &self.cfg.to_text())?;
        Ok(dir)
    }
}

/// `method,C0..,Total` header plus one row per result.
pub fn comparison_table(results: &[StrategyResult]) -> String {
    let n = results.first().map_or(0, |r| r.report.matrix.n());
    let mut out = EvalReport::csv_header(n);
    for r in results {
        out.push_str(&r.report.csv_row());
    }
    out
}

/// Evaluates one strategy end to end and writes its outputs.
pub fn run_pipeline(cfg: RunConfig) -> Result<StrategyResult> {
    let _lock = RunLock::acquire(&cfg.out)?;
    let strategy = cfg.strategy;
    let mut p = Pipeline::new(cfg)?;
    let r = p.evaluate(strategy)?;
    p.write_outputs(&r)?;
    Ok(r)
}

/// All five strategies over shared stages, plus `comparison.csv`.
pub fn run_all(cfg: RunConfig) -> Result<Vec<StrategyResult>> {
    let _lock = RunLock::acquire(&cfg.out)?;
    let out = cfg.out.clone();
    let mut p = Pipeline::new(cfg)?;
    let mut results = Vec::new();
    for s in Strategy::ALL {
        let r = p.evaluate(s)?;
        p.write_outputs(&r)?;
        results.push(r);
    }
    text_file(&out.join("comparison.csv"), &comparison_table(&results))?;
    let mut ratios = EvalReport::csv_header(results[0].report.matrix.n());
    for r in &results {
        ratios.push_str(&r.report.csv_ratio_row());
    }
    text_file(&out.join("comparison_ratios.csv"), &ratios)?;
    Ok(results)
}
