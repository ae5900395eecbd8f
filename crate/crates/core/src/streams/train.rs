use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::data::{sample_taus, SampleSource};
use super::model::StreamModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;
use crate::tensor::{softmax_cross_entropy, Gradients, Sgd, SgdConfig, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub frames_per_clip_per_epoch: usize,
    /// Stop once an epoch's running training accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            batch_size: 16,
            epochs: 30,
            frames_per_clip_per_epoch: 2,
            stop_at_accuracy: None,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 || self.epochs == 0 || self.frames_per_clip_per_epoch == 0 {
            return Err(Error::Config(
                "batch_size, epochs and frames_per_clip_per_epoch must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// `epoch,loss,train_accuracy` with a header row.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_accuracy\n");
    for h in history {
        out.push_str(&format!("{},{:.6},{:.6}\n", h.epoch, h.loss, h.train_accuracy));
    }
    out
}

struct SampleResult<T> {
    loss: f64,
    correct: bool,
    grads: Gradients<T>,
}

fn sample_gradient<T: Scalar>(
    model: &StreamModel<T>,
    source: &dyn SampleSource,
    clip: usize,
    tau: usize,
) -> Result<SampleResult<T>> {
    let label = source.label(clip);
    let x = model.prepare(&source.input(clip, tau)?.cast())?;
    let net = model.network();
    let trace = net.forward_trace(&x)?;
    let (loss, probs, grad) = softmax_cross_entropy(trace.output.data(), label)?;
    let mut grads = net.zero_gradients();
    net.backward(&trace, &Tensor::from_vec(grad), &mut grads)?;
    Ok(SampleResult {
        loss: loss.as_f64(),
        correct: probs.argmax() == label,
        grads,
    })
}

/// Minibatch momentum SGD on `clips` of `source`. Each epoch draws
/// `frames_per_clip_per_epoch` random anchors per clip and shuffles them.
/// Batch elements run in parallel; their gradients are summed in index
/// order, so results do not depend on thread scheduling.
pub fn train_stream<T: Scalar>(
    model: &mut StreamModel<T>,
    source: &dyn SampleSource,
    clips: &[usize],
    hyper: &TrainHyper,
) -> Result<Vec<EpochStats>> {
    hyper.validate()?;
    if clips.is_empty() {
        return Err(Error::data("no training clips"));
    }
    for &c in clips {
        if c >= source.num_clips() || source.num_anchors(c) == 0 {
            return Err(Error::data(format!("clip {c} has no usable samples")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.sgd.seed);
    let mut sgd = Sgd::new(hyper.sgd.clone())?;
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut batch_index = 0;
    for epoch in 0..hyper.epochs {
        let mut samples: Vec<(usize, usize)> = clips
            .iter()
            .flat_map(|&c| std::iter::repeat(c).take(hyper.frames_per_clip_per_epoch))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|c| (c, rng.gen_range(0..source.num_anchors(c))))
            .collect();
        samples.shuffle(&mut rng);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in samples.chunks(hyper.batch_size) {
            let model_ref = &*model;
            let results: Vec<Result<SampleResult<T>>> = batch
                .par_iter()
                .map(|&(c, tau)| sample_gradient(model_ref, source, c, tau))
                .collect();
            let mut total: Option<Gradients<T>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let r = r?;
                batch_loss += r.loss;
                correct += usize::from(r.correct);
                match total.as_mut() {
                    Some(t) => t.add_assign(&r.grads),
                    None => total = Some(r.grads),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    batch: batch_index,
                    detail: format!("loss {batch_loss} in epoch {epoch}"),
                });
            }
            let mut total = total.expect("non-empty batch");
            total.scale(T::one() / T::from_usize_lossy(batch.len()));
            let net = model.network_mut();
            net.accumulate(&total);
            sgd.step(&mut net.params_mut());
            if !net.flat_params().iter().all(|w| w.is_finite()) {
                return Err(Error::Divergence {
                    batch: batch_index,
                    detail: format!("non-finite parameters after update in epoch {epoch}"),
                });
            }
            loss_sum += batch_loss;
            batch_index += 1;
        }
        let n = samples.len() as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        };
        let done = hyper.stop_at_accuracy.is_some_and(|t| stats.train_accuracy >= t);
        history.push(stats);
        if done {
            break;
        }
    }
    Ok(history)
}

/// Per-sample scores at `m` evenly spaced anchors.
pub fn sample_scores<T: Scalar>(
    model: &StreamModel<T>,
    source: &dyn SampleSource,
    clip: usize,
    m: usize,
) -> Result<Vec<ScoreVector<T>>> {
    let taus = sample_taus(source.num_anchors(clip), m)
        .map_err(|e| Error::data(format!("clip {clip}: {e}")))?;
    taus.into_iter()
        .map(|tau| model.predict_frame(&source.input(clip, tau)?.cast()))
        .collect()
}

/// Video-level scores: the mean of per-sample scores at `m` evenly spaced
/// anchors.
pub fn predict_video<T: Scalar>(
    model: &StreamModel<T>,
    source: &dyn SampleSource,
    clip: usize,
    m: usize,
) -> Result<ScoreVector<T>> {
    ScoreVector::mean(&sample_scores(model, source, clip, m)?)
}

/// Fraction of `clips` whose video-level argmax matches the label.
pub fn video_accuracy<T: Scalar>(
    model: &StreamModel<T>,
    source: &dyn SampleSource,
    clips: &[usize],
    m: usize,
) -> Result<f64> {
    let hits = clips
        .par_iter()
        .map(|&c| Ok(usize::from(predict_video(model, source, c, m)?.argmax() == source.label(c))))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / clips.len().max(1) as f64)
}

/// Per-channel mean of the inputs at every anchor of `clips`, for centring
/// the first `channels` input channels.
pub fn channel_means(source: &dyn SampleSource, clips: &[usize], channels: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; channels];
    let mut count = 0usize;
    for &c in clips {
        for tau in 0..source.num_anchors(c) {
            let x = source.input(c, tau)?;
            let ch = *x.dims().last().expect("non-empty dims");
            if ch < channels {
                return Err(Error::shape(format!("input has {ch} channels, wanted {channels}")));
            }
            for px in x.data().chunks_exact(ch) {
                for (s, &v) in sums.iter_mut().zip(px) {
                    *s += f64::from(v);
                }
            }
            count += x.len() / ch;
        }
    }
    Ok(sums.into_iter().map(|s| s / count.max(1) as f64).collect())
}
