use super::config::StreamKind;
use crate::dataset::VideoClip;
use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::flow::{build_flow_stack, estimate_flow, normalize_flow_for_net, FlowNormalization, FlowParams, FlowStack};
use crate::tensor::Tensor;

/// Labelled network inputs addressed by `(clip, tau)`.
pub trait SampleSource: Sync {
    fn num_clips(&self) -> usize;
    fn label(&self, clip: usize) -> usize;
    /// Number of valid anchors `tau` for this clip.
    fn num_anchors(&self, clip: usize) -> usize;
    fn input(&self, clip: usize, tau: usize) -> Result<Tensor<f32>>;
}

/// `m` anchors spread evenly over `0..n`, endpoints included. A single
/// sample sits at the middle anchor.
pub fn sample_taus(n: usize, m: usize) -> Result<Vec<usize>> {
    if n == 0 || m == 0 {
        return Err(Error::data(format!("cannot sample {m} anchors from {n}")));
    }
    if m == 1 {
        return Ok(vec![(n - 1) / 2]);
    }
    Ok((0..m)
        .map(|i| ((i * (n - 1)) as f64 / (m - 1) as f64).round() as usize)
        .collect())
}

/// Flows between every pair of consecutive frames, stacked from frame 0.
/// Pairs are solved in parallel, in `f64`.
pub fn compute_clip_flows(clip: &VideoClip, params: &FlowParams) -> Result<FlowStack<f32>> {
    let t = clip.num_frames();
    if t < 2 {
        return Err(Error::data("a clip needs two frames for flow"));
    }
    let gray: Vec<_> = (0..t).map(|k| clip.gray_frame(k).cast::<f64>()).collect();
    let flows = (0..t - 1)
        .into_par_iter()
        .map(|k| {
            estimate_flow(&gray[k], &gray[k + 1], params)
                .map(|f| f.cast::<f32>())
        })
        .collect::<Result<Vec<_>>>()?;
    build_flow_stack(&flows, 0)
}

/// One clip and, when flows were computed, its full-length flow stack
/// (flow `k` maps frame `k` to `k + 1`).
#[derive(Clone, Debug)]
pub struct ClipSamples {
    pub clip: VideoClip,
    pub flows: Option<FlowStack<f32>>,
}

/// In-memory clips plus the parameters that turn them into stream inputs.
/// Anchor `tau` selects frame `tau` and flows `tau..tau + L`.
#[derive(Clone, Debug)]
pub struct StreamInputs {
    clips: Vec<ClipSamples>,
    flow_len: usize,
    norm: FlowNormalization,
}

impl StreamInputs {
    pub fn new(clips: Vec<ClipSamples>, flow_len: usize, norm: FlowNormalization) -> Result<Self> {
        if flow_len == 0 {
            return Err(Error::Config("flow length must be positive".into()));
        }
        for (i, c) in clips.iter().enumerate() {
            if c.clip.num_frames() <= flow_len {
                return Err(Error::data(format!(
                    "clip {i} has {} frames, too short for L={flow_len}",
                    c.clip.num_frames()
                )));
            }
        }
        Ok(Self { clips, flow_len, norm })
    }

    pub fn flow_len(&self) -> usize {
        self.flow_len
    }

    pub fn clips(&self) -> &[ClipSamples] {
        &self.clips
    }

    pub fn view(&self, kind: StreamKind) -> StreamView<'_> {
        StreamView { inputs: self, kind }
    }

    fn flow_input(&self, clip: usize, tau: usize) -> Result<Tensor<f32>> {
        let missing = || Error::data(format!("no flow stack for clip {clip} at tau={tau}"));
        let stack = self.clips[clip].flows.as_ref().ok_or_else(missing)?;
        let offset = usize::try_from(tau as i64 - i64::from(stack.start())).map_err(|_| missing())?;
        let window = stack.window(offset, self.flow_len).map_err(|_| missing())?;
        normalize_flow_for_net(&window, &self.norm)
    }

    fn frame_input(&self, clip: usize, tau: usize) -> Result<Tensor<f32>> {
        let c = &self.clips[clip].clip;
        if tau >= c.num_frames() {
            return Err(Error::data(format!("clip {clip} has no frame {tau}")));
        }
        Ok(c.frame(tau))
    }
}

/// A [`StreamInputs`] seen through one stream kind.
#[derive(Clone, Copy, Debug)]
pub struct StreamView<'a> {
    inputs: &'a StreamInputs,
    kind: StreamKind,
}

impl SampleSource for StreamView<'_> {
    fn num_clips(&self) -> usize {
        self.inputs.clips.len()
    }

    fn label(&self, clip: usize) -> usize {
        self.inputs.clips[clip].clip.label
    }

    fn num_anchors(&self, clip: usize) -> usize {
        self.inputs.clips[clip].clip.num_frames() - self.inputs.flow_len
    }

    fn input(&self, clip: usize, tau: usize) -> Result<Tensor<f32>> {
        if clip >= self.num_clips() {
            return Err(Error::data(format!("clip index {clip} out of range")));
        }
        match self.kind {
            StreamKind::Spatial => self.inputs.frame_input(clip, tau),
            StreamKind::Temporal => self.inputs.flow_input(clip, tau),
            StreamKind::Early => {
                let frame = self.inputs.frame_input(clip, tau)?;
                let flow = self.inputs.flow_input(clip, tau)?;
                crate::fusion::assemble_early_input(&frame, &flow)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taus_cover_endpoints() {
        assert_eq!(sample_taus(20, 5).unwrap(), vec![0, 5, 10, 14, 19]);
        assert_eq!(sample_taus(20, 1).unwrap(), vec![9]);
        assert_eq!(sample_taus(1, 3).unwrap(), vec![0, 0, 0]);
        assert!(sample_taus(0, 3).is_err());
    }
}
