use super::FlowField;
use crate::binio::{checked_len, ByteReader, ByteWriter, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FLOW_MAGIC: &[u8; 8] = b"STFFLOW\0";

/// `L` consecutive flow fields starting at frame `start`, interleaved into
/// `2L` channels: channel `2k` holds `u` and `2k + 1` holds `v` of the flow
/// from frame `start + k` to `start + k + 1` (0-based channels).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowStack<T> {
    data: Tensor<T>,
    start: i32,
    length: usize,
}

/// Builds the stacked temporal input from `flows[k]` = flow `start+k → start+k+1`.
pub fn build_flow_stack<T: Scalar>(flows: &[FlowField<T>], start: i32) -> Result<FlowStack<T>> {
    let first = flows
        .first()
        .ok_or_else(|| Error::shape("flow stack needs at least one flow field"))?;
    let (h, w) = first.dims();
    if let Some((k, f)) = flows.iter().enumerate().find(|(_, f)| f.dims() != (h, w)) {
        return Err(Error::shape(format!(
            "flow {k} has dims {:?}, expected {:?}",
            f.dims(),
            (h, w)
        )));
    }
    let l = flows.len();
    let channels = 2 * l;
    let mut data = vec![T::zero(); h * w * channels];
    for (k, f) in flows.iter().enumerate() {
        for (p, (&u, &v)) in f.u().iter().zip(f.v()).enumerate() {
            data[p * channels + 2 * k] = u;
            data[p * channels + 2 * k + 1] = v;
        }
    }
    Ok(FlowStack {
        data: Tensor::new(vec![h, w, channels], data)?,
        start,
        length: l,
    })
}

impl<T: Scalar> FlowStack<T> {
    pub fn data(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn start(&self) -> i32 {
        self.start
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn rows(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn cols(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn channels(&self) -> usize {
        2 * self.length
    }

    /// One channel as a row-major `R×C` plane (0-based channel index).
    pub fn channel(&self, c: usize) -> Vec<T> {
        let ch = self.channels();
        self.data.data().iter().skip(c).step_by(ch).copied().collect()
    }

    /// The `k`-th flow field (0-based).
    pub fn flow(&self, k: usize) -> Result<FlowField<T>> {
        if k >= self.length {
            return Err(Error::shape(format!("flow index {k} out of range for L={}", self.length)));
        }
        FlowField::new(self.rows(), self.cols(), self.channel(2 * k), self.channel(2 * k + 1))
    }

    /// Sub-stack of `length` flows beginning `offset` flows after `start`.
    pub fn window(&self, offset: usize, length: usize) -> Result<FlowStack<T>> {
        if length == 0 || offset + length > self.length {
            return Err(Error::data(format!(
                "flow window {offset}..{} exceeds stack of {} flows starting at frame {}",
                offset + length,
                self.length,
                self.start
            )));
        }
        let ch = self.channels();
        let (lo, hi) = (2 * offset, 2 * (offset + length));
        let data: Vec<T> = self
            .data
            .data()
            .chunks_exact(ch)
            .flat_map(|px| px[lo..hi].iter().copied())
            .collect();
        Ok(FlowStack {
            data: Tensor::new(vec![self.rows(), self.cols(), hi - lo], data)?,
            start: self.start + offset as i32,
            length,
        })
    }

    /// Magic, version, then `R, C, L, start` as little-endian 32-bit
    /// integers and the data as little-endian `f32` in channel order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(FLOW_MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.rows() as u32);
        w.u32(self.cols() as u32);
        w.u32(self.length as u32);
        w.i32(self.start);
        w.f32s(self.data.data().iter().map(|v| v.as_f64() as f32));
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(FLOW_MAGIC)?;
        r.expect_version()?;
        let rows = r.dim("rows")?;
        let cols = r.dim("cols")?;
        let length = r.dim("flow length")?;
        let start = r.i32("start frame")?;
        let dims = vec![rows, cols, 2 * length];
        let n = checked_len(&dims, r.offset())?;
        let values = r.f32s(n, "flow data")?;
        r.finish()?;
        Ok(Self {
            data: Tensor::new(dims, values.into_iter().map(|x| T::lit(f64::from(x))).collect())?,
            start,
            length,
        })
    }
}

/// How a flow stack is mapped into bounded network input.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNormalization {
    pub clip_mag: f64,
    pub subtract_mean: bool,
}

impl Default for FlowNormalization {
    fn default() -> Self {
        Self {
            clip_mag: 8.0,
            subtract_mean: true,
        }
    }
}

/// Optionally subtracts the stack's mean `(u, v)` displacement, clamps to
/// `±clip_mag` and rescales to `[-1, 1]`.
pub fn normalize_flow_for_net<T: Scalar>(stack: &FlowStack<T>, norm: &FlowNormalization) -> Result<Tensor<T>> {
    if !(norm.clip_mag > 0.0 && norm.clip_mag.is_finite()) {
        return Err(Error::Config(format!("clip_mag must be positive, got {}", norm.clip_mag)));
    }
    let ch = stack.channels();
    let (mut mean_u, mut mean_v) = (T::zero(), T::zero());
    if norm.subtract_mean {
        let count = T::from_usize_lossy(stack.data.len() / 2);
        for px in stack.data.data().chunks_exact(ch) {
            for pair in px.chunks_exact(2) {
                mean_u += pair[0];
                mean_v += pair[1];
            }
        }
        mean_u /= count;
        mean_v /= count;
    }
    let clip = T::lit(norm.clip_mag);
    let mut out = stack.data.clone();
    for (idx, x) in out.data_mut().iter_mut().enumerate() {
        let mean = if idx % 2 == 0 { mean_u } else { mean_v };
        *x = (*x - mean).max(-clip).min(clip) / clip;
    }
    Ok(out)
}
