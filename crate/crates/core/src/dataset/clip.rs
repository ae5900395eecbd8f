use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{checked_len, read_file, write_file, ByteReader, ByteWriter, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::flow::{gaussian_blur, GrayImage};
use crate::tensor::Tensor;

const CLIP_MAGIC: &[u8; 8] = b"STFCLIP\0";

pub const NUM_CLASSES: usize = 6;

/// Supersampling factor per axis for anti-aliased shape edges.
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Square,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    Stationary,
    Oscillating,
}

/// Class `c` is shape `c / 2` (disk, square, triangle) with motion `c % 2`
/// (stationary, oscillating).
pub fn class_parts(class_id: usize) -> (Shape, Motion) {
    let shape = match class_id / 2 {
        0 => Shape::Disk,
        1 => Shape::Square,
        _ => Shape::Triangle,
    };
    let motion = if class_id % 2 == 0 { Motion::Stationary } else { Motion::Oscillating };
    (shape, motion)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSpec {
    pub class_id: usize,
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub noise_level: f64,
}

impl ClipSpec {
    pub fn new(class_id: usize, seed: u64) -> Self {
        Self {
            class_id,
            seed,
            num_frames: 30,
            height: 64,
            width: 64,
            noise_level: 0.02,
        }
    }

    /// `min_frames` is the shortest clip the configured flow stacks allow (L + 1).
    pub fn validate(&self, min_frames: usize) -> Result<()> {
        if self.class_id >= NUM_CLASSES {
            return Err(Error::Input(format!("class id {} out of range", self.class_id)));
        }
        if self.num_frames < min_frames.max(2) {
            return Err(Error::Input(format!(
                "clip needs at least {} frames, spec has {}",
                min_frames.max(2),
                self.num_frames
            )));
        }
        if self.height < MIN_HEIGHT || self.width < MIN_WIDTH {
            return Err(Error::Input(format!(
                "frames must be at least {MIN_HEIGHT}×{MIN_WIDTH} to fit the motion range, got {}×{}",
                self.height, self.width
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Input("noise_level must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything that determines where and how the shape is drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipGeometry {
    pub shape: Shape,
    pub motion: Motion,
    /// Shape size parameter in pixels.
    pub radius: f64,
    pub color: [f64; 3],
    pub amplitude: f64,
    /// Oscillation period in frames.
    pub period: f64,
    pub phase: f64,
    /// Oscillation center `(row, col)`.
    pub center: (f64, f64),
}

impl ClipGeometry {
    /// Shape centroid `(row, col)` at frame `t`. A stationary clip sits at a
    /// fixed random point of the same sinusoid, so its single-frame position
    /// follows the same distribution as an oscillating clip's.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let angle = match self.motion {
            Motion::Stationary => self.phase,
            Motion::Oscillating => 2.0 * PI * t as f64 / self.period + self.phase,
        };
        (self.center.0, self.center.1 + self.amplitude * angle.sin())
    }

    /// Peak horizontal speed in pixels per frame (0 when stationary).
    pub fn peak_speed(&self) -> f64 {
        match self.motion {
            Motion::Stationary => 0.0,
            Motion::Oscillating => 2.0 * PI * self.amplitude / self.period,
        }
    }

    fn contains(&self, y: f64, x: f64, t: usize) -> bool {
        let (cy, cx) = self.position(t);
        let (dy, dx) = (y - cy, x - cx);
        let r = self.radius;
        match self.shape {
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Square => {
                let half = 0.886 * r;
                dx.abs() <= half && dy.abs() <= half
            }
            Shape::Triangle => {
                // Upward equilateral triangle with its centroid at the origin.
                let rc = 1.2 * r;
                let top = -rc;
                let base = rc / 2.0;
                let half_width_at = |yy: f64| (yy - top) / (base - top) * rc * 3f64.sqrt() / 2.0;
                dy >= top && dy <= base && dx.abs() <= half_width_at(dy)
            }
        }
    }

    /// Fraction of pixel `(i, j)` covered by the shape at frame `t`.
    fn coverage(&self, i: usize, j: usize, t: usize) -> f64 {
        let mut hits = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let y = i as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                let x = j as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                if self.contains(y, x, t) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    }
}

/// Frames `T×H×W×3` in `[0, 1]` plus the class label.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub frames: Tensor<f32>,
    pub label: usize,
}

impl VideoClip {
    pub fn new(frames: Tensor<f32>, label: usize) -> Result<Self> {
        if frames.rank() != 4 || frames.dims()[3] != 3 {
            return Err(Error::shape(format!("clip frames must be T×H×W×3, got {:?}", frames.dims())));
        }
        if label >= NUM_CLASSES {
            return Err(Error::Input(format!("label {label} out of range")));
        }
        if frames.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Input("clip pixels must lie in [0, 1]".into()));
        }
        Ok(Self { frames, label })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.dims()[2]
    }

    /// RGB frame `t` as an `H×W×3` tensor.
    pub fn frame(&self, t: usize) -> Tensor<f32> {
        let n = self.height() * self.width() * 3;
        Tensor::new(
            vec![self.height(), self.width(), 3],
            self.frames.data()[t * n..(t + 1) * n].to_vec(),
        )
        .expect("frame slice matches dims")
    }

    pub fn gray_frame(&self, t: usize) -> GrayImage<f32> {
        let n = self.height() * self.width() * 3;
        GrayImage::from_rgb(self.height(), self.width(), &self.frames.data()[t * n..(t + 1) * n])
            .expect("frame slice matches dims")
    }
}

// Largest shape radius and oscillation amplitude, which set the margins.
const MAX_RADIUS: f64 = 10.0;
const MAX_AMPLITUDE: f64 = 12.0;
/// Smallest frame that leaves room for a centre at every radius and amplitude.
pub const MIN_HEIGHT: usize = 2 * (1.2 * MAX_RADIUS + 2.0) as usize + 2;
pub const MIN_WIDTH: usize = 2 * (1.2 * MAX_RADIUS + MAX_AMPLITUDE + 2.0) as usize + 2;

fn rng_for(spec: &ClipSpec, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    rng
}

/// Draws the clip geometry from the spec's seed.
pub fn clip_geometry(spec: &ClipSpec) -> ClipGeometry {
    let (shape, motion) = class_parts(spec.class_id);
    let mut rng = rng_for(spec, 1);
    let radius = rng.gen_range(7.0..MAX_RADIUS);
    let amplitude = rng.gen_range(8.0..MAX_AMPLITUDE);
    let period = rng.gen_range(10.0..20.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let margin_x = radius * 1.2 + amplitude + 2.0;
    let margin_y = radius * 1.2 + 2.0;
    let center = (
        rng.gen_range(margin_y..spec.height as f64 - margin_y),
        rng.gen_range(margin_x..spec.width as f64 - margin_x),
    );
    let color = [
        rng.gen_range(0.7..1.0),
        rng.gen_range(0.7..1.0),
        rng.gen_range(0.7..1.0),
    ];
    ClipGeometry {
        shape,
        motion,
        radius,
        color,
        amplitude,
        period,
        phase,
        center,
    }
}

/// Seed of the shared background texture.
const BACKGROUND_SEED: u64 = 0x5eed_b6;

/// The static low-contrast background, `H×W×3` interleaved. It depends only
/// on the frame size, so every clip shares it and it cannot identify a clip.
pub fn generate_background(spec: &ClipSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(BACKGROUND_SEED);
    let (h, w) = (spec.height, spec.width);
    let base = [0.3; 3];
    let noise: GrayImage<f64> = GrayImage::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0));
    let texture = gaussian_blur(&noise, 1.5);
    let peak = texture.data().iter().fold(1e-9f64, |m, x| m.max(x.abs()));
    let mut bg = Vec::with_capacity(h * w * 3);
    for &t in texture.data() {
        for b in base {
            bg.push(b + 0.08 * t / peak);
        }
    }
    bg
}

/// Renders the clip: background, anti-aliased shape, per-frame Gaussian noise.
pub fn generate_clip(spec: &ClipSpec) -> Result<VideoClip> {
    spec.validate(2)?;
    let geom = clip_geometry(spec);
    let bg = generate_background(spec);
    let (t_len, h, w) = (spec.num_frames, spec.height, spec.width);
    let mut noise_rng = rng_for(spec, 3);
    let noise = Normal::new(0.0, spec.noise_level.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let reach = geom.radius * 1.3 + 1.0;
    let mut data = Vec::with_capacity(t_len * h * w * 3);
    for t in 0..t_len {
        let (cy, cx) = geom.position(t);
        for i in 0..h {
            for j in 0..w {
                let near = (i as f64 - cy).abs() <= reach && (j as f64 - cx).abs() <= reach;
                let cov = if near { geom.coverage(i, j, t) } else { 0.0 };
                for c in 0..3 {
                    let base = bg[(i * w + j) * 3 + c];
                    let mut p = base + cov * (geom.color[c] - base);
                    if spec.noise_level > 0.0 {
                        p += noise.sample(&mut noise_rng);
                    }
                    data.push(p.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    VideoClip::new(Tensor::new(vec![t_len, h, w, 3], data)?, spec.class_id)
}

/// Magic, version, `T, H, W, channels, label` as little-endian 32-bit
/// integers, then frame data as little-endian `f32`.
pub fn clip_to_bytes(clip: &VideoClip) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(CLIP_MAGIC);
    w.u32(FORMAT_VERSION);
    for &d in clip.frames.dims() {
        w.u32(d as u32);
    }
    w.u32(clip.label as u32);
    w.f32s(clip.frames.data().iter().copied());
    w.into_inner()
}

pub fn clip_from_bytes(bytes: &[u8]) -> Result<VideoClip> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CLIP_MAGIC)?;
    r.expect_version()?;
    let t = r.dim("frame count")?;
    let h = r.dim("height")?;
    let w = r.dim("width")?;
    let at = r.offset();
    let c = r.dim("channels")?;
    if c != 3 {
        return Err(Error::format(at, format!("expected 3 channels, got {c}")));
    }
    let at = r.offset();
    let label = r.u32("label")? as usize;
    if label >= NUM_CLASSES {
        return Err(Error::format(at, format!("label {label} out of range")));
    }
    let dims = vec![t, h, w, c];
    let n = checked_len(&dims, r.offset())?;
    let data_at = r.offset();
    let data = r.f32s(n, "frame data")?;
    r.finish()?;
    VideoClip::new(Tensor::new(dims, data)?, label).map_err(|e| Error::format(data_at, e.to_string()))
}

pub fn save_clip(clip: &VideoClip, path: &Path) -> Result<()> {
    write_file(path, &clip_to_bytes(clip))
}

pub fn load_clip(path: &Path) -> Result<VideoClip> {
    clip_from_bytes(&read_file(path)?)
}
