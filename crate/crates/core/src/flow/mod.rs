//! Dense optical flow by coarse-to-fine variational warping, and the
//! 2L-channel stacking of consecutive flow fields.

mod pyramid;
mod solver;
mod stack;
mod visualize;
mod warp;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use pyramid::{build_pyramid, gaussian_blur, resample};
pub use solver::{estimate_flow, flow_energy, FlowDiagnostics};
pub use stack::{build_flow_stack, normalize_flow_for_net, FlowStack, FlowNormalization};
pub use visualize::flow_to_pgm;
pub use warp::{sample_bilinear, warp_bilinear};

/// Single-channel image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::shape(format!(
                "gray image {height}×{width} cannot hold {} pixels",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let data = (0..height * width).map(|k| f(k / width, k % width)).collect();
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self::from_fn(height, width, |_, _| value)
    }

    /// Luminance `0.299 R + 0.587 G + 0.114 B` of an interleaved RGB frame.
    pub fn from_rgb(height: usize, width: usize, rgb: &[T]) -> Result<Self> {
        if rgb.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "rgb frame {height}×{width}×3 cannot hold {} values",
                rgb.len()
            )));
        }
        let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let data = rgb.chunks_exact(3).map(|p| r * p[0] + g * p[1] + b * p[2]).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.width + j]
    }

    /// Pixel with coordinates clamped to the frame.
    #[inline]
    pub fn at_clamped(&self, i: isize, j: isize) -> T {
        let i = i.clamp(0, self.height as isize - 1) as usize;
        let j = j.clamp(0, self.width as isize - 1) as usize;
        self.data[i * self.width + j]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> GrayImage<U> {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// Per-pixel displacement between two frames: `u` horizontal (columns),
/// `v` vertical (rows), in pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    height: usize,
    width: usize,
    u: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(height: usize, width: usize, u: Vec<T>, v: Vec<T>) -> Result<Self> {
        let n = height * width;
        if n == 0 || u.len() != n || v.len() != n {
            return Err(Error::shape(format!(
                "flow field {height}×{width} needs {n} values per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("flow field contains non-finite values".into()));
        }
        Ok(Self { height, width, u, v })
    }

    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        let conv = |xs: &[T]| xs.iter().map(|x| U::lit(x.as_f64())).collect();
        FlowField {
            height: self.height,
            width: self.width,
            u: conv(&self.u),
            v: conv(&self.v),
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, T::zero(), T::zero())
    }

    pub fn constant(height: usize, width: usize, u: T, v: T) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn u(&self) -> &[T] {
        &self.u
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn u_mut(&mut self) -> &mut [T] {
        &mut self.u
    }

    pub fn v_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    pub fn into_components(self) -> (Vec<T>, Vec<T>) {
        (self.u, self.v)
    }

    /// Mean endpoint error against `truth` over pixels at least `border`
    /// away from every edge.
    pub fn endpoint_error(&self, truth: &FlowField<T>, border: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in border..self.height.saturating_sub(border) {
            for j in border..self.width.saturating_sub(border) {
                let k = i * self.width + j;
                let du = (self.u[k] - truth.u[k]).as_f64();
                let dv = (self.v[k] - truth.v[k]).as_f64();
                sum += (du * du + dv * dv).sqrt();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Mean `(u, v)` over the interior excluding `border` pixels.
    pub fn interior_mean(&self, border: usize) -> (f64, f64) {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for i in border..self.height.saturating_sub(border) {
            for j in border..self.width.saturating_sub(border) {
                let k = i * self.width + j;
                su += self.u[k].as_f64();
                sv += self.v[k].as_f64();
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        (su / n, sv / n)
    }

    /// Mean of `|u|` and `|v|` over the whole field.
    pub fn mean_abs(&self) -> (f64, f64) {
        let n = self.u.len() as f64;
        (
            self.u.iter().map(|x| x.abs().as_f64()).sum::<f64>() / n,
            self.v.iter().map(|x| x.abs().as_f64()).sum::<f64>() / n,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidLevels {
    /// As many levels as keep both dims at or above the floor.
    Auto,
    Fixed(usize),
}

/// Smallest pyramid dimension.
pub const PYRAMID_MIN_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    /// Smoothness weight (intensities on a 0–255 scale).
    pub alpha: f64,
    /// Gradient-constancy weight.
    pub gamma: f64,
    /// Per-level downscale factor.
    pub pyramid_scale: f64,
    pub levels: PyramidLevels,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub sor_omega: f64,
    pub sor_sweeps: usize,
    /// Gaussian pre-smoothing of both frames before building the pyramid.
    pub presmooth_sigma: f64,
    /// Regularizer of the robust penalty `sqrt(s² + eps²)`.
    pub robust_eps: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            gamma: 10.0,
            pyramid_scale: 0.8,
            levels: PyramidLevels::Auto,
            outer_iterations: 4,
            inner_iterations: 2,
            sor_omega: 1.9,
            sor_sweeps: 10,
            presmooth_sigma: 0.8,
            robust_eps: 1e-3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("flow parameter {what} out of range")));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha (> 0)");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma (>= 0)");
        }
        if !(self.pyramid_scale > 0.5 && self.pyramid_scale < 0.95) {
            return bad("pyramid_scale (0.5, 0.95)");
        }
        if self.levels == PyramidLevels::Fixed(0) {
            return bad("levels (>= 1)");
        }
        if self.outer_iterations == 0 || self.inner_iterations == 0 || self.sor_sweeps == 0 {
            return bad("iteration counts (>= 1)");
        }
        if !(self.sor_omega > 1.0 && self.sor_omega < 2.0) {
            return bad("sor_omega (1, 2)");
        }
        if !(self.presmooth_sigma >= 0.0 && self.robust_eps > 0.0) {
            return bad("presmooth_sigma / robust_eps");
        }
        Ok(())
    }
}
