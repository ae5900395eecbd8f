//! Variational flow with brightness and gradient constancy, a robust
//! `sqrt(s² + eps²)` penalty on data and smoothness, coarse-to-fine warping,
//! lagged-diffusivity fixed point and SOR inner solves.

use super::pyramid::{build_pyramid, gaussian_blur, resample};
use super::warp::sample_bilinear;
use super::{FlowField, FlowParams, GrayImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum frame side accepted by [`estimate_flow`].
pub const MIN_FRAME_DIM: usize = 16;

/// Relative tolerance for the per-level energy monotonicity check.
pub const ENERGY_TOLERANCE: f64 = 1e-6;

const MAX_BACKTRACKS: usize = 12;

/// Per-level energy trace, coarsest level first. Entry 0 of each level is the
/// energy of the incoming (upsampled) flow; entry `k` follows outer iteration `k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowDiagnostics {
    pub energies: Vec<Vec<f64>>,
    pub level_dims: Vec<(usize, usize)>,
    /// Outer iterations whose increment had to be shortened.
    pub backtracked_steps: usize,
    /// Levels that stopped early because no step along the increment
    /// lowered the energy.
    pub stalled_levels: usize,
}

struct Derivatives<T> {
    ix: GrayImage<T>,
    iy: GrayImage<T>,
    ixx: GrayImage<T>,
    ixy: GrayImage<T>,
    iyy: GrayImage<T>,
}

fn dx<T: Scalar>(img: &GrayImage<T>) -> GrayImage<T> {
    let half = T::lit(0.5);
    GrayImage::from_fn(img.height(), img.width(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        (img.at_clamped(i, j + 1) - img.at_clamped(i, j - 1)) * half
    })
}

fn dy<T: Scalar>(img: &GrayImage<T>) -> GrayImage<T> {
    let half = T::lit(0.5);
    GrayImage::from_fn(img.height(), img.width(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        (img.at_clamped(i + 1, j) - img.at_clamped(i - 1, j)) * half
    })
}

impl<T: Scalar> Derivatives<T> {
    fn of(img: &GrayImage<T>) -> Self {
        let ix = dx(img);
        let iy = dy(img);
        Self {
            ixx: dx(&ix),
            ixy: dy(&ix),
            iyy: dy(&iy),
            ix,
            iy,
        }
    }
}

/// One pyramid level's images and the fixed first-frame derivatives.
struct Level<'a, T> {
    i1: &'a GrayImage<T>,
    i1x: GrayImage<T>,
    i1y: GrayImage<T>,
    i2: &'a GrayImage<T>,
    d2: Derivatives<T>,
}

/// Second frame and its derivatives sampled at `x + w`.
struct Warped<T> {
    iz: Vec<T>,
    ixz: Vec<T>,
    iyz: Vec<T>,
    ix: Vec<T>,
    iy: Vec<T>,
    ixx: Vec<T>,
    ixy: Vec<T>,
    iyy: Vec<T>,
}

impl<'a, T: Scalar> Level<'a, T> {
    fn new(i1: &'a GrayImage<T>, i2: &'a GrayImage<T>) -> Self {
        Self {
            i1x: dx(i1),
            i1y: dy(i1),
            i1,
            i2,
            d2: Derivatives::of(i2),
        }
    }

    fn warp(&self, u: &[T], v: &[T], need_second: bool) -> Warped<T> {
        let (h, w) = self.i1.dims();
        let n = h * w;
        let mut out = Warped {
            iz: Vec::with_capacity(n),
            ixz: Vec::with_capacity(n),
            iyz: Vec::with_capacity(n),
            ix: Vec::with_capacity(n),
            iy: Vec::with_capacity(n),
            ixx: Vec::new(),
            ixy: Vec::new(),
            iyy: Vec::new(),
        };
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                let y = T::from_usize_lossy(i) + v[k];
                let x = T::from_usize_lossy(j) + u[k];
                let i2x = sample_bilinear(&self.d2.ix, y, x);
                let i2y = sample_bilinear(&self.d2.iy, y, x);
                out.iz.push(sample_bilinear(self.i2, y, x) - self.i1.data()[k]);
                out.ixz.push(i2x - self.i1x.data()[k]);
                out.iyz.push(i2y - self.i1y.data()[k]);
                out.ix.push(i2x);
                out.iy.push(i2y);
                if need_second {
                    out.ixx.push(sample_bilinear(&self.d2.ixx, y, x));
                    out.ixy.push(sample_bilinear(&self.d2.ixy, y, x));
                    out.iyy.push(sample_bilinear(&self.d2.iyy, y, x));
                }
            }
        }
        out
    }
}

/// Squared forward-difference gradient magnitude of `(u, v)` at every pixel
/// (Neumann boundary).
fn smoothness_terms<T: Scalar>(h: usize, w: usize, u: &[T], v: &[T]) -> Vec<T> {
    let mut s = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut acc = T::zero();
            if j + 1 < w {
                let a = u[k + 1] - u[k];
                let b = v[k + 1] - v[k];
                acc += a * a + b * b;
            }
            if i + 1 < h {
                let a = u[k + w] - u[k];
                let b = v[k + w] - v[k];
                acc += a * a + b * b;
            }
            s.push(acc);
        }
    }
    s
}

fn energy_at<T: Scalar>(level: &Level<'_, T>, u: &[T], v: &[T], params: &FlowParams) -> f64 {
    let (h, w) = level.i1.dims();
    let eps2 = params.robust_eps * params.robust_eps;
    let warped = level.warp(u, v, false);
    let data: f64 = (0..h * w)
        .map(|k| {
            let d = warped.iz[k].as_f64().powi(2)
                + params.gamma * (warped.ixz[k].as_f64().powi(2) + warped.iyz[k].as_f64().powi(2));
            (d + eps2).sqrt()
        })
        .sum();
    let smooth: f64 = smoothness_terms(h, w, u, v)
        .into_iter()
        .map(|s| (s.as_f64() + eps2).sqrt())
        .sum();
    data + params.alpha * smooth
}

/// Energy of `flow` between two frames (intensities in `[0, 1]`), evaluated
/// at full resolution with the same scaling and pre-smoothing as the solver.
pub fn flow_energy<T: Scalar>(
    frame_a: &GrayImage<T>,
    frame_b: &GrayImage<T>,
    flow: &FlowField<T>,
    params: &FlowParams,
) -> Result<f64> {
    check_frames(frame_a, frame_b)?;
    if flow.dims() != frame_a.dims() {
        return Err(Error::shape("flow dims differ from frame dims"));
    }
    let (a, b) = prepare(frame_a, frame_b, params);
    let level = Level::new(&a, &b);
    Ok(energy_at(&level, flow.u(), flow.v(), params))
}

fn check_frames<T: Scalar>(a: &GrayImage<T>, b: &GrayImage<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Input(format!(
            "frame dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (h, w) = a.dims();
    if h < MIN_FRAME_DIM || w < MIN_FRAME_DIM {
        return Err(Error::Input(format!(
            "frames must be at least {MIN_FRAME_DIM}×{MIN_FRAME_DIM}, got {h}×{w}"
        )));
    }
    let tol = T::lit(1e-6);
    if a.data()
        .iter()
        .chain(b.data())
        .any(|&p| !(p >= -tol && p <= T::one() + tol))
    {
        return Err(Error::Input("pixel values must lie in [0, 1]".into()));
    }
    Ok(())
}

fn prepare<T: Scalar>(a: &GrayImage<T>, b: &GrayImage<T>, params: &FlowParams) -> (GrayImage<T>, GrayImage<T>) {
    let scale = T::lit(255.0);
    (
        gaussian_blur(&a.map(|p| p * scale), params.presmooth_sigma),
        gaussian_blur(&b.map(|p| p * scale), params.presmooth_sigma),
    )
}

/// Estimates the flow `w` such that `frame_b(x + w(x)) ≈ frame_a(x)`.
pub fn estimate_flow<T: Scalar>(
    frame_a: &GrayImage<T>,
    frame_b: &GrayImage<T>,
    params: &FlowParams,
) -> Result<FlowField<T>> {
    estimate_flow_traced(frame_a, frame_b, params).map(|(f, _)| f)
}

/// [`estimate_flow`] that also returns the per-level energy trace.
pub fn estimate_flow_traced<T: Scalar>(
    frame_a: &GrayImage<T>,
    frame_b: &GrayImage<T>,
    params: &FlowParams,
) -> Result<(FlowField<T>, FlowDiagnostics)> {
    params.validate()?;
    check_frames(frame_a, frame_b)?;
    let (a, b) = prepare(frame_a, frame_b, params);
    let pyr_a = build_pyramid(&a, params.pyramid_scale, params.levels);
    let pyr_b = build_pyramid(&b, params.pyramid_scale, params.levels);

    let mut diag = FlowDiagnostics::default();
    let (h0, w0) = pyr_a[0].dims();
    let mut u = vec![T::zero(); h0 * w0];
    let mut v = vec![T::zero(); h0 * w0];
    let mut prev_dims = (h0, w0);

    for (level_idx, (ia, ib)) in pyr_a.iter().zip(&pyr_b).enumerate() {
        let (h, w) = ia.dims();
        if (h, w) != prev_dims {
            u = upsample(&u, prev_dims, (h, w), w as f64 / prev_dims.1 as f64);
            v = upsample(&v, prev_dims, (h, w), h as f64 / prev_dims.0 as f64);
            prev_dims = (h, w);
        }
        let level = Level::new(ia, ib);
        let mut energies = vec![energy_at(&level, &u, &v, params)];
        for _ in 0..params.outer_iterations {
            let (du, dv) = solve_increment(&level, &u, &v, params);
            let before = *energies.last().unwrap();
            let mut step = T::one();
            let mut accepted = None;
            for attempt in 0..=MAX_BACKTRACKS {
                let cu: Vec<T> = u.iter().zip(&du).map(|(&a, &d)| a + step * d).collect();
                let cv: Vec<T> = v.iter().zip(&dv).map(|(&a, &d)| a + step * d).collect();
                let e = energy_at(&level, &cu, &cv, params);
                if !e.is_finite() {
                    return Err(Error::Convergence {
                        level: level_idx,
                        detail: format!("energy became non-finite after {} outer iterations", energies.len() - 1),
                    });
                }
                if e <= before + ENERGY_TOLERANCE * before.abs() {
                    if attempt > 0 {
                        diag.backtracked_steps += 1;
                    }
                    accepted = Some((cu, cv, e));
                    break;
                }
                step = step * T::lit(0.5);
            }
            match accepted {
                Some((cu, cv, e)) => {
                    u = cu;
                    v = cv;
                    energies.push(e);
                }
                // No shortened step lowers the energy: the level has
                // converged as far as the linearization can take it.
                None if before.is_finite() => {
                    diag.stalled_levels += 1;
                    break;
                }
                None => {
                    return Err(Error::Convergence {
                        level: level_idx,
                        detail: format!("energy became non-finite ({before})"),
                    })
                }
            }
        }
        diag.energies.push(energies);
        diag.level_dims.push((h, w));
    }
    Ok((FlowField::new(prev_dims.0, prev_dims.1, u, v)?, diag))
}

fn upsample<T: Scalar>(c: &[T], from: (usize, usize), to: (usize, usize), factor: f64) -> Vec<T> {
    let img = GrayImage::new(from.0, from.1, c.to_vec()).expect("consistent dims");
    let f = T::lit(factor);
    resample(&img, to.0, to.1).data().iter().map(|&x| x * f).collect()
}

/// Lagged-diffusivity fixed point for the flow increment at the current
/// warp, each linear system solved by SOR.
fn solve_increment<T: Scalar>(level: &Level<'_, T>, u: &[T], v: &[T], params: &FlowParams) -> (Vec<T>, Vec<T>) {
    let (h, w) = level.i1.dims();
    let n = h * w;
    let wp = level.warp(u, v, true);
    let gamma = T::lit(params.gamma);
    let alpha = T::lit(params.alpha);
    let eps2 = T::lit(params.robust_eps * params.robust_eps);
    let omega = T::lit(params.sor_omega);
    let one = T::one();

    let mut du = vec![T::zero(); n];
    let mut dv = vec![T::zero(); n];
    let (mut a11, mut a12, mut a22) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    let (mut b1, mut b2) = (vec![T::zero(); n], vec![T::zero(); n]);
    // Edge weights to the right and downward neighbor.
    let (mut wr, mut wd) = (vec![T::zero(); n], vec![T::zero(); n]);

    for _ in 0..params.inner_iterations {
        for k in 0..n {
            let r0 = wp.iz[k] + wp.ix[k] * du[k] + wp.iy[k] * dv[k];
            let rx = wp.ixz[k] + wp.ixx[k] * du[k] + wp.ixy[k] * dv[k];
            let ry = wp.iyz[k] + wp.ixy[k] * du[k] + wp.iyy[k] * dv[k];
            let psi = one / (r0 * r0 + gamma * (rx * rx + ry * ry) + eps2).sqrt();
            let (ix, iy, ixx, ixy, iyy) = (wp.ix[k], wp.iy[k], wp.ixx[k], wp.ixy[k], wp.iyy[k]);
            a11[k] = psi * (ix * ix + gamma * (ixx * ixx + ixy * ixy));
            a12[k] = psi * (ix * iy + gamma * (ixx * ixy + ixy * iyy));
            a22[k] = psi * (iy * iy + gamma * (ixy * ixy + iyy * iyy));
            b1[k] = -psi * (ix * wp.iz[k] + gamma * (ixx * wp.ixz[k] + ixy * wp.iyz[k]));
            b2[k] = -psi * (iy * wp.iz[k] + gamma * (ixy * wp.ixz[k] + iyy * wp.iyz[k]));
        }
        let tu: Vec<T> = u.iter().zip(&du).map(|(&a, &b)| a + b).collect();
        let tv: Vec<T> = v.iter().zip(&dv).map(|(&a, &b)| a + b).collect();
        let s = smoothness_terms(h, w, &tu, &tv);
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                let weight = alpha / (s[k] + eps2).sqrt();
                wr[k] = if j + 1 < w { weight } else { T::zero() };
                wd[k] = if i + 1 < h { weight } else { T::zero() };
            }
        }

        for _ in 0..params.sor_sweeps {
            for i in 0..h {
                for j in 0..w {
                    let k = i * w + j;
                    let mut nu = b1[k] - a12[k] * dv[k];
                    let mut nv = b2[k];
                    let mut den = T::zero();
                    let mut edge = |m: usize, we: T| {
                        nu += we * (u[m] + du[m] - u[k]);
                        nv += we * (v[m] + dv[m] - v[k]);
                        den += we;
                    };
                    if j + 1 < w {
                        edge(k + 1, wr[k]);
                    }
                    if i + 1 < h {
                        edge(k + w, wd[k]);
                    }
                    if j > 0 {
                        edge(k - 1, wr[k - 1]);
                    }
                    if i > 0 {
                        edge(k - w, wd[k - w]);
                    }
                    let new_u = (one - omega) * du[k] + omega * nu / (a11[k] + den);
                    du[k] = new_u;
                    nv -= a12[k] * new_u;
                    dv[k] = (one - omega) * dv[k] + omega * nv / (a22[k] + den);
                }
            }
        }
    }
    (du, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::warp_bilinear;

    fn smooth_texture(h: usize, w: usize, seed: u64) -> GrayImage<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = GrayImage::from_fn(h, w, |_, _| rng.gen_range(0.0..1.0));
        let blurred = gaussian_blur(&noise, 2.0);
        let (lo, hi) = blurred
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, u), &x| (l.min(x), u.max(x)));
        blurred.map(|x| (x - lo) / (hi - lo))
    }

    #[test]
    fn rejects_small_or_mismatched_frames() {
        let a = GrayImage::<f64>::filled(8, 8, 0.5);
        assert!(matches!(estimate_flow(&a, &a, &FlowParams::default()), Err(Error::Input(_))));
        let b = GrayImage::<f64>::filled(20, 20, 0.5);
        let c = GrayImage::<f64>::filled(20, 24, 0.5);
        assert!(matches!(estimate_flow(&b, &c, &FlowParams::default()), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let a = GrayImage::<f64>::filled(20, 20, 2.0);
        assert!(matches!(estimate_flow(&a, &a, &FlowParams::default()), Err(Error::Input(_))));
    }

    #[test]
    fn identical_frames_give_near_zero_flow() {
        let a = smooth_texture(32, 32, 5);
        let f = estimate_flow(&a, &a, &FlowParams::default()).unwrap();
        let (mu, mv) = f.mean_abs();
        assert!(mu < 0.05 && mv < 0.05, "{mu} {mv}");
    }

    #[test]
    fn energy_is_non_increasing_per_level() {
        let a = smooth_texture(32, 32, 6);
        let b = warp_bilinear(&a, &FlowField::constant(32, 32, -1.0, 0.5)).unwrap();
        let (_, diag) = estimate_flow_traced(&a, &b, &FlowParams::default()).unwrap();
        for level in &diag.energies {
            for pair in level.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + ENERGY_TOLERANCE), "{level:?}");
            }
        }
    }

    #[test]
    fn recovers_subpixel_translation() {
        let a = smooth_texture(48, 48, 7);
        // frame_b(x + w) = frame_a(x) for w = (0.6, -0.4): frame_b(y) = frame_a(y - w).
        let b = warp_bilinear(&a, &FlowField::constant(48, 48, -0.6, 0.4)).unwrap();
        let f = estimate_flow(&a, &b, &FlowParams::default()).unwrap();
        let (mu, mv) = f.interior_mean(6);
        assert!((mu - 0.6).abs() < 0.15 && (mv + 0.4).abs() < 0.15, "{mu} {mv}");
    }
}
