use super::{GrayImage, PyramidLevels, PYRAMID_MIN_DIM};
use crate::scalar::Scalar;

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` copies.
pub fn gaussian_blur<T: Scalar>(image: &GrayImage<T>, sigma: f64) -> GrayImage<T> {
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let kernel: Vec<T> = kernel.into_iter().map(T::lit).collect();

    let (h, w) = image.dims();
    let horiz = GrayImage::from_fn(h, w, |i, j| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &kv)| kv * image.at_clamped(i as isize, j as isize + k as isize - radius))
            .sum()
    });
    GrayImage::from_fn(h, w, |i, j| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &kv)| kv * horiz.at_clamped(i as isize + k as isize - radius, j as isize))
            .sum()
    })
}

/// Bilinear resampling to `height × width` with pixel centers aligned.
pub fn resample<T: Scalar>(image: &GrayImage<T>, height: usize, width: usize) -> GrayImage<T> {
    let sy = image.height() as f64 / height as f64;
    let sx = image.width() as f64 / width as f64;
    GrayImage::from_fn(height, width, |i, j| {
        let y = (i as f64 + 0.5) * sy - 0.5;
        let x = (j as f64 + 0.5) * sx - 0.5;
        super::warp::sample_bilinear(image, T::lit(y), T::lit(x))
    })
}

/// Per-level dims, finest first.
pub(crate) fn pyramid_dims(height: usize, width: usize, eta: f64, levels: PyramidLevels) -> Vec<(usize, usize)> {
    let cap = match levels {
        PyramidLevels::Auto => usize::MAX,
        PyramidLevels::Fixed(n) => n.max(1),
    };
    let mut dims = vec![(height, width)];
    let mut level = 1;
    while dims.len() < cap {
        let f = eta.powi(level);
        let h = (height as f64 * f).round() as usize;
        let w = (width as f64 * f).round() as usize;
        if h < PYRAMID_MIN_DIM || w < PYRAMID_MIN_DIM || (h, w) == *dims.last().unwrap() {
            break;
        }
        dims.push((h, w));
        level += 1;
    }
    dims
}

/// Gaussian pyramid, coarsest level first. Level `l` is `eta^l` times the
/// original size (rounded), never below 8 pixels in either dimension.
pub fn build_pyramid<T: Scalar>(image: &GrayImage<T>, eta: f64, levels: PyramidLevels) -> Vec<GrayImage<T>> {
    let sigma = 0.6 * (1.0 / (eta * eta) - 1.0).max(0.0).sqrt();
    let dims = pyramid_dims(image.height(), image.width(), eta, levels);
    let mut out = Vec::with_capacity(dims.len());
    out.push(image.clone());
    for &(h, w) in &dims[1..] {
        let prev = out.last().unwrap();
        let next = resample(&gaussian_blur(prev, sigma), h, w);
        out.push(next);
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_is_original() {
        let img = GrayImage::from_fn(20, 24, |i, j| (i * 24 + j) as f64);
        let p = build_pyramid(&img, 0.8, PyramidLevels::Fixed(1));
        assert_eq!(p, vec![img]);
    }

    #[test]
    fn halving_sizes_stop_at_floor() {
        let img = GrayImage::<f64>::filled(32, 32, 0.3);
        let sizes: Vec<_> = build_pyramid(&img, 0.5, PyramidLevels::Auto)
            .iter()
            .map(GrayImage::dims)
            .collect();
        assert_eq!(sizes, vec![(8, 8), (16, 16), (32, 32)]);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = GrayImage::<f64>::filled(40, 30, 0.42);
        for level in build_pyramid(&img, 0.8, PyramidLevels::Auto) {
            assert!(level.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn fixed_levels_respect_cap_and_floor() {
        assert_eq!(pyramid_dims(64, 64, 0.8, PyramidLevels::Fixed(3)).len(), 3);
        let auto = pyramid_dims(64, 64, 0.8, PyramidLevels::Auto);
        assert_eq!(auto.len(), 10);
        assert!(auto.iter().all(|&(h, w)| h >= 8 && w >= 8));
    }
}
