use super::{FlowField, GrayImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bilinear sample at fractional `(y, x)`; coordinates outside the frame
/// clamp to the nearest border pixel.
#[inline]
pub fn sample_bilinear<T: Scalar>(image: &GrayImage<T>, y: T, x: T) -> T {
    let (h, w) = image.dims();
    let y = y.max(T::zero()).min(T::from_usize_lossy(h - 1));
    let x = x.max(T::zero()).min(T::from_usize_lossy(w - 1));
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let i0 = y0.to_usize().unwrap_or(0);
    let j0 = x0.to_usize().unwrap_or(0);
    let i1 = (i0 + 1).min(h - 1);
    let j1 = (j0 + 1).min(w - 1);
    let one = T::one();
    let top = image.at(i0, j0) * (one - fx) + image.at(i0, j1) * fx;
    let bottom = image.at(i1, j0) * (one - fx) + image.at(i1, j1) * fx;
    top * (one - fy) + bottom * fy
}

/// `out(i, j) = image(i + v(i, j), j + u(i, j))`, bilinearly interpolated.
pub fn warp_bilinear<T: Scalar>(image: &GrayImage<T>, flow: &FlowField<T>) -> Result<GrayImage<T>> {
    if image.dims() != flow.dims() {
        return Err(Error::shape(format!(
            "cannot warp {:?} image by {:?} flow",
            image.dims(),
            flow.dims()
        )));
    }
    let w = image.width();
    Ok(GrayImage::from_fn(image.height(), w, |i, j| {
        let k = i * w + j;
        sample_bilinear(
            image,
            T::from_usize_lossy(i) + flow.v()[k],
            T::from_usize_lossy(j) + flow.u()[k],
        )
    }))
}
