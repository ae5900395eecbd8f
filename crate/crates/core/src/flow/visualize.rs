use super::FlowField;
use crate::error::Result;
use crate::pgm::encode_pgm;
use crate::scalar::Scalar;

/// Side-by-side `u | v` graymap. Zero displacement maps to mid-gray and the
/// largest magnitude over both components to black or white.
pub fn flow_to_pgm<T: Scalar>(flow: &FlowField<T>) -> Result<Vec<u8>> {
    let (h, w) = flow.dims();
    let peak = flow
        .u()
        .iter()
        .chain(flow.v())
        .map(|x| x.abs().as_f64())
        .fold(0.0, f64::max)
        .max(1e-12);
    let gray = |x: T| (127.5 + 127.5 * x.as_f64() / peak).round().clamp(0.0, 255.0) as u8;
    let mut px = Vec::with_capacity(2 * h * w);
    for i in 0..h {
        px.extend(flow.u()[i * w..(i + 1) * w].iter().map(|&x| gray(x)));
        px.extend(flow.v()[i * w..(i + 1) * w].iter().map(|&x| gray(x)));
    }
    encode_pgm(2 * w, h, &px)
}
