use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::streams::StreamFeature;
use crate::tensor::Tensor;

/// Norms below this are not normalized.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeature<T> {
    pub values: Vec<T>,
    pub normalized: bool,
}

/// Frame channels first, then the normalized flow channels in stack order.
pub fn assemble_early_input<T: Scalar>(frame: &Tensor<T>, flow: &Tensor<T>) -> Result<Tensor<T>> {
    let (fd, gd) = (frame.dims(), flow.dims());
    if fd.len() != 3 || gd.len() != 3 || fd[2] != 3 || fd[..2] != gd[..2] {
        return Err(Error::shape(format!("cannot stack frame {fd:?} with flow {gd:?}")));
    }
    let (c1, c2) = (fd[2], gd[2]);
    let mut data = Vec::with_capacity(frame.len() + flow.len());
    for (a, b) in frame.data().chunks_exact(c1).zip(flow.data().chunks_exact(c2)) {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    Tensor::new(vec![fd[0], fd[1], c1 + c2], data)
}

/// `f[2d] = f_st[d]`, `f[2d + 1] = f_tp[d]` (0-based).
pub fn interleave_features<T: Scalar>(st: &StreamFeature<T>, tp: &StreamFeature<T>) -> Result<FusedFeature<T>> {
    if st.values.len() != tp.values.len() {
        return Err(Error::shape(format!(
            "feature lengths differ: {} vs {}",
            st.values.len(),
            tp.values.len()
        )));
    }
    let values = st.values.iter().zip(&tp.values).flat_map(|(&a, &b)| [a, b]).collect();
    Ok(FusedFeature {
        values,
        normalized: false,
    })
}

/// Inverse of [`interleave_features`]: even then odd positions.
pub fn deinterleave<T: Copy>(values: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if values.len() % 2 != 0 {
        return Err(Error::shape(format!("odd fused length {}", values.len())));
    }
    Ok(values.chunks_exact(2).map(|p| (p[0], p[1])).unzip())
}

/// Divides by the Euclidean norm. A near-zero vector is returned as is with
/// `normalized = false`.
pub fn l2_normalize<T: Scalar>(f: &FusedFeature<T>) -> FusedFeature<T> {
    let norm = f.values.iter().map(|&v| v * v).sum::<T>().sqrt();
    if !(norm.as_f64() >= NORM_FLOOR) {
        return FusedFeature {
            values: f.values.clone(),
            normalized: false,
        };
    }
    FusedFeature {
        values: f.values.iter().map(|&v| v / norm).collect(),
        normalized: true,
    }
}

/// One row per feature: the label, then the values.
pub fn features_csv<T: Scalar>(features: &[FusedFeature<T>], labels: &[usize]) -> Result<String> {
    if features.len() != labels.len() {
        return Err(Error::data(format!("{} features but {} labels", features.len(), labels.len())));
    }
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut out = String::from("label");
    for d in 0..dim {
        out.push_str(&format!(",f{d}"));
    }
    out.push('\n');
    for (f, l) in features.iter().zip(labels) {
        out.push_str(&l.to_string());
        for v in &f.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}
