use super::features::FusedFeature;
use crate::binio::{checked_len, ByteReader, ByteWriter, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::argmax;

const SVM_MAGIC: &[u8; 8] = b"STFSVM\0\0";

#[derive(Clone, Debug, PartialEq)]
pub struct SvmHyper {
    /// Inverse regularization strength: `lambda = 1 / c`.
    pub c: f64,
    pub epochs: usize,
    /// Recorded for reproducibility; the full-batch schedule draws nothing.
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            seed: 0,
        }
    }
}

/// One-vs-rest linear SVM: one weight row and bias per class.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
    /// Regularized average-hinge objective of each class after each epoch,
    /// summed over classes.
    pub objective: Vec<f64>,
}

impl<T: Scalar> SvmModel<T> {
    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn feature_len(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn margins(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.feature_len() {
            return Err(Error::shape(format!(
                "feature length {} does not match SVM length {}",
                x.len(),
                self.feature_len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| w.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>() + b)
            .collect())
    }

    /// Magic, version, `n` and feature length as u32, then weights (row
    /// per class) and biases as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(SVM_MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.num_classes() as u32);
        w.u32(self.feature_len() as u32);
        w.f32s(self.weights.iter().flatten().map(|v| v.as_f64() as f32));
        w.f32s(self.biases.iter().map(|v| v.as_f64() as f32));
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(SVM_MAGIC)?;
        r.expect_version()?;
        let n = r.dim("class count")?;
        let d = r.dim("feature length")?;
        let len = checked_len(&[n, d], r.offset())?;
        let to_t = |v: Vec<f32>| v.into_iter().map(|x| T::lit(f64::from(x))).collect::<Vec<T>>();
        let flat = to_t(r.f32s(len, "SVM weights")?);
        let biases = to_t(r.f32s(n, "SVM biases")?);
        r.finish()?;
        Ok(Self {
            weights: flat.chunks_exact(d).map(<[T]>::to_vec).collect(),
            biases,
            objective: Vec::new(),
        })
    }
}

/// Minimizes, per class `k`, `lambda/2 (|w|^2 + b^2) + mean_i max(0, 1 - y_ik (w.x_i + b))`
/// by full-batch subgradient steps of size `1 / (lambda t)`. The bias is
/// treated as a weight on a constant input. The objective averages over
/// samples, so duplicating every sample leaves the solution unchanged.
pub fn train_linear_svm<T: Scalar>(
    features: &[FusedFeature<T>],
    labels: &[usize],
    n_classes: usize,
    hyper: &SvmHyper,
) -> Result<SvmModel<T>> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::data(format!(
            "SVM needs matching non-empty features and labels, got {} and {}",
            features.len(),
            labels.len()
        )));
    }
    if !(hyper.c > 0.0 && hyper.c.is_finite()) || hyper.epochs == 0 {
        return Err(Error::Config(format!("invalid SVM hyper {hyper:?}")));
    }
    let d = features[0].values.len();
    for (i, f) in features.iter().enumerate() {
        if f.values.len() != d {
            return Err(Error::shape(format!("feature {i} has length {}, expected {d}", f.values.len())));
        }
        if !f.normalized {
            return Err(Error::data(format!("feature {i} is not normalized")));
        }
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(Error::data(format!("label {l} at position {i} out of range for {n_classes} classes")));
    }
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::data("SVM training needs at least two classes"));
    }

    let lambda = 1.0 / hyper.c;
    let n = features.len() as f64;
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.values.iter().map(|v| v.as_f64()).collect())
        .collect();
    let mut weights = vec![vec![0.0; d]; n_classes];
    let mut biases = vec![0.0; n_classes];
    let mut objective = vec![0.0; hyper.epochs];
    for k in 0..n_classes {
        let (w, b) = (&mut weights[k], &mut biases[k]);
        let ys: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        for t in 1..=hyper.epochs {
            let step = 1.0 / (lambda * t as f64);
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(&ys) {
                if y * (dot(w, x) + *b) < 1.0 {
                    gw.iter_mut().zip(x).for_each(|(g, &v)| *g += y * v);
                    gb += y;
                }
            }
            let shrink = 1.0 - step * lambda;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj = shrink * *wj + step * g / n;
            }
            *b = shrink * *b + step * gb / n;
            objective[t - 1] += class_objective(w, *b, &xs, &ys, lambda);
        }
    }
    Ok(SvmModel {
        weights: weights
            .into_iter()
            .map(|w| w.into_iter().map(T::lit).collect())
            .collect(),
        biases: biases.into_iter().map(T::lit).collect(),
        objective,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn class_objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs.iter().zip(ys).map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0)).sum();
    0.5 * lambda * (dot(w, w) + b * b) + hinge / xs.len() as f64
}

/// Class with the largest margin (lowest index on ties) and all margins.
pub fn svm_predict<T: Scalar>(model: &SvmModel<T>, f: &FusedFeature<T>) -> Result<(usize, Vec<T>)> {
    let m = model.margins(&f.values)?;
    Ok((argmax(&m), m))
}
