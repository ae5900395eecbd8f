use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-class probabilities: non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector<T> {
    s: Vec<T>,
}

impl<T: Scalar> ScoreVector<T> {
    /// Validates that `s` is a distribution within `tol`.
    pub fn new(s: Vec<T>, tol: f64) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Input("empty score vector".into()));
        }
        if s.iter().any(|&x| !x.is_finite() || x < T::zero() || x > T::one() + T::lit(tol)) {
            return Err(Error::Numeric(format!("score entries must lie in [0, 1]: {s:?}")));
        }
        let total: f64 = s.iter().map(|x| x.as_f64()).sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Numeric(format!("scores sum to {total}, not 1")));
        }
        Ok(Self { s })
    }

    pub fn uniform(n: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(n);
        Self { s: vec![p; n] }
    }

    /// Skips validation; callers guarantee the distribution property.
    pub(crate) fn from_raw(s: Vec<T>) -> Self {
        Self { s }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.s
    }

    /// Index of the largest score; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        argmax(&self.s)
    }

    /// Arithmetic mean of equally long score vectors.
    pub fn mean(vectors: &[ScoreVector<T>]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Input("mean of zero score vectors".into()))?;
        let n = first.len();
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::shape("score vectors differ in length"));
        }
        let m = T::from_usize_lossy(vectors.len());
        let s = (0..n)
            .map(|j| vectors.iter().map(|v| v.s[j]).sum::<T>() / m)
            .collect();
        Ok(Self { s })
    }
}

/// Lowest index of the maximum. NaNs never win.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
