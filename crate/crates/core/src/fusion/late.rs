use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;

/// Additive smoothing on class counts so no prior is zero.
pub const PRIOR_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassPriors {
    p: Vec<f64>,
}

impl ClassPriors {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|&x| !(x > 0.0 && x.is_finite())) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::data(format!("invalid class priors {p:?}")));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// `p(j) ∝ count(j) + ε` over `n` classes.
pub fn estimate_priors(labels: &[usize], n: usize) -> Result<ClassPriors> {
    if labels.is_empty() {
        return Err(Error::data("cannot estimate priors from no labels"));
    }
    let mut counts = vec![PRIOR_EPSILON; n];
    for (i, &l) in labels.iter().enumerate() {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::data(format!("label {l} at position {i} out of range for {n} classes")))? += 1.0;
    }
    let total: f64 = counts.iter().sum();
    Ok(ClassPriors {
        p: counts.into_iter().map(|c| c / total).collect(),
    })
}

/// `score_j = s_st_j * s_tp_j / p_j`, renormalized.
pub fn late_fuse<T: Scalar>(st: &ScoreVector<T>, tp: &ScoreVector<T>, priors: &ClassPriors) -> Result<ScoreVector<T>> {
    let n = st.len();
    if tp.len() != n || priors.len() != n {
        return Err(Error::shape(format!(
            "late fusion lengths differ: {n}, {}, {}",
            tp.len(),
            priors.len()
        )));
    }
    let raw: Vec<T> = st
        .as_slice()
        .iter()
        .zip(tp.as_slice())
        .zip(&priors.p)
        .map(|((&a, &b), &p)| a * b / T::lit(p))
        .collect();
    let total: T = raw.iter().copied().sum();
    if !(total > T::zero() && total.is_finite()) {
        return Err(Error::Degenerate(format!(
            "late fusion denominator is {total}; the streams share no class with nonzero score"
        )));
    }
    Ok(ScoreVector::from_raw(raw.into_iter().map(|x| x / total).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> ScoreVector<f64> {
        ScoreVector::new(v.to_vec(), 1e-9).unwrap()
    }

    #[test]
    fn two_class_evaluations() {
        let out = late_fuse(&sv(&[0.7, 0.3]), &sv(&[0.6, 0.4]), &ClassPriors::uniform(2)).unwrap();
        assert!((out.as_slice()[0] - 0.42 / 0.54).abs() < 1e-12);
        let skew = ClassPriors::new(vec![0.9, 0.1]).unwrap();
        let out = late_fuse(&sv(&[0.7, 0.3]), &sv(&[0.6, 0.4]), &skew).unwrap();
        assert!((out.as_slice()[0] - 0.28).abs() < 1e-9);
        assert!((out.as_slice()[1] - 0.72).abs() < 1e-9);
    }

    #[test]
    fn disjoint_support_is_degenerate() {
        let r = late_fuse(&sv(&[1.0, 0.0]), &sv(&[0.0, 1.0]), &ClassPriors::uniform(2));
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn priors_from_counts() {
        let p = estimate_priors(&[0, 0, 0, 1], 2).unwrap();
        assert!((p.as_slice()[0] - 0.75).abs() < 1e-6);
        let balanced: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let p = estimate_priors(&balanced, 6).unwrap();
        assert!(p.as_slice().iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
        let p = estimate_priors(&[0, 0], 3).unwrap();
        assert!(p.as_slice()[2] > 0.0);
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(estimate_priors(&[], 3).is_err());
        assert!(estimate_priors(&[5], 3).is_err());
    }
}
