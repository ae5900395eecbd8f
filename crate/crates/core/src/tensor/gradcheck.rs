//! Central finite-difference gradient checking (double precision).

use super::loss::softmax_cross_entropy;
use super::{Network, Tensor};
use crate::error::{Error, Result};

/// Scalar objective attached to a network output for checking.
#[derive(Clone, Debug)]
pub enum Objective {
    /// Softmax cross-entropy against a class label.
    CrossEntropy(usize),
    /// `Σ r_i · out_i` for a fixed random projection `r`.
    Projection(Tensor<f64>),
}

impl Objective {
    fn eval(&self, out: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
        match self {
            Objective::CrossEntropy(label) => {
                let (loss, _, grad) = softmax_cross_entropy(out.data(), *label)?;
                Ok((loss, Tensor::new(out.dims().to_vec(), grad)?))
            }
            Objective::Projection(r) => {
                if r.dims() != out.dims() {
                    return Err(Error::shape(format!(
                        "projection {:?} does not match output {:?}",
                        r.dims(),
                        out.dims()
                    )));
                }
                let v = r.data().iter().zip(out.data()).map(|(a, b)| a * b).sum();
                Ok((v, r.clone()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub param_error: f64,
    pub input_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.param_error.max(self.input_error)
    }
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn gradient_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + eps;
            let plus = f(&probe);
            probe[k] = orig - eps;
            let minus = f(&probe);
            probe[k] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Compares backpropagated parameter and input gradients of `objective ∘ net`
/// with central differences of step `eps`.
pub fn finite_difference_check(
    net: &Network<f64>,
    input: &Tensor<f64>,
    objective: &Objective,
    eps: f64,
) -> Result<GradCheckReport> {
    let trace = net.forward_trace(input)?;
    let (_, upstream) = objective.eval(&trace.output)?;
    let mut grads = net.zero_gradients();
    let dx = net.backward(&trace, &upstream, &mut grads)?;

    let loss_at = |n: &Network<f64>, x: &Tensor<f64>| -> f64 {
        let out = n.forward(x).expect("validated shapes");
        objective.eval(&out).expect("validated objective").0
    };

    let theta = net.flat_params();
    let mut probe = net.clone();
    let num_params = numeric_gradient(
        |p| {
            probe.set_flat_params(p);
            loss_at(&probe, input)
        },
        &theta,
        eps,
    );
    let num_input = numeric_gradient(
        |x| {
            let t = Tensor::new(input.dims().to_vec(), x.to_vec()).expect("same dims");
            loss_at(net, &t)
        },
        input.data(),
        eps,
    );
    Ok(GradCheckReport {
        param_error: gradient_relative_error(&grads.flat(), &num_params),
        input_error: gradient_relative_error(dx.data(), &num_input),
        checked: theta.len() + input.len(),
    })
}
