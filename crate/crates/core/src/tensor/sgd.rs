use super::{LayerParams, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted as a frozen-parameter probe.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// Momentum SGD with one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    config: SgdConfig,
    velocity: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// `v <- momentum*v - lr*(g + decay*w); w <- w + v`, then clears the
    /// gradient buffers. Decay applies to weights, not biases.
    pub fn step(&mut self, params: &mut [&mut LayerParams<T>]) {
        if self.velocity.len() != params.len() {
            self.velocity = params
                .iter()
                .map(|p| (Tensor::zeros(p.weights.dims()), Tensor::zeros(p.biases.dims())))
                .collect();
        }
        let lr = T::lit(self.config.learning_rate);
        let mu = T::lit(self.config.momentum);
        let decay = T::lit(self.config.weight_decay);
        for (p, (vw, vb)) in params.iter_mut().zip(self.velocity.iter_mut()) {
            update(p.weights.data_mut(), p.weight_grads.data(), vw.data_mut(), lr, mu, decay);
            update(p.biases.data_mut(), p.bias_grads.data(), vb.data_mut(), lr, mu, T::zero());
            p.zero_grads();
        }
    }
}

fn update<T: Scalar>(w: &mut [T], g: &[T], v: &mut [T], lr: T, mu: T, decay: T) {
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v - lr * (g + decay * *w);
        *w += *v;
    }
}

pub fn sgd_step<T: Scalar>(params: &mut [&mut LayerParams<T>], optimizer: &mut Sgd<T>) {
    optimizer.step(params);
}
