//! Dense tensors and the fixed layer set used by both streams.

mod gradcheck;
mod layers;
mod loss;
mod network;
mod sgd;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gradcheck::{
    finite_difference_check, gradient_relative_error, numeric_gradient, GradCheckReport, Objective,
};
pub use layers::{
    conv3x3_backward, conv3x3_backward_into, conv3x3_forward, dense_backward,
    dense_backward_into, dense_forward, maxpool2x2, maxpool2x2_backward, relu, relu_backward,
    PoolIndices,
};
pub use loss::{cross_entropy_loss, softmax, softmax_cross_entropy, PROB_FLOOR};
pub use network::{Gradients, Layer, LayerKind, Network, Trace};
pub use sgd::{sgd_step, Sgd, SgdConfig};

/// Row-major dense array, channel index fastest. Rank 1 to 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::shape(format!("tensor rank must be 1..=4, got {dims:?}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("tensor dims must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {len} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, T::zero())
    }

    pub fn filled(dims: &[usize], value: T) -> Self {
        let len = dims.iter().product();
        Self::new(dims.to_vec(), vec![value; len]).expect("valid dims")
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len: usize = dims.iter().product();
        Self::new(dims.to_vec(), (0..len).map(&mut f).collect()).expect("valid dims")
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("non-empty vector")
    }

    /// Samples `N(0, std^2)` entries.
    pub fn random_normal<R: Rng + ?Sized>(dims: &[usize], std: f64, rng: &mut R) -> Self {
        Self::from_fn(dims, |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
    }

    pub fn random_uniform<R: Rng + ?Sized>(dims: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(dims, |_| T::lit(rng.gen_range(lo..hi)))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() || dims.is_empty() || dims.len() > 4 {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn flatten(self) -> Self {
        let n = self.data.len();
        Self { dims: vec![n], data: self.data }
    }

    /// `(height, width, channels)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::shape(format!("expected rank-3 H×W×C, got {:?}", self.dims))),
        }
    }

    pub fn at3(&self, i: usize, j: usize, c: usize) -> T {
        let (_, w, ch) = (self.dims[0], self.dims[1], self.dims[2]);
        self.data[(i * w + j) * ch + c]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .fold(0.0, f64::max)
    }
}

/// Trainable parameters of one layer with same-shaped gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Tensor<T>,
    pub biases: Tensor<T>,
    pub weight_grads: Tensor<T>,
    pub bias_grads: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weights: Tensor<T>, biases: Tensor<T>) -> Self {
        let weight_grads = Tensor::zeros(weights.dims());
        let bias_grads = Tensor::zeros(biases.dims());
        Self {
            weights,
            biases,
            weight_grads,
            bias_grads,
        }
    }

    /// He-normal weights with the given fan-in, zero biases.
    pub fn he_init<R: Rng + ?Sized>(weight_dims: &[usize], fan_in: usize, out: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        Self::new(Tensor::random_normal(weight_dims, std, rng), Tensor::zeros(&[out]))
    }

    pub fn zero_grads(&mut self) {
        self.weight_grads.fill(T::zero());
        self.bias_grads.fill(T::zero());
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}
