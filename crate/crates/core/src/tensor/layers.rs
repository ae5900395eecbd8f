use super::{LayerParams, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn conv_dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, biases: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (h, w, cin) = input.hwc()?;
    match weights.dims()[..] {
        [3, 3, wc, cout] if wc == cin && biases.dims() == [cout] => Ok((h, w, cin, cout)),
        _ => Err(Error::shape(format!(
            "conv3x3 weights {:?} / biases {:?} incompatible with input {:?}",
            weights.dims(),
            biases.dims(),
            input.dims()
        ))),
    }
}

/// 3×3 convolution, stride 1, zero padding 1. Weights are `3×3×C_in×C_out`.
pub fn conv3x3_forward<T: Scalar>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let (h, w, cin, cout) = conv_dims(input, &params.weights, &params.biases)?;
    let x = input.data();
    let k = params.weights.data();
    let b = params.biases.data();
    let mut out = vec![T::zero(); h * w * cout];
    for i in 0..h {
        for j in 0..w {
            let o = &mut out[(i * w + j) * cout..(i * w + j + 1) * cout];
            o.copy_from_slice(b);
            for ky in 0..3 {
                let ii = i + ky;
                if ii < 1 || ii > h {
                    continue;
                }
                for kx in 0..3 {
                    let jj = j + kx;
                    if jj < 1 || jj > w {
                        continue;
                    }
                    let px = &x[((ii - 1) * w + jj - 1) * cin..((ii - 1) * w + jj) * cin];
                    let kbase = (ky * 3 + kx) * cin * cout;
                    for (ci, &xv) in px.iter().enumerate() {
                        if xv == T::zero() {
                            continue;
                        }
                        let row = &k[kbase + ci * cout..kbase + (ci + 1) * cout];
                        for (acc, &kv) in o.iter_mut().zip(row) {
                            *acc += xv * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, cout], out)
}

/// Backward pass of [`conv3x3_forward`] that accumulates parameter gradients
/// into the supplied buffers instead of the layer's own.
pub fn conv3x3_backward_into<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    biases: &Tensor<T>,
    upstream: &Tensor<T>,
    weight_grads: &mut Tensor<T>,
    bias_grads: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, cin, cout) = conv_dims(input, weights, biases)?;
    if upstream.dims() != [h, w, cout] {
        return Err(Error::shape(format!(
            "conv3x3 upstream gradient {:?} does not match output {:?}",
            upstream.dims(),
            [h, w, cout]
        )));
    }
    let x = input.data();
    let k = weights.data();
    let g = upstream.data();
    let gw = weight_grads.data_mut();
    let mut dx = vec![T::zero(); h * w * cin];
    for i in 0..h {
        for j in 0..w {
            let go = &g[(i * w + j) * cout..(i * w + j + 1) * cout];
            for (acc, &gv) in bias_grads.data_mut().iter_mut().zip(go) {
                *acc += gv;
            }
            if go.iter().all(|&v| v == T::zero()) {
                continue;
            }
            for ky in 0..3 {
                let ii = i + ky;
                if ii < 1 || ii > h {
                    continue;
                }
                for kx in 0..3 {
                    let jj = j + kx;
                    if jj < 1 || jj > w {
                        continue;
                    }
                    let pbase = ((ii - 1) * w + jj - 1) * cin;
                    let kbase = (ky * 3 + kx) * cin * cout;
                    for ci in 0..cin {
                        let xv = x[pbase + ci];
                        let row = kbase + ci * cout;
                        let krow = &k[row..row + cout];
                        let mut s = T::zero();
                        for (&kv, &gv) in krow.iter().zip(go) {
                            s += kv * gv;
                        }
                        dx[pbase + ci] += s;
                        if xv != T::zero() {
                            for (acc, &gv) in gw[row..row + cout].iter_mut().zip(go) {
                                *acc += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, cin], dx)
}

/// Backward pass of [`conv3x3_forward`]; accumulates into `params`' gradient
/// buffers and returns the input gradient.
pub fn conv3x3_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &mut LayerParams<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let LayerParams {
        weights,
        biases,
        weight_grads,
        bias_grads,
    } = params;
    conv3x3_backward_into(input, weights, biases, upstream, weight_grads, bias_grads)
}

/// Flat input index of each pooled output's winning element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_dims: Vec<usize>,
    pub winners: Vec<usize>,
}

/// 2×2 max pooling, stride 2. Odd trailing rows/columns are dropped and the
/// first maximal element in row-major window order wins ties.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (h, w, c) = input.hwc()?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("maxpool2x2 needs H, W >= 2, got {:?}", input.dims())));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut winners = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = (2 * i * w + 2 * j) * c + ch;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                winners.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![oh, ow, c], out)?,
        PoolIndices {
            input_dims: input.dims().to_vec(),
            winners,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.len() != indices.winners.len() {
        return Err(Error::shape(format!(
            "maxpool upstream has {} elements, expected {}",
            upstream.len(),
            indices.winners.len()
        )));
    }
    let mut dx = Tensor::zeros(&indices.input_dims);
    let d = dx.data_mut();
    for (&idx, &g) in indices.winners.iter().zip(upstream.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

fn dense_dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, biases: &Tensor<T>) -> Result<(usize, usize)> {
    match weights.dims()[..] {
        [din, dout] if din == input.len() && biases.dims() == [dout] => Ok((din, dout)),
        _ => Err(Error::shape(format!(
            "dense weights {:?} / biases {:?} incompatible with input of length {}",
            weights.dims(),
            biases.dims(),
            input.len()
        ))),
    }
}

/// `out = Wᵀ·x + b` with `W` stored as `D_in×D_out`. Input of any rank is
/// read flat.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let (_, dout) = dense_dims(input, &params.weights, &params.biases)?;
    let wts = params.weights.data();
    let mut out = params.biases.data().to_vec();
    for (r, &xv) in input.data().iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        for (acc, &wv) in out.iter_mut().zip(&wts[r * dout..(r + 1) * dout]) {
            *acc += xv * wv;
        }
    }
    Tensor::new(vec![dout], out)
}

/// Backward pass of [`dense_forward`]; the returned input gradient has the
/// input's original dims.
pub fn dense_backward_into<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    biases: &Tensor<T>,
    upstream: &Tensor<T>,
    weight_grads: &mut Tensor<T>,
    bias_grads: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (din, dout) = dense_dims(input, weights, biases)?;
    if upstream.len() != dout {
        return Err(Error::shape(format!(
            "dense upstream gradient has length {}, expected {dout}",
            upstream.len()
        )));
    }
    let g = upstream.data();
    for (acc, &gv) in bias_grads.data_mut().iter_mut().zip(g) {
        *acc += gv;
    }
    let wts = weights.data();
    let gw = weight_grads.data_mut();
    let mut dx = vec![T::zero(); din];
    for (r, &xv) in input.data().iter().enumerate() {
        let row = r * dout..(r + 1) * dout;
        let mut s = T::zero();
        for (&wv, &gv) in wts[row.clone()].iter().zip(g) {
            s += wv * gv;
        }
        dx[r] = s;
        if xv != T::zero() {
            for (acc, &gv) in gw[row].iter_mut().zip(g) {
                *acc += xv * gv;
            }
        }
    }
    Tensor::new(input.dims().to_vec(), dx)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &mut LayerParams<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let LayerParams {
        weights,
        biases,
        weight_grads,
        bias_grads,
    } = params;
    dense_backward_into(input, weights, biases, upstream, weight_grads, bias_grads)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|x| {
        if *x < T::zero() {
            *x = T::zero();
        }
    });
    out
}

/// Passes `upstream` where the forward input was strictly positive; the
/// subgradient at zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.dims() != upstream.dims() {
        return Err(Error::shape(format!(
            "relu upstream {:?} does not match input {:?}",
            upstream.dims(),
            input.dims()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.dims().to_vec(), data)
}
