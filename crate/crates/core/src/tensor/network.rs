use super::layers::{
    conv3x3_backward_into, conv3x3_forward, dense_backward_into, dense_forward, maxpool2x2,
    maxpool2x2_backward, relu, relu_backward, PoolIndices,
};
use super::{LayerParams, Tensor};
use crate::binio::{checked_len, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const CHECKPOINT_MAGIC: &[u8; 8] = b"STFCKPT\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Relu,
    MaxPool2x2,
    Dense,
}

impl LayerKind {
    fn tag(self) -> u32 {
        match self {
            LayerKind::Conv3x3 => 0,
            LayerKind::Relu => 1,
            LayerKind::MaxPool2x2 => 2,
            LayerKind::Dense => 3,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => LayerKind::Conv3x3,
            1 => LayerKind::Relu,
            2 => LayerKind::MaxPool2x2,
            3 => LayerKind::Dense,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv3x3(LayerParams<T>),
    Relu,
    MaxPool2x2,
    Dense(LayerParams<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv3x3(_) => LayerKind::Conv3x3,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool2x2 => LayerKind::MaxPool2x2,
            Layer::Dense(_) => LayerKind::Dense,
        }
    }

    pub fn params(&self) -> Option<&LayerParams<T>> {
        match self {
            Layer::Conv3x3(p) | Layer::Dense(p) => Some(p),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams<T>> {
        match self {
            Layer::Conv3x3(p) | Layer::Dense(p) => Some(p),
            _ => None,
        }
    }

    /// Output dims for the given input dims, or a description of the mismatch.
    fn output_dims(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            Layer::Conv3x3(p) => match (input, p.weights.dims()) {
                ([h, w, c], [3, 3, wc, cout]) if c == wc && p.biases.dims() == [*cout] => Ok(vec![*h, *w, *cout]),
                _ => Err(format!(
                    "conv3x3 weights {:?} do not fit input {input:?}",
                    p.weights.dims()
                )),
            },
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2x2 => match input {
                [h, w, c] if *h >= 2 && *w >= 2 => Ok(vec![h / 2, w / 2, *c]),
                _ => Err(format!("maxpool2x2 cannot pool input {input:?}")),
            },
            Layer::Dense(p) => {
                let len: usize = input.iter().product();
                match p.weights.dims() {
                    [din, dout] if *din == len && p.biases.dims() == [*dout] => Ok(vec![*dout]),
                    d => Err(format!("dense weights {d:?} do not fit input {input:?} (length {len})")),
                }
            }
        }
    }
}

/// Per-layer gradient buffers, detached from the network so that batch
/// elements can be differentiated independently.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                aw.add_assign(bw);
                ab.add_assign(bb);
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for (w, b) in self.layers.iter_mut().flatten() {
            w.scale(s);
            b.scale(s);
        }
    }

    /// Concatenation of all gradient entries in layer order (weights, then biases).
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|(w, b)| w.data().iter().chain(b.data()).copied())
            .collect()
    }
}

/// Intermediate activations recorded by [`Network::forward_trace`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// `inputs[k]` is the input of layer `k`.
    pub inputs: Vec<Tensor<T>>,
    pub pools: Vec<Option<PoolIndices>>,
    pub output: Tensor<T>,
}

/// A feed-forward chain of the fixed layer set.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    input_dims: Vec<usize>,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Validates the shape chain; the error names the first offending layer.
    pub fn new(input_dims: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self> {
        if input_dims.is_empty() || input_dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("invalid network input dims {input_dims:?}")));
        }
        let mut dims = input_dims.clone();
        for (k, layer) in layers.iter().enumerate() {
            dims = layer
                .output_dims(&dims)
                .map_err(|e| Error::shape(format!("layer {k} ({:?}): {e}", layer.kind())))?;
        }
        Ok(Self { input_dims, layers })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.dims_after(self.layers.len())
    }

    /// Activation dims after the first `n` layers.
    pub fn dims_after(&self, n: usize) -> Vec<usize> {
        self.layers[..n].iter().fold(self.input_dims.clone(), |d, l| {
            l.output_dims(&d).expect("validated at construction")
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams<T>> {
        self.layers.iter_mut().filter_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().filter_map(Layer::params).map(LayerParams::param_count).sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.dims() != self.input_dims.as_slice() {
            return Err(Error::shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_dims,
                input.dims()
            )));
        }
        Ok(())
    }

    fn apply(layer: &Layer<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Option<PoolIndices>)> {
        Ok(match layer {
            Layer::Conv3x3(p) => (conv3x3_forward(x, p)?, None),
            Layer::Relu => (relu(x), None),
            Layer::MaxPool2x2 => {
                let (y, idx) = maxpool2x2(x)?;
                (y, Some(idx))
            }
            Layer::Dense(p) => (dense_forward(x, p)?, None),
        })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_prefix(input, self.layers.len())
    }

    /// Runs only the first `n` layers.
    pub fn forward_prefix(&self, input: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers[..n.min(self.layers.len())] {
            x = Self::apply(layer, &x)?.0;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pools = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, idx) = Self::apply(layer, &x)?;
            inputs.push(x);
            pools.push(idx);
            x = y;
        }
        Ok(Trace {
            inputs,
            pools,
            output: x,
        })
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.params()
                        .map(|p| (Tensor::zeros(p.weights.dims()), Tensor::zeros(p.biases.dims())))
                })
                .collect(),
        }
    }

    /// Backpropagates `upstream` (gradient w.r.t. the network output) and
    /// accumulates parameter gradients into `grads`. Returns the input gradient.
    pub fn backward(&self, trace: &Trace<T>, upstream: &Tensor<T>, grads: &mut Gradients<T>) -> Result<Tensor<T>> {
        if upstream.dims() != trace.output.dims() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match network output {:?}",
                upstream.dims(),
                trace.output.dims()
            )));
        }
        let mut g = upstream.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[k];
            g = match layer {
                Layer::Conv3x3(p) => {
                    let (gw, gb) = grads.layers[k].as_mut().expect("gradient slot for conv");
                    conv3x3_backward_into(x, &p.weights, &p.biases, &g, gw, gb)?
                }
                Layer::Dense(p) => {
                    let (gw, gb) = grads.layers[k].as_mut().expect("gradient slot for dense");
                    dense_backward_into(x, &p.weights, &p.biases, &g, gw, gb)?
                }
                Layer::Relu => relu_backward(x, &g)?,
                Layer::MaxPool2x2 => maxpool2x2_backward(trace.pools[k].as_ref().expect("pool indices"), &g)?,
            };
        }
        Ok(g)
    }

    /// Adds detached gradients into each layer's own gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if let (Some(p), Some((gw, gb))) = (layer.params_mut(), g) {
                p.weight_grads.add_assign(gw);
                p.bias_grads.add_assign(gb);
            }
        }
    }

    /// Layer gradients currently held in the parameter buffers.
    pub fn held_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| l.params().map(|p| (p.weight_grads.clone(), p.bias_grads.clone())))
                .collect(),
        }
    }

    /// All parameters flattened in layer order (weights, then biases).
    pub fn flat_params(&self) -> Vec<T> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|p| p.weights.data().iter().chain(p.biases.data()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) {
        let mut it = values.iter().copied();
        for p in self.params_mut() {
            for w in p.weights.data_mut().iter_mut().chain(p.biases.data_mut()) {
                *w = it.next().expect("enough parameter values");
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv3x3(p) => Layer::Conv3x3(LayerParams::new(p.weights.cast(), p.biases.cast())),
                Layer::Dense(p) => Layer::Dense(LayerParams::new(p.weights.cast(), p.biases.cast())),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool2x2 => Layer::MaxPool2x2,
            })
            .collect();
        Network {
            input_dims: self.input_dims.clone(),
            layers,
        }
    }

    /// Serializes to the checkpoint format: magic, version, input dims,
    /// layer count, then per layer its kind tag and (for parametric layers)
    /// weight dims, bias dims and little-endian `f32` values.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(crate::binio::FORMAT_VERSION);
        w.u32(self.input_dims.len() as u32);
        for &d in &self.input_dims {
            w.u32(d as u32);
        }
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            w.u32(layer.kind().tag());
            if let Some(p) = layer.params() {
                for t in [&p.weights, &p.biases] {
                    w.u32(t.rank() as u32);
                    for &d in t.dims() {
                        w.u32(d as u32);
                    }
                }
                w.f32s(p.weights.data().iter().map(|v| v.as_f64() as f32));
                w.f32s(p.biases.data().iter().map(|v| v.as_f64() as f32));
            }
        }
        w.into_inner()
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        r.expect_version()?;
        let input_dims = read_dims(&mut r, "input")?;
        let count = r.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let at = r.offset();
            let tag = r.u32("layer tag")?;
            let kind = LayerKind::from_tag(tag).ok_or_else(|| Error::format(at, format!("unknown layer tag {tag}")))?;
            layers.push(match kind {
                LayerKind::Relu => Layer::Relu,
                LayerKind::MaxPool2x2 => Layer::MaxPool2x2,
                LayerKind::Conv3x3 | LayerKind::Dense => {
                    let wd = read_dims(&mut r, "weight")?;
                    let bd = read_dims(&mut r, "bias")?;
                    let at = r.offset();
                    let wlen = checked_len(&wd, at)?;
                    let blen = checked_len(&bd, at)?;
                    let wv = r.f32s(wlen, "weights")?;
                    let bv = r.f32s(blen, "biases")?;
                    let conv = |d: Vec<usize>, v: Vec<f32>| {
                        Tensor::new(d, v.into_iter().map(|x| T::lit(f64::from(x))).collect())
                            .map_err(|e| Error::format(at, e.to_string()))
                    };
                    let p = LayerParams::new(conv(wd, wv)?, conv(bd, bv)?);
                    if kind == LayerKind::Conv3x3 {
                        Layer::Conv3x3(p)
                    } else {
                        Layer::Dense(p)
                    }
                }
            });
        }
        r.finish()?;
        let end = r.offset();
        Network::new(input_dims, layers).map_err(|e| Error::format(end, e.to_string()))
    }
}

fn read_dims(r: &mut ByteReader<'_>, what: &str) -> Result<Vec<usize>> {
    let at = r.offset();
    let rank = r.u32(what)? as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::format(at, format!("{what} rank {rank} out of range")));
    }
    (0..rank).map(|_| r.dim(what)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net() -> Network<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Network::new(
            vec![4, 4, 2],
            vec![
                Layer::Conv3x3(LayerParams::he_init(&[3, 3, 2, 3], 18, 3, &mut rng)),
                Layer::Relu,
                Layer::MaxPool2x2,
                Layer::Dense(LayerParams::he_init(&[12, 5], 12, 5, &mut rng)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shape_chain_error_names_layer() {
        let err = Network::<f32>::new(
            vec![4, 4, 2],
            vec![
                Layer::MaxPool2x2,
                Layer::Dense(LayerParams::new(Tensor::zeros(&[9, 2]), Tensor::zeros(&[2]))),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = small_net();
        let bytes = net.to_checkpoint();
        let back = Network::<f32>::from_checkpoint(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_checkpoint(), bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let bytes = small_net().to_checkpoint();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Network::<f32>::from_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            Network::<f32>::from_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn backward_input_gradient_has_input_dims() {
        let net = small_net();
        let x = Tensor::random_normal(&[4, 4, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let trace = net.forward_trace(&x).unwrap();
        let mut grads = net.zero_gradients();
        let dx = net.backward(&trace, &Tensor::filled(&[5], 1.0), &mut grads).unwrap();
        assert_eq!(dx.dims(), x.dims());
        assert_eq!(trace.output, net.forward(&x).unwrap());
    }
}
