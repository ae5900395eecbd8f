use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{LayerSpec, StreamConfig, StreamKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;
use crate::tensor::{softmax, Layer, LayerParams, Network, Tensor};

const HEADER_END: &str = "end\n";

/// Penultimate dense activations (after ReLU) of a stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFeature<T> {
    pub values: Vec<T>,
    pub source: StreamKind,
}

/// One stream: its configuration, the layer chain, and per-channel offsets
/// subtracted from raw inputs before the first layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamModel<T> {
    config: StreamConfig,
    network: Network<T>,
    channel_offsets: Vec<T>,
}

/// Allocates a stream from its plan with seeded He-normal weights.
pub fn build_stream<T: Scalar>(config: &StreamConfig, seed: u64) -> Result<StreamModel<T>> {
    let plan = config.layer_plan()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = plan
        .iter()
        .map(|spec| match *spec {
            LayerSpec::Conv {
                in_channels,
                out_channels,
            } => Layer::Conv3x3(LayerParams::he_init(
                &[3, 3, in_channels, out_channels],
                9 * in_channels,
                out_channels,
                &mut rng,
            )),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Pool => Layer::MaxPool2x2,
            LayerSpec::Dense { inputs, outputs } => {
                Layer::Dense(LayerParams::he_init(&[inputs, outputs], inputs, outputs, &mut rng))
            }
        })
        .collect();
    let (h, w, c) = config.input_dims;
    let network = Network::new(vec![h, w, c], layers)?;
    Ok(StreamModel {
        config: config.clone(),
        network,
        channel_offsets: vec![T::zero(); c],
    })
}

impl<T: Scalar> StreamModel<T> {
    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn kind(&self) -> StreamKind {
        self.config.kind
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.network
    }

    pub fn channel_offsets(&self) -> &[T] {
        &self.channel_offsets
    }

    pub fn set_channel_offsets(&mut self, offsets: Vec<T>) -> Result<()> {
        if offsets.len() != self.config.input_dims.2 {
            return Err(Error::shape(format!(
                "{} channel offsets for a {}-channel stream",
                offsets.len(),
                self.config.input_dims.2
            )));
        }
        self.channel_offsets = offsets;
        Ok(())
    }

    /// Sets the classifier (last dense layer) to zero.
    pub fn zero_classifier(&mut self) {
        if let Some(p) = self.network.layers_mut().iter_mut().rev().find_map(Layer::params_mut) {
            p.weights.fill(T::zero());
            p.biases.fill(T::zero());
        }
    }

    /// Validates dims and subtracts the channel offsets.
    pub fn prepare(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, c) = self.config.input_dims;
        if input.dims() != [h, w, c] {
            return Err(Error::shape(format!(
                "{} stream expects input {:?}, got {:?}",
                self.config.kind,
                [h, w, c],
                input.dims()
            )));
        }
        let mut x = input.clone();
        if self.channel_offsets.iter().any(|&o| o != T::zero()) {
            for px in x.data_mut().chunks_exact_mut(c) {
                for (v, &o) in px.iter_mut().zip(&self.channel_offsets) {
                    *v -= o;
                }
            }
        }
        Ok(x)
    }

    pub fn logits(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.network.forward(&self.prepare(input)?)?.into_data())
    }

    /// Softmax of the final logits.
    pub fn predict_frame(&self, input: &Tensor<T>) -> Result<ScoreVector<T>> {
        softmax(&self.logits(input)?)
    }

    pub fn extract_feature(&self, input: &Tensor<T>) -> Result<StreamFeature<T>> {
        // Everything but the classifier: the last layer is the final dense.
        let n = self.network.layers().len() - 1;
        let values = self.network.forward_prefix(&self.prepare(input)?, n)?.into_data();
        Ok(StreamFeature {
            values,
            source: self.config.kind,
        })
    }

    /// Stream checkpoint: the config as `key=value` text plus the channel
    /// offsets, an `end` line, then the binary network checkpoint.
    pub fn to_bytes(&self) -> Vec<u8> {
        let offsets: Vec<String> = self
            .channel_offsets
            .iter()
            .map(|o| format!("{:08x}", (o.as_f64() as f32).to_bits()))
            .collect();
        let mut out = self.config.to_text();
        out.push_str(&format!("offsets={}\n", offsets.join(",")));
        out.push_str(HEADER_END);
        let mut bytes = out.into_bytes();
        bytes.extend(self.network.to_checkpoint());
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let marker = format!("\n{HEADER_END}");
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker.as_bytes())
            .ok_or_else(|| Error::format(0, "stream header has no end marker"))?;
        let body_at = split + marker.len();
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::format(0, "stream header is not UTF-8"))?;
        let pairs: Vec<(&str, &str)> = header.lines().filter_map(|l| l.split_once('=')).collect();
        let config = StreamConfig::from_pairs(pairs.iter().copied()).map_err(|e| Error::format(0, e.to_string()))?;
        let offsets = pairs
            .iter()
            .find(|(k, _)| *k == "offsets")
            .map(|(_, v)| {
                v.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|h| {
                        u32::from_str_radix(h, 16)
                            .map(|b| T::lit(f64::from(f32::from_bits(b))))
                            .map_err(|_| Error::format(0, format!("bad offset `{h}`")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .transpose()?
            .unwrap_or_else(|| vec![T::zero(); config.input_dims.2]);
        let network = Network::from_checkpoint(&bytes[body_at..]).map_err(|e| match e {
            Error::Format { offset, detail } => Error::format(offset + body_at as u64, detail),
            e => e,
        })?;
        let (h, w, c) = config.input_dims;
        let expected = build_stream::<T>(&config, 0)?;
        let same_topology = network.input_dims() == [h, w, c]
            && network.layers().len() == expected.network.layers().len()
            && network
                .layers()
                .iter()
                .zip(expected.network.layers())
                .all(|(a, b)| a.kind() == b.kind() && a.params().map(|p| p.weights.dims()) == b.params().map(|p| p.weights.dims()));
        if !same_topology {
            return Err(Error::format(body_at as u64, "checkpoint layers disagree with the stream config"));
        }
        let mut model = StreamModel {
            config,
            network,
            channel_offsets: vec![T::zero(); c],
        };
        model
            .set_channel_offsets(offsets)
            .map_err(|e| Error::format(0, e.to_string()))?;
        Ok(model)
    }
}
