use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What a stream consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    /// One RGB still frame (3 channels).
    Spatial,
    /// A stack of `L` flow fields (`2L` channels).
    Temporal,
    /// Frame and flow stack concatenated (`3 + 2L` channels).
    Early,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Spatial => "spatial",
            StreamKind::Temporal => "temporal",
            StreamKind::Early => "early",
        }
    }

    /// Input channel count for flow stacks of length `flow_len`.
    pub fn channels(self, flow_len: usize) -> usize {
        match self {
            StreamKind::Spatial => 3,
            StreamKind::Temporal => 2 * flow_len,
            StreamKind::Early => 3 + 2 * flow_len,
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(StreamKind::Spatial),
            "temporal" => Ok(StreamKind::Temporal),
            "early" => Ok(StreamKind::Early),
            other => Err(Error::Config(format!("unknown stream kind `{other}`"))),
        }
    }
}

/// One planned layer of a stream, before parameters are allocated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { in_channels: usize, out_channels: usize },
    Relu,
    Pool,
    Dense { inputs: usize, outputs: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamConfig {
    pub kind: StreamKind,
    /// `(height, width, channels)`.
    pub input_dims: (usize, usize, usize),
    /// `(conv layers, output channels)` per block; each block ends in a 2×2 pool.
    pub blocks: Vec<(usize, usize)>,
    /// Hidden dense widths, the last of which is the feature dimension,
    /// followed by the class count.
    pub fc_dims: Vec<usize>,
    pub n_classes: usize,
}

impl StreamConfig {
    /// Three small blocks and a 128-d feature layer, sized for 64×64 clips.
    pub fn desk(kind: StreamKind, flow_len: usize, height: usize, width: usize) -> Self {
        Self {
            kind,
            input_dims: (height, width, kind.channels(flow_len)),
            blocks: vec![(1, 8), (1, 16), (2, 32)],
            fc_dims: vec![128, 6],
            n_classes: 6,
        }
    }

    /// 16-layer VGG topology at 224×224: 13 convolutions in 5 blocks and
    /// three dense layers ending in the class count.
    pub fn full(kind: StreamKind, flow_len: usize) -> Self {
        Self {
            kind,
            input_dims: (224, 224, kind.channels(flow_len)),
            blocks: vec![(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)],
            fc_dims: vec![4096, 4096, 6],
            n_classes: 6,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fc_dims[self.fc_dims.len().saturating_sub(2)]
    }

    /// The flow length implied by the input channel count.
    pub fn flow_len(&self) -> Option<usize> {
        let c = self.input_dims.2;
        match self.kind {
            StreamKind::Spatial => None,
            StreamKind::Temporal => Some(c / 2),
            StreamKind::Early => Some((c - 3) / 2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_plan().map(|_| ())
    }

    /// Conv+ReLU blocks each followed by a pool, then dense+ReLU hidden
    /// layers and a final dense layer of width `n_classes`.
    pub fn layer_plan(&self) -> Result<Vec<LayerSpec>> {
        let (mut h, mut w, c) = self.input_dims;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!("input dims must be positive, got {:?}", self.input_dims)));
        }
        match self.kind {
            StreamKind::Spatial if c != 3 => {
                return Err(Error::Config(format!("spatial stream needs 3 input channels, got {c}")))
            }
            StreamKind::Temporal if c % 2 != 0 => {
                return Err(Error::Config(format!("temporal stream needs 2L input channels, got {c}")))
            }
            StreamKind::Early if c < 5 || c % 2 == 0 => {
                return Err(Error::Config(format!("early-fusion stream needs 3+2L input channels, got {c}")))
            }
            _ => {}
        }
        if self.fc_dims.len() < 2 {
            return Err(Error::Config("fc_dims needs the feature width and the class count".into()));
        }
        if *self.fc_dims.last().unwrap() != self.n_classes || self.n_classes < 2 {
            return Err(Error::Config(format!(
                "fc_dims must end in n_classes = {} (>= 2), got {:?}",
                self.n_classes, self.fc_dims
            )));
        }
        let mut plan = Vec::new();
        let mut channels = c;
        for (b, &(convs, out)) in self.blocks.iter().enumerate() {
            if convs == 0 || out == 0 {
                return Err(Error::Config(format!("block {b} must have at least one conv and channel")));
            }
            for _ in 0..convs {
                plan.push(LayerSpec::Conv {
                    in_channels: channels,
                    out_channels: out,
                });
                plan.push(LayerSpec::Relu);
                channels = out;
            }
            if h < 2 || w < 2 {
                return Err(Error::Config(format!(
                    "block {b} cannot pool a {h}×{w} activation (layer {})",
                    plan.len()
                )));
            }
            plan.push(LayerSpec::Pool);
            h /= 2;
            w /= 2;
        }
        let mut width = h * w * channels;
        for (k, &d) in self.fc_dims.iter().enumerate() {
            if d == 0 {
                return Err(Error::Config(format!("dense layer {k} has zero width")));
            }
            plan.push(LayerSpec::Dense { inputs: width, outputs: d });
            if k + 1 < self.fc_dims.len() {
                plan.push(LayerSpec::Relu);
            }
            width = d;
        }
        Ok(plan)
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let blocks: Vec<String> = self.blocks.iter().map(|(n, c)| format!("{n}x{c}")).collect();
        let fc: Vec<String> = self.fc_dims.iter().map(ToString::to_string).collect();
        format!(
            "kind={}\ninput={}x{}x{}\nblocks={}\nfc={}\nclasses={}\n",
            self.kind,
            self.input_dims.0,
            self.input_dims.1,
            self.input_dims.2,
            blocks.join(","),
            fc.join(","),
            self.n_classes
        )
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let (mut kind, mut input, mut blocks, mut fc, mut classes) = (None, None, None, None, None);
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad number `{s}`")));
        for (k, v) in pairs {
            match k {
                "kind" => kind = Some(v.parse::<StreamKind>()?),
                "input" => {
                    let d: Vec<usize> = v.split('x').map(num).collect::<Result<_>>()?;
                    if d.len() != 3 {
                        return Err(Error::Config(format!("input must be HxWxC, got `{v}`")));
                    }
                    input = Some((d[0], d[1], d[2]));
                }
                "blocks" => {
                    blocks = Some(
                        v.split(',')
                            .filter(|s| !s.is_empty())
                            .map(|b| {
                                let (n, c) = b
                                    .split_once('x')
                                    .ok_or_else(|| Error::Config(format!("bad block `{b}`")))?;
                                Ok((num(n)?, num(c)?))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "fc" => fc = Some(v.split(',').map(num).collect::<Result<Vec<_>>>()?),
                "classes" => classes = Some(num(v)?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Config(format!("stream config missing `{k}`"));
        let cfg = Self {
            kind: kind.ok_or_else(|| missing("kind"))?,
            input_dims: input.ok_or_else(|| missing("input"))?,
            blocks: blocks.ok_or_else(|| missing("blocks"))?,
            fc_dims: fc.ok_or_else(|| missing("fc"))?,
            n_classes: classes.ok_or_else(|| missing("classes"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(plan: &[LayerSpec], f: impl Fn(&LayerSpec) -> bool) -> usize {
        plan.iter().filter(|l| f(l)).count()
    }

    #[test]
    fn full_spatial_preset_is_vgg16_shaped() {
        let plan = StreamConfig::full(StreamKind::Spatial, 10).layer_plan().unwrap();
        assert_eq!(count(&plan, |l| matches!(l, LayerSpec::Conv { .. })), 13);
        assert_eq!(count(&plan, |l| matches!(l, LayerSpec::Pool)), 5);
        assert_eq!(count(&plan, |l| matches!(l, LayerSpec::Dense { .. })), 3);
        assert_eq!(plan[0], LayerSpec::Conv { in_channels: 3, out_channels: 64 });
        assert_eq!(plan.iter().rev().find(|l| matches!(l, LayerSpec::Dense { .. })), Some(&LayerSpec::Dense {
            inputs: 4096,
            outputs: 6
        }));
        assert!(plan.contains(&LayerSpec::Dense { inputs: 7 * 7 * 512, outputs: 4096 }));
    }

    #[test]
    fn full_temporal_preset_differs_only_in_input_channels() {
        let s = StreamConfig::full(StreamKind::Spatial, 10);
        let t = StreamConfig::full(StreamKind::Temporal, 10);
        assert_eq!(t.input_dims, (224, 224, 20));
        let (ps, pt) = (s.layer_plan().unwrap(), t.layer_plan().unwrap());
        assert_eq!(ps.len(), pt.len());
        assert_eq!(pt[0], LayerSpec::Conv { in_channels: 20, out_channels: 64 });
        assert_eq!(ps[1..], pt[1..]);
    }

    #[test]
    fn too_many_pools_rejected() {
        let mut c = StreamConfig::desk(StreamKind::Spatial, 10, 8, 8);
        c.blocks = vec![(1, 4); 4];
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("block 3"), "{err}");
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let mut c = StreamConfig::desk(StreamKind::Spatial, 10, 64, 64);
        c.input_dims.2 = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let c = StreamConfig::desk(StreamKind::Early, 10, 64, 64);
        let text = c.to_text();
        let back = StreamConfig::from_pairs(text.lines().filter_map(|l| l.split_once('='))).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.flow_len(), Some(10));
    }
}
