//! JSON network description.
//!
//! ```json
//! {
//!   "layers": [
//!     {"kind": "conv", "kernel": 3, "stride": 1, "padding": 1, "in_channels": 3, "out_channels": 8},
//!     {"kind": "relu"},
//!     {"kind": "maxpool", "kernel": 2, "stride": 2, "padding": 0}
//!   ],
//!   "taps": {"final": 3},
//!   "seed": 0
//! }
//! ```
//!
//! Conv weights come from either `seed` (see [`seeded_weights`]) or
//! `weights`, a path (relative to the JSON file) to a float32 little-endian
//! blob holding, for each conv layer in order, its `[out][in][ky][kx]`
//! weights followed by its `out` biases. With neither, the network is
//! geometry-only: receptive-field arithmetic works, forwarding through a
//! conv layer does not.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{seeded_weights, ConvLayer, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerGeometry {
    Conv {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    Maxpool {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub layers: Vec<LayerGeometry>,
    pub taps: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let (Some(w), Some(dir)) = (&file.weights, path.parent()) {
            if w.is_relative() {
                file.weights = Some(dir.join(w));
            }
        }
        Ok(file)
    }

    /// Description of an in-memory network (geometry and taps only).
    pub fn describe<T: Real>(net: &NetworkSpec<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(c) => LayerGeometry::Conv {
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                },
                LayerSpec::Relu => LayerGeometry::Relu,
                LayerSpec::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => LayerGeometry::Maxpool {
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
            })
            .collect();
        NetworkFile {
            layers,
            taps: net.taps().clone(),
            seed: None,
            weights: None,
        }
    }

    pub fn build<T: Real>(&self) -> Result<NetworkSpec<T>> {
        let mut layers: Vec<LayerSpec<T>> = self
            .layers
            .iter()
            .map(|g| match *g {
                LayerGeometry::Conv {
                    kernel,
                    stride,
                    padding,
                    in_channels,
                    out_channels,
                } => LayerSpec::Conv(ConvLayer {
                    kernel,
                    stride,
                    padding,
                    in_channels,
                    out_channels,
                    weights: Vec::new(),
                    bias: Vec::new(),
                }),
                LayerGeometry::Relu => LayerSpec::Relu,
                LayerGeometry::Maxpool {
                    kernel,
                    stride,
                    padding,
                } => LayerSpec::MaxPool {
                    kernel,
                    stride,
                    padding,
                },
            })
            .collect();
        match (self.seed, &self.weights) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument(
                    "network file sets both `seed` and `weights`".into(),
                ))
            }
            (Some(seed), None) => seeded_weights(&mut layers, seed),
            (None, Some(path)) => load_weights_blob(&mut layers, &std::fs::read(path)?)?,
            (None, None) => {}
        }
        NetworkSpec::new(layers, self.taps.clone())
    }
}

fn load_weights_blob<T: Real>(layers: &mut [LayerSpec<T>], bytes: &[u8]) -> Result<()> {
    let expected: usize = layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv(c) => c.weight_count() + c.out_channels,
            _ => 0,
        })
        .sum();
    if bytes.len() < expected * 4 {
        return Err(Error::Truncated {
            expected: expected * 4,
            found: bytes.len(),
        });
    }
    if bytes.len() != expected * 4 {
        return Err(Error::dims(format!("{} weight bytes", expected * 4), bytes.len()));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| T::from(f32::from_le_bytes(c.try_into().unwrap())).unwrap_or_else(T::nan));
    for layer in layers.iter_mut() {
        if let LayerSpec::Conv(c) = layer {
            c.weights = values.by_ref().take(c.weight_count()).collect();
            c.bias = values.by_ref().take(c.out_channels).collect();
        }
    }
    Ok(())
}

/// Writes the weights of every conv layer in blob order.
pub fn write_weights_blob<T: Real, W: Write>(net: &NetworkSpec<T>, mut sink: W) -> Result<()> {
    let mut buf = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if let LayerSpec::Conv(c) = layer {
            if !c.has_weights() {
                return Err(Error::MissingWeights(i + 1));
            }
            for v in c.weights.iter().chain(&c.bias) {
                let v = v.to_f32().unwrap_or(f32::NAN);
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    sink.write_all(&buf)?;
    Ok(())
}
