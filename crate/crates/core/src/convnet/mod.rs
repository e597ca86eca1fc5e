//! Deterministic layered convolutional network.
//!
//! Layers are numbered from 1. A forward pass from layer `a` to layer `c`
//! applies layers `a..=c` in order, so `forward(x, a, c)` equals
//! `forward(forward(x, a, b), b + 1, c)` for any split point `b`.

mod layers;
mod rf;
mod spec_file;

pub use self::rf::{project_roi, rf_params, RFParams};
pub use self::spec_file::{write_weights_blob, LayerGeometry, NetworkFile};

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{FeatureMap, Image};

pub const TAP_LOW: &str = "low";
pub const TAP_MID: &str = "mid";
pub const TAP_FINAL: &str = "final";

/// Half-width of the uniform range toy weights are drawn from.
pub const TOY_WEIGHT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`; empty for geometry-only networks.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn has_weights(&self) -> bool {
        !self.weights.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec<T> {
    Conv(ConvLayer<T>),
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

impl<T: Real> LayerSpec<T> {
    /// `(kernel, stride, padding)`; a ReLU behaves like a 1×1 stride-1 window.
    pub fn window(&self) -> (usize, usize, usize) {
        match self {
            LayerSpec::Conv(c) => (c.kernel, c.stride, c.padding),
            LayerSpec::Relu => (1, 1, 0),
            LayerSpec::MaxPool {
                kernel,
                stride,
                padding,
            } => (*kernel, *stride, *padding),
        }
    }

    pub fn is_relu(&self) -> bool {
        matches!(self, LayerSpec::Relu)
    }

    /// Spatial output length along one axis, `None` when the padded input is
    /// smaller than the kernel.
    pub fn output_len(&self, input: usize) -> Option<usize> {
        let (k, s, p) = self.window();
        let padded = input + 2 * p;
        if padded < k {
            return None;
        }
        Some((padded - k) / s + 1)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("layer {index}: {msg}")));
        match self {
            LayerSpec::Conv(c) => {
                if c.kernel % 2 == 0 {
                    return bad(format!("conv kernel {} must be odd", c.kernel));
                }
                if c.stride == 0 {
                    return bad("stride must be >= 1".into());
                }
                if c.in_channels == 0 || c.out_channels == 0 {
                    return bad("channel counts must be positive".into());
                }
                if c.has_weights() {
                    if c.weights.len() != c.weight_count() {
                        return Err(Error::dims(
                            format!("{} weights", c.weight_count()),
                            c.weights.len(),
                        ));
                    }
                    if c.bias.len() != c.out_channels {
                        return Err(Error::dims(format!("{} biases", c.out_channels), c.bias.len()));
                    }
                    if c.weights.iter().chain(&c.bias).any(|v| !v.is_finite()) {
                        return bad("non-finite weight".into());
                    }
                }
                Ok(())
            }
            LayerSpec::Relu => Ok(()),
            LayerSpec::MaxPool {
                kernel,
                stride,
                padding,
            } => {
                if *kernel == 0 || *stride == 0 {
                    return bad("pool kernel and stride must be >= 1".into());
                }
                if padding >= kernel {
                    return bad("pool padding must be smaller than the kernel".into());
                }
                Ok(())
            }
        }
    }
}

/// Ordered layers plus named taps (tap name → 1-based layer index).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec<T> {
    layers: Vec<LayerSpec<T>>,
    taps: BTreeMap<String, usize>,
    input_channels: usize,
}

impl<T: Real> NetworkSpec<T> {
    pub fn new(layers: Vec<LayerSpec<T>>, taps: BTreeMap<String, usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        let mut channels: Option<usize> = None;
        let mut input_channels = None;
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i + 1)?;
            if let LayerSpec::Conv(c) = layer {
                match channels {
                    Some(ch) if ch != c.in_channels => {
                        return Err(Error::InvalidArgument(format!(
                            "layer {}: expects {} input channels, previous conv produces {ch}",
                            i + 1,
                            c.in_channels
                        )))
                    }
                    None => input_channels = Some(c.in_channels),
                    _ => {}
                }
                channels = Some(c.out_channels);
            }
        }
        match taps.get(TAP_FINAL) {
            Some(&l) if l == layers.len() => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "tap `{TAP_FINAL}` must exist and name the last layer ({})",
                    layers.len()
                )))
            }
        }
        if let Some((name, l)) = taps.iter().find(|(_, l)| **l == 0 || **l > layers.len()) {
            return Err(Error::InvalidArgument(format!("tap `{name}` -> {l} out of range")));
        }
        Ok(NetworkSpec {
            layers,
            taps,
            input_channels: input_channels.unwrap_or(3),
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// 1-based layer access.
    pub fn layer(&self, index: usize) -> &LayerSpec<T> {
        &self.layers[index - 1]
    }

    pub fn layers(&self) -> &[LayerSpec<T>] {
        &self.layers
    }

    pub fn taps(&self) -> &BTreeMap<String, usize> {
        &self.taps
    }

    pub fn tap(&self, name: &str) -> Result<usize> {
        self.taps
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingTap(name.to_string()))
    }

    pub fn final_layer(&self) -> usize {
        self.layers.len()
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    /// Channel count produced by `layer` (0 means the network input).
    pub fn channels_at(&self, layer: usize) -> usize {
        self.layers[..layer]
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Conv(c) => Some(c.out_channels),
                _ => None,
            })
            .unwrap_or(self.input_channels)
    }

    /// Spatial size after `layer` for a `width × height` input.
    pub fn output_size(&self, layer: usize, width: usize, height: usize) -> Option<(usize, usize)> {
        self.layers[..layer]
            .iter()
            .try_fold((width, height), |(w, h), l| Some((l.output_len(w)?, l.output_len(h)?)))
    }

    /// Smallest square input side for which every layer yields a non-empty map.
    pub fn min_input_size(&self) -> usize {
        (1..=1 << 16)
            .find(|&n| self.output_size(self.num_layers(), n, n).is_some())
            .unwrap_or(usize::MAX)
    }

    pub fn has_weights(&self) -> bool {
        self.layers.iter().all(|l| match l {
            LayerSpec::Conv(c) => c.has_weights(),
            _ => true,
        })
    }

    /// Applies layers `from..=to` (1-based, inclusive).
    pub fn forward(&self, input: &FeatureMap<T>, from: usize, to: usize) -> Result<FeatureMap<T>> {
        if from == 0 || from > to || to > self.num_layers() {
            return Err(Error::InvalidArgument(format!(
                "invalid layer range {from}..={to} for {} layers",
                self.num_layers()
            )));
        }
        let mut current = self.run_layer(from, input)?;
        for index in from + 1..=to {
            current = self.run_layer(index, &current)?;
        }
        Ok(current)
    }

    /// Applies the layers strictly after `layer` up to `to`; identity when `layer == to`.
    pub fn forward_after(&self, input: &FeatureMap<T>, layer: usize, to: usize) -> Result<FeatureMap<T>> {
        if layer == to {
            return Ok(input.clone());
        }
        self.forward(input, layer + 1, to)
    }

    /// Runs an image through layers `1..=to`.
    pub fn forward_image(&self, image: &Image<T>, to: usize) -> Result<FeatureMap<T>> {
        self.forward(&image.to_feature_map(), 1, to)
    }

    fn run_layer(&self, index: usize, input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let layer = self.layer(index);
        if let LayerSpec::Conv(c) = layer {
            if input.channels() != c.in_channels {
                return Err(Error::dims(
                    format!("{} channels into layer {index}", c.in_channels),
                    input.channels(),
                ));
            }
            if !c.has_weights() {
                return Err(Error::MissingWeights(index));
            }
        }
        let out_w = layer.output_len(input.width());
        let out_h = layer.output_len(input.height());
        let (Some(out_w), Some(out_h)) = (out_w, out_h) else {
            return Err(Error::InvalidArgument(format!(
                "layer {index}: {}x{} input smaller than its kernel",
                input.width(),
                input.height()
            )));
        };
        let out = match layer {
            LayerSpec::Conv(c) => layers::conv2d(input, c, out_w, out_h),
            LayerSpec::Relu => layers::relu(input),
            LayerSpec::MaxPool {
                kernel,
                stride,
                padding,
            } => layers::max_pool(input, *kernel, *stride, *padding, out_w, out_h),
        };
        Ok(out)
    }

    /// Same geometry collapsed to one channel, every conv weight 1 and bias 0.
    ///
    /// Feeding a one-hot single-channel input through it marks exactly the
    /// activations whose receptive field contains the hot pixel.
    pub fn receptive_field_probe(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(c) => LayerSpec::Conv(ConvLayer {
                    in_channels: 1,
                    out_channels: 1,
                    weights: vec![T::one(); c.kernel * c.kernel],
                    bias: vec![T::zero()],
                    ..c.clone()
                }),
                other => other.clone(),
            })
            .collect();
        NetworkSpec {
            layers,
            taps: self.taps.clone(),
            input_channels: 1,
        }
    }
}

/// Fills every conv layer, in order, with weights drawn uniformly from
/// `[-0.1, 0.1]` and zero biases.
///
/// Each weight is `-0.1 + 0.2·u` with `u = (next_u64 >> 11)·2⁻⁵³` from a
/// ChaCha8 stream seeded with `seed`. Without biases the network is
/// positively homogeneous: scaling the input scales every activation.
pub fn seeded_weights<T: Real>(layers: &mut [LayerSpec<T>], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        T::lit(-TOY_WEIGHT_RANGE + 2.0 * TOY_WEIGHT_RANGE * u)
    };
    for layer in layers.iter_mut() {
        if let LayerSpec::Conv(c) = layer {
            c.weights = (0..c.weight_count()).map(|_| draw()).collect();
            c.bias = vec![T::zero(); c.out_channels];
        }
    }
}

fn conv_geometry<T>(in_channels: usize, out_channels: usize) -> LayerSpec<T> {
    LayerSpec::Conv(ConvLayer {
        kernel: 3,
        stride: 1,
        padding: 1,
        in_channels,
        out_channels,
        weights: Vec::new(),
        bias: Vec::new(),
    })
}

/// Layer geometry of the toy network, without weights.
pub fn toy_layers<T: Real>() -> Vec<LayerSpec<T>> {
    let pool = || LayerSpec::MaxPool {
        kernel: 2,
        stride: 2,
        padding: 0,
    };
    vec![
        conv_geometry(3, 8),
        LayerSpec::Relu,
        pool(),
        conv_geometry(8, 16),
        LayerSpec::Relu,
        pool(),
        conv_geometry(16, 32),
        LayerSpec::Relu,
    ]
}

pub fn toy_taps() -> BTreeMap<String, usize> {
    [(TAP_LOW, 2), (TAP_MID, 5), (TAP_FINAL, 8)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// The desk-scale backbone: three conv+ReLU stages separated by 2×2 pools,
/// 3→8→16→32 channels, taps `low`/`mid`/`final` on the three ReLU outputs.
pub fn toy_network<T: Real>(seed: u64) -> NetworkSpec<T> {
    let mut layers = toy_layers();
    seeded_weights(&mut layers, seed);
    NetworkSpec::new(layers, toy_taps()).expect("toy network is well formed")
}
