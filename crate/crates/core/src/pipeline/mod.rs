//! Query encoding models, database encoding, and the descriptor index.
//!
//! Every path runs per image scale and folds the per-scale descriptors into
//! one with [`encode_multiscale`].
//!
//! * `FQ`: the whole query image.
//! * `RQ`: the ROI cropped out of the image in pixel space.
//! * `AQ`: the whole image forwarded to the final tap, then only the
//!   activations whose receptive-field centers fall in the ROI are encoded.
//! * `SA`: activations at the attention tap are kept inside the projected
//!   ROI and attenuated outside by saliency, then forwarded to the final tap.

mod index;

pub use self::index::{DescriptorIndex, SearchHit, DIDX_MAGIC, DIDX_VERSION};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{build_mask, modulate, AttentionParams};
use crate::convnet::{project_roi, NetworkSpec, TAP_MID};
use crate::encoder::{encode, encode_multiscale, region_macs, sum_descriptors, Descriptor, EncoderConfig, PcaModel};
use crate::error::{Error, Result};
use crate::saliency::{binarize, compute_saliency, connected_components, resize_binary};
use crate::scalar::Real;
use crate::tensor::{FeatureMap, Image, Rect};

/// Saliency threshold for discovering database ROIs.
pub const DEFAULT_TAU: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryModel {
    Fq,
    Rq,
    Aq,
    Sa,
}

impl QueryModel {
    pub const ALL: [QueryModel; 4] = [QueryModel::Rq, QueryModel::Aq, QueryModel::Fq, QueryModel::Sa];

    pub fn name(&self) -> &'static str {
        match self {
            QueryModel::Fq => "fq",
            QueryModel::Rq => "rq",
            QueryModel::Aq => "aq",
            QueryModel::Sa => "sa",
        }
    }
}

impl fmt::Display for QueryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fq" => Ok(QueryModel::Fq),
            "rq" => Ok(QueryModel::Rq),
            "aq" => Ok(QueryModel::Aq),
            "sa" => Ok(QueryModel::Sa),
            other => Err(Error::InvalidArgument(format!("unknown query model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig<T> {
    pub encoder: EncoderConfig,
    pub attention: AttentionParams<T>,
    /// Tap where spatial attention is applied.
    pub attention_tap: String,
    /// Saliency threshold for database ROI discovery (strict `>`).
    pub tau: T,
    /// Smallest connected component, in cells, kept as a database ROI.
    pub min_area: usize,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        PipelineConfig {
            encoder: EncoderConfig::default(),
            attention: AttentionParams::default(),
            attention_tap: TAP_MID.to_string(),
            tau: T::lit(DEFAULT_TAU),
            min_area: 1,
        }
    }
}

/// A query: an image, a pixel ROI inside it, and the encoding model.
#[derive(Debug, Clone, Copy)]
pub struct QuerySpec<'a, T> {
    pub image: &'a Image<T>,
    pub roi: Rect,
    pub model: QueryModel,
}

/// Maps a pixel ROI from a `from_w × from_h` image onto its `to_w × to_h`
/// resize, rounding outward.
pub fn scale_roi(roi: &Rect, from_w: usize, from_h: usize, to_w: usize, to_h: usize) -> Rect {
    let lo = |v: usize, to: usize, from: usize| v * to / from;
    let hi = |v: usize, to: usize, from: usize| (v * to).div_ceil(from).min(to);
    Rect {
        x0: lo(roi.x0, to_w, from_w),
        y0: lo(roi.y0, to_h, from_h),
        x1: hi(roi.x1, to_w, from_w),
        y1: hi(roi.y1, to_h, from_h),
    }
}

/// Network, whitening model and configuration bound together.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a, T> {
    pub net: &'a NetworkSpec<T>,
    pub pca: &'a PcaModel<T>,
    pub config: &'a PipelineConfig<T>,
}

impl<'a, T: Real> Pipeline<'a, T> {
    pub fn new(net: &'a NetworkSpec<T>, pca: &'a PcaModel<T>, config: &'a PipelineConfig<T>) -> Result<Self> {
        net.tap(&config.attention_tap)?;
        if !(config.tau >= T::zero() && config.tau <= T::one()) {
            return Err(Error::InvalidArgument(format!("tau {} outside [0,1]", config.tau)));
        }
        Ok(Pipeline { net, pca, config })
    }

    fn encode_map(&self, map: &FeatureMap<T>) -> Result<Descriptor<T>> {
        encode(map, self.pca, self.config.encoder.weighted, self.config.encoder.grid_scales)
    }

    fn multiscale<F>(&self, image: &Image<T>, per_scale: F) -> Result<Descriptor<T>>
    where
        F: Fn(&Image<T>) -> Result<Descriptor<T>>,
    {
        encode_multiscale(image, self.net, &self.config.encoder.scales, per_scale)
    }

    fn attention_tap(&self) -> Result<usize> {
        self.net.tap(&self.config.attention_tap)
    }

    /// Whole-image descriptor at one scale.
    pub fn full_single(&self, image: &Image<T>) -> Result<Descriptor<T>> {
        let map = self.net.forward_image(image, self.net.final_layer())?;
        self.encode_map(&map)
    }

    /// Cropped-activation descriptor at one scale.
    pub fn aq_single(&self, image: &Image<T>, roi: &Rect) -> Result<Descriptor<T>> {
        let last = self.net.final_layer();
        let map = self.net.forward_image(image, last)?;
        let proj = project_roi(self.net, roi, last, image.width(), image.height())?;
        self.encode_map(&map.crop(&proj)?)
    }

    /// Attends to `proj` (activation coordinates at `tap`) on a tap feature
    /// map, then forwards to the final layer.
    fn attend_and_finish(&self, tap_map: &FeatureMap<T>, tap: usize, proj: &Rect) -> Result<FeatureMap<T>> {
        let saliency = compute_saliency(tap_map)?;
        let mask = build_mask(&saliency, proj, &self.config.attention)?;
        let modulated = modulate(tap_map, &mask)?;
        self.net.forward_after(&modulated, tap, self.net.final_layer())
    }

    /// Spatial-attention descriptor at one scale.
    pub fn sa_single(&self, image: &Image<T>, roi: &Rect) -> Result<Descriptor<T>> {
        let tap = self.attention_tap()?;
        let tap_map = self.net.forward_image(image, tap)?;
        let proj = project_roi(self.net, roi, tap, image.width(), image.height())?;
        self.encode_map(&self.attend_and_finish(&tap_map, tap, &proj)?)
    }

    pub fn encode_query(&self, query: &QuerySpec<'_, T>) -> Result<Descriptor<T>> {
        let image = query.image;
        let (w, h) = (image.width(), image.height());
        if !query.roi.fits(w, h) {
            return Err(Error::OutOfBounds(format!("roi {} outside {w}x{h} image", query.roi)));
        }
        let scaled = |img: &Image<T>| scale_roi(&query.roi, w, h, img.width(), img.height());
        match query.model {
            QueryModel::Fq => self.multiscale(image, |img| self.full_single(img)),
            QueryModel::Rq => {
                let crop = image.crop(&query.roi)?;
                self.multiscale(&crop, |img| self.full_single(img))
            }
            QueryModel::Aq => self.multiscale(image, |img| self.aq_single(img, &scaled(img))),
            QueryModel::Sa => {
                self.attention_tap()?;
                self.multiscale(image, |img| self.sa_single(img, &scaled(img)))
            }
        }
    }

    /// Database descriptor without attention (R-MAC or WR-MAC per config).
    pub fn encode_database_plain(&self, image: &Image<T>) -> Result<Descriptor<T>> {
        self.multiscale(image, |img| self.full_single(img))
    }

    /// Potential ROIs of one scaled image, in attention-tap activation
    /// coordinates: final-layer saliency thresholded at `tau`, resized to the
    /// tap grid, split into connected components.
    pub fn discover_rois(&self, final_map: &FeatureMap<T>, tap_w: usize, tap_h: usize) -> Result<Vec<Rect>> {
        let saliency = compute_saliency(final_map)?;
        let binary = binarize(&saliency, self.config.tau);
        if binary.count() == 0 {
            return Ok(Vec::new());
        }
        let resized = resize_binary(&binary, tap_w, tap_h)?;
        Ok(connected_components(&resized, self.config.min_area)
            .into_iter()
            .map(|c| c.bbox)
            .collect())
    }

    /// Database-side attention at one scale: the first-pass descriptor plus
    /// one attended pass per discovered ROI, summed and normalized.
    pub fn database_sa_single(&self, image: &Image<T>) -> Result<Descriptor<T>> {
        let tap = self.attention_tap()?;
        let last = self.net.final_layer();
        let tap_map = self.net.forward_image(image, tap)?;
        let final_map = self.net.forward_after(&tap_map, tap, last)?;
        let first = self.encode_map(&final_map)?;
        let rois = self.discover_rois(&final_map, tap_map.width(), tap_map.height())?;
        if rois.is_empty() {
            return Ok(first);
        }
        let mut parts = Vec::with_capacity(rois.len() + 1);
        parts.push(first);
        for roi in &rois {
            parts.push(self.encode_map(&self.attend_and_finish(&tap_map, tap, roi)?)?);
        }
        sum_descriptors(parts)
    }

    pub fn encode_database_sa(&self, image: &Image<T>) -> Result<Descriptor<T>> {
        self.multiscale(image, |img| self.database_sa_single(img))
    }

    /// Encodes every `(id, image)` pair in parallel and assembles an index in
    /// input order.
    pub fn index_database(&self, images: &[(String, Image<T>)], database_sa: bool) -> Result<DescriptorIndex<T>> {
        let encoded = images
            .par_iter()
            .map(|(id, img)| {
                let d = if database_sa {
                    self.encode_database_sa(img)?
                } else {
                    self.encode_database_plain(img)?
                };
                Ok((id.clone(), d))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut index = DescriptorIndex::new(self.pca.out_dim());
        for (id, d) in encoded {
            index.insert(id, d)?;
        }
        Ok(index)
    }
}

/// ℓ₂-normalized region MACs of every image at the final tap, over all
/// configured scales, in image order. This is the PCA training set.
pub fn harvest_region_macs<T: Real>(
    net: &NetworkSpec<T>,
    images: &[Image<T>],
    encoder: &EncoderConfig,
) -> Result<Vec<Vec<T>>> {
    let min = net.min_input_size();
    let per_image = images
        .par_iter()
        .map(|image| {
            let mut out = Vec::new();
            for &s in &encoder.scales {
                let (w, h) = image.dims_for_long_side(s);
                if w.min(h) < min {
                    return Err(Error::InvalidArgument(format!(
                        "scale {s} gives a {w}x{h} image, below the network minimum {min}"
                    )));
                }
                let map = net.forward_image(&image.resize_bilinear(w, h)?, net.final_layer())?;
                out.extend(region_macs(&map, encoder.grid_scales)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_image.into_iter().flatten().collect())
}
