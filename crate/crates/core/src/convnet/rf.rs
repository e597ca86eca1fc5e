//! Receptive-field arithmetic and ROI projection.

use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Rect;

/// Cumulative geometry of one layer's activations in input pixels.
///
/// Activation `i` is centred on pixel coordinate `i·stride + offset` and
/// sees the `size` pixels `[center − (size−1)/2, center + (size−1)/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RFParams {
    pub stride: usize,
    pub size: usize,
    pub offset: f64,
}

impl RFParams {
    pub fn center(&self, index: usize) -> f64 {
        index as f64 * self.stride as f64 + self.offset
    }

    /// Inclusive pixel span `(first, last)` seen by activation `index`.
    pub fn span(&self, index: usize) -> (f64, f64) {
        let half = (self.size as f64 - 1.0) / 2.0;
        let c = self.center(index);
        (c - half, c + half)
    }
}

pub fn rf_params<T: Real>(net: &NetworkSpec<T>, layer: usize) -> RFParams {
    assert!(
        (1..=net.num_layers()).contains(&layer),
        "layer {layer} out of range 1..={}",
        net.num_layers()
    );
    let mut jump = 1usize;
    let mut size = 1usize;
    let mut offset = 0.0f64;
    for l in &net.layers()[..layer] {
        let (k, s, p) = l.window();
        size += (k - 1) * jump;
        offset += ((k as f64 - 1.0) / 2.0 - p as f64) * jump as f64;
        jump *= s;
    }
    RFParams {
        stride: jump,
        size,
        offset,
    }
}

/// Indices `i < len` with `lo ≤ i·stride + offset < hi`.
fn centers_inside(rf: &RFParams, len: usize, lo: usize, hi: usize) -> std::ops::Range<usize> {
    let s = rf.stride as f64;
    let first = ((lo as f64 - rf.offset) / s).ceil().max(0.0) as usize;
    let end = ((hi as f64 - rf.offset) / s).ceil().max(0.0) as usize;
    first.min(len)..end.min(len)
}

fn nearest_center(rf: &RFParams, len: usize, lo: usize, hi: usize) -> usize {
    let mid = (lo + hi) as f64 / 2.0;
    // ties go to the lower index
    let i = ((mid - rf.offset) / rf.stride as f64 - 0.5).ceil();
    (i.max(0.0) as usize).min(len - 1)
}

fn project_axis(rf: &RFParams, len: usize, lo: usize, hi: usize) -> std::ops::Range<usize> {
    let inside = centers_inside(rf, len, lo, hi);
    if inside.is_empty() {
        let i = nearest_center(rf, len, lo, hi);
        i..i + 1
    } else {
        inside
    }
}

/// Projects a pixel ROI onto the activation grid of `layer`.
///
/// Keeps every activation whose receptive-field center lies in the half-open
/// ROI. On an axis where no center does, falls back to the single activation
/// nearest the ROI center so the result is never empty.
pub fn project_roi<T: Real>(
    net: &NetworkSpec<T>,
    roi: &Rect,
    layer: usize,
    image_width: usize,
    image_height: usize,
) -> Result<Rect> {
    if !roi.fits(image_width, image_height) {
        return Err(Error::OutOfBounds(format!(
            "roi {roi} outside {image_width}x{image_height} image"
        )));
    }
    if layer == 0 || layer > net.num_layers() {
        return Err(Error::InvalidArgument(format!("layer {layer} out of range")));
    }
    let (gw, gh) = net
        .output_size(layer, image_width, image_height)
        .ok_or_else(|| Error::InvalidArgument(format!("{image_width}x{image_height} image too small")))?;
    let rf = rf_params(net, layer);
    let xs = project_axis(&rf, gw, roi.x0, roi.x1);
    let ys = project_axis(&rf, gh, roi.y0, roi.y1);
    Ok(Rect {
        x0: xs.start,
        y0: ys.start,
        x1: xs.end,
        y1: ys.end,
    })
}
