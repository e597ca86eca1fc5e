use super::ConvLayer;
use crate::scalar::Real;
use crate::tensor::FeatureMap;

/// Index range `[lo, hi)` of outputs whose tap `o·stride + offset − padding`
/// falls inside `[0, len)`.
fn valid_outputs(len: usize, out_len: usize, stride: usize, offset: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > offset {
        (padding - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if len + padding > offset {
        ((len + padding - offset - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub(super) fn conv2d<T: Real>(
    input: &FeatureMap<T>,
    layer: &ConvLayer<T>,
    out_w: usize,
    out_h: usize,
) -> FeatureMap<T> {
    let (w, h) = (input.width(), input.height());
    let (k, s, p) = (layer.kernel, layer.stride, layer.padding);
    let plane = out_w * out_h;
    let mut out = vec![T::zero(); plane * layer.out_channels];
    for (o, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        out_plane.fill(layer.bias[o]);
        for c in 0..layer.in_channels {
            let src = input.channel(c);
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_outputs(h, out_h, s, ky, p);
                for kx in 0..k {
                    let wv = layer.weights[((o * layer.in_channels + c) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_outputs(w, out_w, s, kx, p);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let src_row = &src[iy * w..(iy + 1) * w];
                        let dst_row = &mut out_plane[oy * out_w..(oy + 1) * out_w];
                        if s == 1 {
                            let ix0 = ox_lo + kx - p;
                            let n = ox_hi - ox_lo;
                            for (d, v) in dst_row[ox_lo..ox_hi].iter_mut().zip(&src_row[ix0..ix0 + n]) {
                                *d += wv * *v;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst_row[ox] += wv * src_row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    FeatureMap::from_parts_unchecked(out_w, out_h, layer.out_channels, out, false)
}

pub(super) fn relu<T: Real>(input: &FeatureMap<T>) -> FeatureMap<T> {
    let data = input.data().iter().map(|v| v.max(T::zero())).collect();
    FeatureMap::from_parts_unchecked(input.width(), input.height(), input.channels(), data, true)
}

pub(super) fn max_pool<T: Real>(
    input: &FeatureMap<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_w: usize,
    out_h: usize,
) -> FeatureMap<T> {
    let (w, h) = (input.width(), input.height());
    let mut out = Vec::with_capacity(out_w * out_h * input.channels());
    for c in 0..input.channels() {
        let src = input.channel(c);
        for oy in 0..out_h {
            let y_lo = (oy * stride).saturating_sub(padding);
            let y_hi = (oy * stride + kernel).saturating_sub(padding).min(h);
            for ox in 0..out_w {
                let x_lo = (ox * stride).saturating_sub(padding);
                let x_hi = (ox * stride + kernel).saturating_sub(padding).min(w);
                let mut best = T::neg_infinity();
                for y in y_lo..y_hi {
                    for v in &src[y * w + x_lo..y * w + x_hi] {
                        best = best.max(*v);
                    }
                }
                out.push(best);
            }
        }
    }
    FeatureMap::from_parts_unchecked(out_w, out_h, input.channels(), out, false)
}
