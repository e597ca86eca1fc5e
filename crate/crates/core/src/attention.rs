//! Spatial attention: activations inside the projected ROI keep their value,
//! activations outside are attenuated by `g(M_p) = λ1 + λ2·M_p^φ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::scalar::Real;
use crate::tensor::{FeatureMap, Rect};

pub const DEFAULT_LAMBDA1: f64 = 0.5;
pub const DEFAULT_LAMBDA2: f64 = 0.4;
pub const DEFAULT_PHI: f64 = 4.0;

/// Parameters of the attenuation curve `g`.
///
/// `lambda1` is the strongest attenuation (value of `g` at zero saliency);
/// `lambda1 + lambda2` is the weakest and must stay below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub phi: T,
}

impl<T: Real> Default for AttentionParams<T> {
    fn default() -> Self {
        AttentionParams {
            lambda1: T::lit(DEFAULT_LAMBDA1),
            lambda2: T::lit(DEFAULT_LAMBDA2),
            phi: T::lit(DEFAULT_PHI),
        }
    }
}

impl<T: Real> AttentionParams<T> {
    pub fn new(lambda1: T, lambda2: T, phi: T) -> Result<Self> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !unit(lambda1) || !unit(lambda2) {
            return Err(Error::InvalidArgument(format!(
                "lambda1 ({lambda1}) and lambda2 ({lambda2}) must lie in (0,1)"
            )));
        }
        if lambda1 + lambda2 >= T::one() {
            return Err(Error::InvalidArgument(format!(
                "lambda1 + lambda2 = {} must be < 1",
                lambda1 + lambda2
            )));
        }
        if !(phi > T::zero() && phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("phi ({phi}) must be positive")));
        }
        Ok(AttentionParams {
            lambda1,
            lambda2,
            phi,
        })
    }

    /// `g(a) = λ1 + λ2·a^φ` for `a ∈ [0, 1]`.
    pub fn g(&self, a: T) -> Result<T> {
        if !(a >= T::zero() && a <= T::one()) {
            return Err(Error::InvalidArgument(format!("attention level {a} outside [0,1]")));
        }
        Ok(self.g_unchecked(a))
    }

    fn g_unchecked(&self, a: T) -> T {
        self.lambda1 + self.lambda2 * a.powf(self.phi)
    }
}

/// Per-location multiplier applied uniformly across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask<T> {
    width: usize,
    height: usize,
    multipliers: Vec<T>,
}

impl<T: Real> AttentionMask<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn multipliers(&self) -> &[T] {
        &self.multipliers
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.multipliers[y * self.width + x]
    }
}

/// Multiplier 1 inside `roi`, `g(M_p)` outside.
pub fn build_mask<T: Real>(
    saliency: &SaliencyMap<T>,
    roi: &Rect,
    params: &AttentionParams<T>,
) -> Result<AttentionMask<T>> {
    let (w, h) = (saliency.width(), saliency.height());
    if !roi.fits(w, h) {
        return Err(Error::dims(format!("roi inside {w}x{h}"), roi));
    }
    let mut multipliers = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            multipliers.push(if roi.contains(x, y) {
                T::one()
            } else {
                params.g_unchecked(saliency.get(x, y))
            });
        }
    }
    Ok(AttentionMask {
        width: w,
        height: h,
        multipliers,
    })
}

/// `X̃_{k,p} = mask_p · X_{k,p}` for every channel `k`.
pub fn modulate<T: Real>(map: &FeatureMap<T>, mask: &AttentionMask<T>) -> Result<FeatureMap<T>> {
    if (map.width(), map.height()) != (mask.width, mask.height) {
        return Err(Error::dims(
            format!("{}x{} mask", map.width(), map.height()),
            format!("{}x{}", mask.width, mask.height),
        ));
    }
    let plane = map.width() * map.height();
    let mut data = Vec::with_capacity(plane * map.channels());
    for k in 0..map.channels() {
        data.extend(map.channel(k).iter().zip(&mask.multipliers).map(|(v, m)| *v * *m));
    }
    FeatureMap::new(map.width(), map.height(), map.channels(), data, map.is_rectified())
}
