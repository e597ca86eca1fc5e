//! Dense tensors: feature maps, rectangles, RGB images and the FMAP file format.

mod fmap;
mod image;

pub use self::fmap::{read_fmap, write_fmap, FMAP_MAGIC, FMAP_VERSION};
pub use self::image::Image;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Norm below which a vector is treated as zero by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Half-open integer rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidArgument(format!(
                "empty rect [{x0},{x1})x[{y0},{y1})"
            )));
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    /// The rectangle covering a whole `width × height` grid.
    pub fn full(width: usize, height: usize) -> Self {
        Rect {
            x0: 0,
            y0: 0,
            x1: width.max(1),
            y1: height.max(1),
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x1 <= width && self.y1 <= height
    }

    /// Smallest rectangle containing both.
    pub fn bounding_union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn translate(&self, dx: usize, dy: usize) -> Rect {
        Rect {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    pub(crate) fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "rect [{},{})x[{},{}) outside {width}x{height} grid",
                self.x0, self.x1, self.y0, self.y1
            )))
        }
    }
}

impl TryFrom<[usize; 4]> for Rect {
    type Error = Error;

    fn try_from(v: [usize; 4]) -> Result<Self> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [usize; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad rect `{s}`: {e}")))?;
        match parts.as_slice() {
            [x0, y0, x1, y1] => Rect::new(*x0, *y0, *x1, *y1),
            _ => Err(Error::InvalidArgument(format!(
                "bad rect `{s}`: expected x0,y0,x1,y1"
            ))),
        }
    }
}

/// A `W × H × K` activation tensor.
///
/// Storage is channel-major: element `(x, y, k)` lives at `(k·H + y)·W + x`,
/// so each channel is a contiguous `H·W` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
    rectified: bool,
}

impl<T: Real> FeatureMap<T> {
    /// Validates dimensions, finiteness and, when `rectified`, non-negativity.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<T>,
        rectified: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map dims must be positive, got {width}x{height}x{channels}"
            )));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::dims(expected, data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if rectified && data.iter().any(|v| *v < T::zero()) {
            return Err(Error::NotRectified);
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            data,
            rectified,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![T::zero(); width * height * channels],
            true,
        )
    }

    /// Builds a map from a per-element function of `(x, y, k)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        rectified: bool,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for k in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, k));
                }
            }
        }
        Self::new(width, height, channels, data, rectified)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_rectified(&self) -> bool {
        self.rectified
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, k: usize) -> T {
        self.data[(k * self.height + y) * self.width + x]
    }

    /// Contiguous `H·W` slice of channel `k`, row-major.
    pub fn channel(&self, k: usize) -> &[T] {
        let plane = self.width * self.height;
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::full(self.width, self.height)
    }

    /// Copies the spatial window `rect` across all channels.
    pub fn crop(&self, rect: &Rect) -> Result<Self> {
        rect.check_inside(self.width, self.height)?;
        let (w, h) = (rect.width(), rect.height());
        let mut data = Vec::with_capacity(w * h * self.channels);
        for k in 0..self.channels {
            let plane = self.channel(k);
            for y in rect.y0..rect.y1 {
                let row = y * self.width;
                data.extend_from_slice(&plane[row + rect.x0..row + rect.x1]);
            }
        }
        Ok(FeatureMap {
            width: w,
            height: h,
            channels: self.channels,
            data,
            rectified: self.rectified,
        })
    }

    /// Multiplies every element by `c`. A negative `c` clears the rectified flag.
    pub fn scaled(&self, c: T) -> Result<Self> {
        let data = self.data.iter().map(|v| *v * c).collect();
        Self::new(
            self.width,
            self.height,
            self.channels,
            data,
            self.rectified && c >= T::zero(),
        )
    }

    /// Converts the scalar type (e.g. f32 file contents into an f64 pipeline).
    pub fn cast<U: Real>(&self) -> Result<FeatureMap<U>> {
        let data = self
            .data
            .iter()
            .map(|v| U::from(*v).ok_or(Error::NonFinite { index: 0 }))
            .collect::<Result<Vec<U>>>()?;
        FeatureMap::new(self.width, self.height, self.channels, data, self.rectified)
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<T>,
        rectified: bool,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        FeatureMap {
            width,
            height,
            channels,
            data,
            rectified,
        }
    }
}

/// Scales `v` to unit ℓ₂ norm. Vectors with norm ≤ 1e-12 are returned unchanged.
pub fn l2_normalize<T: Real>(v: &[T]) -> Vec<T> {
    let norm = l2_norm(v);
    if norm <= T::lit(NORM_EPS) {
        return v.to_vec();
    }
    v.iter().map(|x| *x / norm).collect()
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}
