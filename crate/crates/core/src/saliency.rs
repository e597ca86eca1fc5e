//! Channel-sum saliency, region weights, and the thresholding /
//! connected-component machinery used to discover database ROIs.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{FeatureMap, Rect};

/// Max-normalized channel sum of a rectified feature map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> SaliencyMap<T> {
    /// Wraps precomputed values; they must lie in `[0, 1]`.
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height || width == 0 || height == 0 {
            return Err(Error::dims(format!("{width}x{height} values"), values.len()));
        }
        if values.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::InvalidArgument("saliency values must lie in [0,1]".into()));
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// The map as a single-channel feature map, e.g. for dumping as FMAP.
    pub fn to_feature_map(&self) -> FeatureMap<T> {
        FeatureMap::from_parts_unchecked(self.width, self.height, 1, self.values.clone(), true)
    }
}

/// `M_p = Σ_k X_{k,p} / max_q Σ_k X_{k,q}`; an all-zero map stays all-zero.
pub fn compute_saliency<T: Real>(map: &FeatureMap<T>) -> Result<SaliencyMap<T>> {
    if !map.is_rectified() {
        return Err(Error::NotRectified);
    }
    let plane = map.width() * map.height();
    let mut sums = vec![T::zero(); plane];
    for k in 0..map.channels() {
        for (s, v) in sums.iter_mut().zip(map.channel(k)) {
            *s += *v;
        }
    }
    let max = sums.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        for s in sums.iter_mut() {
            *s = *s / max;
        }
    }
    Ok(SaliencyMap {
        width: map.width(),
        height: map.height(),
        values: sums,
    })
}

/// Largest saliency value inside `region`.
pub fn region_weight<T: Real>(m: &SaliencyMap<T>, region: &Rect) -> Result<T> {
    region.check_inside(m.width, m.height)?;
    let mut best = T::zero();
    for y in region.y0..region.y1 {
        let row = &m.values[y * m.width..(y + 1) * m.width];
        for v in &row[region.x0..region.x1] {
            best = best.max(*v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != width * height || width == 0 || height == 0 {
            return Err(Error::dims(format!("{width}x{height} cells"), cells.len()));
        }
        Ok(BinaryMap {
            width,
            height,
            cells,
        })
    }

    /// Parses rows of `0`/`1` (used heavily by tests).
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(width, height, rows.iter().flat_map(|r| r.iter().map(|v| *v != 0)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }
}

/// `M_p > tau` (strict).
pub fn binarize<T: Real>(m: &SaliencyMap<T>, tau: T) -> BinaryMap {
    BinaryMap {
        width: m.width,
        height: m.height,
        cells: m.values.iter().map(|v| *v > tau).collect(),
    }
}

/// Nearest-neighbour resampling: each target cell copies the source cell
/// containing its center.
pub fn resize_binary(b: &BinaryMap, width: usize, height: usize) -> Result<BinaryMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    // center (t + 1/2)·src/dst, floored, in exact integer arithmetic
    let src_index = |t: usize, src: usize, dst: usize| ((2 * t + 1) * src / (2 * dst)).min(src - 1);
    let xs: Vec<usize> = (0..width).map(|x| src_index(x, b.width, width)).collect();
    let mut cells = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = src_index(y, b.height, height);
        cells.extend(xs.iter().map(|&sx| b.get(sx, sy)));
    }
    Ok(BinaryMap {
        width,
        height,
        cells,
    })
}

/// One 8-connected component of true cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub bbox: Rect,
    pub cells: usize,
}

/// 8-connected components with at least `min_area` cells, largest first,
/// ties broken by the bounding box's top-left corner in row-major order.
pub fn connected_components(b: &BinaryMap, min_area: usize) -> Vec<Component> {
    let (w, h) = (b.width, b.height);
    let mut seen = vec![false; w * h];
    let mut found = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !b.cells[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let mut cells = 0;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            cells += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let j = ny * w + nx;
                    if b.cells[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if cells >= min_area.max(1) {
            found.push(Component {
                bbox: Rect { x0, y0, x1, y1 },
                cells,
            });
        }
    }
    found.sort_by_key(|c| (std::cmp::Reverse(c.cells), c.bbox.y0, c.bbox.x0));
    found
}
