//! Fixed multi-scale R-MAC region grid.
//!
//! Scale 1 is the whole grid. Scale `s ≥ 2` uses square regions of side
//! `r = ceil(2·min(W,H)/(s+1))`. Along an axis of length `n` the count is
//! 1 when `r ≥ n`, otherwise the smallest `m ≥ 2` whose uniform step
//! `(n−r)/(m−1)` leaves at least 40% overlap between neighbours, i.e.
//! `m − 1 = ceil(5(n−r) / 3r)`. Starts are `round((n−r)·j/(m−1))`
//! (half up). Duplicate rectangles are dropped, first occurrence kept.

use crate::tensor::Rect;

pub const DEFAULT_GRID_SCALES: usize = 3;

/// Minimum fraction of a region shared with its neighbour along an axis.
pub const MIN_OVERLAP: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGrid {
    pub regions: Vec<Rect>,
    pub n_scales: usize,
}

impl RegionGrid {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Moves every region by `(dx, dy)`.
    pub fn translated(&self, dx: usize, dy: usize) -> Self {
        RegionGrid {
            regions: self.regions.iter().map(|r| r.translate(dx, dy)).collect(),
            n_scales: self.n_scales,
        }
    }
}

/// Region side length at `scale` (≥ 2) for a grid whose short side is `short`.
pub fn region_side(short: usize, scale: usize) -> usize {
    (2 * short).div_ceil(scale + 1).clamp(1, short)
}

/// Number of regions of side `side` along an axis of length `len`.
pub fn regions_along(len: usize, side: usize) -> usize {
    if side >= len {
        1
    } else {
        1 + (5 * (len - side)).div_ceil(3 * side)
    }
}

fn starts(len: usize, side: usize) -> Vec<usize> {
    let m = regions_along(len, side);
    if m == 1 {
        return vec![0];
    }
    let span = len - side;
    let d = m - 1;
    (0..m).map(|j| (2 * span * j + d) / (2 * d)).collect()
}

pub fn rmac_grid(width: usize, height: usize, n_scales: usize) -> RegionGrid {
    let width = width.max(1);
    let height = height.max(1);
    let n_scales = n_scales.max(1);
    let mut regions = vec![Rect::full(width, height)];
    let short = width.min(height);
    for scale in 2..=n_scales {
        let side = region_side(short, scale);
        let xs = starts(width, side.min(width));
        let ys = starts(height, side.min(height));
        for &y in &ys {
            for &x in &xs {
                let r = Rect {
                    x0: x,
                    y0: y,
                    x1: (x + side).min(width),
                    y1: (y + side).min(height),
                };
                if !regions.contains(&r) {
                    regions.push(r);
                }
            }
        }
    }
    RegionGrid { regions, n_scales }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force placer: try counts upward and test the overlap constraint
    /// in floating point.
    fn brute_force_count(len: usize, side: usize) -> usize {
        if side >= len {
            return 1;
        }
        (2..)
            .find(|&m| {
                let step = (len - side) as f64 / (m - 1) as f64;
                (side as f64 - step) / side as f64 >= MIN_OVERLAP - 1e-12
            })
            .unwrap()
    }

    #[test]
    fn square_eight_by_eight() {
        let g = rmac_grid(8, 8, 3);
        assert_eq!(g.len(), 14);
        let per_scale: Vec<usize> = [8, 6, 4]
            .iter()
            .map(|side| g.regions.iter().filter(|r| r.width() == *side).count())
            .collect();
        assert_eq!(per_scale, vec![1, 4, 9]);
        assert_eq!(brute_force_count(8, 6), 2);
        assert_eq!(brute_force_count(8, 4), 3);
    }

    #[test]
    fn single_cell_grid_deduplicates() {
        let g = rmac_grid(1, 1, 3);
        assert_eq!(g.regions, vec![Rect::full(1, 1)]);
    }

    #[test]
    fn minimal_rectangle() {
        let g = rmac_grid(2, 1, 1);
        assert_eq!(g.regions, vec![Rect::new(0, 0, 2, 1).unwrap()]);
    }

    #[test]
    fn count_rule_matches_brute_force() {
        for len in 1..60 {
            for side in 1..=len {
                assert_eq!(regions_along(len, side), brute_force_count(len, side), "len {len} side {side}");
            }
        }
    }

    #[test]
    fn regions_span_each_axis_and_stay_inside() {
        for (w, h) in [(40, 30), (17, 5), (9, 23), (3, 3)] {
            let g = rmac_grid(w, h, 4);
            assert!(g.regions.iter().all(|r| r.fits(w, h)));
            assert_eq!(g.regions[0], Rect::full(w, h));
            for scale in 2..=4 {
                let side = region_side(w.min(h), scale);
                let of_scale: Vec<&Rect> = g
                    .regions
                    .iter()
                    .filter(|r| r.width() == side.min(w) && r.height() == side.min(h))
                    .collect();
                if of_scale.is_empty() {
                    continue;
                }
                assert_eq!(of_scale.iter().map(|r| r.x1).max().unwrap(), w);
                assert_eq!(of_scale.iter().map(|r| r.y1).max().unwrap(), h);
                assert_eq!(of_scale.iter().map(|r| r.x0).min().unwrap(), 0);
            }
        }
    }

    #[test]
    fn toy_final_map_region_count() {
        // 40x30 final map: 1 + 3·2 + 4·3
        assert_eq!(rmac_grid(40, 30, 3).len(), 19);
    }
}
