//! R-MAC and weighted R-MAC encoding.
//!
//! Per region: MAC → ℓ₂ → whiten → ℓ₂. Regions are then summed, each scaled
//! by its weight (1 for plain R-MAC, the region's peak saliency for the
//! weighted variant), and the sum is ℓ₂-normalized.

mod grid;
mod pca;

pub use self::grid::{region_side, regions_along, rmac_grid, RegionGrid, DEFAULT_GRID_SCALES, MIN_OVERLAP};
pub use self::pca::{corpus_digest, fit_pca, fit_pca_up_to, PcaModel, EIGEN_FLOOR, PCAW_MAGIC, PCAW_VERSION};

use serde::{Deserialize, Serialize};

use crate::convnet::NetworkSpec;
use crate::error::{Error, Result};
use crate::saliency::{compute_saliency, region_weight};
use crate::scalar::Real;
use crate::tensor::{dot, l2_norm, l2_normalize, FeatureMap, Image, Rect};

/// Long-side image sizes used for multi-scale encoding.
pub const DEFAULT_SCALES: [usize; 3] = [550, 800, 1050];

/// Global image vector: unit ℓ₂ norm, or all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor<T>(Vec<T>);

impl<T: Real> Descriptor<T> {
    /// Normalizes `v` and wraps it.
    pub fn normalized(v: &[T]) -> Self {
        Descriptor(l2_normalize(v))
    }

    pub fn zeros(dim: usize) -> Self {
        Descriptor(vec![T::zero(); dim])
    }

    /// Wraps values already known to be unit-norm or zero (e.g. read from disk).
    pub fn from_raw(v: Vec<T>) -> Self {
        Descriptor(v)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> T {
        l2_norm(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == T::zero())
    }

    pub fn dot(&self, other: &Descriptor<T>) -> T {
        dot(&self.0, &other.0)
    }
}

/// Knobs shared by every encoding path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Long-side sizes, one pass per entry.
    pub scales: Vec<usize>,
    /// Number of R-MAC grid scales.
    pub grid_scales: usize,
    /// Weight regions by saliency (WR-MAC) instead of uniformly (R-MAC).
    pub weighted: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            scales: DEFAULT_SCALES.to_vec(),
            grid_scales: DEFAULT_GRID_SCALES,
            weighted: true,
        }
    }
}

/// Per-channel spatial maximum over `region`.
pub fn mac<T: Real>(map: &FeatureMap<T>, region: &Rect) -> Result<Vec<T>> {
    region.check_inside(map.width(), map.height())?;
    let w = map.width();
    Ok((0..map.channels())
        .map(|k| {
            let plane = map.channel(k);
            let mut best = T::neg_infinity();
            for y in region.y0..region.y1 {
                for v in &plane[y * w + region.x0..y * w + region.x1] {
                    best = best.max(*v);
                }
            }
            best
        })
        .collect())
}

/// Weighted sum of region vectors followed by ℓ₂ normalization.
pub fn aggregate<T: Real>(region_vectors: &[Vec<T>], weights: &[T]) -> Result<Descriptor<T>> {
    if region_vectors.len() != weights.len() {
        return Err(Error::dims(
            format!("{} weights", region_vectors.len()),
            weights.len(),
        ));
    }
    let Some(first) = region_vectors.first() else {
        return Err(Error::InvalidArgument("no regions to aggregate".into()));
    };
    if let Some(w) = weights.iter().find(|w| !(**w >= T::zero())) {
        return Err(Error::InvalidArgument(format!("negative region weight {w}")));
    }
    let dim = first.len();
    let mut sum = vec![T::zero(); dim];
    for (v, w) in region_vectors.iter().zip(weights) {
        if v.len() != dim {
            return Err(Error::dims(dim, v.len()));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += *w * *x;
        }
    }
    Ok(Descriptor::normalized(&sum))
}

/// MAC → ℓ₂ → whiten → ℓ₂ for one region.
pub fn region_vector<T: Real>(map: &FeatureMap<T>, region: &Rect, pca: &PcaModel<T>) -> Result<Vec<T>> {
    let v = l2_normalize(&mac(map, region)?);
    Ok(l2_normalize(&pca.whiten(&v)?))
}

/// ℓ₂-normalized MAC vectors of every grid region, the PCA training input.
pub fn region_macs<T: Real>(map: &FeatureMap<T>, grid_scales: usize) -> Result<Vec<Vec<T>>> {
    rmac_grid(map.width(), map.height(), grid_scales)
        .regions
        .iter()
        .map(|r| Ok(l2_normalize(&mac(map, r)?)))
        .collect()
}

/// R-MAC (or WR-MAC when `weighted`) descriptor of a rectified feature map.
pub fn encode<T: Real>(
    map: &FeatureMap<T>,
    pca: &PcaModel<T>,
    weighted: bool,
    grid_scales: usize,
) -> Result<Descriptor<T>> {
    if !map.is_rectified() {
        return Err(Error::NotRectified);
    }
    if map.channels() != pca.in_dim() {
        return Err(Error::dims(
            format!("{} channels for the PCA model", pca.in_dim()),
            map.channels(),
        ));
    }
    let grid = rmac_grid(map.width(), map.height(), grid_scales);
    let vectors = grid
        .regions
        .iter()
        .map(|r| region_vector(map, r, pca))
        .collect::<Result<Vec<_>>>()?;
    let weights = if weighted {
        let saliency = compute_saliency(map)?;
        grid.regions
            .iter()
            .map(|r| region_weight(&saliency, r))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![T::one(); vectors.len()]
    };
    aggregate(&vectors, &weights)
}

/// Sums descriptors and ℓ₂-normalizes; a single descriptor is returned as is.
pub fn sum_descriptors<T: Real>(parts: Vec<Descriptor<T>>) -> Result<Descriptor<T>> {
    let mut iter = parts.into_iter();
    let Some(first) = iter.next() else {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    };
    let mut rest = iter.peekable();
    if rest.peek().is_none() {
        return Ok(first);
    }
    let mut sum = first.into_vec();
    for d in rest {
        if d.dim() != sum.len() {
            return Err(Error::dims(sum.len(), d.dim()));
        }
        for (s, v) in sum.iter_mut().zip(d.as_slice()) {
            *s += *v;
        }
    }
    Ok(Descriptor::normalized(&sum))
}

/// Runs `per_scale` on `image` resized so its long side equals each entry of
/// `scales` (bilinear, aspect preserved), then sums and ℓ₂-normalizes.
pub fn encode_multiscale<T, F>(
    image: &Image<T>,
    net: &NetworkSpec<T>,
    scales: &[usize],
    per_scale: F,
) -> Result<Descriptor<T>>
where
    T: Real,
    F: Fn(&Image<T>) -> Result<Descriptor<T>>,
{
    if scales.is_empty() {
        return Err(Error::InvalidArgument("empty scale list".into()));
    }
    let min = net.min_input_size();
    let parts = scales
        .iter()
        .map(|&s| {
            let (w, h) = image.dims_for_long_side(s);
            if w.min(h) < min {
                return Err(Error::InvalidArgument(format!(
                    "scale {s} gives a {w}x{h} image, below the network minimum {min}"
                )));
            }
            per_scale(&image.resize_bilinear(w, h)?)
        })
        .collect::<Result<Vec<_>>>()?;
    sum_descriptors(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_map() -> FeatureMap<f64> {
        FeatureMap::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 0.0, 5.0, 1.0, 0.0], true).unwrap()
    }

    #[test]
    fn mac_examples() {
        let m = example_map();
        assert_eq!(mac(&m, &Rect::full(2, 2)).unwrap(), vec![4.0, 5.0]);
        assert_eq!(mac(&m, &Rect::new(0, 0, 1, 2).unwrap()).unwrap(), vec![3.0, 1.0]);
        let a = mac(&m, &Rect::new(0, 0, 1, 1).unwrap()).unwrap();
        let b = mac(&m, &Rect::new(1, 1, 2, 2).unwrap()).unwrap();
        let u = mac(&m, &Rect::full(2, 2)).unwrap();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
        // the union bounding box here also contains (1,0) and (0,1)
        assert!(u.iter().zip(&ab).all(|(x, y)| x >= y));
        assert!(mac(&m, &Rect::new(0, 0, 3, 1).unwrap()).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let e1 = vec![1.0f64, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let d = aggregate(&[e1.clone(), e2.clone()], &[1.0, 1.0]).unwrap();
        assert!((d.as_slice()[0] - 0.70710678).abs() < 1e-8);
        assert!((d.as_slice()[1] - 0.70710678).abs() < 1e-8);
        assert_eq!(d.as_slice()[2], 0.0);
        assert!(aggregate(&[e1.clone(), e2.clone()], &[0.0, 0.0]).unwrap().is_zero());
        let c = aggregate(&[e1.clone(), e2.clone()], &[0.37, 0.37]).unwrap();
        for (a, b) in c.as_slice().iter().zip(d.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(aggregate(&[e1.clone()], &[1.0, 1.0]).is_err());
        assert!(aggregate(&[e1, e2], &[1.0, -0.1]).is_err());
    }

    #[test]
    fn weight_increases_projection() {
        let vs = vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.1, 0.0, 1.0]];
        let raw = |w: &[f64]| -> Vec<f64> {
            (0..3).map(|j| vs.iter().zip(w).map(|(v, wi)| wi * v[j]).sum()).collect()
        };
        let base = dot(&raw(&[1.0, 1.0, 1.0]), &vs[1]);
        let boosted = dot(&raw(&[1.0, 1.5, 1.0]), &vs[1]);
        assert!(boosted > base);
    }

    #[test]
    fn uniform_saliency_weighted_equals_plain() {
        // every location has channel sum 1 → saliency ≡ 1
        let m = FeatureMap::from_fn(6, 5, 3, true, |x, y, k| match k {
            0 => 0.2 + 0.1 * ((x + y) % 3) as f64,
            1 => 0.3,
            _ => 0.5 - 0.1 * ((x + y) % 3) as f64,
        })
        .unwrap();
        let pca = PcaModel::identity(3);
        let plain = encode(&m, &pca, false, 3).unwrap();
        let weighted = encode(&m, &pca, true, 3).unwrap();
        for (a, b) in plain.as_slice().iter().zip(weighted.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_map_gives_zero_descriptor() {
        let m = FeatureMap::<f64>::zeros(5, 4, 3).unwrap();
        let pca = PcaModel::identity(3);
        assert!(encode(&m, &pca, false, 3).unwrap().is_zero());
        assert!(encode(&m, &pca, true, 3).unwrap().is_zero());
    }

    #[test]
    fn single_region_collapse() {
        let m = FeatureMap::new(1, 1, 3, vec![0.5, 2.0, 1.0], true).unwrap();
        let samples: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 3) as f64, (i % 4) as f64, (i % 5) as f64]).collect();
        let pca = fit_pca(&samples, 3).unwrap();
        let d = encode(&m, &pca, true, 3).unwrap();
        let expect = l2_normalize(&pca.whiten(&l2_normalize(&[0.5, 2.0, 1.0])).unwrap());
        assert_eq!(d.as_slice(), expect.as_slice());
    }

    #[test]
    fn encode_rejects_unrectified_and_mismatched() {
        let pca = PcaModel::identity(2);
        let m = FeatureMap::new(1, 1, 2, vec![1.0f64, 2.0], false).unwrap();
        assert!(matches!(encode(&m, &pca, false, 1), Err(Error::NotRectified)));
        let m3 = FeatureMap::<f64>::zeros(1, 1, 3).unwrap();
        assert!(encode(&m3, &pca, false, 1).is_err());
    }

    #[test]
    fn sum_of_one_descriptor_is_identity() {
        let d = Descriptor::normalized(&[0.3f64, 0.1, -0.7]);
        assert_eq!(sum_descriptors(vec![d.clone()]).unwrap(), d);
        assert!(sum_descriptors::<f64>(vec![]).is_err());
    }
}
