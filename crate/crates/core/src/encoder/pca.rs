//! PCA whitening fitted on local region vectors, plus the PCAW file format.
//!
//! ```text
//! "PCAW" | version u32 | K u32 | K' u32 | mean K×f32 | basis K'·K×f32
//!        | eigenvalues K'×f32 | corpus digest 32 bytes (SHA-256)
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const PCAW_MAGIC: &[u8; 4] = b"PCAW";
pub const PCAW_VERSION: u32 = 1;

/// Added to every eigenvalue before taking the inverse square root.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Eigenvalues at or below `RANK_TOLERANCE · λ_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    in_dim: usize,
    out_dim: usize,
    mean: Vec<T>,
    /// `out_dim × in_dim`, row `i` the unit eigenvector of the `i`-th largest eigenvalue.
    basis: Vec<T>,
    eigenvalues: Vec<T>,
    corpus_digest: [u8; 32],
}

impl<T: Real> PcaModel<T> {
    pub fn new(mean: Vec<T>, basis: Vec<T>, eigenvalues: Vec<T>, corpus_digest: [u8; 32]) -> Result<Self> {
        let in_dim = mean.len();
        let out_dim = eigenvalues.len();
        if in_dim == 0 || out_dim == 0 || out_dim > in_dim {
            return Err(Error::InvalidArgument(format!(
                "pca dims must satisfy 1 <= K' <= K, got K={in_dim} K'={out_dim}"
            )));
        }
        if basis.len() != in_dim * out_dim {
            return Err(Error::dims(in_dim * out_dim, basis.len()));
        }
        if eigenvalues.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::InvalidArgument("eigenvalues must be positive".into()));
        }
        if mean.iter().chain(&basis).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(PcaModel {
            in_dim,
            out_dim,
            mean,
            basis,
            eigenvalues,
            corpus_digest,
        })
    }

    /// Zero mean, identity basis, unit eigenvalues.
    pub fn identity(dim: usize) -> Self {
        let mut basis = vec![T::zero(); dim * dim];
        for i in 0..dim {
            basis[i * dim + i] = T::one();
        }
        PcaModel {
            in_dim: dim,
            out_dim: dim,
            mean: vec![T::zero(); dim],
            basis,
            eigenvalues: vec![T::one(); dim],
            corpus_digest: [0; 32],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn corpus_digest(&self) -> &[u8; 32] {
        &self.corpus_digest
    }

    /// `diag(1/sqrt(λ + floor)) · basis · (v − mean)`.
    pub fn whiten(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.in_dim {
            return Err(Error::dims(self.in_dim, v.len()));
        }
        let centered: Vec<T> = v.iter().zip(&self.mean).map(|(a, m)| *a - *m).collect();
        let floor = T::lit(EIGEN_FLOOR);
        Ok(self
            .basis
            .chunks_exact(self.in_dim)
            .zip(&self.eigenvalues)
            .map(|(row, lambda)| {
                let proj: T = row.iter().zip(&centered).map(|(b, c)| *b * *c).sum();
                proj / (*lambda + floor).sqrt()
            })
            .collect())
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(PCAW_MAGIC);
        for v in [PCAW_VERSION, self.in_dim as u32, self.out_dim as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.mean.iter().chain(&self.basis).chain(&self.eigenvalues) {
            buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
        buf.extend_from_slice(&self.corpus_digest);
        sink.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..4] != PCAW_MAGIC {
            return Err(Error::Format("missing PCAW magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        if word(4) != PCAW_VERSION as usize {
            return Err(Error::Format(format!("unsupported PCAW version {}", word(4))));
        }
        let (k, kp) = (word(8), word(12));
        let floats = k + kp * k + kp;
        let expected = 16 + 4 * floats + 32;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() != expected {
            return Err(Error::dims(expected, bytes.len()));
        }
        let vals: Vec<T> = bytes[16..16 + 4 * floats]
            .chunks_exact(4)
            .map(|c| T::from(f32::from_le_bytes(c.try_into().unwrap())).unwrap_or_else(T::nan))
            .collect();
        let digest: [u8; 32] = bytes[expected - 32..].try_into().unwrap();
        PcaModel::new(
            vals[..k].to_vec(),
            vals[k..k + kp * k].to_vec(),
            vals[k + kp * k..].to_vec(),
            digest,
        )
    }
}

/// SHA-256 over the samples as little-endian f32.
pub fn corpus_digest<T: Real>(samples: &[Vec<T>]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for s in samples {
        for v in s {
            hasher.update(v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Fits a `out_dim`-component whitening model to `samples`.
///
/// Covariance is the population covariance (divided by the sample count).
pub fn fit_pca<T: Real>(samples: &[Vec<T>], out_dim: usize) -> Result<PcaModel<T>> {
    fit(samples, out_dim, false)
}

/// Like [`fit_pca`], but keeps only as many components as the samples
/// support when that is fewer than `max_dim`. Dead (always zero) channels
/// are the usual reason.
pub fn fit_pca_up_to<T: Real>(samples: &[Vec<T>], max_dim: usize) -> Result<PcaModel<T>> {
    fit(samples, max_dim, true)
}

fn fit<T: Real>(samples: &[Vec<T>], out_dim: usize, clamp_to_rank: bool) -> Result<PcaModel<T>> {
    if out_dim == 0 {
        return Err(Error::InvalidArgument("output dimension must be >= 1".into()));
    }
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientSamples {
            samples: 0,
            required: out_dim,
        });
    };
    let k = first.len();
    if out_dim > k {
        return Err(Error::InvalidArgument(format!(
            "output dimension {out_dim} exceeds input dimension {k}"
        )));
    }
    if samples.len() <= out_dim {
        return Err(Error::InsufficientSamples {
            samples: samples.len(),
            required: out_dim,
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != k) {
        return Err(Error::dims(k, bad.len()));
    }

    let n = samples.len() as f64;
    let mut mean = vec![0.0f64; k];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v.to_f64_lossy();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(k, k);
    let mut centered = vec![0.0f64; k];
    for s in samples {
        for (c, (v, m)) in centered.iter_mut().zip(s.iter().zip(&mean)) {
            *c = v.to_f64_lossy() - m;
        }
        for i in 0..k {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..k {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = (top * RANK_TOLERANCE).max(f64::MIN_POSITIVE);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    let out_dim = if clamp_to_rank && rank > 0 { out_dim.min(rank) } else { out_dim };
    if rank < out_dim {
        return Err(Error::RankDeficient {
            requested: out_dim,
            rank,
        });
    }

    let mut basis = Vec::with_capacity(out_dim * k);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for &i in &order[..out_dim] {
        let col = eig.eigenvectors.column(i);
        // sign convention: largest-magnitude entry positive
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.extend(col.iter().map(|v| T::lit(sign * v)));
        eigenvalues.push(T::lit(eig.eigenvalues[i]));
    }
    PcaModel::new(
        mean.into_iter().map(T::lit).collect(),
        basis,
        eigenvalues,
        corpus_digest(samples),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Sample covariance oracle, computed independently of the fit.
    fn covariance(v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = v.len() as f64;
        let k = v[0].len();
        let mean: Vec<f64> = (0..k).map(|j| v.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| v.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    fn gaussian_pair(rng: &mut impl Rng) -> (f64, f64) {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        (r * t.cos(), r * t.sin())
    }

    #[test]
    fn anisotropic_data_is_whitened() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let (a, b) = gaussian_pair(&mut rng);
                vec![2.0 * a + 3.0, b - 1.0]
            })
            .collect();
        let model = fit_pca(&samples, 2).unwrap();
        let white: Vec<Vec<f64>> = samples.iter().map(|s| model.whiten(s).unwrap()).collect();
        let c = covariance(&white);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c[i][j] - expect).abs() < 1e-3, "cov[{i}][{j}] = {}", c[i][j]);
            }
        }
        assert!((model.eigenvalues()[0] - 4.0).abs() < 0.2);
        assert!((model.eigenvalues()[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn isotropic_data_gives_orthonormal_basis() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let samples: Vec<Vec<f64>> = (0..20_000)
            .map(|_| {
                let (a, b) = gaussian_pair(&mut rng);
                let (c, _) = gaussian_pair(&mut rng);
                vec![a, b, c]
            })
            .collect();
        let model = fit_pca(&samples, 3).unwrap();
        let b = model.basis();
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|t| b[i * 3 + t] * b[j * 3 + t]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
            assert!((model.eigenvalues()[i] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn training_set_variance_is_unit() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..2_000)
            .map(|_| (0..4).map(|d| rng.gen_range(-1.0..1.0) * (d + 1) as f64).collect())
            .collect();
        let model = fit_pca(&samples, 4).unwrap();
        let white: Vec<Vec<f64>> = samples.iter().map(|s| model.whiten(s).unwrap()).collect();
        let c = covariance(&white);
        for (i, row) in c.iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-6, "component {i} variance {}", row[i]);
        }
    }

    #[test]
    fn constant_samples_are_rank_deficient() {
        let samples = vec![vec![1.0f64, 2.0, 3.0]; 10];
        assert!(matches!(
            fit_pca(&samples, 2),
            Err(Error::RankDeficient { requested: 2, rank: 0 })
        ));
    }

    #[test]
    fn rank_error_reports_achievable_rank() {
        let samples: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        assert!(matches!(
            fit_pca(&samples, 2),
            Err(Error::RankDeficient { requested: 2, rank: 1 })
        ));
        assert!(fit_pca(&samples, 1).is_ok());
        assert_eq!(fit_pca_up_to(&samples, 3).unwrap().out_dim(), 1);
        let constant = vec![vec![1.0f64, 2.0]; 10];
        assert!(fit_pca_up_to(&constant, 2).is_err());
    }

    #[test]
    fn argument_errors() {
        let samples = vec![vec![1.0f64, 2.0]; 3];
        assert!(matches!(fit_pca(&samples, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(fit_pca(&samples[..2], 2), Err(Error::InsufficientSamples { .. })));
        assert!(fit_pca(&samples, 0).is_err());
    }

    #[test]
    fn identity_model_and_mean() {
        let id = PcaModel::<f64>::identity(3);
        let v = [0.25, -1.0, 3.0];
        let w = id.whiten(&v).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        let samples: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let model = fit_pca(&samples, 2).unwrap();
        assert!(model.whiten(model.mean()).unwrap().iter().all(|v| *v == 0.0));
        assert!(model.whiten(&[1.0]).is_err());
    }

    #[test]
    fn whitening_is_affine() {
        let samples: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64]).collect();
        let model = fit_pca(&samples, 3).unwrap();
        let a = [0.3, 1.2, -0.7];
        let b = [2.0, -0.4, 0.9];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let wa = model.whiten(&a).unwrap();
        let wb = model.whiten(&b).unwrap();
        let ws = model.whiten(&sum).unwrap();
        let w0 = model.whiten(&[0.0; 3]).unwrap();
        // whiten(a+b) = whiten(a) + whiten(b) − whiten(0)
        for i in 0..3 {
            assert!((ws[i] - (wa[i] + wb[i] - w0[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn file_round_trip_is_exact_for_f32() {
        let samples: Vec<Vec<f32>> = (0..40).map(|i| vec![(i % 7) as f32, (i % 5) as f32, (i % 3) as f32]).collect();
        let model = fit_pca(&samples, 2).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 4 * (3 + 6 + 2) + 32);
        assert_eq!(PcaModel::<f32>::read(buf.as_slice()).unwrap(), model);
        assert_eq!(model.corpus_digest(), &corpus_digest(&samples));
        buf.truncate(buf.len() - 1);
        assert!(PcaModel::<f32>::read(buf.as_slice()).is_err());
    }
}
