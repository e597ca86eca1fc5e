//! Run configuration: JSON config file values, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use ctxret::attention::AttentionParams;
use ctxret::convnet::{toy_network, NetworkFile};
use ctxret::encoder::{PcaModel, DEFAULT_SCALES};
use ctxret::pipeline::PipelineConfig;
use ctxret::{NetworkSpec64, PcaModel64, PipelineConfig64};

use crate::UsageError;

/// Config file keys. Every key is optional; flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scales: Option<Vec<usize>>,
    pub n_grid_scales: Option<usize>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub phi: Option<f64>,
    pub tap: Option<String>,
    pub weighted: Option<bool>,
    pub tau: Option<f64>,
    pub min_area: Option<usize>,
    pub pca: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.network, &mut cfg.pca, &mut cfg.manifest, &mut cfg.index, &mut cfg.report]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fills every key set in `other`, leaving the rest untouched.
    pub fn merge(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(network, seed, scales, n_grid_scales, lambda1, lambda2, phi, tap, weighted, tau, min_area, pca, manifest, index, report);
    }
}

/// Flags shared by every command that builds a pipeline.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network-spec JSON file
    #[arg(long, conflicts_with = "seed")]
    pub network: Option<PathBuf>,
    /// Seed of the built-in toy network (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated long-side image sizes
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<usize>>,
    /// Number of R-MAC grid scales
    #[arg(long)]
    pub n_grid_scales: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    /// Tap where spatial attention is applied
    #[arg(long)]
    pub tap: Option<String>,
    /// Saliency-weighted regions (WR-MAC); `--weighted false` gives R-MAC
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub weighted: Option<bool>,
    /// Saliency threshold for database ROIs
    #[arg(long)]
    pub tau: Option<f64>,
    /// Smallest database ROI, in activation cells
    #[arg(long)]
    pub min_area: Option<usize>,
    /// PCAW whitening model
    #[arg(long)]
    pub pca: Option<PathBuf>,
}

impl PipelineArgs {
    /// Config file (if any) with these flags layered on top.
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.network.is_some() {
            cfg.seed = None;
        }
        if self.seed.is_some() {
            cfg.network = None;
        }
        cfg.merge(RunConfig {
            network: self.network.clone(),
            seed: self.seed,
            scales: self.scales.clone(),
            n_grid_scales: self.n_grid_scales,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            phi: self.phi,
            tap: self.tap.clone(),
            weighted: self.weighted,
            tau: self.tau,
            min_area: self.min_area,
            pca: self.pca.clone(),
            ..Default::default()
        });
        Resolved::new(cfg)
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub pipeline: PipelineConfig64,
}

impl Resolved {
    fn new(raw: RunConfig) -> anyhow::Result<Self> {
        let mut pipeline = PipelineConfig::default();
        if let Some(s) = &raw.scales {
            if s.is_empty() || s.contains(&0) {
                bail!(UsageError("scales must be positive".into()));
            }
            pipeline.encoder.scales = s.clone();
        } else {
            pipeline.encoder.scales = DEFAULT_SCALES.to_vec();
        }
        if let Some(n) = raw.n_grid_scales {
            if n == 0 {
                bail!(UsageError("n-grid-scales must be positive".into()));
            }
            pipeline.encoder.grid_scales = n;
        }
        if let Some(w) = raw.weighted {
            pipeline.encoder.weighted = w;
        }
        let d = AttentionParams::<f64>::default();
        pipeline.attention = AttentionParams::new(
            raw.lambda1.unwrap_or(d.lambda1),
            raw.lambda2.unwrap_or(d.lambda2),
            raw.phi.unwrap_or(d.phi),
        )
        .map_err(|e| UsageError(e.to_string()))?;
        if let Some(t) = &raw.tap {
            pipeline.attention_tap = t.clone();
        }
        if let Some(t) = raw.tau {
            if !(0.0..=1.0).contains(&t) {
                bail!(UsageError(format!("tau {t} outside [0,1]")));
            }
            pipeline.tau = t;
        }
        if let Some(m) = raw.min_area {
            pipeline.min_area = m;
        }
        for p in [&raw.network, &raw.pca].into_iter().flatten() {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(Resolved { raw, pipeline })
    }

    pub fn network(&self) -> anyhow::Result<NetworkSpec64> {
        match &self.raw.network {
            Some(p) => {
                let file = NetworkFile::load(p).with_context(|| format!("loading network {}", p.display()))?;
                let net = file.build()?;
                net.tap(&self.pipeline.attention_tap)
                    .map_err(|e| UsageError(e.to_string()))?;
                Ok(net)
            }
            None => {
                let net = toy_network(self.raw.seed.unwrap_or(0));
                net.tap(&self.pipeline.attention_tap)
                    .map_err(|e| UsageError(e.to_string()))?;
                Ok(net)
            }
        }
    }

    pub fn pca(&self) -> anyhow::Result<PcaModel64> {
        let Some(p) = &self.raw.pca else {
            bail!(UsageError("a PCA model is required (--pca)".into()));
        };
        let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        PcaModel::read(std::io::BufReader::new(file)).with_context(|| format!("reading {}", p.display()))
    }
}
