//! Query-model × encoder evaluation grid.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::average_precision;
use super::manifest::DatasetManifest;
use crate::convnet::NetworkSpec;
use crate::encoder::PcaModel;
use crate::error::{Error, Result};
use crate::pipeline::{DescriptorIndex, Pipeline, PipelineConfig, QueryModel, QuerySpec};
use crate::scalar::Real;
use crate::tensor::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Rmac,
    Wrmac,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 2] = [EncoderKind::Rmac, EncoderKind::Wrmac];

    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::Rmac => "rmac",
            EncoderKind::Wrmac => "wrmac",
        }
    }

    pub fn weighted(&self) -> bool {
        matches!(self, EncoderKind::Wrmac)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "rmac" => Ok(EncoderKind::Rmac),
            "wrmac" => Ok(EncoderKind::Wrmac),
            other => Err(Error::InvalidArgument(format!("unknown encoder `{other}`"))),
        }
    }
}

/// Which cells to evaluate. With `database_sa`, an extra `sa+db` row scores
/// SA queries against a database encoded with database-side attention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalGrid {
    pub models: Vec<QueryModel>,
    pub encoders: Vec<EncoderKind>,
    pub database_sa: bool,
    pub self_junk: bool,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            models: QueryModel::ALL.to_vec(),
            encoders: EncoderKind::ALL.to_vec(),
            database_sa: false,
            self_junk: true,
        }
    }
}

pub const DB_SA_ROW: &str = "sa+db";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Query model name, or `sa+db`.
    pub model: String,
    pub encoder: EncoderKind,
    pub map: f64,
    pub ap: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_images: usize,
    pub n_queries: usize,
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn map(&self, model: &str, encoder: EncoderKind) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.encoder == encoder)
            .map(|c| c.map)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows are query models, columns encoders, entries mAP in percent.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<&str> = Vec::new();
        let mut cols: Vec<EncoderKind> = Vec::new();
        for c in &self.cells {
            if !rows.contains(&c.model.as_str()) {
                rows.push(&c.model);
            }
            if !cols.contains(&c.encoder) {
                cols.push(c.encoder);
            }
        }
        let mut out = format!("mAP (%) over {} queries, {} images\n", self.n_queries, self.n_images);
        let _ = write!(out, "{:<8}", "model");
        for c in &cols {
            let _ = write!(out, "{:>9}", c.name().to_uppercase());
        }
        out.push('\n');
        for r in rows {
            let _ = write!(out, "{:<8}", r.to_uppercase());
            for c in &cols {
                match self.map(r, *c) {
                    Some(m) => {
                        let _ = write!(out, "{:>9.2}", 100.0 * m);
                    }
                    None => {
                        let _ = write!(out, "{:>9}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Database indexes keyed by encoder and database-attention flag; missing
/// ones are encoded on demand.
#[derive(Debug, Default)]
pub struct Databases<T> {
    indexes: HashMap<(EncoderKind, bool), DescriptorIndex<T>>,
}

impl<T: Real> Databases<T> {
    pub fn new() -> Self {
        Databases { indexes: HashMap::new() }
    }

    pub fn insert(&mut self, encoder: EncoderKind, database_sa: bool, index: DescriptorIndex<T>) {
        self.indexes.insert((encoder, database_sa), index);
    }

    fn get_or_build(
        &mut self,
        key: (EncoderKind, bool),
        pipeline: &Pipeline<'_, T>,
        images: &[(String, Image<T>)],
    ) -> Result<&DescriptorIndex<T>> {
        if !self.indexes.contains_key(&key) {
            let index = pipeline.index_database(images, key.1)?;
            self.indexes.insert(key, index);
        }
        Ok(&self.indexes[&key])
    }
}

/// Runs every requested cell. `images` must cover every manifest image;
/// `config.encoder.weighted` is overridden per cell.
pub fn run_eval<T: Real>(
    manifest: &DatasetManifest,
    images: &[(String, Image<T>)],
    net: &NetworkSpec<T>,
    pca: &PcaModel<T>,
    config: &PipelineConfig<T>,
    grid: &EvalGrid,
    databases: &mut Databases<T>,
) -> Result<EvalReport> {
    if grid.models.is_empty() || grid.encoders.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation grid".into()));
    }
    let by_id: HashMap<&str, &Image<T>> = images.iter().map(|(id, img)| (id.as_str(), img)).collect();
    if let Some(missing) = manifest.images.iter().find(|e| !by_id.contains_key(e.id.as_str())) {
        return Err(Error::InvalidArgument(format!("image `{}` not loaded", missing.id)));
    }
    let relevance = manifest.relevance(grid.self_junk)?;

    let mut rows: Vec<(String, QueryModel, bool)> =
        grid.models.iter().map(|m| (m.name().to_string(), *m, false)).collect();
    if grid.database_sa {
        rows.push((DB_SA_ROW.to_string(), QueryModel::Sa, true));
    }

    let mut cells = Vec::new();
    for &encoder in &grid.encoders {
        let mut cfg = config.clone();
        cfg.encoder.weighted = encoder.weighted();
        let pipeline = Pipeline::new(net, pca, &cfg)?;
        for (name, model, db_sa) in &rows {
            let index = databases.get_or_build((encoder, *db_sa), &pipeline, images)?;
            let aps = manifest
                .queries
                .par_iter()
                .map(|q| {
                    let spec = QuerySpec { image: by_id[q.image.as_str()], roi: q.roi, model: *model };
                    let d = pipeline.encode_query(&spec)?;
                    let ranking: Vec<String> = index.rank_all(&d)?.into_iter().map(|h| h.id).collect();
                    Ok((q.id.clone(), average_precision(&ranking, &relevance[&q.id])?))
                })
                .collect::<Result<Vec<_>>>()?;
            let ap: BTreeMap<String, f64> = aps.into_iter().collect();
            let map = ap.values().sum::<f64>() / ap.len().max(1) as f64;
            log::info!("{name} / {encoder}: mAP {:.4}", map);
            cells.push(CellResult { model: name.clone(), encoder, map, ap });
        }
    }
    Ok(EvalReport { n_images: manifest.images.len(), n_queries: manifest.queries.len(), cells })
}
