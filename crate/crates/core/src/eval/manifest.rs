//! Dataset manifest: images plus queries with ROIs and relevance labels.
//!
//! ```json
//! {"images":  [{"id": "img_000", "path": "images/img_000.png", "w": 128, "h": 96}],
//!  "queries": [{"id": "q_00", "image": "img_000", "roi": [10, 12, 42, 44],
//!               "positive": ["img_001"], "junk": ["img_000"]}]}
//! ```
//!
//! Image paths are resolved relative to the manifest file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ap::Relevance;
use crate::error::{Error, Result};
use crate::tensor::Rect;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub id: String,
    pub image: String,
    pub roi: Rect,
    pub positive: Vec<String>,
    #[serde(default)]
    pub junk: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub queries: Vec<QueryEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut sizes = HashMap::new();
        for img in &self.images {
            if sizes.insert(img.id.as_str(), (img.w, img.h)).is_some() {
                return Err(Error::Format(format!("duplicate image id `{}`", img.id)));
            }
        }
        let mut qids = HashSet::new();
        for q in &self.queries {
            if !qids.insert(q.id.as_str()) {
                return Err(Error::Format(format!("duplicate query id `{}`", q.id)));
            }
            let &(w, h) = sizes
                .get(q.image.as_str())
                .ok_or_else(|| Error::Format(format!("query `{}` references unknown image `{}`", q.id, q.image)))?;
            if !q.roi.fits(w, h) {
                return Err(Error::Format(format!("query `{}` roi {} outside {w}x{h}", q.id, q.roi)));
            }
            if let Some(id) = q.positive.iter().chain(&q.junk).find(|id| !sizes.contains_key(id.as_str())) {
                return Err(Error::Format(format!("query `{}` labels unknown image `{id}`", q.id)));
            }
            Relevance::new(q.positive.iter().cloned(), q.junk.iter().cloned())?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads and validates a manifest, resolving relative image paths
    /// against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Self::from_json(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for img in &mut m.images {
            if img.path.is_relative() {
                img.path = dir.join(&img.path);
            }
        }
        Ok(m)
    }

    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Relevance per query id; with `self_junk`, each query's own image is
    /// also junk unless labelled positive.
    pub fn relevance(&self, self_junk: bool) -> Result<BTreeMap<String, Relevance>> {
        self.queries
            .iter()
            .map(|q| {
                let mut rel = Relevance::new(q.positive.iter().cloned(), q.junk.iter().cloned())?;
                if self_junk {
                    rel = rel.with_junk(&q.image);
                }
                Ok((q.id.clone(), rel))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "images": [{"id": "a", "path": "a.png", "w": 10, "h": 8},
                   {"id": "b", "path": "b.png", "w": 10, "h": 8}],
        "queries": [{"id": "q", "image": "a", "roi": [1, 1, 5, 5], "positive": ["b"], "junk": []}]
    }"#;

    #[test]
    fn parses_and_validates() {
        let m = DatasetManifest::from_json(SAMPLE).unwrap();
        assert_eq!(m.queries[0].roi, Rect::new(1, 1, 5, 5).unwrap());
        let rel = m.relevance(true).unwrap();
        assert!(rel["q"].junk().contains("a"));
        assert!(!m.relevance(false).unwrap()["q"].junk().contains("a"));
    }

    #[test]
    fn rejects_inconsistencies() {
        let bad_roi = SAMPLE.replace("[1, 1, 5, 5]", "[1, 1, 11, 5]");
        assert!(DatasetManifest::from_json(&bad_roi).is_err());
        let bad_ref = SAMPLE.replace("\"positive\": [\"b\"]", "\"positive\": [\"c\"]");
        assert!(DatasetManifest::from_json(&bad_ref).is_err());
        let dup = SAMPLE.replace("\"id\": \"b\"", "\"id\": \"a\"");
        assert!(DatasetManifest::from_json(&dup).is_err());
    }
}
