//! Retrieval evaluation: AP/mAP, dataset manifests, the synthetic dataset
//! and the evaluation grid.

mod ap;
mod harness;
mod manifest;
mod synthetic;

pub use self::ap::{average_precision, mean_average_precision, Relevance};
pub use self::harness::{run_eval, CellResult, Databases, EncoderKind, EvalGrid, EvalReport, DB_SA_ROW};
pub use self::manifest::{DatasetManifest, ImageEntry, QueryEntry};
pub use self::synthetic::{
    generate_synthetic, SyntheticConfig, SyntheticDataset, DEFAULT_IMAGES, DEFAULT_QUERIES, MIN_IMAGES,
};
