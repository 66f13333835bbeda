pub mod datagen;
pub mod eval;
pub mod render;
pub mod report;
pub mod stats;
pub mod train;
pub mod validate;

use std::path::{Path, PathBuf};

use emo3d::{load_dataset, Triad};

use crate::error::CliError;
use crate::manifest::RunManifest;

/// Loads a dataset and records its digest in the manifest.
pub fn load_recorded(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Triad>, CliError> {
    let triads = load_dataset(path)?;
    manifest.input(path)?;
    Ok(triads)
}

/// Image paths in a dataset are relative to the dataset file.
pub fn image_root(dataset: &Path, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => dataset.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}
