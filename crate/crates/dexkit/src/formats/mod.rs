//! On-disk formats: DXPC point clouds, DXCK checkpoints, JSON manifests and
//! dataset indexes, CSV reports, and training-resume snapshots.

pub mod csv;
pub mod dxpc;
pub mod resume;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dexkit_core::assets::{Category, CategoryTemplate, Split, SplitEntry, SplitManifest};
use dexkit_core::nn::ParamStore;
use serde::{Deserialize, Serialize};

use crate::{DexkitError, Result};

/// Checkpoint file IO (byte format lives in the core crate).
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, store.encode())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path)?;
    Ok(ParamStore::decode(&bytes)?)
}

/// One object row in the manifest file (split roster + resolved template
/// parameters for the record).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestObject {
    pub id: u32,
    pub seed: u64,
    pub split: Split,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// The manifest file: `{category, objects: [{id, seed, split, params...}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub category: Category,
    pub objects: Vec<ManifestObject>,
}

impl ManifestFile {
    /// Build from a core manifest, materializing instance params.
    pub fn from_core(manifest: &SplitManifest, template: &CategoryTemplate) -> ManifestFile {
        let objects = manifest
            .objects
            .iter()
            .map(|e| {
                let obj = manifest.build_object(e, template);
                ManifestObject {
                    id: e.id,
                    seed: e.seed,
                    split: e.split,
                    params: obj.params.into_iter().collect(),
                }
            })
            .collect();
        ManifestFile { category: manifest.category, objects }
    }

    pub fn to_core(&self) -> SplitManifest {
        SplitManifest {
            category: self.category,
            objects: self
                .objects
                .iter()
                .map(|o| SplitEntry { id: o.id, seed: o.seed, split: o.split })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ManifestFile> {
        let bytes = fs::read(path).map_err(|e| {
            DexkitError::Validation(vec![format!("manifest {}: {e}", path.display())])
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// One dataset record entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub object_id: u32,
    pub category: Category,
    pub task: Category,
}

/// Dataset index: `{records: [{file, object_id, category, task}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub records: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetIndex> {
        let bytes = fs::read(path).map_err(|e| {
            DexkitError::Validation(vec![format!("dataset index {}: {e}", path.display())])
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// FNV-1a hash of a file's bytes (log/replay comparisons).
pub fn file_hash(path: &Path) -> Result<u64> {
    Ok(dexkit_core::rng::fnv1a(&fs::read(path)?))
}
