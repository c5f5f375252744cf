//! Model file: weights plus the metadata needed to check a dataset against
//! them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::Manifest;
use super::with_path;
use crate::error::{Error, Result};
use crate::instance::{MeasureParams, WeightVector};
use crate::trainer::TrainConfig;

pub const MODEL_FORMAT: &str = "divrank-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub measure: MeasureParams,
    pub relevance_dim: usize,
    pub channels: Vec<String>,
    pub schema_hash: String,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    /// Hash of the training dataset.
    #[serde(default)]
    pub dataset_hash: Option<String>,
}

impl ModelMetadata {
    pub fn for_manifest(manifest: &Manifest, measure: MeasureParams) -> Self {
        Self {
            measure,
            relevance_dim: manifest.relevance_dim,
            channels: manifest.channels.clone(),
            schema_hash: manifest.schema_hash(),
            train_config: None,
            dataset_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub weights: WeightVector,
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn new(weights: WeightVector, metadata: ModelMetadata) -> Result<Self> {
        let m = Self {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            weights,
            metadata,
        };
        m.check_self()?;
        Ok(m)
    }

    fn check_self(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Compatibility(format!("not a model file (format `{}`)", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Compatibility(format!("unsupported model version {}", self.version)));
        }
        let md = &self.metadata;
        self.weights.check_dims(md.relevance_dim, md.channels.len())?;
        let expect = Manifest::new(md.relevance_dim, md.channels.clone()).schema_hash();
        if md.schema_hash != expect {
            return Err(Error::Compatibility("schema hash does not match the recorded layout".into()));
        }
        if let Some(w) = self.weights.to_flat().iter().find(|w| !w.is_finite()) {
            return Err(Error::Compatibility(format!("non-finite weight {w}")));
        }
        Ok(())
    }

    /// Refuses a dataset whose feature layout differs from the training one.
    pub fn check_compatible(&self, manifest: &Manifest) -> Result<()> {
        let md = &self.metadata;
        if md.relevance_dim != manifest.relevance_dim {
            return Err(Error::Compatibility(format!(
                "model expects {} relevance features, dataset has {}",
                md.relevance_dim, manifest.relevance_dim
            )));
        }
        if md.channels != manifest.channels {
            return Err(Error::Compatibility(format!(
                "model channels [{}] differ from dataset channels [{}]",
                md.channels.join(","),
                manifest.channels.join(",")
            )));
        }
        if md.schema_hash != manifest.schema_hash() {
            return Err(Error::Compatibility("schema hash mismatch".into()));
        }
        Ok(())
    }
}

pub fn write_model(model: &ModelFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(model)?;
    s.push('\n');
    Ok(s)
}

pub fn read_model(text: &str) -> Result<ModelFile> {
    let m: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: None,
        line: e.line(),
        message: e.to_string(),
    })?;
    m.check_self()?;
    Ok(m)
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    std::fs::write(path, write_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?;
    read_model(&text).map_err(|e| with_path(e, path))
}
