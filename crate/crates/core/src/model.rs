//! The exportable model artifact and its on-disk JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core_model::CoreParams;
use crate::error::{Error, Result};
use crate::network::Mlp;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub final_cost: Option<f64>,
    /// SHA-256 of the training data file, hex.
    pub dataset_fingerprint: Option<String>,
    /// Free-form creation stamp; left empty unless the caller supplies one so
    /// that repeated runs stay byte-identical.
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub core: CoreParams,
    pub network: Mlp,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    core: CoreParams,
    network: Mlp,
    metadata: ModelMetadata,
}

impl TrainedModel {
    pub fn new(core: CoreParams, network: Mlp) -> Self {
        TrainedModel {
            core,
            network,
            metadata: ModelMetadata::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        if !self.network.is_finite() {
            return Err(Error::NonFinite("network parameter"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            core: self.core,
            network: self.network.clone(),
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::ModelFile(format!(
                    "unsupported format version {v} (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFile("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let model = TrainedModel {
            core: file.core,
            network: file.network,
            metadata: file.metadata,
        };
        model.core.validate().map_err(|e| Error::ModelFile(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
