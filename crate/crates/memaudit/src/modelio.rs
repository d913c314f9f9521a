//! Versioned JSON envelope for trained models.

use std::path::Path;

use memaudit_core::dp::AccountingSummary;
use memaudit_core::models::ProbModel;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, parse_err, Error, Result};

pub const MODEL_FORMAT: &str = "memaudit-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: ProbModel,
    /// Present for models trained with DP-SGD.
    pub accounting: Option<AccountingSummary>,
}

impl ModelFile {
    pub fn new(model: ProbModel, accounting: Option<AccountingSummary>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model,
            accounting,
        }
    }
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(file).map_err(|e| parse_err(path, e))?;
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    if file.format != MODEL_FORMAT {
        return Err(parse_err(path, format!("not a model file (format {:?})", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::ModelVersion {
            found: file.version,
            expected: MODEL_VERSION,
        });
    }
    Ok(file)
}
