//! Stable process exit codes.

use std::fmt;

use genreflow_core::corpus::FusionError;
use genreflow_core::manifest::ManifestError;
use genreflow_core::media::{PlanError, PluginError};
use genreflow_core::models::ModelError;
use genreflow_core::textprep::TextError;
use genreflow_core::tfidf::TfidfError;

pub const OK: u8 = 0;
pub const GENERIC: u8 = 1;
pub const CONFIG: u8 = 2;
pub const PLUGIN: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const ARTIFACT: u8 = 5;

/// Invalid flags, config values or missing inputs.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A stored artifact does not match what is being asked of it.
#[derive(Debug)]
pub struct ArtifactError(pub String);

impl fmt::Display for ArtifactError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ArtifactError {}

fn fusion_code(e: &FusionError) -> Option<u8> {
    match e.root() {
        FusionError::Plugin(PluginError::NotConfigured(_)) => Some(CONFIG),
        FusionError::Plugin(_) => Some(PLUGIN),
        FusionError::Plan(_) | FusionError::BadModalities(_) | FusionError::Manifest(_) => Some(CONFIG),
        FusionError::Parse { .. } | FusionError::BadId(_) => Some(ARTIFACT),
        FusionError::AllEmptyCorpus => Some(CONFIG),
        _ => None,
    }
}

fn model_code(e: &ModelError) -> Option<u8> {
    match e {
        ModelError::InvalidConfig(_) | ModelError::EmptyInput => Some(CONFIG),
        ModelError::NonFiniteLoss { .. } => Some(NUMERIC),
        ModelError::HashMismatch { .. }
        | ModelError::CorruptCheckpoint(_)
        | ModelError::VersionMismatch { .. }
        | ModelError::ShapeMismatch(_) => Some(ARTIFACT),
        ModelError::Text(_) | ModelError::Tfidf(_) => Some(ARTIFACT),
        _ => None,
    }
}

/// First classifiable cause in the chain decides the code.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if cause.is::<ConfigError>() {
            Some(CONFIG)
        } else if cause.is::<ArtifactError>() {
            Some(ARTIFACT)
        } else if let Some(e) = cause.downcast_ref::<ModelError>() {
            model_code(e)
        } else if let Some(e) = cause.downcast_ref::<FusionError>() {
            fusion_code(e)
        } else if cause.is::<PluginError>() {
            Some(PLUGIN)
        } else if cause.is::<ManifestError>() || cause.is::<PlanError>() {
            Some(CONFIG)
        } else if cause.is::<TextError>() || cause.is::<TfidfError>() {
            Some(ARTIFACT)
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    GENERIC
}
