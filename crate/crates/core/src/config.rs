//! Whole-toolchain configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{LoopConfig, ToolEnv};
use crate::api::ApiOptions;
use crate::augment::AugmentConfig;
use crate::interp::EvalLimits;
use crate::llm::{ClientConfig, ClientSource, HttpClient, Provider, ScriptBook};
use crate::relations::RelationConfig;

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SCENECODE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub scene_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub relations: RelationConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub llm: ClientConfig,
    pub limits: EvalLimits,
    pub api: ApiOptions,
    pub paths: PathsConfig,
    pub augment: AugmentConfig,
}

impl GlobalConfig {
    /// Parses `text`; `.json` files are JSON, everything else TOML. Relative
    /// paths inside the file are resolved against its directory.
    pub fn from_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file_err = |msg: String| ConfigError::File { path: path.to_path_buf(), msg };
        let mut cfg: GlobalConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).map_err(|e| file_err(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| file_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.paths.scene_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.paths.output_dir.as_mut() {
            resolve(p);
        }
        if let Some(s) = cfg.llm.script.as_mut() {
            let mut p = PathBuf::from(&*s);
            resolve(&mut p);
            *s = p.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.to_path_buf(), msg: e.to_string() })?;
        Self::from_str(&text, path)
    }

    /// Loads `explicit`, else the file named by `SCENECODE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.relations.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.loop_cfg.validate().map_err(ConfigError::Invalid)?;
        self.llm.validate().map_err(ConfigError::Invalid)?;
        self.limits.validate().map_err(ConfigError::Invalid)?;
        self.augment.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn tool_env(&self) -> ToolEnv {
        ToolEnv { relations: self.relations.clone(), options: self.api.clone(), limits: self.limits }
    }

    /// Builds the model client(s) the `llm` block describes.
    pub fn client_source(&self) -> Result<ClientSource, ConfigError> {
        match self.llm.provider {
            Provider::Scripted => {
                let path = self.llm.script.as_deref().unwrap_or_default();
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::File { path: path.into(), msg: e.to_string() })?;
                let book = ScriptBook::from_json(&text).map_err(|msg| ConfigError::File { path: path.into(), msg })?;
                Ok(ClientSource::Scripts(Arc::new(book)))
            }
            Provider::Http => {
                let client = HttpClient::from_env(self.llm.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(ClientSource::Shared(Arc::new(client)))
            }
        }
    }
}
