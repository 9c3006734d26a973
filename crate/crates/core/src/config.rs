//! Run configuration: one TOML document, every key optional.
//!
//! Keys can be written flat with dotted prefixes
//! (`classifier.entropy_high = 0.9`) or grouped under `[classifier]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassifierConfig;
use crate::ingest::{FilterConfig, FormatDescriptor};
use crate::matrix::CrossCourseMode;
use crate::metrics::MetricConfig;
use crate::render::HeatmapStyle;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixOptions {
    pub cross_course_mode: CrossCourseMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseOptions {
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
    /// Field delimiter; detected from the header when absent.
    pub delimiter: Option<char>,
}

impl ParseOptions {
    pub fn descriptor(&self) -> FormatDescriptor {
        FormatDescriptor {
            delimiter: self.delimiter.map(|c| c as u8),
            strict: self.strict,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub parse: ParseOptions,
    pub filter: FilterConfig,
    pub matrix: MatrixOptions,
    pub metrics: MetricConfig,
    pub classifier: ClassifierConfig,
    pub render: HeatmapStyle,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Config::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.to_owned(),
            message,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        self.metrics.validate().map_err(|e| e.to_string())?;
        self.classifier.validate().map_err(|e| e.to_string())?;
        if self.filter.max_sections_cross_course == 0 {
            return Err("filter.max_sections_cross_course must be at least 1".into());
        }
        if self.render.cell_size == 0 {
            return Err("render.cell_size must be at least 1".into());
        }
        if let Some(c) = self.parse.delimiter {
            if !c.is_ascii() || c == '"' || c == '\n' {
                return Err(format!("parse.delimiter {c:?} is not usable"));
            }
        }
        Ok(())
    }
}
