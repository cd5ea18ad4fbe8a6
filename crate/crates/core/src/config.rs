// SPDX-License-Identifier: Apache-2.0

//! Pipeline configuration: TOML documents layered over dataset presets.
//!
//! A document names a preset (`kitti`, `wod` or `custom`) and may override
//! any field of it. `custom` starts from nothing, so every section must be
//! given. The config hash is the SHA-256 of the resolved configuration
//! serialized as JSON with fields in declaration order.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ckps::CkpsConfig;
use crate::cloud::CropRange;
use crate::des::DesConfig;
use crate::gas::GasConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Kitti,
    Wod,
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kitti" => Ok(Preset::Kitti),
            "wod" => Ok(Preset::Wod),
            "custom" => Ok(Preset::Custom),
            other => Err(format!("unknown preset {other:?} (expected kitti, wod or custom)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Kitti => "kitti",
            Preset::Wod => "wod",
            Preset::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pv1,
    Pv2,
    Pv3,
    Ckps,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pv1" => Ok(Stage::Pv1),
            "pv2" => Ok(Stage::Pv2),
            "pv3" => Ok(Stage::Pv3),
            "ckps" => Ok(Stage::Ckps),
            other => Err(format!("unknown stage {other:?} (expected pv1, pv2, pv3 or ckps)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Json,
    Csv,
    Table,
}

fn default_stages() -> Vec<Stage> {
    vec![Stage::Pv1, Stage::Pv2, Stage::Pv3, Stage::Ckps]
}

fn default_emit() -> Vec<EmitFormat> {
    vec![EmitFormat::Json, EmitFormat::Csv]
}

/// Fully resolved pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Preset,
    /// Fixed per-branch point budget.
    pub n_p: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub emit_stats: bool,
    #[serde(default = "default_emit")]
    pub emit: Vec<EmitFormat>,
    pub crop: CropRange,
    pub des: DesConfig,
    pub gas: GasConfig,
    #[serde(default)]
    pub ckps: CkpsConfig,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn kitti() -> Self {
        Self {
            preset: Preset::Kitti,
            n_p: 16384,
            seed: 0,
            stages: default_stages(),
            emit_stats: false,
            emit: default_emit(),
            crop: CropRange {
                x_min: 0.0,
                x_max: 70.4,
                y_min: -40.0,
                y_max: 40.0,
                z_min: -3.0,
                z_max: 1.0,
            },
            des: DesConfig::kitti(),
            gas: GasConfig::kitti(),
            ckps: CkpsConfig::default(),
            output: None,
        }
        .resolved()
    }

    pub fn wod() -> Self {
        Self {
            preset: Preset::Wod,
            n_p: 180_000,
            crop: CropRange {
                x_min: -75.2,
                x_max: 75.2,
                y_min: -75.2,
                y_max: 75.2,
                z_min: -2.0,
                z_max: 4.0,
            },
            des: DesConfig::wod(),
            gas: GasConfig::wod(),
            ckps: CkpsConfig::default(),
            ..Self::kitti()
        }
        .resolved()
    }

    pub fn preset(preset: Preset) -> Option<Self> {
        match preset {
            Preset::Kitti => Some(Self::kitti()),
            Preset::Wod => Some(Self::wod()),
            Preset::Custom => None,
        }
    }

    /// Fills derived defaults: the voxel grid anchors at the crop corner.
    pub fn resolved(mut self) -> Self {
        if self.ckps.origin.is_none() {
            self.ckps.origin = Some(self.crop.min_corner());
        }
        self
    }

    /// Parses a TOML document. `preset_override` wins over the document's
    /// own `preset` key.
    pub fn from_toml_str(text: &str, preset_override: Option<Preset>) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let preset = match preset_override {
            Some(p) => p,
            None => match doc.get("preset") {
                Some(v) => v
                    .as_str()
                    .ok_or_else(|| ConfigError::Parse("preset must be a string".into()))?
                    .parse()
                    .map_err(ConfigError::Parse)?,
                None => Preset::Kitti,
            },
        };
        doc.insert("preset".into(), toml::Value::String(preset.to_string()));
        let mut base = match Self::preset(preset) {
            Some(cfg) => toml::Table::try_from(&cfg).map_err(|e| ConfigError::Parse(e.to_string()))?,
            None => toml::Table::new(),
        };
        merge(&mut base, doc);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn from_path(path: &std::path::Path, preset_override: Option<Preset>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, preset_override)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Every invariant violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_p == 0 {
            v.push("n_p must be > 0".to_string());
        }
        if self.stages.is_empty() {
            v.push("at least one stage must be enabled".to_string());
        }
        if self.has_stage(Stage::Ckps)
            && !(self.has_stage(Stage::Pv1) && self.has_stage(Stage::Pv2) && self.has_stage(Stage::Pv3))
        {
            v.push("stage ckps requires pv1, pv2 and pv3".to_string());
        }
        if self.emit_stats && !(self.has_stage(Stage::Pv1) && self.has_stage(Stage::Pv2) && self.has_stage(Stage::Pv3)) {
            v.push("emit_stats requires pv1, pv2 and pv3".to_string());
        }
        v.extend(self.crop.violations());
        v.extend(self.des.violations());
        v.extend(self.gas.violations());
        v.extend(self.ckps.violations());
        v
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Result of checking a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<String>,
}

pub fn validate_config_str(text: &str, preset_override: Option<Preset>) -> ValidationReport {
    let violations = match PipelineConfig::from_toml_str(text, preset_override) {
        Ok(cfg) => cfg.violations(),
        Err(e) => vec![e.to_string()],
    };
    ValidationReport {
        valid: violations.is_empty(),
        violations,
    }
}

pub fn validate_config(path: &std::path::Path, preset_override: Option<Preset>) -> ValidationReport {
    match std::fs::read_to_string(path) {
        Ok(text) => validate_config_str(&text, preset_override),
        Err(e) => ValidationReport {
            valid: false,
            violations: vec![format!("cannot read {}: {e}", path.display())],
        },
    }
}
