//! Effective configuration of a CLI run.
//!
//! Values are layered: built-in defaults, then a TOML file, then `--set
//! section.key=value` pairs, then dedicated command-line flags. Unknown keys
//! are rejected at every layer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transatt_core::eval::DEFAULT_KS;
use transatt_core::kb::DEFAULT_MIN_ATTR_SUPPORT;
use transatt_core::model::ModelConfig;
use transatt_core::synth::SynthConfig;
use transatt_core::train::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error("bad --set `{0}`: expected section.key=value")]
    Assignment(String),
    #[error("`{0}` is not a config section")]
    NotATable(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Attributes held by fewer distinct entities are dropped.
    pub min_attr_support: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { min_attr_support: DEFAULT_MIN_ATTR_SUPPORT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Attributes excluded from entity rankings.
    pub common_attrs: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ks: DEFAULT_KS.to_vec(), common_attrs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Compute per-entity gradients and evaluation queries on all cores.
    pub parallel: bool,
    /// Write the current model every this many epochs while training; 0
    /// disables periodic saves.
    pub save_every: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

impl CliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.model.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.synth.validate().map_err(|e| invalid(&e))?;
        if self.data.min_attr_support == 0 {
            return Err(ConfigError::Invalid("data.min_attr_support must be at least 1".into()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(ConfigError::Invalid("eval.ks must be a non-empty list of positive integers".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable as TOML")
    }
}

/// Accumulates configuration layers before the final typed check.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    table: toml::Table,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        let table = toml::Table::try_from(CliConfig::default()).expect("defaults are representable as TOML");
        ConfigBuilder { table }
    }
}

fn merge(base: &mut toml::Table, layer: toml::Table) {
    for (k, v) in layer {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(l)) => merge(b, l),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ConfigBuilder {
    pub fn file(&mut self, path: &Path) -> Result<&mut Self, ConfigError> {
        let err = |msg: String| ConfigError::File { path: path.display().to_string(), msg };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let layer: toml::Table = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        merge(&mut self.table, layer);
        Ok(self)
    }

    /// Set a dotted key. The value is read as a TOML value when it parses
    /// as one, and as a bare string otherwise.
    pub fn set_str(&mut self, assignment: &str) -> Result<&mut Self, ConfigError> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Assignment(assignment.into()))?;
        let key = key.trim();
        if key.is_empty() || !key.contains('.') {
            return Err(ConfigError::Assignment(assignment.into()));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.into()));
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: toml::Value) -> Result<&mut Self, ConfigError> {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("split yields at least one part");
        let mut table = &mut self.table;
        let mut walked = String::new();
        for p in parts {
            if !walked.is_empty() {
                walked.push('.');
            }
            walked.push_str(p);
            table = match table.entry(p).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
                toml::Value::Table(t) => t,
                _ => return Err(ConfigError::NotATable(walked)),
            };
        }
        table.insert(last.into(), value);
        Ok(self)
    }

    pub fn build(&self) -> Result<CliConfig, ConfigError> {
        let cfg: CliConfig =
            CliConfig::deserialize(toml::Value::Table(self.table.clone())).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ConfigBuilder::default().build().unwrap();
        assert_eq!(cfg, CliConfig::default());
        let reparsed: CliConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn later_layers_win() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        fs::write(&file, "[model]\nmargin = 2.0\nnorm = \"L1\"\n[train]\nepochs = 7\n").unwrap();
        let mut b = ConfigBuilder::default();
        b.file(&file).unwrap();
        b.set_str("train.epochs=9").unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.model.margin, 2.0);
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.model.word_dim, 100, "untouched keys keep defaults");
        b.set("train.epochs", toml::Value::Integer(3)).unwrap();
        assert_eq!(b.build().unwrap().train.epochs, 3);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut b = ConfigBuilder::default();
        b.set_str("model.bogus=1").unwrap();
        assert!(matches!(b.build(), Err(ConfigError::Invalid(_))));

        let mut b = ConfigBuilder::default();
        b.set_str("nosection.x=1").unwrap();
        assert!(b.build().is_err());

        let mut b = ConfigBuilder::default();
        b.set_str("model.margin=0").unwrap();
        assert!(b.build().is_err());

        assert!(ConfigBuilder::default().set_str("novalue").is_err());
        assert!(ConfigBuilder::default().set_str("model.margin.x=1").is_err());
    }

    #[test]
    fn unparsable_values_become_strings() {
        let mut b = ConfigBuilder::default();
        b.set_str("eval.common_attrs=[\"name\", \"alias\"]").unwrap();
        assert_eq!(b.build().unwrap().eval.common_attrs, ["name", "alias"]);
        let mut b = ConfigBuilder::default();
        b.set_str("model.norm=L1").unwrap();
        assert_eq!(b.build().unwrap().model.norm, transatt_core::numerics::Norm::L1);
    }
}
