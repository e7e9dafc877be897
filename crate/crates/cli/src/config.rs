//! Flat TOML configuration: one table of scalar or array values per command.
//! Command-line flags override file values and the merged table is what gets
//! persisted with the run.

use std::path::{Path, PathBuf};

use facesr_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Rejects keys outside `valid` and nested tables.
pub fn check_keys(table: &Table, command: &str, valid: &[&str]) -> Result<()> {
    for (key, value) in table {
        if !valid.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown key `{key}` for `{command}`; valid keys: {}",
                valid.join(", ")
            )));
        }
        if value.is_table() {
            return Err(Error::Config(format!("key `{key}` must be a scalar or array, not a table")));
        }
    }
    Ok(())
}

/// Applies flag overrides; `None` leaves the file value in place.
pub fn merge(table: &mut Table, overrides: Vec<(&str, Option<Value>)>) {
    for (key, value) in overrides {
        if let Some(v) = value {
            table.insert(key.to_string(), v);
        }
    }
}

pub fn typed<T: DeserializeOwned>(table: &Table, command: &str) -> Result<T> {
    let text = toml::to_string(table).map_err(|e| Error::Config(e.to_string()))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("`{command}` config: {}", e.message())))
}

pub fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    text.parse::<Table>().map_err(|e| Error::Config(e.to_string()))
}

pub fn path_value(p: &Option<PathBuf>) -> Option<Value> {
    p.as_ref().map(|p| Value::String(p.to_string_lossy().into_owned()))
}

pub fn paths_value(p: &[PathBuf]) -> Option<Value> {
    (!p.is_empty()).then(|| Value::Array(p.iter().map(|p| Value::String(p.to_string_lossy().into_owned())).collect()))
}

pub fn strings_value(s: &[String]) -> Option<Value> {
    (!s.is_empty()).then(|| Value::Array(s.iter().cloned().map(Value::String).collect()))
}

pub fn int_value(v: Option<impl Into<i64>>) -> Option<Value> {
    v.map(|v| Value::Integer(v.into()))
}

pub fn usize_value(v: Option<usize>) -> Option<Value> {
    v.map(|v| Value::Integer(v as i64))
}

pub fn float_value(v: Option<f64>) -> Option<Value> {
    v.map(Value::Float)
}

pub fn str_value(v: &Option<String>) -> Option<Value> {
    v.clone().map(Value::String)
}

/// Absolute form of a path, resolved against the working directory.
pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn default_count() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    pub raw_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PrepareConfig {
    pub const KEYS: &'static [&'static str] = &["raw_dir", "out_dir", "count", "seed"];
}

fn default_runs() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: Option<String>,
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_runs")]
    pub out_dir: PathBuf,
    pub train_limit: Option<usize>,
    pub seed: Option<u64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub base_lr: Option<f64>,
    pub decay_factor: Option<f64>,
    pub decay_every: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub pretrain_epochs: Option<usize>,
    pub disc_threshold: Option<f64>,
    pub threshold_mode: Option<String>,
    pub checkpoint_every: Option<usize>,
    pub pixel_weight: Option<f64>,
    pub adversarial_weight: Option<f64>,
    pub content_weight: Option<f64>,
    pub face_weight: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub d: Option<usize>,
    pub s: Option<usize>,
    pub m: Option<usize>,
    pub blocks: Option<usize>,
    pub filters: Option<usize>,
    pub disc_filters: Option<usize>,
    #[serde(default)]
    pub backend_seed: u64,
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "model",
        "dataset",
        "out_dir",
        "train_limit",
        "seed",
        "batch_size",
        "epochs",
        "base_lr",
        "decay_factor",
        "decay_every",
        "beta1",
        "beta2",
        "pretrain_epochs",
        "disc_threshold",
        "threshold_mode",
        "checkpoint_every",
        "pixel_weight",
        "adversarial_weight",
        "content_weight",
        "face_weight",
        "n1",
        "n2",
        "d",
        "s",
        "m",
        "blocks",
        "filters",
        "disc_filters",
        "backend_seed",
    ];
}

fn default_reports() -> PathBuf {
    PathBuf::from("reports")
}

fn yes() -> bool {
    true
}

fn default_timing_runs() -> usize {
    facesr_core::metrics::DEFAULT_TIMING_RUNS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSrConfig {
    /// `path` or `Model Name=path`; the name form is checked against the checkpoint.
    #[serde(default)]
    pub checkpoints: Vec<String>,
    pub val_dir: Option<PathBuf>,
    pub val_limit: Option<usize>,
    #[serde(default = "yes")]
    pub include_bicubic: bool,
    #[serde(default)]
    pub ssim_mode: facesr_core::metrics::SsimMode,
    #[serde(default = "default_timing_runs")]
    pub timing_runs: usize,
    #[serde(default = "default_reports")]
    pub out_dir: PathBuf,
    pub title: Option<String>,
}

impl EvalSrConfig {
    pub const KEYS: &'static [&'static str] = &[
        "checkpoints",
        "val_dir",
        "val_limit",
        "include_bicubic",
        "ssim_mode",
        "timing_runs",
        "out_dir",
        "title",
    ];
}

fn default_adapter() -> String {
    "manifest".into()
}

fn default_embedder() -> String {
    "stub".into()
}

fn default_trials() -> usize {
    10_000
}

fn all_settings() -> Vec<String> {
    facesr_core::recognition::CropSetting::ALL.iter().map(|s| s.cli_name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalVerifyConfig {
    #[serde(default)]
    pub checkpoints: Vec<String>,
    pub dataset: Option<PathBuf>,
    /// `manifest`, `directory`, `watchlist` or `classroom`.
    #[serde(default = "default_adapter")]
    pub adapter: String,
    /// `watchlist` or `attendance`.
    pub task: Option<String>,
    #[serde(default = "all_settings")]
    pub settings: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// `stub`, `random`, `perfect-replay` or `replay`.
    #[serde(default = "default_embedder")]
    pub embedder: String,
    #[serde(default)]
    pub backend_seed: u64,
    #[serde(default = "yes")]
    pub include_bicubic: bool,
    pub gallery_policy: Option<String>,
    pub dataset_name: Option<String>,
    #[serde(default = "default_reports")]
    pub out_dir: PathBuf,
}

impl EvalVerifyConfig {
    pub const KEYS: &'static [&'static str] = &[
        "checkpoints",
        "dataset",
        "adapter",
        "task",
        "settings",
        "seed",
        "trials",
        "embedder",
        "backend_seed",
        "include_bicubic",
        "gallery_policy",
        "dataset_name",
        "out_dir",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// `records.json` files written by the evaluation commands.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Re-emit the shipped thesis tables and their statistics.
    #[serde(default)]
    pub thesis: bool,
    #[serde(default = "default_reports")]
    pub out_dir: PathBuf,
}

impl ReportConfig {
    pub const KEYS: &'static [&'static str] = &["inputs", "thesis", "out_dir"];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys_of<T: Serialize>(v: &T) -> Vec<String> {
        to_table(v).unwrap().keys().cloned().collect()
    }

    #[test]
    fn key_lists_cover_every_field() {
        let train = TrainConfig {
            model: Some("SRGAN".into()),
            dataset: Some("d".into()),
            train_limit: Some(1),
            seed: Some(1),
            batch_size: Some(1),
            epochs: Some(1),
            base_lr: Some(1.0),
            decay_factor: Some(1.0),
            decay_every: Some(1),
            beta1: Some(0.5),
            beta2: Some(0.5),
            pretrain_epochs: Some(1),
            disc_threshold: Some(1.0),
            threshold_mode: Some("per-batch".into()),
            checkpoint_every: Some(1),
            pixel_weight: Some(1.0),
            adversarial_weight: Some(1.0),
            content_weight: Some(1.0),
            face_weight: Some(1.0),
            n1: Some(1),
            n2: Some(1),
            d: Some(1),
            s: Some(1),
            m: Some(1),
            blocks: Some(1),
            filters: Some(1),
            disc_filters: Some(1),
            ..Default::default()
        };
        let mut keys = keys_of(&train);
        keys.sort();
        let mut expected: Vec<String> = TrainConfig::KEYS.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(keys, expected);

        let verify: EvalVerifyConfig = typed(&Table::new(), "eval-verify").unwrap();
        for k in keys_of(&verify) {
            assert!(EvalVerifyConfig::KEYS.contains(&k.as_str()), "{k}");
        }
        assert_eq!(verify.settings, ["no-resize", "size40", "size40-margin13"]);
        let sr: EvalSrConfig = typed(&Table::new(), "eval-sr").unwrap();
        for k in keys_of(&sr) {
            assert!(EvalSrConfig::KEYS.contains(&k.as_str()), "{k}");
        }
    }

    #[test]
    fn unknown_keys_name_the_valid_ones() {
        let table: Table = "modle = \"SRGAN\"".parse().unwrap();
        let err = check_keys(&table, "train", TrainConfig::KEYS).unwrap_err().to_string();
        assert!(err.contains("modle") && err.contains("model, dataset"), "{err}");
        let nested: Table = "[model]\nname = 1".parse().unwrap();
        assert!(check_keys(&nested, "train", TrainConfig::KEYS).is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut table: Table = "epochs = 50\nmodel = \"FSRCNN\"".parse().unwrap();
        merge(&mut table, vec![("epochs", usize_value(Some(1))), ("seed", int_value(None::<i64>))]);
        let cfg: TrainConfig = typed(&table, "train").unwrap();
        assert_eq!((cfg.epochs, cfg.seed, cfg.model.as_deref()), (Some(1), None, Some("FSRCNN")));
    }
}
