//! Experiment configuration: a JSON file, `--set key=value` overrides and the
//! global `--seed` / `--out` flags, applied in that order.

use std::path::{Path, PathBuf};

use posetl::dataio::PipelineConfig;
use posetl::nn::{GradCheckConfig, TrainConfig};
use posetl::transfer::MatrixConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    #[default]
    Tcnn,
    TcnnImu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub kind: ArchKind,
    pub fc_units: usize,
    pub branch_units: usize,
    pub fusion_units: usize,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            kind: ArchKind::Tcnn,
            fc_units: posetl::arch::DEFAULT_FC_UNITS,
            branch_units: posetl::arch::DEFAULT_FC_UNITS,
            fusion_units: posetl::arch::DEFAULT_FC_UNITS,
            dropout: posetl::arch::DEFAULT_DROPOUT,
        }
    }
}

/// Geometry of the random batch used by `gradcheck`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckSettings {
    pub window_len: usize,
    pub channels: usize,
    pub classes: usize,
    pub batch: usize,
    /// Number of limb branches for `tcnn-imu`; channels are split evenly.
    pub branches: usize,
    #[serde(flatten)]
    pub check: GradCheckConfig,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self { window_len: 25, channels: 4, classes: 3, batch: 2, branches: 3, check: GradCheckConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest; the pipeline runs in-process when `dataset` is unset.
    pub manifest: Option<PathBuf>,
    /// Directory written by `synth`.
    pub dataset: Option<PathBuf>,
    /// Pre-trained checkpoint for `transfer`.
    pub source_checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    /// Tag stored in checkpoint metadata.
    pub source_tag: String,
    pub pipeline: PipelineConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Learning-rate grid chosen from by validation wF1; empty means `train.lr`.
    pub lrs: Vec<f64>,
    pub transfer: MatrixConfig,
    pub gradcheck: GradCheckSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            dataset: None,
            source_checkpoint: None,
            out: PathBuf::from("out"),
            source_tag: String::new(),
            pipeline: PipelineConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            lrs: vec![1e-3, 1e-4, 1e-5],
            transfer: MatrixConfig::default(),
            gradcheck: GradCheckSettings::default(),
        }
    }
}

/// Sets `root.a.b.c` for the dotted key `a.b.c`, creating objects on the way.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Usage(format!("invalid key `{key}`")));
        }
        let obj = match node {
            Value::Object(m) => m,
            _ => return Err(CliError::Config(format!("`{}` is not an object", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses `key=value`. The value is read as JSON when it parses, otherwise
/// taken as a string, so `train.lr=1e-4` and `arch.kind=tcnn-imu` both work.
pub fn parse_override(arg: &str) -> Result<(String, Value), CliError> {
    let (key, raw) =
        arg.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{arg}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    /// Builds the effective configuration. When a config file is given,
    /// relative paths (including overridden ones) are resolved against its
    /// directory; `--out` is taken as given.
    pub fn load(
        file: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut root = match file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for arg in overrides {
            let (key, value) = parse_override(arg)?;
            set_path(&mut root, &key, value)?;
        }
        let mut cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(base) = file.and_then(Path::parent) {
            resolve(base, &mut cfg.manifest);
            resolve(base, &mut cfg.dataset);
            resolve(base, &mut cfg.source_checkpoint);
            if cfg.out.is_relative() {
                cfg.out = base.join(&cfg.out);
            }
        }
        if let Some(seed) = seed {
            cfg.train.seed = seed;
            cfg.pipeline.split_seed = seed;
            cfg.transfer.seed = seed;
            cfg.gradcheck.check.seed = seed;
        }
        if let Some(out) = out {
            cfg.out = out.to_path_buf();
        }
        Ok(cfg)
    }
}
