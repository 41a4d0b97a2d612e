//! Pipeline configuration: one TOML file with sections, every field defaulted.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembly::UnknownKindPolicy;
use crate::ensemble::EnsembleParams;
use crate::geometry::FragmentationParams;
use crate::model::TrainConfig;
use crate::oracle::Oracle;
use crate::sampling::{DEFAULT_SAMPLE_FRACTION, INERTIA_FACTOR};

pub const DEFAULT_OH_CUTOFF: f64 = 1.4;
pub const DEFAULT_PRIMITIVE_OO_CUTOFF: f64 = 7.5;
pub const DEFAULT_TARGET_OO_CUTOFF: f64 = 4.5;
pub const DEFAULT_MAX_RANK: usize = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Primitive,
    Target,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Primitive => "primitive",
            System::Target => "target",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for System {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "primitive" => Ok(System::Primitive),
            "target" => Ok(System::Target),
            other => Err(ConfigError::Invalid(format!("unknown system {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FragmentationConfig {
    pub oh_cutoff: f64,
    pub max_rank: usize,
}

impl Default for FragmentationConfig {
    fn default() -> Self {
        FragmentationConfig {
            oh_cutoff: DEFAULT_OH_CUTOFF,
            max_rank: DEFAULT_MAX_RANK,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// XYZ trajectory, relative to the config file.
    pub trajectory: PathBuf,
    /// Defaults to 7.5 Å for the primitive system and 4.5 Å for the target.
    pub oo_cutoff: Option<f64>,
    /// Parameters for `generate`, which writes `trajectory`.
    pub generate: Option<EnsembleParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub fraction: f64,
    pub inertia_factor: f64,
    pub batch_size: usize,
    pub max_iter: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fraction: DEFAULT_SAMPLE_FRACTION,
            inertia_factor: INERTIA_FACTOR,
            batch_size: 256,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub plateau_epochs: usize,
    /// Learning-rate multiplier for the cumulative fine-tuning phase of a transfer.
    pub fine_tune_scale: f64,
    /// Kinds with fewer labelled samples are not trained.
    pub min_samples: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            min_delta: t.min_delta,
            plateau_epochs: t.plateau_epochs,
            fine_tune_scale: 0.1,
            min_samples: 3,
        }
    }
}

impl TrainingConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta,
            plateau_epochs: self.plateau_epochs,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankChoice {
    #[default]
    Transfer,
    Primitive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnknownKind {
    #[default]
    Error,
    Zero,
}

impl From<UnknownKind> for UnknownKindPolicy {
    fn from(u: UnknownKind) -> Self {
        match u {
            UnknownKind::Error => UnknownKindPolicy::Error,
            UnknownKind::Zero => UnknownKindPolicy::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub bank: BankChoice,
    pub unknown_kind: UnknownKind,
    /// Bin width of the frame-error histogram, kcal/mol.
    pub histogram_bin: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            bank: BankChoice::Transfer,
            unknown_kind: UnknownKind::Error,
            histogram_bin: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Relative to the config file.
    pub output_dir: PathBuf,
    pub fragmentation: FragmentationConfig,
    pub primitive: SystemConfig,
    pub target: SystemConfig,
    pub sampling: SamplingConfig,
    pub training: TrainingConfig,
    pub oracle: Oracle,
    pub predict: PredictConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("fragpes-out"),
            fragmentation: FragmentationConfig::default(),
            primitive: SystemConfig {
                trajectory: PathBuf::from("primitive.xyz"),
                ..SystemConfig::default()
            },
            target: SystemConfig {
                trajectory: PathBuf::from("target.xyz"),
                ..SystemConfig::default()
            },
            sampling: SamplingConfig::default(),
            training: TrainingConfig::default(),
            oracle: Oracle::default(),
            predict: PredictConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    /// Parses and validates config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<PipelineConfig, ConfigError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::parse(&text, &base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("fragmentation.oh_cutoff", self.fragmentation.oh_cutoff)?;
        for system in [System::Primitive, System::Target] {
            positive(&format!("{system}.oo_cutoff"), self.oo_cutoff(system))?;
        }
        let f = self.sampling.fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "sampling.fraction must lie in (0, 1], got {f}"
            )));
        }
        positive("sampling.inertia_factor", self.sampling.inertia_factor)?;
        positive("training.learning_rate", self.training.learning_rate)?;
        positive("training.fine_tune_scale", self.training.fine_tune_scale)?;
        positive("predict.histogram_bin", self.predict.histogram_bin)?;
        let m = self.training.momentum;
        if !(0.0..1.0).contains(&m) {
            return Err(ConfigError::Invalid(format!(
                "training.momentum must lie in [0, 1), got {m}"
            )));
        }
        if !(self.training.min_delta >= 0.0) {
            return Err(ConfigError::Invalid("training.min_delta must be >= 0".into()));
        }
        for (name, v) in [
            ("sampling.batch_size", self.sampling.batch_size),
            ("sampling.max_iter", self.sampling.max_iter),
            ("training.batch_size", self.training.batch_size),
            ("training.patience", self.training.patience),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn system(&self, system: System) -> &SystemConfig {
        match system {
            System::Primitive => &self.primitive,
            System::Target => &self.target,
        }
    }

    pub fn oo_cutoff(&self, system: System) -> f64 {
        self.system(system).oo_cutoff.unwrap_or(match system {
            System::Primitive => DEFAULT_PRIMITIVE_OO_CUTOFF,
            System::Target => DEFAULT_TARGET_OO_CUTOFF,
        })
    }

    pub fn fragmentation_params(&self, system: System) -> FragmentationParams {
        FragmentationParams {
            oh_cutoff: self.fragmentation.oh_cutoff,
            oo_cutoff: self.oo_cutoff(system),
            max_rank: self.fragmentation.max_rank,
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn trajectory_path(&self, system: System) -> PathBuf {
        self.resolve(&self.system(system).trajectory)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }
}

/// Short hex digest chaining a parent hash with serialised inputs.
pub fn chain_hash(parent: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(parent.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

/// Stable 64-bit value derived from a string, used to give each fragment kind its own seed.
pub fn stable_seed(base: u64, label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(bytes)
}
