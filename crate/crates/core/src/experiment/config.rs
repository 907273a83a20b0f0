//! Experiment configuration: TOML schema, presets and policy names.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamforming::BeamformerKind;
use crate::config::SystemConfig;
use crate::linalg::dbm_to_watt;
use crate::metrics::{Direction, EvaluationMode};
use crate::ml::TrainConfig;
use crate::optimizer::SolverConfig;
use crate::{Error, Result};

/// Power control policies that can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    Upc,
    FpcFair,
    FpcOpp,
    OpcMaximin,
    OpcLse,
    E2eDnn,
    /// Unfolded cascade truncated to this many stages.
    UDnn(usize),
}

pub const MAX_UNFOLDED_STAGES: usize = 3;

impl Policy {
    pub fn is_model_based(self) -> bool {
        matches!(self, Policy::OpcMaximin | Policy::OpcLse)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Policy::E2eDnn | Policy::UDnn(_))
    }

    pub fn supports(self, direction: Direction) -> bool {
        direction == Direction::Dl || !matches!(self, Policy::OpcLse | Policy::UDnn(_))
    }

    /// File-name friendly form, e.g. `u-dnn3`.
    pub fn slug(self) -> String {
        match self {
            Policy::UDnn(n) => format!("u-dnn{n}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Upc => f.write_str("upc"),
            Policy::FpcFair => f.write_str("fpc-fair"),
            Policy::FpcOpp => f.write_str("fpc-opp"),
            Policy::OpcMaximin => f.write_str("opc-maximin"),
            Policy::OpcLse => f.write_str("opc-lse"),
            Policy::E2eDnn => f.write_str("e2e-dnn"),
            Policy::UDnn(n) => write!(f, "u-dnn({n})"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let policy = match s {
            "upc" => Policy::Upc,
            "fpc-fair" => Policy::FpcFair,
            "fpc-opp" => Policy::FpcOpp,
            "opc-maximin" => Policy::OpcMaximin,
            "opc-lse" => Policy::OpcLse,
            "e2e-dnn" => Policy::E2eDnn,
            "u-dnn" => Policy::UDnn(MAX_UNFOLDED_STAGES),
            _ => {
                let stages = s
                    .strip_prefix("u-dnn(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| s.strip_prefix("u-dnn"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "unknown policy `{s}` (upc, fpc-fair, fpc-opp, opc-maximin, opc-lse, e2e-dnn, u-dnn(n))"
                        ))
                    })?;
                if !(1..=MAX_UNFOLDED_STAGES).contains(&stages) {
                    return Err(Error::InvalidConfig(format!("u-dnn stages must lie in 1..={MAX_UNFOLDED_STAGES}")));
                }
                Policy::UDnn(stages)
            }
        };
        Ok(policy)
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> Self {
        p.to_string()
    }
}

/// Comma-separated policy list.
pub fn parse_policies(s: &str) -> Result<Vec<Policy>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Preset::Small),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}` (small, paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub direction: Direction,
    pub beamformer: BeamformerKind,
    pub policies: Vec<Policy>,
    pub trials: usize,
    pub seed: u64,
    pub evaluation: EvaluationMode,
    pub out_dir: PathBuf,
    pub dataset_size: usize,
    /// Stages whose LSE iterates are stored with DL datasets (0 disables).
    pub unfold_stages: usize,
    /// End-to-end model file for `e2e-dnn`.
    pub model: Option<PathBuf>,
    /// Unfolded cascade file for `u-dnn(n)`.
    pub unfolded_model: Option<PathBuf>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            direction: Direction::Dl,
            beamformer: BeamformerKind::Cb,
            policies: vec![Policy::Upc, Policy::FpcFair, Policy::FpcOpp, Policy::OpcMaximin],
            trials: 100,
            seed: 1,
            evaluation: EvaluationMode::Estimated,
            out_dir: PathBuf::from("out"),
            dataset_size: 10_000,
            unfold_stages: MAX_UNFOLDED_STAGES,
            model: None,
            unfolded_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentSettings,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::Paper => ExperimentConfig {
                system: SystemConfig::paper(),
                solver: SolverConfig::default(),
                train: TrainConfig::default(),
                experiment: ExperimentSettings::default(),
            },
            Preset::Small => ExperimentConfig {
                system: SystemConfig::small(),
                solver: SolverConfig::default(),
                train: TrainConfig::default(),
                experiment: ExperimentSettings { trials: 50, dataset_size: 2000, ..Default::default() },
            },
        }
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

const DIMENSION_KEYS: [&str; 4] = ["num_ues", "num_aps", "antennas_per_ap", "cluster_size"];

fn schema_error(e: impl fmt::Display) -> Error {
    Error::InvalidConfig(e.to_string())
}

impl ExperimentConfig {
    /// Overlays a TOML document on `preset`. Changing the network dimensions
    /// re-derives the pilot length; changing the pilot length re-splits the
    /// frame; changing the bandwidth or noise density re-derives the noise
    /// variances, unless those derived keys are given explicitly.
    pub fn from_toml_str(text: &str, preset: Preset) -> Result<Self> {
        let user: toml::Table = text.parse()?;
        let base_cfg = preset.config();
        let system = user.get("system").and_then(toml::Value::as_table).cloned().unwrap_or_default();
        let mut sys = base_cfg.system.clone();
        if DIMENSION_KEYS.iter().any(|k| system.contains_key(*k)) {
            let dim = |key: &str, cur: usize| -> Result<usize> {
                match system.get(key) {
                    Some(v) => v
                        .as_integer()
                        .and_then(|i| usize::try_from(i).ok())
                        .ok_or_else(|| Error::InvalidConfig(format!("system.{key} must be a nonnegative integer"))),
                    None => Ok(cur),
                }
            };
            sys = SystemConfig::with_dimensions(
                dim("num_ues", sys.num_ues)?,
                dim("num_aps", sys.num_aps)?,
                dim("antennas_per_ap", sys.antennas_per_ap)?,
                dim("cluster_size", sys.cluster_size)?,
            );
        }
        let mut table = toml::Table::try_from(&ExperimentConfig { system: sys, ..base_cfg }).map_err(schema_error)?;
        merge(&mut table, user);
        let mut cfg: ExperimentConfig = toml::Value::Table(table).try_into()?;
        let has = |k: &str| system.contains_key(k);
        if (has("pilot_len") || DIMENSION_KEYS.iter().any(|k| has(k))) && !has("dl_len") && !has("ul_len") {
            let tp = cfg.system.pilot_len;
            cfg.system.set_pilot_len(tp);
        }
        if (has("bandwidth") || has("noise_psd_dbm")) && !has("noise_var_ue") && !has("noise_var_ap") {
            let noise = dbm_to_watt(cfg.system.noise_psd_dbm) * cfg.system.bandwidth;
            cfg.system.noise_var_ue = noise;
            cfg.system.noise_var_ap = noise;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, preset)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(schema_error)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.solver.validate()?;
        self.train.validate()?;
        let e = &self.experiment;
        if e.policies.is_empty() {
            return Err(Error::InvalidConfig("experiment.policies is empty".into()));
        }
        if let Some(p) = e.policies.iter().find(|p| !p.supports(e.direction)) {
            return Err(Error::InvalidConfig(format!("policy {p} is DL-only")));
        }
        if e.unfold_stages > MAX_UNFOLDED_STAGES {
            return Err(Error::InvalidConfig(format!("experiment.unfold_stages must be at most {MAX_UNFOLDED_STAGES}")));
        }
        Ok(())
    }

    pub fn system_sha256(&self) -> String {
        sha256_json(&self.system)
    }

    pub fn solver_sha256(&self) -> String {
        sha256_json(&self.solver)
    }
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("configuration serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
