//! Trained models: inference, feasibility projection and JSON persistence.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::Provenance;
use super::mlp::{forward_batch, Activation, MlpParams, MlpSpec};
use super::normalize::{InputScaler, OutputScaler};
use super::train::TrainingCurve;
use crate::config::SystemConfig;
use crate::metrics::{ipd, EffectiveGains, PowerAllocationDL, PowerAllocationUL};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub input: InputScaler,
}

/// One network (end-to-end) or a cascade of stage networks (unfolded).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub stages: Vec<Stage>,
    pub output: OutputScaler,
    pub curves: Vec<TrainingCurve>,
    pub provenance: Provenance,
}

impl Model {
    pub fn input_dim(&self) -> usize {
        self.stages[0].spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.dim()
    }

    /// Normalized predictions after every stage; samples are rows.
    pub fn stage_outputs(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut features = x.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let z = s.input.apply(&features).transpose();
            features = forward_batch(&s.params, &s.spec, &z).transpose();
            out.push(features.clone());
        }
        out
    }

    /// Predicted powers (W), one sample per row.
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.stage_outputs(x).pop().expect("model has stages");
        self.output.invert(&last)
    }

    pub fn predict_row(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim() {
            return Err(Error::Dimension(format!("expected {} features, got {}", self.input_dim(), features.len())));
        }
        let x = DMatrix::from_row_slice(1, features.len(), features);
        Ok(self.predict(&x).row(0).iter().copied().collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&ModelFile::from(self))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        file.try_into()
    }
}

fn sanitize(x: f64) -> f64 {
    if x.is_finite() {
        x.max(0.0)
    } else {
        0.0
    }
}

/// Scales each AP's links down to its budget, then all links together until
/// every IPD is within the limit.
pub fn project_dl(link_powers: &[f64], true_gains: &EffectiveGains, cfg: &SystemConfig) -> PowerAllocationDL {
    let assoc = true_gains.association();
    let clean: Vec<f64> = link_powers.iter().map(|&p| sanitize(p)).collect();
    let mut alloc = PowerAllocationDL::from_link_powers(assoc, &clean);
    for (m, total) in alloc.ap_powers(assoc).into_iter().enumerate() {
        if total > cfg.ap_power {
            let s = cfg.ap_power / total;
            alloc.p.column_mut(m).iter_mut().for_each(|p| *p *= s);
        }
    }
    let peak = ipd(&alloc, true_gains, cfg).into_iter().fold(0.0, f64::max);
    if peak > cfg.ipd_limit {
        alloc.p *= cfg.ipd_limit / peak;
    }
    alloc
}

/// Clamps each UE to the tighter of its budget and SAR caps.
pub fn project_ul(q: &[f64], cfg: &SystemConfig) -> PowerAllocationUL {
    let cap = cfg.ul_power_cap();
    PowerAllocationUL { q: q.iter().map(|&x| sanitize(x).min(cap)).collect() }
}

/// DL allocation from FPC link-power features.
pub fn predict_dl(model: &Model, features: &[f64], true_gains: &EffectiveGains, cfg: &SystemConfig) -> Result<PowerAllocationDL> {
    let links = true_gains.association().num_links();
    if model.output_dim() != links {
        return Err(Error::Dimension(format!("model predicts {} powers for {links} links", model.output_dim())));
    }
    Ok(project_dl(&model.predict_row(features)?, true_gains, cfg))
}

/// UL allocation from FPC power features.
pub fn predict_ul(model: &Model, features: &[f64], cfg: &SystemConfig) -> Result<PowerAllocationUL> {
    Ok(project_ul(&model.predict_row(features)?, cfg))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFile {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    /// Row-major `m_i × m_{i−1}` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_normalizer: InputScaler,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    stages: Vec<StageFile>,
    output_normalizer: OutputScaler,
    provenance: Provenance,
    #[serde(default)]
    curves: Vec<TrainingCurve>,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        let stages = m
            .stages
            .iter()
            .map(|s| StageFile {
                layer_sizes: s.spec.layer_sizes.clone(),
                activations: s.spec.activations.clone(),
                weights: s.params.weights.iter().map(|w| w.transpose().as_slice().to_vec()).collect(),
                biases: s.params.biases.iter().map(|b| b.as_slice().to_vec()).collect(),
                input_normalizer: s.input.clone(),
            })
            .collect();
        Self { stages, output_normalizer: m.output.clone(), provenance: m.provenance.clone(), curves: m.curves.clone() }
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.stages.is_empty() {
            return Err(Error::Format("model has no stages".into()));
        }
        let mut stages = Vec::with_capacity(f.stages.len());
        for s in f.stages {
            let spec = MlpSpec::new(s.layer_sizes, s.activations)?;
            if s.weights.len() != spec.num_layers() || s.biases.len() != spec.num_layers() {
                return Err(Error::Format("layer count disagrees with the spec".into()));
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for (i, w) in spec.layer_sizes.windows(2).enumerate() {
                if s.weights[i].len() != w[0] * w[1] || s.biases[i].len() != w[1] {
                    return Err(Error::Format(format!("layer {i} has the wrong number of parameters")));
                }
                weights.push(DMatrix::from_row_slice(w[1], w[0], &s.weights[i]));
                biases.push(DVector::from_column_slice(&s.biases[i]));
            }
            if s.input_normalizer.dim() != spec.input_dim() {
                return Err(Error::Format("input normalizer width disagrees with the network".into()));
            }
            stages.push(Stage { spec, params: MlpParams { weights, biases }, input: s.input_normalizer });
        }
        if f.output_normalizer.dim() != stages.last().expect("nonempty").spec.output_dim() {
            return Err(Error::Format("output normalizer width disagrees with the network".into()));
        }
        Ok(Model { stages, output: f.output_normalizer, curves: f.curves, provenance: f.provenance })
    }
}
