//! Mini-batch Adam training of single networks and of the unfolded cascade.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::dataset::{Dataset, Split};
use super::mlp::{backward, forward_batch, mae, MlpParams, MlpSpec};
use super::model::{Model, Stage};
use super::normalize::{InputScaler, OutputScaler};
use crate::seed::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Epochs (0-based) at whose start the rate is multiplied by `lr_decay`.
    pub decay_epochs: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Batch size used instead of `batch_size` when training UL networks.
    pub ul_batch_size: usize,
    pub l2: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay: 0.1,
            decay_epochs: vec![30, 45],
            epochs: 50,
            batch_size: 256,
            ul_batch_size: 64,
            l2: 1e-4,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("train.learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0) || self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::InvalidConfig("train.lr_decay must be positive and train.l2 nonnegative".into()));
        }
        if self.batch_size == 0 || self.ul_batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("train.batch_size, train.ul_batch_size and train.epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.lr_decay.powi(decays as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean over mini-batches of the MAE term.
    pub train_mae: f64,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Samples as columns, already normalized.
pub struct Batches<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
}

fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_columns(idx)
}

/// Trains one network; parameters with the best validation MAE are returned,
/// or those with the best training MAE when there is no validation data.
pub fn fit_network(spec: &MlpSpec, train: Batches<'_>, val: Option<Batches<'_>>, tcfg: &TrainConfig) -> Result<(MlpParams, TrainingCurve)> {
    spec.validate()?;
    tcfg.validate()?;
    let n = train.x.ncols();
    if n == 0 {
        return Err(Error::Domain("empty training split".into()));
    }
    if train.x.nrows() != spec.input_dim() || train.y.nrows() != spec.output_dim() || train.y.ncols() != n {
        return Err(Error::Dimension("training data does not match the network shape".into()));
    }
    let mut params = MlpParams::init(spec, &mut seed::rng(seed::derive(tcfg.seed, stream::INIT)));
    let mut shuffle = seed::rng(seed::derive(tcfg.seed, stream::SHUFFLE));
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = TrainingCurve::default();
    let mut best = (f64::INFINITY, params.clone());
    for epoch in 0..tcfg.epochs {
        let lr = tcfg.learning_rate_at(epoch);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(tcfg.batch_size) {
            let (xb, yb) = (columns(train.x, chunk), columns(train.y, chunk));
            let (loss, grads) = backward(&params, spec, &xb, &yb, tcfg.l2);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss {loss} at epoch {epoch}, batch {batches}")));
            }
            total += loss - 0.5 * tcfg.l2 * params.weight_norm_sqr();
            batches += 1;
            adam_step(&mut params, &grads, &mut state, lr, &tcfg.adam);
        }
        if !params.is_finite() {
            return Err(Error::Diverged(format!("non-finite parameters after epoch {epoch}")));
        }
        let train_mae = total / batches as f64;
        let val_mae = val.as_ref().map(|v| mae(&forward_batch(&params, spec, v.x), v.y));
        let score = val_mae.unwrap_or(train_mae);
        if score.is_nan() {
            return Err(Error::Diverged(format!("validation loss NaN at epoch {epoch}")));
        }
        if score < best.0 {
            best = (score, params.clone());
            curve.best_epoch = epoch;
        }
        curve.epochs.push(EpochStats { epoch, learning_rate: lr, train_mae, val_mae });
    }
    Ok((best.1, curve))
}

fn split_columns(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows).transpose()
}

/// Trains stage networks in sequence. Stage 1 sees the normalized dataset
/// inputs; stage `i` sees stage `i−1`'s normalized predictions. Every stage
/// is fitted against `stage_labels[i]` if given, else the dataset labels.
pub fn train_cascade(
    ds: &Dataset,
    spec: &MlpSpec,
    tcfg: &TrainConfig,
    n_stages: usize,
    stage_labels: Option<&[DMatrix<f64>]>,
) -> Result<Model> {
    if n_stages == 0 {
        return Err(Error::InvalidConfig("at least one stage is required".into()));
    }
    if let Some(l) = stage_labels {
        if l.len() < n_stages || l.iter().any(|m| m.shape() != ds.labels.shape()) {
            return Err(Error::Dimension("per-stage labels must match the dataset labels".into()));
        }
    }
    if spec.input_dim() != ds.inputs.ncols() || spec.output_dim() != ds.labels.ncols() {
        return Err(Error::Dimension(format!(
            "network {}→{} for data {}→{}",
            spec.input_dim(),
            spec.output_dim(),
            ds.inputs.ncols(),
            ds.labels.ncols()
        )));
    }
    if n_stages > 1 && spec.input_dim() != spec.output_dim() {
        return Err(Error::Dimension("cascaded stages need equal input and output widths".into()));
    }
    let train_rows = ds.rows(Split::Train);
    let val_rows = ds.rows(Split::Val);
    let output = OutputScaler::fit(&ds.labels, &train_rows)?;
    let mut features = ds.inputs.clone();
    let mut stages = Vec::with_capacity(n_stages);
    let mut curves = Vec::with_capacity(n_stages);
    for i in 0..n_stages {
        let input = InputScaler::fit(&features, &train_rows)?;
        let x = input.apply(&features);
        let y = output.apply(stage_labels.map_or(&ds.labels, |l| &l[i]));
        let (xt, yt) = (split_columns(&x, &train_rows), split_columns(&y, &train_rows));
        let (xv, yv) = (split_columns(&x, &val_rows), split_columns(&y, &val_rows));
        let val = (!val_rows.is_empty()).then_some(Batches { x: &xv, y: &yv });
        let stage_cfg = TrainConfig { seed: seed::derive(tcfg.seed, i as u64), ..tcfg.clone() };
        let (params, curve) = fit_network(spec, Batches { x: &xt, y: &yt }, val, &stage_cfg)?;
        features = forward_batch(&params, spec, &x.transpose()).transpose();
        stages.push(Stage { spec: spec.clone(), params, input });
        curves.push(curve);
    }
    Ok(Model { stages, output, curves, provenance: ds.provenance.clone() })
}

/// Single network mapping features to labels.
pub fn train_e2e(ds: &Dataset, spec: &MlpSpec, tcfg: &TrainConfig) -> Result<Model> {
    train_cascade(ds, spec, tcfg, 1, None)
}

/// Unfolded cascade with every stage trained against the final labels.
pub fn train_unfolded(ds: &Dataset, spec: &MlpSpec, tcfg: &TrainConfig, n_stages: usize) -> Result<Model> {
    if n_stages > 3 {
        return Err(Error::InvalidConfig(format!("at most 3 unfolded stages, got {n_stages}")));
    }
    train_cascade(ds, spec, tcfg, n_stages, None)
}
