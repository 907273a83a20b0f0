//! Supervised dataset generation from solver runs, and model training.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::metrics::{Direction, PowerAllocationDL, PowerAllocationUL};
use crate::ml::{assign_splits, dl_e2e_spec, Split, train_e2e, train_unfolded, ul_e2e_spec, unfolded_stage_spec, Dataset, Model, Provenance};
use crate::optimizer::{Allocation, dl_lse_sco, dl_maximin_bisection, initial_dl_point, ul_maximin_bisection};
use crate::seed::{self, stream};
use crate::{Error, Result};

use super::config::{ExperimentConfig, Policy};
use super::trial::{evaluate, run_policy, Trial};

/// Datasets produced by one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// FPC features with max-min labels.
    pub main: Dataset,
    /// FPC features with smoothed-SCO labels (DL with unfolding enabled).
    pub lse: Option<Dataset>,
    /// FPC features with the first smoothed-SCO iterates, stage-major.
    pub trace: Option<Dataset>,
}

struct Sample {
    id: u64,
    features: Vec<f64>,
    labels: Vec<f64>,
    lse: Option<(Vec<f64>, Vec<f64>)>,
}

fn link_powers(d: &[f64]) -> Vec<f64> {
    d.iter().map(|x| x * x).collect()
}

fn solve_sample(cfg: &ExperimentConfig, id: usize) -> Result<Sample> {
    let e = &cfg.experiment;
    let sys = &cfg.system;
    let trial = Trial::generate(sys, e.beamformer, e.seed, id)?;
    let features = trial.features(sys, e.direction);
    let (labels, lse) = match e.direction {
        Direction::Ul => {
            let r = ul_maximin_bisection(trial.gains(e.evaluation), sys, &cfg.solver)?;
            (r.ul().expect("UL solve").q.clone(), None)
        }
        Direction::Dl => {
            let inst = trial.dl_instance(e.evaluation);
            let init = initial_dl_point(&trial.large_scale.alpha, inst, sys);
            let assoc = &trial.deployment.association;
            let r = dl_maximin_bisection(inst, sys, &cfg.solver, &init)?;
            let labels = r.dl().expect("DL solve").link_powers(assoc);
            let lse = if e.unfold_stages > 0 {
                let s = dl_lse_sco(inst, sys, &cfg.solver, &init)?;
                let final_p: Vec<f64> = PowerAllocationDL::link_powers(s.dl().expect("DL solve"), assoc);
                let last = s.iterate_trace.last().expect("trace holds the start");
                let trace: Vec<f64> = (1..=e.unfold_stages)
                    .flat_map(|i| link_powers(s.iterate_trace.get(i).unwrap_or(last)))
                    .collect();
                Some((final_p, trace))
            } else {
                None
            };
            (labels, lse)
        }
    };
    Ok(Sample { id: id as u64, features, labels, lse })
}

fn matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Solves `n` scenarios in parallel. Scenarios whose solve fails are replaced
/// by the next unused trial indices, so the result depends only on the seed.
pub fn generate_dataset(cfg: &ExperimentConfig, n: usize) -> Result<DatasetBundle> {
    cfg.validate()?;
    let max_attempts = 2 * n + 16;
    let mut samples: Vec<Sample> = Vec::with_capacity(n);
    let mut next = 0;
    let mut last_error = None;
    while samples.len() < n {
        let need = n - samples.len();
        if next + need > max_attempts {
            return Err(Error::Solver {
                reason: format!(
                    "only {} of {n} samples solved after {next} attempts; last error: {}",
                    samples.len(),
                    last_error.unwrap_or_default()
                ),
                last_iterate: vec![],
            });
        }
        let batch: Vec<Result<Sample>> = (next..next + need).into_par_iter().map(|i| solve_sample(cfg, i)).collect();
        next += need;
        for r in batch {
            match r {
                Ok(s) => samples.push(s),
                Err(e) => last_error = Some(e.to_string()),
            }
        }
    }
    let e = &cfg.experiment;
    let direction = match e.direction {
        Direction::Dl => "dl",
        Direction::Ul => "ul",
    };
    let splits = assign_splits(n, seed::derive(e.seed, stream::SPLIT));
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    let provenance = |solver: &str| Provenance {
        direction: direction.into(),
        solver: solver.into(),
        seed: e.seed,
        scenario_sha256: cfg.system_sha256(),
        solver_sha256: cfg.solver_sha256(),
    };
    let x = matrix(&samples.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>());
    let build = |labels: DMatrix<f64>, solver: &str| {
        Dataset::new(x.clone(), labels, splits.clone(), provenance(solver))?.with_sample_ids(ids.clone())
    };
    let main = build(matrix(&samples.iter().map(|s| s.labels.as_slice()).collect::<Vec<_>>()), "opc-maximin")?;
    let (lse, trace) = if samples.iter().all(|s| s.lse.is_some()) && n > 0 && e.direction == Direction::Dl && e.unfold_stages > 0 {
        let finals: Vec<&[f64]> = samples.iter().map(|s| s.lse.as_ref().expect("checked").0.as_slice()).collect();
        let traces: Vec<&[f64]> = samples.iter().map(|s| s.lse.as_ref().expect("checked").1.as_slice()).collect();
        (Some(build(matrix(&finals), "opc-lse")?), Some(build(matrix(&traces), "opc-lse-trace")?))
    } else {
        (None, None)
    };
    Ok(DatasetBundle { main, lse, trace })
}

/// Splits a stage-major trace dataset into per-stage label matrices.
pub fn trace_stage_labels(trace: &Dataset, stages: usize) -> Result<Vec<DMatrix<f64>>> {
    if stages == 0 || !trace.labels.ncols().is_multiple_of(stages) {
        return Err(Error::Dimension(format!("{} trace columns for {stages} stages", trace.labels.ncols())));
    }
    let w = trace.labels.ncols() / stages;
    Ok((0..stages).map(|s| trace.labels.columns(s * w, w).into_owned()).collect())
}

/// Trains the network behind a learned policy on `ds`.
pub fn train_policy(cfg: &ExperimentConfig, policy: Policy, ds: &Dataset) -> Result<Model> {
    let sys = &cfg.system;
    let direction = cfg.experiment.direction;
    let tag = match direction {
        Direction::Dl => "dl",
        Direction::Ul => "ul",
    };
    if !ds.provenance.direction.is_empty() && ds.provenance.direction != tag {
        return Err(Error::Dimension(format!("a {} dataset cannot train a {tag} model", ds.provenance.direction)));
    }
    let links = sys.num_ues * sys.cluster_size;
    let mut tcfg = cfg.train.clone();
    if direction == Direction::Ul {
        tcfg.batch_size = tcfg.ul_batch_size;
    }
    match policy {
        Policy::E2eDnn => {
            let spec = match direction {
                Direction::Dl => dl_e2e_spec(links),
                Direction::Ul => ul_e2e_spec(sys.num_ues),
            };
            train_e2e(ds, &spec, &tcfg)
        }
        Policy::UDnn(n) if direction == Direction::Dl => train_unfolded(ds, &unfolded_stage_spec(links), &tcfg, n),
        other => Err(Error::InvalidConfig(format!("policy {other} has nothing to train in this direction"))),
    }
}

/// Min-rates of `model` and of the dataset labels on the scenarios behind
/// `split`, both evaluated as in a simulation run.
pub fn held_out_min_rates(cfg: &ExperimentConfig, model: &Model, ds: &Dataset, split: Split) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = &cfg.experiment;
    let sys = &cfg.system;
    let policy = if model.stages.len() > 1 { Policy::UDnn(model.stages.len()) } else { Policy::E2eDnn };
    let rows = ds.rows(split);
    let pairs: Vec<Result<(f64, f64)>> = rows
        .par_iter()
        .map(|&r| {
            let trial = Trial::generate(sys, e.beamformer, e.seed, ds.sample_ids[r] as usize)?;
            let run = run_policy(policy, e.direction, &trial, sys, &cfg.solver, e.evaluation, Some(model))?;
            let labels: Vec<f64> = ds.labels.row(r).iter().copied().collect();
            let reference = match e.direction {
                Direction::Dl => Allocation::Dl(PowerAllocationDL::from_link_powers(&trial.deployment.association, &labels)),
                Direction::Ul => Allocation::Ul(PowerAllocationUL { q: labels }),
            };
            Ok((
                evaluate(&run.allocation, &trial, sys, e.evaluation).min_rate(),
                evaluate(&reference, &trial, sys, e.evaluation).min_rate(),
            ))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}
