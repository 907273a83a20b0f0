//! Monte-Carlo evaluation of policies and wall-clock benchmarking.

use rayon::prelude::*;
use serde::Serialize;

use crate::metrics::Direction;
use crate::ml::{quantile_sorted, Model};
use crate::{Error, Result};

use super::config::{ExperimentConfig, Policy};
use super::trial::{evaluate, run_policy, Evaluation, Models, Trial};

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcome: std::result::Result<Evaluation, String>,
}

#[derive(Debug, Clone)]
pub struct PolicyRecords {
    pub policy: Policy,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub direction: Direction,
    pub policies: Vec<PolicyRecords>,
}

/// Networks for every learned policy, checked against the system dimensions.
pub fn resolve_models(cfg: &ExperimentConfig, policies: &[Policy], models: &Models) -> Result<Vec<Option<Model>>> {
    let sys = &cfg.system;
    let width = match cfg.experiment.direction {
        Direction::Dl => sys.num_ues * sys.cluster_size,
        Direction::Ul => sys.num_ues,
    };
    policies
        .iter()
        .map(|&p| {
            if !p.is_learned() {
                return Ok(None);
            }
            let m = models.for_policy(p)?;
            if m.input_dim() != width || m.output_dim() != width {
                return Err(Error::Dimension(format!(
                    "{p} model maps {}→{} but this system needs {width}→{width}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
            Ok(Some(m))
        })
        .collect()
}

/// Runs every configured policy on every trial; trials run in parallel with
/// seeds fixed by their index.
pub fn simulate(cfg: &ExperimentConfig, models: &Models) -> Result<SimulationReport> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let nets = resolve_models(cfg, &e.policies, models)?;
    let per_trial: Vec<Vec<TrialRecord>> = (0..e.trials)
        .into_par_iter()
        .map(|t| {
            let trial = match Trial::generate(&cfg.system, e.beamformer, e.seed, t) {
                Ok(trial) => trial,
                Err(err) => {
                    return e.policies.iter().map(|_| TrialRecord { trial: t, outcome: Err(err.to_string()) }).collect();
                }
            };
            e.policies
                .iter()
                .zip(&nets)
                .map(|(&p, net)| {
                    let outcome = run_policy(p, e.direction, &trial, &cfg.system, &cfg.solver, e.evaluation, net.as_ref())
                        .map(|run| evaluate(&run.allocation, &trial, &cfg.system, e.evaluation))
                        .map_err(|err| err.to_string());
                    TrialRecord { trial: t, outcome }
                })
                .collect()
        })
        .collect();
    let policies = e
        .policies
        .iter()
        .enumerate()
        .map(|(i, &policy)| PolicyRecords {
            policy,
            records: per_trial.iter().map(|r| r[i].clone()).collect(),
        })
        .collect();
    Ok(SimulationReport { direction: e.direction, policies })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub mean: f64,
    pub p5: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&v, p);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p5: q(0.05),
            p10: q(0.10),
            p50: q(0.50),
            p90: q(0.90),
            p95: q(0.95),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub completed: usize,
    pub failures: usize,
    /// Completed trials whose allocation breaks a budget or exposure limit.
    pub violations: usize,
    pub min_rate_bps: Option<Percentiles>,
    pub user_rate_bps: Option<Percentiles>,
}

impl PolicyRecords {
    pub fn evaluations(&self) -> impl Iterator<Item = &Evaluation> {
        self.records.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn min_rates(&self) -> Vec<f64> {
        self.evaluations().map(Evaluation::min_rate).collect()
    }

    pub fn summary(&self) -> PolicySummary {
        let evals: Vec<&Evaluation> = self.evaluations().collect();
        let users: Vec<f64> = evals.iter().flat_map(|e| e.rates.iter().copied()).collect();
        PolicySummary {
            policy: self.policy.to_string(),
            completed: evals.len(),
            failures: self.records.len() - evals.len(),
            violations: evals.iter().filter(|e| !e.compliant()).count(),
            min_rate_bps: Percentiles::of(&self.min_rates()),
            user_rate_bps: Percentiles::of(&users),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub policy: Policy,
    pub trials: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<(String, usize)>,
}

impl BenchReport {
    fn mean_of(&self, pred: impl Fn(Policy) -> bool) -> Option<f64> {
        let rows: Vec<&BenchRow> = self.rows.iter().filter(|r| pred(r.policy) && r.trials > 0).collect();
        (!rows.is_empty()).then(|| rows.iter().map(|r| r.mean_s).fold(0.0, f64::max))
    }

    /// `(dnn < lse < maximin, maximin/lse)`, with the slowest learned policy
    /// standing for the DNN; `None` where a policy is missing.
    pub fn ordering(&self) -> (Option<bool>, Option<f64>) {
        let dnn = self.mean_of(Policy::is_learned);
        let lse = self.mean_of(|p| p == Policy::OpcLse);
        let maximin = self.mean_of(|p| p == Policy::OpcMaximin);
        let ordered = match (dnn, lse, maximin) {
            (Some(d), Some(l), Some(m)) => Some(d < l && l < m),
            _ => None,
        };
        (ordered, lse.zip(maximin).map(|(l, m)| m / l))
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Sequential wall-clock timing of each policy's allocation step.
pub fn bench(cfg: &ExperimentConfig, models: &Models) -> Result<BenchReport> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let nets = resolve_models(cfg, &e.policies, models)?;
    let mut times = vec![Vec::with_capacity(e.trials); e.policies.len()];
    let mut failures = vec![0; e.policies.len()];
    for t in 0..e.trials {
        let trial = Trial::generate(&cfg.system, e.beamformer, e.seed, t)?;
        for (i, (&p, net)) in e.policies.iter().zip(&nets).enumerate() {
            match run_policy(p, e.direction, &trial, &cfg.system, &cfg.solver, e.evaluation, net.as_ref()) {
                Ok(run) => times[i].push(run.seconds),
                Err(_) => failures[i] += 1,
            }
        }
    }
    let rows = if e.trials == 0 {
        Vec::new()
    } else {
        e.policies
            .iter()
            .zip(&times)
            .map(|(&policy, ts)| {
                let (mean_s, std_s) = mean_std(ts);
                BenchRow { policy, trials: ts.len(), mean_s, std_s }
            })
            .collect()
    };
    let failures = e.policies.iter().zip(failures).filter(|(_, f)| *f > 0).map(|(p, f)| (p.to_string(), f)).collect();
    Ok(BenchReport { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::Preset;

    #[test]
    fn percentiles_of_a_ramp() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        let p = Percentiles::of(&v).unwrap();
        assert_eq!((p.mean, p.p5, p.p50, p.p95), (50.0, 5.0, 50.0, 95.0));
        assert!(Percentiles::of(&[]).is_none());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn simulation_is_independent_of_worker_count() {
        let mut cfg = Preset::Small.config();
        cfg.experiment.trials = 3;
        cfg.experiment.policies = vec![Policy::Upc, Policy::FpcFair];
        let a = simulate(&cfg, &Models::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&cfg, &Models::default())).unwrap();
        for (x, y) in a.policies.iter().zip(&b.policies) {
            assert_eq!(x.min_rates(), y.min_rates());
        }
        assert_eq!(a.policies[0].records.len(), 3);
        assert_eq!(a.policies[0].summary().failures, 0);
    }

    #[test]
    fn bench_with_no_trials_is_empty() {
        let mut cfg = Preset::Small.config();
        cfg.experiment.trials = 0;
        let r = bench(&cfg, &Models::default()).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.ordering(), (None, None));
    }
}
