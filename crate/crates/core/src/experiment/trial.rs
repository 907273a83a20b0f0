//! One Monte-Carlo trial: scenario, estimates, beams, and every policy's
//! allocation with its evaluation.

use std::time::Instant;

use crate::beamforming::{self, BeamformerKind, BeamformerSet};
use crate::config::SystemConfig;
use crate::csi::{assign_pilots, estimate_channels, ChannelEstimateSet};
use crate::heuristics::{fpc_dl, fpc_ul_coefficients, heuristic_dl, heuristic_ul, Heuristic, DL_FPC_EXPONENT, UL_FPC_EXPONENT};
use crate::metrics::{dl_sinr, dl_violation, ipd, rate, sar, ul_sinr, ul_violation, Direction, EffectiveGains, EvaluationMode};
use crate::ml::{predict_dl, predict_ul, Model};
use crate::optimizer::{
    dl_lse_sco, dl_maximin_bisection, initial_dl_point, ul_maximin_bisection, Allocation, AllocationResult, DlInstance,
    SolverConfig,
};
use crate::scenario::{draw_channels, generate_deployment, ChannelRealization, Deployment, LargeScaleState};
use crate::seed::{self, stream};
use crate::{Error, Result};

use super::config::Policy;

/// Residual above which an allocation counts as a constraint violation.
pub const COMPLIANCE_TOL: f64 = 1e-6;

pub struct Trial {
    pub index: usize,
    pub deployment: Deployment,
    pub large_scale: LargeScaleState,
    pub channels: ChannelRealization,
    pub estimates: ChannelEstimateSet,
    pub beams: BeamformerSet,
    /// Gains on the true channels (exposure, and SINR in `true` mode).
    pub true_gains: EffectiveGains,
    /// Gains on the estimated channels.
    pub est_gains: EffectiveGains,
}

/// Seed of trial `index` under a master seed.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, index as u64)
}

impl Trial {
    pub fn generate(cfg: &SystemConfig, kind: BeamformerKind, master: u64, index: usize) -> Result<Self> {
        let s = trial_seed(master, index);
        let (deployment, large_scale) = generate_deployment(cfg, seed::derive(s, stream::DEPLOYMENT))?;
        let channels = draw_channels(&large_scale, cfg, seed::derive(s, stream::CHANNELS));
        let book = assign_pilots(cfg.num_ues, cfg.pilot_len)?;
        let estimates = estimate_channels(&channels, &book, &large_scale, cfg, seed::derive(s, stream::PILOT_NOISE))?;
        let assoc = &deployment.association;
        let beams = beamforming::build(kind, &estimates, assoc, cfg)?;
        let true_gains = EffectiveGains::new(&channels, &beams, assoc, cfg);
        let est_gains = EffectiveGains::new(&estimates.as_channels(), &beams, assoc, cfg);
        Ok(Self { index, deployment, large_scale, channels, estimates, beams, true_gains, est_gains })
    }

    pub fn gains(&self, mode: EvaluationMode) -> &EffectiveGains {
        match mode {
            EvaluationMode::Estimated => &self.est_gains,
            EvaluationMode::True => &self.true_gains,
        }
    }

    pub fn dl_instance(&self, mode: EvaluationMode) -> DlInstance<'_> {
        DlInstance { sinr: self.gains(mode), exposure: &self.true_gains }
    }

    /// FPC (`κ = 0.5`) link powers, the DL network input.
    pub fn dl_features(&self, cfg: &SystemConfig) -> Vec<f64> {
        let assoc = &self.deployment.association;
        fpc_dl(&self.large_scale.alpha, assoc, cfg, DL_FPC_EXPONENT).link_powers(assoc)
    }

    /// Unclipped FPC (`ϰ = −0.5`) UE powers, the UL network input.
    pub fn ul_features(&self, cfg: &SystemConfig) -> Vec<f64> {
        fpc_ul_coefficients(&self.large_scale.alpha, &self.deployment.association, cfg, UL_FPC_EXPONENT)
    }

    pub fn features(&self, cfg: &SystemConfig, direction: Direction) -> Vec<f64> {
        match direction {
            Direction::Dl => self.dl_features(cfg),
            Direction::Ul => self.ul_features(cfg),
        }
    }
}

/// Learned models available to the DNN policies.
#[derive(Debug, Default, Clone)]
pub struct Models {
    pub e2e: Option<Model>,
    pub unfolded: Option<Model>,
}

impl Models {
    /// The network backing `policy`, truncated to the requested stages.
    pub fn for_policy(&self, policy: Policy) -> Result<Model> {
        let missing = |what: &str| Error::InvalidConfig(format!("policy {policy} needs a {what} model file"));
        match policy {
            Policy::E2eDnn => self.e2e.clone().ok_or_else(|| missing("end-to-end")),
            Policy::UDnn(n) => {
                let mut m = self.unfolded.clone().ok_or_else(|| missing("unfolded"))?;
                if m.stages.len() < n {
                    return Err(Error::InvalidConfig(format!(
                        "policy {policy} needs {n} stages, the model has {}",
                        m.stages.len()
                    )));
                }
                m.stages.truncate(n);
                m.curves.truncate(n);
                Ok(m)
            }
            _ => Err(Error::InvalidConfig(format!("policy {policy} is not learned"))),
        }
    }
}

fn heuristic_of(policy: Policy) -> Option<Heuristic> {
    match policy {
        Policy::Upc => Some(Heuristic::Upc),
        Policy::FpcFair => Some(Heuristic::FpcFair),
        Policy::FpcOpp => Some(Heuristic::FpcOpp),
        _ => None,
    }
}

pub struct PolicyRun {
    pub allocation: Allocation,
    /// Solver record for model-based policies.
    pub solve: Option<AllocationResult>,
    pub seconds: f64,
}

/// Computes `policy`'s allocation for `trial`. `model` must be the network
/// returned by [`Models::for_policy`] for learned policies.
pub fn run_policy(
    policy: Policy,
    direction: Direction,
    trial: &Trial,
    cfg: &SystemConfig,
    solver: &SolverConfig,
    mode: EvaluationMode,
    model: Option<&Model>,
) -> Result<PolicyRun> {
    if !policy.supports(direction) {
        return Err(Error::InvalidConfig(format!("policy {policy} is DL-only")));
    }
    let start = Instant::now();
    let alpha = &trial.large_scale.alpha;
    let assoc = &trial.deployment.association;
    let (allocation, solve) = match (policy, direction) {
        (p, Direction::Dl) if heuristic_of(p).is_some() => {
            (Allocation::Dl(heuristic_dl(heuristic_of(p).expect("checked"), alpha, assoc, cfg)), None)
        }
        (p, Direction::Ul) if heuristic_of(p).is_some() => {
            (Allocation::Ul(heuristic_ul(heuristic_of(p).expect("checked"), alpha, assoc, cfg)), None)
        }
        (Policy::OpcMaximin | Policy::OpcLse, Direction::Dl) => {
            let inst = trial.dl_instance(mode);
            let init = initial_dl_point(alpha, inst, cfg);
            let r = if policy == Policy::OpcMaximin {
                dl_maximin_bisection(inst, cfg, solver, &init)?
            } else {
                dl_lse_sco(inst, cfg, solver, &init)?
            };
            (r.allocation.clone(), Some(r))
        }
        (Policy::OpcMaximin, Direction::Ul) => {
            let r = ul_maximin_bisection(trial.gains(mode), cfg, solver)?;
            (r.allocation.clone(), Some(r))
        }
        (_, _) => {
            let model = model.ok_or_else(|| Error::InvalidConfig(format!("policy {policy} needs a model")))?;
            let features = trial.features(cfg, direction);
            match direction {
                Direction::Dl => (Allocation::Dl(predict_dl(model, &features, &trial.true_gains, cfg)?), None),
                Direction::Ul => (Allocation::Ul(predict_ul(model, &features, cfg)?), None),
            }
        }
    };
    Ok(PolicyRun { allocation, solve, seconds: start.elapsed().as_secs_f64() })
}

/// Per-UE results of one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    /// IPD per UE (DL only).
    pub ipd: Option<Vec<f64>>,
    /// Largest SAR over body parts per UE (UL only).
    pub sar: Option<Vec<f64>>,
    /// Largest relative budget and exposure residuals.
    pub budget_residual: f64,
    pub exposure_residual: f64,
}

impl Evaluation {
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn compliant(&self) -> bool {
        self.budget_residual <= COMPLIANCE_TOL && self.exposure_residual <= COMPLIANCE_TOL
    }
}

pub fn evaluate(allocation: &Allocation, trial: &Trial, cfg: &SystemConfig, mode: EvaluationMode) -> Evaluation {
    let gains = trial.gains(mode);
    match allocation {
        Allocation::Dl(a) => {
            let (budget, exposure) = dl_violation(a, &trial.true_gains, cfg);
            Evaluation {
                rates: dl_sinr(a, gains).into_iter().map(|g| rate(g, cfg.dl_prelog(), cfg.bandwidth)).collect(),
                ipd: Some(ipd(a, &trial.true_gains, cfg)),
                sar: None,
                budget_residual: budget,
                exposure_residual: exposure,
            }
        }
        Allocation::Ul(a) => {
            let (budget, exposure) = ul_violation(a, cfg);
            let s = sar(a, &cfg.sar_limits);
            Evaluation {
                rates: ul_sinr(a, gains).into_iter().map(|g| rate(g, cfg.ul_prelog(), cfg.bandwidth)).collect(),
                ipd: None,
                sar: Some(s.row_iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect()),
                budget_residual: budget,
                exposure_residual: exposure,
            }
        }
    }
}
