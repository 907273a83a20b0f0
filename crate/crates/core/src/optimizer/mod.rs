//! Optimization-based power control: DL max-min via SCO and bisection, the
//! smoothed (unfoldable) DL variant, and UL max-min via bisection over SINR
//! targets.

mod barrier;
mod downlink;
mod problem;
mod surrogate;
mod uplink;

use serde::{Deserialize, Serialize};

pub use barrier::{barrier_solve, BarrierSettings, BarrierSolution};
pub use downlink::{
    dl_feasibility_step, dl_lse_sco, dl_maximin_bisection, initial_dl_point, lse_hessian, lse_objective, DlInstance,
    FeasibilityStep,
};
pub use problem::{Affine, ConvexSubproblem, LseSurrogate, Objective, QuadForm, SparseRow};
pub use surrogate::{lse, taylor_lower_bound, TaylorBound};
pub use uplink::{ul_interference_step, ul_maximin_bisection, ul_target_feasible, UlFeasibility};

use crate::metrics::{PowerAllocationDL, PowerAllocationUL};
use crate::{Error, Result};

/// How the upper end of the first bisection window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperBoundPolicy {
    /// Rate at `min_k` of the per-UE interference-free SNR bound.
    MinSnr,
    /// Rate at `max_k` of the same bound (looser).
    MaxSnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Bisection window at exit, relative to the initial `δ_max`.
    pub bisection_tol_rel: f64,
    /// Relative iterate change ending the inner SCO loop.
    pub sco_tol: f64,
    /// Relative iterate change ending the smoothed SCO loop.
    pub lse_tol: f64,
    pub sharpness: f64,
    pub max_sco_iters: usize,
    pub max_bisect_iters: usize,
    pub max_newton_iters: usize,
    pub barrier_t0: f64,
    pub barrier_mu: f64,
    pub barrier_gap: f64,
    pub upper_bound: UpperBoundPolicy,
    /// UL fixed point stops once the sup-norm change is below this times the cap.
    pub fixed_point_tol: f64,
    pub max_fixed_point_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bisection_tol_rel: 1e-3,
            sco_tol: 1e-4,
            lse_tol: 1e-4,
            sharpness: 1.0,
            max_sco_iters: 30,
            max_bisect_iters: 40,
            max_newton_iters: 100,
            barrier_t0: 1.0,
            barrier_mu: 10.0,
            barrier_gap: 1e-7,
            upper_bound: UpperBoundPolicy::MinSnr,
            fixed_point_tol: 1e-10,
            max_fixed_point_iters: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bisection_tol_rel", self.bisection_tol_rel),
            ("sco_tol", self.sco_tol),
            ("lse_tol", self.lse_tol),
            ("sharpness", self.sharpness),
            ("barrier_t0", self.barrier_t0),
            ("barrier_gap", self.barrier_gap),
            ("fixed_point_tol", self.fixed_point_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.barrier_mu > 1.0) {
            return Err(Error::InvalidConfig("solver.barrier_mu must exceed 1".into()));
        }
        if self.max_sco_iters == 0 || self.max_bisect_iters == 0 || self.max_newton_iters == 0 {
            return Err(Error::InvalidConfig("solver iteration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn barrier(&self) -> BarrierSettings {
        BarrierSettings {
            t0: self.barrier_t0,
            mu: self.barrier_mu,
            gap: self.barrier_gap,
            max_newton: self.max_newton_iters,
        }
    }
}

/// `γ_t = 2^{δ/(prelog·B)} − 1`.
pub fn sinr_target_from_rate(rate: f64, prelog: f64, bandwidth: f64) -> f64 {
    (rate / (prelog * bandwidth) * std::f64::consts::LN_2).exp_m1()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Allocation {
    Dl(PowerAllocationDL),
    Ul(PowerAllocationUL),
}

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub rate: f64,
    pub sinr_target: f64,
    pub feasible: bool,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IterationCounts {
    pub bisection: usize,
    pub sco: usize,
    pub newton: usize,
    pub fixed_point: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub allocation: Allocation,
    /// Achieved minimum rate (bit/s) under the gains the solver saw.
    pub min_rate: f64,
    /// Allocation satisfies every constraint within `1e-6` relative.
    pub feasible: bool,
    /// Iterates `d` (DL) or `q` (UL), one per outer iteration.
    pub iterate_trace: Vec<Vec<f64>>,
    /// Smoothed objective at each trace entry (smoothed SCO only).
    pub objective_trace: Vec<f64>,
    pub probes: Vec<Probe>,
    pub seconds: f64,
    pub iterations: IterationCounts,
    /// Largest relative constraint residual of the returned allocation.
    pub max_residual: f64,
}

impl AllocationResult {
    pub fn dl(&self) -> Option<&PowerAllocationDL> {
        match &self.allocation {
            Allocation::Dl(a) => Some(a),
            Allocation::Ul(_) => None,
        }
    }

    pub fn ul(&self) -> Option<&PowerAllocationUL> {
        match &self.allocation {
            Allocation::Ul(a) => Some(a),
            Allocation::Dl(_) => None,
        }
    }

    /// Whether every probe at or below a feasible rate was itself feasible.
    pub fn probes_monotone(&self) -> bool {
        self.probes
            .iter()
            .all(|p| !p.feasible || self.probes.iter().all(|q| q.rate > p.rate || q.feasible))
    }

    /// Per-solve diagnostics record.
    pub fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "min_rate": self.min_rate,
            "feasible": self.feasible,
            "max_residual": self.max_residual,
            "seconds": self.seconds,
            "iterations": self.iterations,
            "probes": self.probes,
            "trace_len": self.iterate_trace.len(),
        })
    }
}
