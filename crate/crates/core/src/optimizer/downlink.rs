//! DL max-min power control: slack-form SCO feasibility steps inside a
//! bisection on the rate target, and the smoothed SCO ascent.

use std::time::Instant;

use nalgebra::DMatrix;

use super::barrier::barrier_solve;
use super::problem::{Affine, ConvexSubproblem, LseSurrogate, Objective, QuadForm, SparseRow};
use super::surrogate::{taylor_lower_bound, TaylorBound};
use super::{sinr_target_from_rate, Allocation, AllocationResult, IterationCounts, Probe, SolverConfig, UpperBoundPolicy};
use crate::config::SystemConfig;
use crate::heuristics::{fpc_dl, DL_FPC_EXPONENT};
use crate::linalg::C64;
use crate::metrics::{dl_sinr_amplitudes, dl_violation, rate, EffectiveGains, PowerAllocationDL};
use crate::{Error, Result};

/// Gains seen by the SINR constraints and by the exposure constraints. The
/// two differ when SINRs are evaluated on channel estimates while the
/// exposure is a physical quantity of the true channels.
#[derive(Debug, Clone, Copy)]
pub struct DlInstance<'a> {
    pub sinr: &'a EffectiveGains,
    pub exposure: &'a EffectiveGains,
}

impl<'a> DlInstance<'a> {
    pub fn new(gains: &'a EffectiveGains) -> Self {
        Self { sinr: gains, exposure: gains }
    }

    pub fn with_exposure(sinr: &'a EffectiveGains, exposure: &'a EffectiveGains) -> Result<Self> {
        if sinr.association() != exposure.association() {
            return Err(Error::Dimension("SINR and exposure gains use different associations".into()));
        }
        Ok(Self { sinr, exposure })
    }
}

/// Amplitude floor relative to `√P` keeping iterates off the `d ≥ 0` boundary.
const AMPLITUDE_FLOOR: f64 = 1e-9;
/// Relative power back-off making the initial point strictly interior.
const INTERIOR_MARGIN: f64 = 1e-3;
const RESIDUAL_TOL: f64 = 1e-6;

/// Noise-normalized view of one DL instance.
struct DlModel<'a> {
    inst: DlInstance<'a>,
    ues: usize,
    cluster: usize,
    inv_sigma: f64,
    power: f64,
    ap_links: Vec<Vec<usize>>,
    /// `λ²I/(4πσ²)`, absent when the IPD limit is infinite.
    ipd_cap: Option<f64>,
}

impl<'a> DlModel<'a> {
    fn new(inst: DlInstance<'a>, cfg: &SystemConfig) -> Result<Self> {
        if !inst.sinr.is_finite() || !inst.exposure.is_finite() {
            return Err(Error::Domain("non-finite effective channel gains".into()));
        }
        let assoc = inst.sinr.association();
        let cluster = assoc.cluster_size();
        let mut ap_links = vec![Vec::new(); assoc.num_aps()];
        for (k, m) in assoc.links() {
            ap_links[m].push(k * cluster + assoc.slot(k, m).expect("link is associated"));
        }
        let sigma2 = inst.sinr.noise_ue();
        let ipd_cap = cfg.ipd_limit.is_finite().then(|| cfg.ipd_limit / (cfg.ipd_factor() * sigma2));
        Ok(Self {
            inst,
            ues: assoc.num_ues(),
            cluster,
            inv_sigma: sigma2.sqrt().recip(),
            power: cfg.ap_power,
            ap_links,
            ipd_cap,
        })
    }

    fn num_links(&self) -> usize {
        self.ues * self.cluster
    }

    fn block(&self, j: usize) -> std::ops::Range<usize> {
        j * self.cluster..(j + 1) * self.cluster
    }

    /// Real and imaginary rows of `Σ_s c_{kj,s} d_{j,s}/σ`, scaled by `w`.
    fn rows(&self, gains: &EffectiveGains, k: usize, j: usize, w: f64) -> [SparseRow; 2] {
        let idx: Vec<usize> = self.block(j).collect();
        let link = gains.dl_link(k, j);
        let s = w * self.inv_sigma;
        [
            SparseRow { idx: idx.clone(), val: link.iter().map(|z| z.re * s).collect() },
            SparseRow { idx, val: link.iter().map(|z| z.im * s).collect() },
        ]
    }

    fn budget_constraints(&self) -> Vec<QuadForm> {
        self.ap_links
            .iter()
            .filter(|links| !links.is_empty())
            .map(|links| {
                QuadForm {
                    squares: links.iter().map(|&l| SparseRow { idx: vec![l], val: vec![1.0] }).collect(),
                    linear: vec![],
                    constant: -self.power,
                }
                .scaled(1.0 / self.power)
            })
            .collect()
    }

    fn ipd_constraints(&self) -> Vec<QuadForm> {
        let Some(cap) = self.ipd_cap else { return vec![] };
        (0..self.ues)
            .map(|k| {
                QuadForm {
                    squares: (0..self.ues).flat_map(|j| self.rows(self.inst.exposure, k, j, 1.0)).collect(),
                    linear: vec![],
                    constant: -cap,
                }
                .scaled(1.0 / cap)
            })
            .collect()
    }

    fn base_constraints(&self) -> Vec<QuadForm> {
        let mut c = self.budget_constraints();
        c.extend(self.ipd_constraints());
        c
    }

    fn direct(&self, k: usize) -> Vec<C64> {
        self.inst.sinr.direct(k).iter().map(|z| z * self.inv_sigma).collect()
    }

    fn taylor(&self, k: usize, d_prev: &[f64]) -> TaylorBound {
        taylor_lower_bound(&d_prev[self.block(k)], &self.direct(k))
    }

    /// `g̃_k` as an affine function of the full amplitude vector.
    fn numerator(&self, k: usize, d_prev: &[f64]) -> Affine {
        let t = self.taylor(k, d_prev);
        Affine { row: SparseRow { idx: self.block(k).collect(), val: t.gradient }, constant: t.constant }
    }

    /// `w·f_k(d)` (interference plus unit noise).
    fn interference(&self, k: usize, w: f64) -> QuadForm {
        QuadForm {
            squares: (0..self.ues)
                .filter(|&j| j != k)
                .flat_map(|j| self.rows(self.inst.sinr, k, j, w.sqrt()))
                .collect(),
            linear: vec![],
            constant: w,
        }
    }

    /// `(γ f_k − g̃_k) / (γ f_k(d⁰) + g_k(d⁰)) ≤ 0`.
    fn sinr_constraints(&self, target: f64, d_prev: &[f64]) -> Vec<QuadForm> {
        if target == 0.0 {
            return vec![];
        }
        let terms = self.inst.sinr.dl_terms(d_prev);
        let sigma2 = self.inst.sinr.noise_ue();
        (0..self.ues)
            .map(|k| {
                let mut q = self.interference(k, target);
                let a = self.numerator(k, d_prev);
                q.linear = a.row.idx.iter().zip(&a.row.val).map(|(&i, &v)| (i, -v)).collect();
                q.constant -= a.constant;
                let (g, f) = terms[k];
                q.scaled(1.0 / ((target * f + g) / sigma2))
            })
            .collect()
    }

    fn surrogate(&self, d_prev: &[f64], sharpness: f64) -> LseSurrogate {
        LseSurrogate {
            sharpness,
            numerators: (0..self.ues).map(|k| self.numerator(k, d_prev)).collect(),
            denominators: (0..self.ues).map(|k| self.interference(k, 1.0)).collect(),
        }
    }

    fn lse_problem(&self, d_prev: &[f64], sharpness: f64) -> ConvexSubproblem {
        let n = self.num_links();
        ConvexSubproblem {
            dim: n,
            constraints: self.base_constraints(),
            nonneg: (0..n).collect(),
            objective: Objective::Lse(self.surrogate(d_prev, sharpness)),
        }
    }

    fn upper_snr(&self, policy: UpperBoundPolicy) -> f64 {
        // |cᵀd|² ≤ ‖c‖²‖d‖² ≤ ‖c‖² N P.
        let snr = (0..self.ues).map(|k| {
            self.direct(k).iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cluster as f64 * self.power
        });
        match policy {
            UpperBoundPolicy::MinSnr => snr.fold(f64::INFINITY, f64::min),
            UpperBoundPolicy::MaxSnr => snr.fold(0.0, f64::max),
        }
    }

    fn allocation(&self, d: &[f64]) -> PowerAllocationDL {
        PowerAllocationDL::from_amplitudes(self.inst.sinr.association(), d)
    }

    /// Largest relative residual over C1–C3.
    fn residual(&self, d: &[f64], cfg: &SystemConfig) -> f64 {
        let (budget, exposure) = dl_violation(&self.allocation(d), self.inst.exposure, cfg);
        budget.max(exposure)
    }

    /// Floors amplitudes and backs off until C1–C3 hold strictly.
    fn interior(&self, d: &[f64]) -> Vec<f64> {
        let floor = AMPLITUDE_FLOOR * self.power.sqrt();
        let mut x: Vec<f64> = d.iter().map(|&v| v.max(floor)).collect();
        let base = self.base_constraints();
        for _ in 0..200 {
            if base.iter().all(|c| c.value(&x) < 0.0) {
                break;
            }
            x.iter_mut().for_each(|v| *v *= 0.99);
        }
        x
    }

    fn check_amplitudes(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.num_links() {
            return Err(Error::Dimension(format!("expected {} amplitudes, got {}", self.num_links(), d.len())));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite amplitudes".into()));
        }
        Ok(())
    }
}

/// Result of one slack-form feasibility subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityStep {
    pub feasible: bool,
    pub d: Vec<f64>,
    /// Optimal max-violation slack; nonpositive iff the target is met.
    pub slack: f64,
    pub newton_iterations: usize,
}

fn feasibility_step(model: &DlModel, target: f64, d_prev: &[f64], solver: &SolverConfig) -> Result<FeasibilityStep> {
    let n = model.num_links();
    let floor = AMPLITUDE_FLOOR * model.power.sqrt();
    let d0: Vec<f64> = d_prev.iter().map(|&v| v.max(floor)).collect();
    let mut constraints = model.base_constraints();
    constraints.extend(model.sinr_constraints(target, &d0));
    let s0 = constraints.iter().map(|c| c.value(&d0)).fold(0.0, f64::max) + 1.0;
    for c in &mut constraints {
        c.linear.push((n, -1.0));
    }
    let prob = ConvexSubproblem { dim: n + 1, constraints, nonneg: (0..n).collect(), objective: Objective::Slack { index: n } };
    let mut start = d0;
    start.push(s0);
    let sol = barrier_solve(&prob, &start, &solver.barrier())?;
    let slack = sol.x[n];
    let mut d = sol.x;
    d.truncate(n);
    Ok(FeasibilityStep { feasible: slack <= 0.0, d, slack, newton_iterations: sol.newton_iterations })
}

/// Slack program `min s` s.t. budget, IPD and linearized SINR-target
/// residuals `≤ s`, `d ≥ 0`, linearized at `d_prev`.
pub fn dl_feasibility_step(
    target: f64,
    d_prev: &[f64],
    inst: DlInstance,
    cfg: &SystemConfig,
    solver: &SolverConfig,
) -> Result<FeasibilityStep> {
    let model = DlModel::new(inst, cfg)?;
    model.check_amplitudes(d_prev)?;
    feasibility_step(&model, target, d_prev, solver)
}

/// Fractional power control (`κ = 0.5`) scaled down until every IPD limit
/// holds, then backed off slightly so the point is strictly interior.
pub fn initial_dl_point(alpha: &DMatrix<f64>, inst: DlInstance, cfg: &SystemConfig) -> PowerAllocationDL {
    let assoc = inst.sinr.association();
    let mut alloc = fpc_dl(alpha, assoc, cfg, DL_FPC_EXPONENT);
    let d = alloc.amplitudes(assoc);
    let worst = inst
        .exposure
        .received_power(&d)
        .into_iter()
        .map(|r| cfg.ipd_factor() * r / cfg.ipd_limit)
        .fold(0.0, f64::max);
    let scale = if worst > 1.0 { 1.0 / worst } else { 1.0 };
    alloc.p *= scale * (1.0 - INTERIOR_MARGIN);
    alloc
}

fn finish(
    model: &DlModel,
    cfg: &SystemConfig,
    d: &[f64],
    start: Instant,
    mut result: AllocationResult,
) -> AllocationResult {
    let sinr = dl_sinr_amplitudes(d, model.inst.sinr);
    result.min_rate = sinr.iter().map(|&g| rate(g, cfg.dl_prelog(), cfg.bandwidth)).fold(f64::INFINITY, f64::min);
    result.max_residual = model.residual(d, cfg);
    result.feasible = result.max_residual <= RESIDUAL_TOL;
    result.allocation = Allocation::Dl(model.allocation(d));
    result.seconds = start.elapsed().as_secs_f64();
    result
}

fn empty_result(d: &[f64]) -> AllocationResult {
    AllocationResult {
        allocation: Allocation::Dl(PowerAllocationDL::zeros(0, 0)),
        min_rate: 0.0,
        feasible: false,
        iterate_trace: vec![d.to_vec()],
        objective_trace: vec![],
        probes: vec![],
        seconds: 0.0,
        iterations: IterationCounts::default(),
        max_residual: 0.0,
    }
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = new.iter().map(|a| a * a).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn prepare<'a>(inst: DlInstance<'a>, cfg: &SystemConfig, init: &PowerAllocationDL) -> Result<(DlModel<'a>, Vec<f64>)> {
    let model = DlModel::new(inst, cfg)?;
    let d0 = init.amplitudes(inst.sinr.association());
    model.check_amplitudes(&d0)?;
    if model.residual(&d0, cfg) > RESIDUAL_TOL {
        return Err(Error::Domain("initial DL allocation violates the budget or IPD limits".into()));
    }
    let d0 = model.interior(&d0);
    Ok((model, d0))
}

/// Bisection on the common rate target with an inner SCO loop of slack-form
/// feasibility steps; feasible probes warm-start the next one.
pub fn dl_maximin_bisection(
    inst: DlInstance,
    cfg: &SystemConfig,
    solver: &SolverConfig,
    init: &PowerAllocationDL,
) -> Result<AllocationResult> {
    let start = Instant::now();
    let (model, d0) = prepare(inst, cfg, init)?;
    let (prelog, bandwidth) = (cfg.dl_prelog(), cfg.bandwidth);
    let mut hi = rate(model.upper_snr(solver.upper_bound), prelog, bandwidth);
    let mut lo = 0.0;
    let eps = solver.bisection_tol_rel * hi;
    let mut result = empty_result(&d0);
    let mut best = d0;
    while hi - lo > eps && result.iterations.bisection < solver.max_bisect_iters {
        result.iterations.bisection += 1;
        let delta = 0.5 * (lo + hi);
        let target = sinr_target_from_rate(delta, prelog, bandwidth);
        let mut d = best.clone();
        let mut last_feasible = None;
        let mut inner = 0;
        while inner < solver.max_sco_iters {
            inner += 1;
            let step = feasibility_step(&model, target, &d, solver)?;
            result.iterations.newton += step.newton_iterations;
            let change = rel_change(&step.d, &d);
            d = step.d;
            result.iterate_trace.push(d.clone());
            if step.feasible {
                last_feasible = Some(d.clone());
            }
            if change <= solver.sco_tol {
                break;
            }
        }
        result.iterations.sco += inner;
        let feasible = last_feasible.is_some();
        result.probes.push(Probe { rate: delta, sinr_target: target, feasible, inner_iterations: inner });
        match last_feasible {
            Some(d) => {
                lo = delta;
                best = d;
            }
            None => hi = delta,
        }
    }
    Ok(finish(&model, cfg, &best, start, result))
}

/// Smoothed SCO ascent: each iteration maximizes the log-sum-exp surrogate of
/// the linearized SINRs over the budget and IPD constraints.
pub fn dl_lse_sco(
    inst: DlInstance,
    cfg: &SystemConfig,
    solver: &SolverConfig,
    init: &PowerAllocationDL,
) -> Result<AllocationResult> {
    let start = Instant::now();
    let (model, mut d) = prepare(inst, cfg, init)?;
    let mut result = empty_result(&d);
    result.objective_trace.push(model.surrogate(&d, solver.sharpness).value(&d));
    for _ in 0..solver.max_sco_iters {
        result.iterations.sco += 1;
        let prob = model.lse_problem(&d, solver.sharpness);
        let sol = barrier_solve(&prob, &d, &solver.barrier())?;
        result.iterations.newton += sol.newton_iterations;
        let previous = prob.objective_value(&d);
        // The surrogate is not concave for K > 1, so keep the incumbent when
        // the local solve lands lower.
        let (next, value) = if sol.objective >= previous { (sol.x, sol.objective) } else { (d.clone(), previous) };
        let change = rel_change(&next, &d);
        d = next;
        result.iterate_trace.push(d.clone());
        result.objective_trace.push(value);
        if change <= solver.lse_tol {
            break;
        }
    }
    Ok(finish(&model, cfg, &d, start, result))
}

/// Value and gradient of the smoothed objective `ϱ̃(d; d_prev)`.
pub fn lse_objective(d: &[f64], d_prev: &[f64], inst: DlInstance, cfg: &SystemConfig, sharpness: f64) -> Result<(f64, Vec<f64>)> {
    let model = DlModel::new(inst, cfg)?;
    model.check_amplitudes(d)?;
    model.check_amplitudes(d_prev)?;
    let s = model.surrogate(d_prev, sharpness);
    Ok((s.value(d), s.gradient(d).as_slice().to_vec()))
}

/// Hessian of `ϱ̃(d; d_prev)`, for concavity spot checks.
pub fn lse_hessian(d: &[f64], d_prev: &[f64], inst: DlInstance, cfg: &SystemConfig, sharpness: f64) -> Result<DMatrix<f64>> {
    let model = DlModel::new(inst, cfg)?;
    model.check_amplitudes(d)?;
    Ok(model.surrogate(d_prev, sharpness).derivatives(d).2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dl_sinr;
    use crate::optimizer::surrogate::lse;
    use crate::scenario::Association;

    /// One AP, `N = 1`, real gains `c[k][j]`.
    fn single_ap(c: &[Vec<f64>], cfg: &SystemConfig) -> EffectiveGains {
        let k = c.len();
        let assoc = Association::from_lists(1, vec![vec![0]; k]).unwrap();
        let dl: Vec<C64> = c.iter().flat_map(|row| row.iter().map(|&x| C64::from(x))).collect();
        EffectiveGains::from_raw(assoc, dl.clone(), dl, vec![cfg.noise_var_ap; k], cfg.noise_var_ue).unwrap()
    }

    fn cfg_single(k: usize) -> SystemConfig {
        let mut cfg = SystemConfig::with_dimensions(k, 1, 1, 1);
        cfg.set_pilot_len(1);
        cfg
    }

    fn uniform(gains: &EffectiveGains, cfg: &SystemConfig, frac: f64) -> PowerAllocationDL {
        let k = gains.num_ues();
        PowerAllocationDL::from_link_powers(gains.association(), &vec![frac * cfg.ap_power / k as f64; k])
    }

    #[test]
    fn zero_target_is_feasible() {
        let cfg = cfg_single(2);
        let g = single_ap(&[vec![1e-5, 2e-7], vec![3e-7, 5e-6]], &cfg);
        let d0 = uniform(&g, &cfg, 0.5).amplitudes(g.association());
        let step = dl_feasibility_step(0.0, &d0, DlInstance::new(&g), &cfg, &SolverConfig::default()).unwrap();
        assert!(step.feasible);
    }

    #[test]
    fn single_link_feasibility_threshold() {
        let mut cfg = cfg_single(1);
        cfg.ipd_limit = f64::INFINITY;
        let c = 3e-6;
        let g = single_ap(&[vec![c]], &cfg);
        let bound = cfg.ap_power * c * c / cfg.noise_var_ue;
        let d0 = [cfg.ap_power.sqrt() * 0.999];
        let solver = SolverConfig::default();
        let inst = DlInstance::new(&g);
        assert!(dl_feasibility_step(0.9 * bound, &d0, inst, &cfg, &solver).unwrap().feasible);
        let over = dl_feasibility_step(1.1 * bound, &d0, inst, &cfg, &solver).unwrap();
        assert!(!over.feasible && over.slack > 0.0);
    }

    #[test]
    fn huge_target_has_positive_slack() {
        let cfg = cfg_single(2);
        let g = single_ap(&[vec![1e-5, 2e-7], vec![3e-7, 5e-6]], &cfg);
        let d0 = uniform(&g, &cfg, 0.5).amplitudes(g.association());
        let step = dl_feasibility_step(1e12, &d0, DlInstance::new(&g), &cfg, &SolverConfig::default()).unwrap();
        assert!(step.slack > 0.0);
    }

    #[test]
    fn feasible_step_meets_original_constraints() {
        let cfg = cfg_single(2);
        let g = single_ap(&[vec![1e-5, 2e-7], vec![3e-7, 5e-6]], &cfg);
        let inst = DlInstance::new(&g);
        let d0 = uniform(&g, &cfg, 0.5).amplitudes(g.association());
        let step = dl_feasibility_step(10.0, &d0, inst, &cfg, &SolverConfig::default()).unwrap();
        assert!(step.feasible);
        let model = DlModel::new(inst, &cfg).unwrap();
        assert!(model.residual(&step.d, &cfg) <= 1e-6);
        let sinr = dl_sinr_amplitudes(&step.d, &g);
        assert!(sinr.iter().all(|&s| s >= 10.0 * (1.0 - 1e-6)), "{sinr:?}");
    }

    #[test]
    fn single_link_closed_form() {
        for (c, limit) in [(3e-6, 10.0), (3e-6, 1e-9), (1e-7, 10.0)] {
            let mut cfg = cfg_single(1);
            cfg.ipd_limit = limit;
            let g = single_ap(&[vec![c]], &cfg);
            let inst = DlInstance::new(&g);
            let cap = cfg.ipd_limit / cfg.ipd_factor();
            let snr = (cfg.ap_power * c * c).min(cap) / cfg.noise_var_ue;
            let expect = rate(snr, cfg.dl_prelog(), cfg.bandwidth);
            let init = initial_dl_point(&DMatrix::from_element(1, 1, 1e-9), inst, &cfg);
            let solver = SolverConfig::default();
            let r = dl_maximin_bisection(inst, &cfg, &solver, &init).unwrap();
            let eps = solver.bisection_tol_rel * rate(cfg.ap_power * c * c / cfg.noise_var_ue, cfg.dl_prelog(), cfg.bandwidth);
            assert!(r.feasible);
            assert!(r.min_rate <= expect * (1.0 + 1e-9) && expect - r.min_rate <= eps, "{} vs {expect}", r.min_rate);
            assert!(r.probes_monotone());
        }
    }

    #[test]
    fn single_ue_coherent_multi_ap() {
        let mut cfg = SystemConfig::with_dimensions(1, 2, 1, 2);
        cfg.set_pilot_len(1);
        let (c1, c2) = (2e-6, 5e-7);
        let assoc = Association::from_lists(2, vec![vec![0, 1]]).unwrap();
        let dl = vec![C64::from(c1), C64::from(c2)];
        let g = EffectiveGains::from_raw(assoc, dl.clone(), dl, vec![1.0], cfg.noise_var_ue).unwrap();
        let inst = DlInstance::new(&g);
        let init = initial_dl_point(&DMatrix::from_element(1, 2, 1e-9), inst, &cfg);
        let solver = SolverConfig::default();
        let r = dl_maximin_bisection(inst, &cfg, &solver, &init).unwrap();
        let snr = cfg.ap_power * (c1 + c2).powi(2) / cfg.noise_var_ue;
        let expect = rate(snr, cfg.dl_prelog(), cfg.bandwidth);
        let hi = rate(2.0 * cfg.ap_power * (c1 * c1 + c2 * c2) / cfg.noise_var_ue, cfg.dl_prelog(), cfg.bandwidth);
        assert!(expect - r.min_rate <= solver.bisection_tol_rel * hi && r.min_rate <= expect * (1.0 + 1e-9));
    }

    #[test]
    fn symmetric_pair_splits_equally() {
        let cfg = cfg_single(2);
        let (a, b) = (4e-6, 1e-6);
        let g = single_ap(&[vec![a, b], vec![b, a]], &cfg);
        let inst = DlInstance::new(&g);
        let init = uniform(&g, &cfg, 0.5);
        let r = dl_maximin_bisection(inst, &cfg, &SolverConfig::default(), &init).unwrap();
        let half = cfg.ap_power / 2.0;
        let expect = rate(a * a * half / (b * b * half + cfg.noise_var_ue), cfg.dl_prelog(), cfg.bandwidth);
        assert!((r.min_rate - expect).abs() <= 0.01 * expect, "{} vs {expect}", r.min_rate);
        let rates: Vec<f64> = dl_sinr(r.dl().unwrap(), &g).iter().map(|&s| rate(s, cfg.dl_prelog(), cfg.bandwidth)).collect();
        assert!((rates[0] - rates[1]).abs() <= 0.01 * rates[0]);
    }

    #[test]
    fn budget_only_single_ue_uses_full_power() {
        let mut cfg = SystemConfig::with_dimensions(1, 2, 1, 2);
        cfg.set_pilot_len(1);
        cfg.ipd_limit = f64::INFINITY;
        let assoc = Association::from_lists(2, vec![vec![0, 1]]).unwrap();
        let dl = vec![C64::new(2e-6, 1e-6), C64::new(1e-6, -5e-7)];
        let g = EffectiveGains::from_raw(assoc, dl.clone(), dl, vec![1.0], cfg.noise_var_ue).unwrap();
        let inst = DlInstance::new(&g);
        let init = PowerAllocationDL::from_link_powers(g.association(), &[0.1 * cfg.ap_power, 0.1 * cfg.ap_power]);
        let r = dl_lse_sco(inst, &cfg, &SolverConfig::default(), &init).unwrap();
        for p in r.dl().unwrap().ap_powers(g.association()) {
            assert!((p - cfg.ap_power).abs() <= 1e-4 * cfg.ap_power, "{p}");
        }
    }

    #[test]
    fn single_term_surrogate_is_ratio() {
        let cfg = cfg_single(1);
        let g = single_ap(&[vec![3e-6]], &cfg);
        let d_prev = [0.2];
        let d = [0.35];
        let (v, _) = lse_objective(&d, &d_prev, DlInstance::new(&g), &cfg, 1.0).unwrap();
        let c = 3e-6 / cfg.noise_var_ue.sqrt();
        let t = 2.0 * c * c * d_prev[0] * d[0] - c * c * d_prev[0] * d_prev[0];
        assert!((v - t).abs() <= 1e-12 * t);
    }

    #[test]
    fn surrogate_gradient_matches_differences() {
        let cfg = cfg_single(3);
        let g = single_ap(&[vec![4e-6, 1e-6, 5e-7], vec![8e-7, 3e-6, 2e-7], vec![1e-7, 6e-7, 2e-6]], &cfg);
        let inst = DlInstance::new(&g);
        let d_prev = [0.15, 0.2, 0.3];
        let d = [0.18, 0.12, 0.33];
        let (_, grad) = lse_objective(&d, &d_prev, inst, &cfg, 1.0).unwrap();
        for i in 0..3 {
            let h = 1e-7;
            let mut p = d;
            let mut m = d;
            p[i] += h;
            m[i] -= h;
            let fd = (lse_objective(&p, &d_prev, inst, &cfg, 1.0).unwrap().0
                - lse_objective(&m, &d_prev, inst, &cfg, 1.0).unwrap().0)
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn surrogate_is_not_concave_for_two_ues() {
        // f_k grows quadratically in the other UE's amplitude, so g̃_k/f_k is
        // convex along that direction where g̃_k > 0.
        let cfg = cfg_single(2);
        let g = single_ap(&[vec![4e-6, 3e-6], vec![3e-6, 4e-6]], &cfg);
        let inst = DlInstance::new(&g);
        let d = [0.3, 0.01];
        let h = lse_hessian(&d, &d, inst, &cfg, 1.0).unwrap();
        let eig = h.symmetric_eigenvalues();
        assert!(eig.max() > 0.0, "{eig}");
    }

    #[test]
    fn smoothed_sco_ascends_and_bounds_hold() {
        let cfg = cfg_single(3);
        let g = single_ap(&[vec![4e-6, 1e-6, 5e-7], vec![8e-7, 3e-6, 2e-7], vec![1e-7, 6e-7, 2e-6]], &cfg);
        let inst = DlInstance::new(&g);
        let init = uniform(&g, &cfg, 0.9);
        let solver = SolverConfig::default();
        let r = dl_lse_sco(inst, &cfg, &solver, &init).unwrap();
        assert!(r.feasible);
        assert!(r.objective_trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", r.objective_trace);
        for d in &r.iterate_trace {
            let sinr = dl_sinr_amplitudes(d, &g);
            let smooth = lse(&sinr, solver.sharpness);
            let lo = sinr.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(smooth <= lo && lo - smooth <= 3f64.ln() / solver.sharpness + 1e-12);
        }
        let maximin = dl_maximin_bisection(inst, &cfg, &solver, &init).unwrap();
        assert!((r.min_rate - maximin.min_rate).abs() <= 0.05 * maximin.min_rate);
    }

    #[test]
    fn rejects_non_finite_gains() {
        let cfg = cfg_single(1);
        let g = single_ap(&[vec![f64::NAN]], &cfg);
        let init = PowerAllocationDL::from_link_powers(g.association(), &[0.1]);
        let r = dl_maximin_bisection(DlInstance::new(&g), &cfg, &SolverConfig::default(), &init);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
