//! UL max-min power control by bisection on a common SINR target, each
//! target checked with the standard-interference fixed point.

use std::time::Instant;

use super::{sinr_target_from_rate, Allocation, AllocationResult, IterationCounts, Probe, SolverConfig, UpperBoundPolicy};
use crate::config::SystemConfig;
use crate::metrics::{rate, ul_sinr, ul_violation, EffectiveGains, PowerAllocationUL};
use crate::{Error, Result};

/// Relative slack when checking the targets at the fixed point.
const TARGET_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct UlFeasibility {
    pub feasible: bool,
    /// Fixed point: the smallest powers meeting the target, clipped at the caps.
    pub q: Vec<f64>,
    pub iterations: usize,
}

/// One application of `q_k ← min(cap_k, γ I_k(q)/g_k)`.
pub fn ul_interference_step(q: &[f64], target: f64, gains: &EffectiveGains, caps: &[f64]) -> Vec<f64> {
    let k_ues = gains.num_ues();
    (0..k_ues)
        .map(|k| {
            if target == 0.0 {
                return 0.0;
            }
            let signal = gains.ul_cross(k, k).norm_sqr();
            if signal == 0.0 {
                return caps[k];
            }
            let interference: f64 = (0..k_ues)
                .filter(|&j| j != k)
                .map(|j| q[j] * gains.ul_cross(k, j).norm_sqr())
                .sum::<f64>()
                + gains.ul_noise(k);
            (target * interference / signal).min(caps[k])
        })
        .collect()
}

/// Whether every UE can reach SINR `target` with powers under `caps`.
pub fn ul_target_feasible(target: f64, gains: &EffectiveGains, caps: &[f64], solver: &SolverConfig) -> Result<UlFeasibility> {
    let k_ues = gains.num_ues();
    if caps.len() != k_ues {
        return Err(Error::Dimension(format!("expected {k_ues} power caps, got {}", caps.len())));
    }
    if !gains.is_finite() {
        return Err(Error::Domain("non-finite effective channel gains".into()));
    }
    let tol = solver.fixed_point_tol * caps.iter().copied().fold(0.0, f64::max);
    let mut q = vec![0.0; k_ues];
    let mut iterations = 0;
    while iterations < solver.max_fixed_point_iters {
        iterations += 1;
        let next = ul_interference_step(&q, target, gains, caps);
        let change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if change <= tol {
            break;
        }
    }
    let sinr = ul_sinr(&PowerAllocationUL { q: q.clone() }, gains);
    let feasible = target == 0.0 || sinr.iter().all(|&s| s >= target * (1.0 - TARGET_TOL));
    Ok(UlFeasibility { feasible, q, iterations })
}

/// Bisection on the common rate with caps `min(Q_k, min_n E_n/b_n)`; returns
/// the minimal powers reaching the largest feasible target.
pub fn ul_maximin_bisection(gains: &EffectiveGains, cfg: &SystemConfig, solver: &SolverConfig) -> Result<AllocationResult> {
    let start = Instant::now();
    let k_ues = gains.num_ues();
    let caps = vec![cfg.ul_power_cap(); k_ues];
    let (prelog, bandwidth) = (cfg.ul_prelog(), cfg.bandwidth);
    if !gains.is_finite() {
        return Err(Error::Domain("non-finite effective channel gains".into()));
    }
    let snr = (0..k_ues).map(|k| caps[k] * gains.ul_cross(k, k).norm_sqr() / gains.ul_noise(k));
    let bound = match solver.upper_bound {
        UpperBoundPolicy::MinSnr => snr.fold(f64::INFINITY, f64::min),
        UpperBoundPolicy::MaxSnr => snr.fold(0.0, f64::max),
    };
    let mut hi = rate(bound, prelog, bandwidth);
    let mut lo = 0.0;
    let eps = solver.bisection_tol_rel * hi;
    let mut best = vec![0.0; k_ues];
    let mut probes = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = IterationCounts::default();
    while hi - lo > eps && iterations.bisection < solver.max_bisect_iters {
        iterations.bisection += 1;
        let delta = 0.5 * (lo + hi);
        let target = sinr_target_from_rate(delta, prelog, bandwidth);
        let check = ul_target_feasible(target, gains, &caps, solver)?;
        iterations.fixed_point += check.iterations;
        probes.push(Probe { rate: delta, sinr_target: target, feasible: check.feasible, inner_iterations: check.iterations });
        trace.push(check.q.clone());
        if check.feasible {
            lo = delta;
            best = check.q;
        } else {
            hi = delta;
        }
    }
    let alloc = PowerAllocationUL { q: best };
    let sinr = ul_sinr(&alloc, gains);
    let min_rate = sinr.iter().map(|&g| rate(g, prelog, bandwidth)).fold(f64::INFINITY, f64::min);
    let (budget, exposure) = ul_violation(&alloc, cfg);
    let max_residual = budget.max(exposure);
    Ok(AllocationResult {
        allocation: Allocation::Ul(alloc),
        min_rate,
        feasible: max_residual <= 1e-6,
        iterate_trace: trace,
        objective_trace: vec![],
        probes,
        seconds: start.elapsed().as_secs_f64(),
        iterations,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::scenario::Association;

    /// `ul[k][j]` real, `N = 1`, one AP.
    fn gains(ul: &[Vec<f64>], noise: &[f64]) -> EffectiveGains {
        let k = ul.len();
        let assoc = Association::from_lists(1, vec![vec![0]; k]).unwrap();
        let flat: Vec<C64> = ul.iter().flat_map(|r| r.iter().map(|&x| C64::from(x))).collect();
        EffectiveGains::from_raw(assoc, flat.clone(), flat, noise.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn single_ue_threshold() {
        let g = gains(&[vec![2.0]], &[0.5]);
        let cap = 0.01;
        let bound = cap * 4.0 / 0.5;
        let solver = SolverConfig::default();
        assert!(ul_target_feasible(bound * 0.999, &g, &[cap], &solver).unwrap().feasible);
        assert!(!ul_target_feasible(bound * 1.001, &g, &[cap], &solver).unwrap().feasible);
        assert!(ul_target_feasible(0.0, &g, &[cap], &solver).unwrap().feasible);
    }

    #[test]
    fn fixed_point_is_monotone_from_zero() {
        let g = gains(&[vec![1.0, 0.3, 0.2], vec![0.25, 0.9, 0.4], vec![0.1, 0.35, 1.2]], &[1e-3, 2e-3, 1e-3]);
        let caps = [0.01; 3];
        let mut q = vec![0.0; 3];
        for _ in 0..200 {
            let next = ul_interference_step(&q, 1.5, &g, &caps);
            assert!(next.iter().zip(&q).all(|(a, b)| a >= b));
            q = next;
        }
    }

    #[test]
    fn dead_link_is_infeasible() {
        let g = gains(&[vec![0.0, 0.1], vec![0.1, 1.0]], &[1e-3, 1e-3]);
        let r = ul_target_feasible(1e-3, &g, &[0.01, 0.01], &SolverConfig::default()).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn maximin_structure() {
        let cfg = SystemConfig::small();
        let g = gains(&[vec![1e-5, 2e-6], vec![3e-6, 8e-6]], &[1e-13, 1e-13]);
        let r = ul_maximin_bisection(&g, &cfg, &SolverConfig::default()).unwrap();
        assert!(r.feasible && r.probes_monotone());
        let q = &r.ul().unwrap().q;
        let sinr = ul_sinr(r.ul().unwrap(), &g);
        let at_cap = q.iter().any(|&x| x >= cfg.ul_power_cap() * (1.0 - 1e-6));
        let equal = (sinr[0] - sinr[1]).abs() <= 0.01 * sinr[0].min(sinr[1]);
        assert!(at_cap || equal, "{q:?} {sinr:?}");
        let window = r.probes.iter().filter(|p| !p.feasible).map(|p| p.rate).fold(f64::INFINITY, f64::min);
        let eps = SolverConfig::default().bisection_tol_rel * r.probes[0].rate * 2.0;
        assert!(window - r.min_rate <= eps + 1e-9);
    }

    #[test]
    fn brute_force_grid_agrees() {
        let cfg = SystemConfig::small();
        let g = gains(&[vec![4e-6, 1e-6], vec![2e-6, 3e-6]], &[1e-14, 2e-14]);
        let r = ul_maximin_bisection(&g, &cfg, &SolverConfig::default()).unwrap();
        let cap = cfg.ul_power_cap();
        let steps = 200;
        let mut best = 0.0f64;
        for i in 0..=steps {
            for j in 0..=steps {
                let q = PowerAllocationUL { q: vec![cap * i as f64 / steps as f64, cap * j as f64 / steps as f64] };
                let s = ul_sinr(&q, &g);
                best = best.max(s.iter().map(|&x| rate(x, cfg.ul_prelog(), cfg.bandwidth)).fold(f64::INFINITY, f64::min));
            }
        }
        assert!(r.min_rate >= best * (1.0 - 2e-3), "{} vs {best}", r.min_rate);
        assert!(r.min_rate <= best * 1.02, "{} vs {best}", r.min_rate);
    }
}
