//! Baseline power policies: uniform and fractional power control, with the
//! SAR-compliant UL scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::metrics::{PowerAllocationDL, PowerAllocationUL};
use crate::scenario::Association;

pub const DL_FPC_EXPONENT: f64 = 0.5;
pub const UL_FPC_EXPONENT: f64 = -0.5;

/// The three heuristic baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    /// Exponent 0.
    Upc,
    /// Exponent −0.5, favours weak links.
    FpcFair,
    /// Exponent +0.5, favours strong links.
    FpcOpp,
}

impl Heuristic {
    pub fn exponent(self) -> f64 {
        match self {
            Heuristic::Upc => 0.0,
            Heuristic::FpcFair => -0.5,
            Heuristic::FpcOpp => 0.5,
        }
    }
}

/// `p_{k,m} = P_m α_{k,m}^κ / Σ_j a_{j,m} α_{j,m}^κ` on associated links.
///
/// APs serving no UE transmit nothing.
pub fn fpc_dl(alpha: &DMatrix<f64>, assoc: &Association, cfg: &SystemConfig, exponent: f64) -> PowerAllocationDL {
    let mut alloc = PowerAllocationDL::zeros(assoc.num_ues(), assoc.num_aps());
    for m in 0..assoc.num_aps() {
        let served = assoc.served_by(m);
        let total: f64 = served.iter().map(|&k| alpha[(k, m)].powf(exponent)).sum();
        if served.is_empty() || !(total > 0.0) {
            continue;
        }
        for k in served {
            alloc.p[(k, m)] = cfg.ap_power * alpha[(k, m)].powf(exponent) / total;
        }
    }
    alloc
}

/// Raw UL FPC coefficients `Q_k (Σ_m a α)^ϰ / max_j (Σ_m a α)^ϰ`, before any
/// SAR scaling.
pub fn fpc_ul_coefficients(alpha: &DMatrix<f64>, assoc: &Association, cfg: &SystemConfig, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..assoc.num_ues())
        .map(|k| assoc.serving(k).iter().map(|&m| alpha[(k, m)]).sum::<f64>().powf(exponent))
        .collect();
    let peak = weights.iter().copied().fold(0.0, f64::max);
    weights.iter().map(|w| cfg.ue_power * w / peak).collect()
}

/// UL FPC scaled to meet every SAR limit.
pub fn fpc_ul(alpha: &DMatrix<f64>, assoc: &Association, cfg: &SystemConfig, exponent: f64) -> PowerAllocationUL {
    emf_scale_ul(&PowerAllocationUL { q: fpc_ul_coefficients(alpha, assoc, cfg, exponent) }, cfg)
}

/// `q_k ← min(q_k, min_n E_{k,n}/b_{k,n})`; the budget `Q_k` is part of the cap.
pub fn emf_scale_ul(alloc: &PowerAllocationUL, cfg: &SystemConfig) -> PowerAllocationUL {
    let cap = cfg.ul_power_cap();
    PowerAllocationUL { q: alloc.q.iter().map(|&q| q.min(cap)).collect() }
}

pub fn heuristic_dl(h: Heuristic, alpha: &DMatrix<f64>, assoc: &Association, cfg: &SystemConfig) -> PowerAllocationDL {
    fpc_dl(alpha, assoc, cfg, h.exponent())
}

pub fn heuristic_ul(h: Heuristic, alpha: &DMatrix<f64>, assoc: &Association, cfg: &SystemConfig) -> PowerAllocationUL {
    fpc_ul(alpha, assoc, cfg, h.exponent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_deployment;

    #[test]
    fn upc_splits_equally() {
        let cfg = SystemConfig::paper();
        let (dep, ls) = generate_deployment(&cfg, 1).unwrap();
        let a = fpc_dl(&ls.alpha, &dep.association, &cfg, 0.0);
        for m in 0..cfg.num_aps {
            let served = dep.association.served_by(m);
            for &k in &served {
                assert!((a.p[(k, m)] - cfg.ap_power / served.len() as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_ue_fractional_split() {
        let cfg = SystemConfig::small();
        let alpha = DMatrix::from_row_slice(2, 1, &[1.0, 4.0]);
        let assoc = Association::from_lists(1, vec![vec![0], vec![0]]).unwrap();
        let a = fpc_dl(&alpha, &assoc, &cfg, 0.5);
        assert!((a.p[(0, 0)] - cfg.ap_power / 3.0).abs() < 1e-15);
        assert!((a.p[(1, 0)] - 2.0 * cfg.ap_power / 3.0).abs() < 1e-15);
    }

    #[test]
    fn budget_met_with_equality() {
        let cfg = SystemConfig::paper();
        let (dep, ls) = generate_deployment(&cfg, 2).unwrap();
        for kappa in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let a = fpc_dl(&ls.alpha, &dep.association, &cfg, kappa);
            for (m, p) in a.ap_powers(&dep.association).into_iter().enumerate() {
                if dep.association.served_by(m).is_empty() {
                    assert_eq!(p, 0.0);
                } else {
                    assert!((p - cfg.ap_power).abs() < 1e-12 * cfg.ap_power);
                }
            }
        }
    }

    #[test]
    fn ul_exponent_zero_is_full_budget() {
        let cfg = SystemConfig::paper();
        let (dep, ls) = generate_deployment(&cfg, 3).unwrap();
        let raw = fpc_ul_coefficients(&ls.alpha, &dep.association, &cfg, 0.0);
        assert!(raw.iter().all(|&q| (q - cfg.ue_power).abs() < 1e-15));
        let scaled = fpc_ul(&ls.alpha, &dep.association, &cfg, 0.0);
        assert!(scaled.q.iter().all(|&q| (q - 0.01).abs() < 1e-15));
    }

    #[test]
    fn ul_fair_exponent_example() {
        let cfg = SystemConfig::small();
        let alpha = DMatrix::from_row_slice(2, 1, &[1.0, 4.0]);
        let assoc = Association::from_lists(1, vec![vec![0], vec![0]]).unwrap();
        let q = fpc_ul_coefficients(&alpha, &assoc, &cfg, -0.5);
        assert!((q[0] - cfg.ue_power).abs() < 1e-15);
        assert!((q[1] - 0.5 * cfg.ue_power).abs() < 1e-15);
    }

    #[test]
    fn sar_cap_binds_before_budget() {
        let cfg = SystemConfig::paper();
        let capped = emf_scale_ul(&PowerAllocationUL { q: vec![0.1, 0.005] }, &cfg);
        assert_eq!(capped.q, vec![0.01, 0.005]);
        let again = emf_scale_ul(&capped, &cfg);
        assert_eq!(again, capped);
    }
}
