//! UL pilot training and linear MMSE channel estimation under pilot
//! contamination.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::config::SystemConfig;
use crate::linalg::{complex_gaussian, hpd_inverse, CMatrix, CVector, C64};
use crate::scenario::{steering_vector, ChannelRealization, LargeScaleState};
use crate::seed;
use crate::{Error, Result};

/// Orthonormal pilot sequences (rows of a unitary DFT matrix) and the
/// round-robin UE → pilot assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pilot_len: usize,
    /// Row `i` is pilot `i`.
    pilots: CMatrix,
    assignment: Vec<usize>,
}

impl PilotBook {
    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    pub fn num_ues(&self) -> usize {
        self.assignment.len()
    }

    pub fn pilot_of(&self, k: usize) -> usize {
        self.assignment[k]
    }

    /// Training sequence `t_k` sent by UE `k`.
    pub fn sequence(&self, k: usize) -> CVector {
        self.pilots.row(self.assignment[k]).transpose()
    }

    /// `|t_j^H t_k|²`.
    pub fn overlap(&self, j: usize, k: usize) -> f64 {
        self.sequence(j).dotc(&self.sequence(k)).norm_sqr()
    }

    /// UEs sharing UE `k`'s pilot, `k` included, ascending.
    pub fn sharing(&self, k: usize) -> Vec<usize> {
        let p = self.assignment[k];
        (0..self.num_ues()).filter(|&j| self.assignment[j] == p).collect()
    }
}

/// UE `k` gets pilot `k mod τ_p`.
pub fn assign_pilots(num_ues: usize, pilot_len: usize) -> Result<PilotBook> {
    if pilot_len == 0 {
        return Err(Error::InvalidConfig("pilot length must be at least 1".into()));
    }
    let scale = 1.0 / (pilot_len as f64).sqrt();
    let pilots = CMatrix::from_fn(pilot_len, pilot_len, |i, n| {
        C64::from_polar(scale, -2.0 * PI * (i * n) as f64 / pilot_len as f64)
    });
    Ok(PilotBook {
        pilot_len,
        pilots,
        assignment: (0..num_ues).map(|k| k % pilot_len).collect(),
    })
}

/// `C = α/(1+β)·(β v vᴴ + I_L)`.
pub fn spatial_covariance(ls: &LargeScaleState, k: usize, m: usize, antennas: usize) -> CMatrix {
    let alpha = ls.alpha[(k, m)];
    let beta = ls.rician[(k, m)];
    let v = steering_vector(ls.aoa[(k, m)], antennas);
    let los = &v * v.adjoint() * C64::from(beta);
    (los + CMatrix::identity(antennas, antennas)) * C64::from(alpha / (1.0 + beta))
}

/// LMMSE estimates with the covariances that produced them.
#[derive(Debug, Clone)]
pub struct ChannelEstimateSet {
    num_aps: usize,
    h_hat: Vec<CVector>,
    cov: Vec<CMatrix>,
    obs_cov: Vec<CMatrix>,
    /// `√(τ_p μ_k)` per UE.
    gain: Vec<f64>,
}

impl ChannelEstimateSet {
    pub fn num_ues(&self) -> usize {
        self.gain.len()
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn estimate(&self, k: usize, m: usize) -> &CVector {
        &self.h_hat[k * self.num_aps + m]
    }

    /// Perfect-CSI set: `ĥ = h`, no estimation statistics.
    pub fn perfect(channels: &ChannelRealization) -> Self {
        let (k_ues, m_aps) = (channels.num_ues(), channels.num_aps());
        let h_hat = (0..k_ues)
            .flat_map(|k| (0..m_aps).map(move |m| (k, m)))
            .map(|(k, m)| channels.get(k, m).clone())
            .collect();
        Self { num_aps: m_aps, h_hat, cov: Vec::new(), obs_cov: Vec::new(), gain: vec![0.0; k_ues] }
    }

    /// Spatial covariance `C_{k,m}`; `None` for perfect-CSI sets.
    pub fn covariance(&self, k: usize, m: usize) -> Option<&CMatrix> {
        self.cov.get(k * self.num_aps + m)
    }

    /// Observation covariance `D_{k,m}`; `None` for perfect-CSI sets.
    pub fn observation_covariance(&self, k: usize, m: usize) -> Option<&CMatrix> {
        self.obs_cov.get(k * self.num_aps + m)
    }

    /// Estimates packaged as a channel set, for evaluating SINRs on ĥ.
    pub fn as_channels(&self) -> ChannelRealization {
        ChannelRealization::from_fn(self.num_ues(), self.num_aps, |k, m| self.estimate(k, m).clone())
    }

    /// Analytic estimation-error power `tr(C − τ_p μ_k C D⁻¹ C)`.
    pub fn mse(&self, k: usize, m: usize) -> Result<f64> {
        let (Some(c), Some(d)) = (self.covariance(k, m), self.observation_covariance(k, m)) else {
            return Ok(0.0);
        };
        let d_inv = hpd_inverse(d, "observation covariance")?;
        let g2 = self.gain[k] * self.gain[k];
        let err = c - c * d_inv * c * C64::from(g2);
        Ok(err.trace().re)
    }
}

/// Forms the pilot observations `u_{k,m}` on `channels` and returns
/// `ĥ = √(τ_p μ_k) C D⁻¹ u`.
///
/// UEs sharing a pilot share the same observation (and noise draw) at each AP.
pub fn estimate_channels(
    channels: &ChannelRealization,
    book: &PilotBook,
    ls: &LargeScaleState,
    cfg: &SystemConfig,
    seed: u64,
) -> Result<ChannelEstimateSet> {
    let (k_ues, m_aps) = (channels.num_ues(), channels.num_aps());
    if book.num_ues() != k_ues || ls.num_ues() != k_ues || ls.num_aps() != m_aps {
        return Err(Error::Dimension("channels, pilots and large-scale state disagree".into()));
    }
    let antennas = channels.antennas();
    let tau = book.pilot_len() as f64;
    let gain: Vec<f64> = (0..k_ues).map(|_| (tau * cfg.pilot_power).sqrt()).collect();
    let noise_std = cfg.noise_var_ap.sqrt();

    let mut rng = seed::rng(seed);
    // noise[m * τ_p + pilot]
    let noise: Vec<CVector> = (0..m_aps * book.pilot_len())
        .map(|_| complex_gaussian(&mut rng, antennas) * C64::from(noise_std))
        .collect();

    let cov: Vec<CMatrix> = (0..k_ues)
        .flat_map(|k| (0..m_aps).map(move |m| (k, m)))
        .map(|(k, m)| spatial_covariance(ls, k, m, antennas))
        .collect();

    let mut h_hat = Vec::with_capacity(k_ues * m_aps);
    let mut obs_cov = Vec::with_capacity(k_ues * m_aps);
    for k in 0..k_ues {
        let group = book.sharing(k);
        for m in 0..m_aps {
            let mut d = CMatrix::identity(antennas, antennas) * C64::from(cfg.noise_var_ap);
            let mut u = noise[m * book.pilot_len() + book.pilot_of(k)].clone();
            for &j in &group {
                let w = book.overlap(j, k);
                d += &cov[j * m_aps + m] * C64::from(gain[j] * gain[j] * w);
                u += channels.get(j, m) * C64::from(gain[j]);
            }
            let d_inv = hpd_inverse(&d, "observation covariance")?;
            let est = &cov[k * m_aps + m] * (d_inv * u) * Complex::from(gain[k]);
            h_hat.push(est);
            obs_cov.push(d);
        }
    }
    Ok(ChannelEstimateSet { num_aps: m_aps, h_hat, cov, obs_cov, gain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use crate::scenario::{draw_channels, generate_deployment};

    #[test]
    fn modulo_assignment() {
        let b = assign_pilots(8, 4).unwrap();
        assert_eq!(b.sharing(0), vec![0, 4]);
        assert_eq!(b.sharing(5), vec![1, 5]);
        assert!((b.overlap(0, 4) - 1.0).abs() < 1e-12);
        assert!(b.overlap(0, 1) < 1e-24);
    }

    #[test]
    fn orthogonal_when_k_equals_tau() {
        let b = assign_pilots(4, 4).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((b.overlap(j, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pilot_full_contamination() {
        let b = assign_pilots(2, 1).unwrap();
        assert_eq!(b.sharing(0), vec![0, 1]);
        assert!(assign_pilots(2, 0).is_err());
    }

    #[test]
    fn covariance_trace_and_rayleigh_case() {
        let cfg = SystemConfig::paper();
        let (_, mut ls) = generate_deployment(&cfg, 5).unwrap();
        for k in 0..3 {
            for m in 0..3 {
                let c = spatial_covariance(&ls, k, m, 4);
                let tr = c.trace().re;
                let expect = ls.alpha[(k, m)] * 4.0;
                assert!((tr - expect).abs() <= 1e-12 * expect);
                assert!((&c - c.adjoint()).norm() <= 1e-12 * c.norm());
            }
        }
        ls.rician.fill(0.0);
        let c = spatial_covariance(&ls, 0, 0, 3);
        let expect = CMatrix::identity(3, 3) * C64::from(ls.alpha[(0, 0)]);
        assert!((c - expect).norm() < 1e-20);
        ls.alpha[(0, 0)] = 1.0;
        ls.rician[(0, 0)] = 1.0;
        let c = spatial_covariance(&ls, 0, 0, 1);
        assert!((c[(0, 0)] - C64::from(1.0)).norm() < 1e-15);
    }

    #[test]
    fn noiseless_orthogonal_estimate_is_exact() {
        let mut cfg = SystemConfig::small();
        cfg.set_pilot_len(cfg.num_ues);
        cfg.noise_var_ap *= 1e-16;
        let (_, ls) = generate_deployment(&cfg, 8).unwrap();
        let h = draw_channels(&ls, &cfg, 2);
        let book = assign_pilots(cfg.num_ues, cfg.pilot_len).unwrap();
        let est = estimate_channels(&h, &book, &ls, &cfg, 3).unwrap();
        for k in 0..cfg.num_ues {
            for m in 0..cfg.num_aps {
                let err = norm_sqr(&(h.get(k, m) - est.estimate(k, m)));
                assert!(err <= 1e-10 * norm_sqr(h.get(k, m)), "{k},{m}: {err}");
            }
        }
    }

    #[test]
    fn shared_pilot_estimates_are_parallel() {
        let mut cfg = SystemConfig::small();
        cfg.num_ues = 2;
        cfg.set_pilot_len(1);
        let (_, mut ls) = generate_deployment(&cfg, 21).unwrap();
        for m in 0..cfg.num_aps {
            ls.alpha[(1, m)] = ls.alpha[(0, m)];
            ls.rician[(1, m)] = ls.rician[(0, m)];
            ls.aoa[(1, m)] = ls.aoa[(0, m)];
        }
        let h = draw_channels(&ls, &cfg, 4);
        let book = assign_pilots(2, 1).unwrap();
        let est = estimate_channels(&h, &book, &ls, &cfg, 6).unwrap();
        for m in 0..cfg.num_aps {
            // Equal pilot powers: the ratio √(μ₁/μ₂) is one.
            let diff = est.estimate(0, m) - est.estimate(1, m);
            assert!(diff.norm() <= 1e-12 * est.estimate(0, m).norm());
        }
    }

    #[test]
    fn homogeneous_in_pilot_power_and_noise() {
        let cfg = SystemConfig::small();
        let (_, ls) = generate_deployment(&cfg, 12).unwrap();
        let h = draw_channels(&ls, &cfg, 2);
        let book = assign_pilots(cfg.num_ues, cfg.pilot_len).unwrap();
        let a = estimate_channels(&h, &book, &ls, &cfg, 77).unwrap();
        let mut scaled = cfg.clone();
        scaled.pilot_power *= 3.7;
        scaled.noise_var_ap *= 3.7;
        let b = estimate_channels(&h, &book, &ls, &scaled, 77).unwrap();
        for k in 0..cfg.num_ues {
            for m in 0..cfg.num_aps {
                let (x, y) = (a.estimate(k, m), b.estimate(k, m));
                assert!((x - y).norm() <= 1e-9 * x.norm());
            }
        }
    }

    #[test]
    fn observation_covariance_dominates_noise() {
        let cfg = SystemConfig::small();
        let (_, ls) = generate_deployment(&cfg, 13).unwrap();
        let h = draw_channels(&ls, &cfg, 1);
        let book = assign_pilots(cfg.num_ues, cfg.pilot_len).unwrap();
        let est = estimate_channels(&h, &book, &ls, &cfg, 1).unwrap();
        let l = cfg.antennas_per_ap;
        for k in 0..cfg.num_ues {
            for m in 0..cfg.num_aps {
                let d = est.observation_covariance(k, m).unwrap();
                let shifted = d - CMatrix::identity(l, l) * C64::from(cfg.noise_var_ap);
                let eig = shifted.symmetric_eigenvalues();
                let scale = d.norm();
                assert!(eig.iter().all(|&e| e >= -1e-12 * scale));
                assert!(d.clone().cholesky().is_some());
            }
        }
    }
}
