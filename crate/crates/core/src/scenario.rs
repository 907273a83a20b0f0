//! Random deployments, large-scale fading and Rician small-scale channels on a
//! wrapped-around square, plus the user-centric UE–AP association.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::linalg::{complex_gaussian, CVector, C64};
use crate::seed;
use crate::{Error, Result};

/// User-centric association: each UE is served by its `N` strongest APs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    num_ues: usize,
    num_aps: usize,
    /// Per UE, serving AP indices ordered by decreasing large-scale gain.
    serving: Vec<Vec<usize>>,
}

impl Association {
    /// Top-`n` APs per UE by `alpha` (rows = UEs); ties go to the lower AP index.
    pub fn from_gains(alpha: &DMatrix<f64>, n: usize) -> Self {
        let (num_ues, num_aps) = alpha.shape();
        let serving = (0..num_ues)
            .map(|k| {
                let mut idx: Vec<usize> = (0..num_aps).collect();
                idx.sort_by(|&a, &b| alpha[(k, b)].total_cmp(&alpha[(k, a)]).then(a.cmp(&b)));
                idx.truncate(n);
                idx
            })
            .collect();
        Self { num_ues, num_aps, serving }
    }

    /// Builds an association from explicit per-UE AP lists.
    pub fn from_lists(num_aps: usize, serving: Vec<Vec<usize>>) -> Result<Self> {
        let n = serving.first().map_or(0, Vec::len);
        for list in &serving {
            if list.len() != n || list.iter().any(|&m| m >= num_aps) {
                return Err(Error::Dimension("every UE needs N distinct valid APs".into()));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != n {
                return Err(Error::Dimension("duplicate AP in association list".into()));
            }
        }
        Ok(Self { num_ues: serving.len(), num_aps, serving })
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn cluster_size(&self) -> usize {
        self.serving.first().map_or(0, Vec::len)
    }

    /// Number of associated links, `N·K`.
    pub fn num_links(&self) -> usize {
        self.num_ues * self.cluster_size()
    }

    pub fn serving(&self, k: usize) -> &[usize] {
        &self.serving[k]
    }

    pub fn is_served(&self, k: usize, m: usize) -> bool {
        self.serving[k].contains(&m)
    }

    /// Position of AP `m` in UE `k`'s serving list.
    pub fn slot(&self, k: usize, m: usize) -> Option<usize> {
        self.serving[k].iter().position(|&x| x == m)
    }

    /// UEs served by AP `m`, ascending.
    pub fn served_by(&self, m: usize) -> Vec<usize> {
        (0..self.num_ues).filter(|&k| self.is_served(k, m)).collect()
    }

    /// Dense `a_{k,m}` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_ues, self.num_aps, |k, m| {
            if self.is_served(k, m) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `(k, m)` for every associated link in slot order (UE-major).
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.serving
            .iter()
            .enumerate()
            .flat_map(|(k, aps)| aps.iter().map(move |&m| (k, m)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub ue_positions: Vec<[f64; 3]>,
    pub ap_positions: Vec<[f64; 3]>,
    /// Broadside orientation of each AP's linear array (rad).
    pub ap_orientation: Vec<f64>,
    pub association: Association,
}

impl Deployment {
    /// CSV with columns `entity,index,x,y,z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "entity,index,x,y,z")?;
        for (i, p) in self.ue_positions.iter().enumerate() {
            writeln!(out, "ue,{i},{:.17e},{:.17e},{:.17e}", p[0], p[1], p[2])?;
        }
        for (i, p) in self.ap_positions.iter().enumerate() {
            writeln!(out, "ap,{i},{:.17e},{:.17e},{:.17e}", p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

/// Per-link large-scale quantities, all `K × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleState {
    /// Large-scale gain including path loss and shadowing (linear).
    pub alpha: DMatrix<f64>,
    /// Rician factor.
    pub rician: DMatrix<f64>,
    /// Wrap-around 3D distance (m).
    pub distance: DMatrix<f64>,
    /// Angle of arrival relative to the AP array broadside (rad).
    pub aoa: DMatrix<f64>,
    /// LoS phase offset (rad).
    pub phase: DMatrix<f64>,
}

impl LargeScaleState {
    pub fn num_ues(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.alpha.ncols()
    }
}

/// UL channels `h_{k,m} ∈ C^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_ues: usize,
    num_aps: usize,
    h: Vec<CVector>,
}

impl ChannelRealization {
    pub fn from_fn(num_ues: usize, num_aps: usize, mut f: impl FnMut(usize, usize) -> CVector) -> Self {
        let mut h = Vec::with_capacity(num_ues * num_aps);
        for k in 0..num_ues {
            for m in 0..num_aps {
                h.push(f(k, m));
            }
        }
        Self { num_ues, num_aps, h }
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn antennas(&self) -> usize {
        self.h.first().map_or(0, |v| v.len())
    }

    pub fn get(&self, k: usize, m: usize) -> &CVector {
        &self.h[k * self.num_aps + m]
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// 3GPP UMi NLoS path loss in dB at 3D distance `distance` (m).
pub fn path_loss_db(distance: f64, carrier_frequency: f64) -> f64 {
    36.7 * distance.log10() + 22.7 + 26.0 * (carrier_frequency / 1e9).log10()
}

/// LoS probability at distance `distance`, clamped to `cap`.
pub fn plos(distance: f64, cap: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("LoS probability needs a positive distance, got {distance}")));
    }
    let e = (-distance / 36.0).exp();
    let p = (18.0 / distance).min(1.0) * (1.0 - e) + e;
    Ok(p.min(cap))
}

/// `p / (1 − p)`.
pub fn rician_factor(plos: f64) -> f64 {
    plos / (1.0 - plos)
}

/// Half-wavelength ULA response, `[v]_l = e^{jπ l sinθ}` for `l = 0..L`.
pub fn steering_vector(theta: f64, antennas: usize) -> CVector {
    let s = theta.sin();
    CVector::from_fn(antennas, |l, _| C64::from_polar(1.0, PI * l as f64 * s))
}

/// Minimal-image displacement on a torus of side `side`.
pub fn wrap_delta(delta: f64, side: f64) -> f64 {
    (delta + side / 2.0).rem_euclid(side) - side / 2.0
}

/// Draws AP/UE positions, computes the large-scale state and the association.
///
/// UEs closer than `min_ue_ap_distance` (2D, wrapped) to any AP are re-drawn.
pub fn generate_deployment(cfg: &SystemConfig, seed: u64) -> Result<(Deployment, LargeScaleState)> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let (k_ues, m_aps) = (cfg.num_ues, cfg.num_aps);
    let side = cfg.area_side;

    let ap_positions: Vec<[f64; 3]> = (0..m_aps)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side), cfg.ap_height])
        .collect();
    let ap_orientation: Vec<f64> = (0..m_aps).map(|_| rng.random_range(0.0..2.0 * PI)).collect();

    let mut ue_positions = Vec::with_capacity(k_ues);
    for _ in 0..k_ues {
        let mut attempts = 0;
        let pos = loop {
            let cand = [rng.random_range(0.0..side), rng.random_range(0.0..side), cfg.ue_height];
            let clear = ap_positions.iter().all(|ap| {
                let dx = wrap_delta(cand[0] - ap[0], side);
                let dy = wrap_delta(cand[1] - ap[1], side);
                dx.hypot(dy) >= cfg.min_ue_ap_distance
            });
            if clear {
                break cand;
            }
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidConfig(
                    "cannot place a UE outside the minimum AP distance".into(),
                ));
            }
        };
        ue_positions.push(pos);
    }

    let shadow = Normal::new(0.0, cfg.shadowing_std_db)
        .map_err(|e| Error::InvalidConfig(format!("shadowing: {e}")))?;
    let mut alpha = DMatrix::zeros(k_ues, m_aps);
    let mut rician = DMatrix::zeros(k_ues, m_aps);
    let mut distance = DMatrix::zeros(k_ues, m_aps);
    let mut aoa = DMatrix::zeros(k_ues, m_aps);
    let mut phase = DMatrix::zeros(k_ues, m_aps);
    for k in 0..k_ues {
        for m in 0..m_aps {
            let ue = ue_positions[k];
            let ap = ap_positions[m];
            let dx = wrap_delta(ue[0] - ap[0], side);
            let dy = wrap_delta(ue[1] - ap[1], side);
            let dz = ap[2] - ue[2];
            let zeta = (dx * dx + dy * dy + dz * dz).sqrt();
            let shadowing_db = shadow.sample(&mut rng);
            alpha[(k, m)] = 10f64.powf(-(path_loss_db(zeta, cfg.carrier_frequency) - shadowing_db) / 10.0);
            rician[(k, m)] = rician_factor(plos(zeta, cfg.plos_cap)?);
            distance[(k, m)] = zeta;
            aoa[(k, m)] = dy.atan2(dx) - ap_orientation[m];
            phase[(k, m)] = rng.random_range(0.0..2.0 * PI);
        }
    }

    let association = Association::from_gains(&alpha, cfg.cluster_size);
    Ok((
        Deployment { ue_positions, ap_positions, ap_orientation, association },
        LargeScaleState { alpha, rician, distance, aoa, phase },
    ))
}

fn rician_channel<R: Rng + ?Sized>(ls: &LargeScaleState, k: usize, m: usize, antennas: usize, phase: f64, rng: &mut R) -> CVector {
    let alpha = ls.alpha[(k, m)];
    let beta = ls.rician[(k, m)];
    let scale = (alpha / (1.0 + beta)).sqrt();
    let los = steering_vector(ls.aoa[(k, m)], antennas) * C64::from_polar(beta.sqrt(), phase);
    (los + complex_gaussian(rng, antennas)) * C64::from(scale)
}

/// One coherence block of Rician channels; the LoS phase is redrawn
/// uniformly for every link.
pub fn draw_channels(ls: &LargeScaleState, cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = seed::rng(seed);
    ChannelRealization::from_fn(ls.num_ues(), ls.num_aps(), |k, m| {
        let psi = rng.random_range(0.0..2.0 * PI);
        rician_channel(ls, k, m, cfg.antennas_per_ap, psi, &mut rng)
    })
}

/// Same as [`draw_channels`] but keeps the LoS phases stored in `ls`.
pub fn draw_channels_fixed_phase(ls: &LargeScaleState, cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = seed::rng(seed);
    ChannelRealization::from_fn(ls.num_ues(), ls.num_aps(), |k, m| {
        rician_channel(ls, k, m, cfg.antennas_per_ap, ls.phase[(k, m)], &mut rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;

    #[test]
    fn argmax_association() {
        let alpha = DMatrix::from_row_slice(1, 2, &[0.1, 0.2]);
        let a = Association::from_gains(&alpha, 1);
        assert_eq!(a.matrix(), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }

    #[test]
    fn association_ties_go_to_lower_index() {
        let alpha = DMatrix::from_row_slice(1, 4, &[0.5, 0.7, 0.7, 0.7]);
        let a = Association::from_gains(&alpha, 2);
        assert_eq!(a.serving(0), &[1, 2]);
    }

    #[test]
    fn nlos_path_loss_at_100m() {
        let pl = path_loss_db(100.0, 3.5e9);
        let expected = 36.7 * 2.0 + 22.7 + 26.0 * 3.5f64.log10();
        assert!((pl - expected).abs() < 1e-12);
        assert!((pl - 110.25).abs() < 5e-3);
    }

    #[test]
    fn plos_values() {
        assert_eq!(plos(10.0, 0.99).unwrap(), 0.99);
        assert_eq!(plos(18.0, 1.0).unwrap(), 1.0);
        let p36 = plos(36.0, 0.99).unwrap();
        assert!((p36 - (0.5 * (1.0 - (-1f64).exp()) + (-1f64).exp())).abs() < 1e-15);
        assert!((p36 - 0.6839).abs() < 1e-4);
        assert!(plos(1e6, 0.99).unwrap() < 1e-4);
        assert!(plos(0.0, 0.99).is_err());
        assert!(plos(-3.0, 0.99).is_err());
        assert_eq!(rician_factor(0.5), 1.0);
    }

    #[test]
    fn steering_vectors() {
        let v = steering_vector(0.0, 4);
        assert!(v.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(PI / 2.0, 2);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        for theta in [0.3, -1.2, 2.9] {
            assert!((norm_sqr(&steering_vector(theta, 5)) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deployment_invariants() {
        let cfg = SystemConfig::paper();
        let (dep, ls) = generate_deployment(&cfg, 11).unwrap();
        for k in 0..cfg.num_ues {
            assert_eq!(dep.association.serving(k).len(), cfg.cluster_size);
            let weakest = dep.association.serving(k).iter().map(|&m| ls.alpha[(k, m)]).fold(f64::INFINITY, f64::min);
            for m in 0..cfg.num_aps {
                if !dep.association.is_served(k, m) {
                    assert!(ls.alpha[(k, m)] <= weakest);
                }
                assert!(ls.alpha[(k, m)] > 0.0);
                assert!(ls.distance[(k, m)] >= cfg.min_ue_ap_distance);
                assert!(ls.rician[(k, m)] >= 0.0 && ls.rician[(k, m)] <= 99.0 + 1e-9);
            }
        }
        for p in dep.ue_positions.iter().chain(&dep.ap_positions) {
            assert!(p[0] >= 0.0 && p[0] < cfg.area_side && p[1] >= 0.0 && p[1] < cfg.area_side);
        }
    }

    #[test]
    fn wrap_distance_is_symmetric_and_bounded() {
        let side = 700.0;
        for (a, b) in [(10.0, 690.0), (0.0, 350.0), (123.0, 456.0), (699.0, 1.0)] {
            let d1 = wrap_delta(a - b, side);
            let d2 = wrap_delta(b - a, side);
            assert!((d1.abs() - d2.abs()).abs() < 1e-9);
            assert!(d1.abs() <= side / 2.0 + 1e-9);
        }
        assert!((wrap_delta(10.0 - 690.0, side) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn pure_rayleigh_when_beta_zero() {
        let cfg = SystemConfig::small();
        let (_, mut ls) = generate_deployment(&cfg, 3).unwrap();
        ls.rician.fill(0.0);
        let h = draw_channels(&ls, &cfg, 9);
        // With β = 0 the LoS term vanishes: h/√α is the Rayleigh draw itself.
        let mut rng = seed::rng(9);
        for k in 0..cfg.num_ues {
            for m in 0..cfg.num_aps {
                let _psi: f64 = rng.random_range(0.0..2.0 * PI);
                let nlos = complex_gaussian(&mut rng, cfg.antennas_per_ap);
                let expect = nlos * C64::from(ls.alpha[(k, m)].sqrt());
                assert!((h.get(k, m) - &expect).norm() <= 1e-12 * expect.norm());
            }
        }
    }

    #[test]
    fn los_limit_is_deterministic_power() {
        let cfg = SystemConfig::small();
        let (_, mut ls) = generate_deployment(&cfg, 4).unwrap();
        ls.rician.fill(1e12);
        let h = draw_channels(&ls, &cfg, 1);
        let target = ls.alpha[(0, 0)] * cfg.antennas_per_ap as f64;
        assert!((norm_sqr(h.get(0, 0)) - target).abs() / target < 1e-5);
    }

    #[test]
    fn same_seed_same_pipeline() {
        let cfg = SystemConfig::small();
        let (d1, l1) = generate_deployment(&cfg, 42).unwrap();
        let (d2, l2) = generate_deployment(&cfg, 42).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(l1, l2);
        assert_eq!(draw_channels(&l1, &cfg, 5), draw_channels(&l2, &cfg, 5));
    }

    #[test]
    fn deployment_csv_has_header_and_rows() {
        let cfg = SystemConfig::small();
        let (dep, _) = generate_deployment(&cfg, 1).unwrap();
        let mut buf = Vec::new();
        dep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "entity,index,x,y,z");
        assert_eq!(lines.len(), 1 + cfg.num_ues + cfg.num_aps);
    }
}
