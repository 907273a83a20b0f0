//! SINR, rate and EMF-exposure evaluation for DL and UL allocations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformerSet;
use crate::config::{SarLimit, SystemConfig};
use crate::linalg::{inner, norm_sqr, C64};
use crate::scenario::{Association, ChannelRealization};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Dl,
    Ul,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dl" => Ok(Self::Dl),
            "ul" => Ok(Self::Ul),
            other => Err(Error::InvalidConfig(format!("unknown direction `{other}` (dl, ul)"))),
        }
    }
}

/// Which channels the SINRs are evaluated on: the estimates (what the CPU
/// sees) or the true channels. Beams always come from the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationMode {
    #[default]
    Estimated,
    True,
}

/// DL power coefficients `p_{k,m}` (W), `K × M`, zero off the association.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocationDL {
    pub p: DMatrix<f64>,
}

impl PowerAllocationDL {
    pub fn zeros(num_ues: usize, num_aps: usize) -> Self {
        Self { p: DMatrix::zeros(num_ues, num_aps) }
    }

    /// From amplitudes `d` in link order (UE-major, serving-list order).
    pub fn from_amplitudes(assoc: &Association, d: &[f64]) -> Self {
        let mut p = DMatrix::zeros(assoc.num_ues(), assoc.num_aps());
        for ((k, m), &x) in assoc.links().zip(d) {
            p[(k, m)] = x * x;
        }
        Self { p }
    }

    /// From powers in link order.
    pub fn from_link_powers(assoc: &Association, powers: &[f64]) -> Self {
        let mut p = DMatrix::zeros(assoc.num_ues(), assoc.num_aps());
        for ((k, m), &x) in assoc.links().zip(powers) {
            p[(k, m)] = x;
        }
        Self { p }
    }

    /// Amplitudes `d = √p` in link order.
    pub fn amplitudes(&self, assoc: &Association) -> Vec<f64> {
        assoc.links().map(|(k, m)| self.p[(k, m)].max(0.0).sqrt()).collect()
    }

    pub fn link_powers(&self, assoc: &Association) -> Vec<f64> {
        assoc.links().map(|(k, m)| self.p[(k, m)]).collect()
    }

    /// Per-AP transmitted power `Σ_k a_{k,m} p_{k,m}` (unit-norm precoders).
    pub fn ap_powers(&self, assoc: &Association) -> Vec<f64> {
        let mut out = vec![0.0; assoc.num_aps()];
        for (k, m) in assoc.links() {
            out[m] += self.p[(k, m)];
        }
        out
    }
}

/// UL transmit powers `q_k` (W).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocationUL {
    pub q: Vec<f64>,
}

/// Per-link effective scalars for one channel set and one beamformer set.
///
/// `dl[k][j][s] = h_{k,m}ᴴ b_{j,m}` with `m` the `s`-th AP serving UE `j`;
/// `ul[k][j][s] = f_{k,m}ᴴ h_{j,m}` with `m` the `s`-th AP serving UE `k`.
#[derive(Debug, Clone)]
pub struct EffectiveGains {
    assoc: Association,
    dl: Vec<C64>,
    ul: Vec<C64>,
    ul_noise: Vec<f64>,
    noise_ue: f64,
}

impl EffectiveGains {
    pub fn new(channels: &ChannelRealization, beams: &BeamformerSet, assoc: &Association, cfg: &SystemConfig) -> Self {
        let k_ues = assoc.num_ues();
        let n = assoc.cluster_size();
        let mut dl = Vec::with_capacity(k_ues * k_ues * n);
        let mut ul = Vec::with_capacity(k_ues * k_ues * n);
        for k in 0..k_ues {
            for j in 0..k_ues {
                for &m in assoc.serving(j) {
                    dl.push(inner(channels.get(k, m), beams.precoder(j, m)));
                }
                for &m in assoc.serving(k) {
                    ul.push(inner(beams.combiner(k, m), channels.get(j, m)));
                }
            }
        }
        let ul_noise = (0..k_ues)
            .map(|k| assoc.serving(k).iter().map(|&m| cfg.noise_var_ap * norm_sqr(beams.combiner(k, m))).sum())
            .collect();
        Self { assoc: assoc.clone(), dl, ul, ul_noise, noise_ue: cfg.noise_var_ue }
    }

    /// Hand-assembled gains; `dl` and `ul` are `K·K·N` in the layout above.
    pub fn from_raw(assoc: Association, dl: Vec<C64>, ul: Vec<C64>, ul_noise: Vec<f64>, noise_ue: f64) -> Result<Self> {
        let k = assoc.num_ues();
        let len = k * k * assoc.cluster_size();
        if dl.len() != len || ul.len() != len || ul_noise.len() != k {
            return Err(Error::Dimension(format!("expected {len} gains and {k} noise terms")));
        }
        Ok(Self { assoc, dl, ul, ul_noise, noise_ue })
    }

    pub fn association(&self) -> &Association {
        &self.assoc
    }

    pub fn num_ues(&self) -> usize {
        self.assoc.num_ues()
    }

    pub fn cluster_size(&self) -> usize {
        self.assoc.cluster_size()
    }

    /// `σ²` at the UEs.
    pub fn noise_ue(&self) -> f64 {
        self.noise_ue
    }

    /// Filter-noise term `ν_k = Σ_m a_{k,m} η² ‖f_{k,m}‖²`.
    pub fn ul_noise(&self, k: usize) -> f64 {
        self.ul_noise[k]
    }

    /// `h_{k,m}ᴴ b_{j,m}` over UE `j`'s serving APs.
    pub fn dl_link(&self, k: usize, j: usize) -> &[C64] {
        let n = self.cluster_size();
        let start = (k * self.num_ues() + j) * n;
        &self.dl[start..start + n]
    }

    /// Direct-channel vector `c_k`.
    pub fn direct(&self, k: usize) -> &[C64] {
        self.dl_link(k, k)
    }

    /// `Σ_m a_{j,m} d_{j,m} h_{k,m}ᴴ b_{j,m}` for amplitudes `d` (link order).
    pub fn dl_cross(&self, k: usize, j: usize, d: &[f64]) -> C64 {
        let n = self.cluster_size();
        self.dl_link(k, j).iter().zip(&d[j * n..(j + 1) * n]).map(|(g, &x)| g * x).sum()
    }

    /// `G^{UL}[k][j] = Σ_m a_{k,m} f_{k,m}ᴴ h_{j,m}`.
    pub fn ul_cross(&self, k: usize, j: usize) -> C64 {
        let n = self.cluster_size();
        let start = (k * self.num_ues() + j) * n;
        self.ul[start..start + n].iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.dl.iter().chain(&self.ul).all(|z| z.re.is_finite() && z.im.is_finite())
            && self.ul_noise.iter().all(|x| x.is_finite())
    }

    /// DL numerator `g_k` and denominator `f_k` (interference + σ²) per UE.
    pub fn dl_terms(&self, d: &[f64]) -> Vec<(f64, f64)> {
        let k_ues = self.num_ues();
        (0..k_ues)
            .map(|k| {
                let signal = self.dl_cross(k, k, d).norm_sqr();
                let interference: f64 =
                    (0..k_ues).filter(|&j| j != k).map(|j| self.dl_cross(k, j, d).norm_sqr()).sum();
                (signal, interference + self.noise_ue)
            })
            .collect()
    }

    /// Total received power `Σ_j |Σ_m a_{j,m} d_{j,m} h_{k,m}ᴴ b_{j,m}|²` per UE.
    pub fn received_power(&self, d: &[f64]) -> Vec<f64> {
        let k_ues = self.num_ues();
        (0..k_ues).map(|k| (0..k_ues).map(|j| self.dl_cross(k, j, d).norm_sqr()).sum()).collect()
    }
}

/// DL SINR `γ_k` per UE.
pub fn dl_sinr(alloc: &PowerAllocationDL, gains: &EffectiveGains) -> Vec<f64> {
    dl_sinr_amplitudes(&alloc.amplitudes(gains.association()), gains)
}

pub fn dl_sinr_amplitudes(d: &[f64], gains: &EffectiveGains) -> Vec<f64> {
    gains.dl_terms(d).into_iter().map(|(g, f)| g / f).collect()
}

/// UL SINR `ρ_k` per UE.
pub fn ul_sinr(alloc: &PowerAllocationUL, gains: &EffectiveGains) -> Vec<f64> {
    let k_ues = gains.num_ues();
    (0..k_ues)
        .map(|k| {
            let signal = alloc.q[k] * gains.ul_cross(k, k).norm_sqr();
            let interference: f64 = (0..k_ues)
                .filter(|&j| j != k)
                .map(|j| alloc.q[j] * gains.ul_cross(k, j).norm_sqr())
                .sum();
            let denom = interference + gains.ul_noise(k);
            if signal == 0.0 {
                0.0
            } else {
                signal / denom
            }
        })
        .collect()
}

/// Incident power density `ξ_k` (W/m²); `true_gains` must be built on the
/// true channels.
pub fn ipd(alloc: &PowerAllocationDL, true_gains: &EffectiveGains, cfg: &SystemConfig) -> Vec<f64> {
    let d = alloc.amplitudes(true_gains.association());
    true_gains.received_power(&d).into_iter().map(|r| cfg.ipd_factor() * r).collect()
}

/// SAR `ε_{k,n} = b_{k,n} q_k` (W/kg), `K × n_body`.
pub fn sar(alloc: &PowerAllocationUL, limits: &[SarLimit]) -> DMatrix<f64> {
    DMatrix::from_fn(alloc.q.len(), limits.len(), |k, n| limits[n].coefficient * alloc.q[k])
}

/// `prelog · B · log₂(1 + sinr)` in bit/s.
pub fn rates(sinr: &[f64], cfg: &SystemConfig, direction: Direction) -> Vec<f64> {
    let prelog = match direction {
        Direction::Dl => cfg.dl_prelog(),
        Direction::Ul => cfg.ul_prelog(),
    };
    sinr.iter().map(|&g| rate(g, prelog, cfg.bandwidth)).collect()
}

pub fn rate(sinr: f64, prelog: f64, bandwidth: f64) -> f64 {
    prelog * bandwidth * sinr.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
    pub min_rate: f64,
}

impl RateReport {
    pub fn new(sinr: Vec<f64>, cfg: &SystemConfig, direction: Direction) -> Self {
        let rate = rates(&sinr, cfg, direction);
        let min_rate = rate.iter().copied().fold(f64::INFINITY, f64::min);
        Self { sinr, rate, min_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureReport {
    pub ipd: Vec<f64>,
    /// Per UE, per body part.
    pub sar: Vec<Vec<f64>>,
}

/// Largest relative constraint violations of a DL allocation: per-AP budget
/// and IPD (on the true channels). Nonpositive means compliant.
pub fn dl_violation(alloc: &PowerAllocationDL, true_gains: &EffectiveGains, cfg: &SystemConfig) -> (f64, f64) {
    let assoc = true_gains.association();
    let budget = alloc
        .ap_powers(assoc)
        .into_iter()
        .map(|p| (p - cfg.ap_power) / cfg.ap_power)
        .fold(f64::NEG_INFINITY, f64::max);
    let exposure = ipd(alloc, true_gains, cfg)
        .into_iter()
        .map(|x| (x - cfg.ipd_limit) / cfg.ipd_limit)
        .fold(f64::NEG_INFINITY, f64::max);
    let negative = alloc.p.iter().map(|&x| -x / cfg.ap_power).fold(f64::NEG_INFINITY, f64::max);
    (budget.max(negative), exposure)
}

/// Largest relative violations of a UL allocation: power budget and SAR.
pub fn ul_violation(alloc: &PowerAllocationUL, cfg: &SystemConfig) -> (f64, f64) {
    let budget = alloc
        .q
        .iter()
        .map(|&q| ((q - cfg.ue_power) / cfg.ue_power).max(-q / cfg.ue_power))
        .fold(f64::NEG_INFINITY, f64::max);
    let s = sar(alloc, &cfg.sar_limits);
    let exposure = (0..s.nrows())
        .flat_map(|k| (0..s.ncols()).map(move |n| (k, n)))
        .map(|(k, n)| (s[(k, n)] - cfg.sar_limits[n].limit) / cfg.sar_limits[n].limit)
        .fold(f64::NEG_INFINITY, f64::max);
    (budget, exposure)
}
