//! DL precoders and UL combiners built from channel estimates.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::csi::ChannelEstimateSet;
use crate::linalg::{hpd_inverse, norm_sqr, CMatrix, CVector, C64};
use crate::scenario::Association;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamformerKind {
    Cb,
    Rzf,
}

impl std::str::FromStr for BeamformerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cb" => Ok(Self::Cb),
            "rzf" => Ok(Self::Rzf),
            other => Err(Error::InvalidConfig(format!("unknown beamformer `{other}` (cb, rzf)"))),
        }
    }
}

/// Unit-norm precoders `b_{k,m}` and combiners `f_{k,m}`; zero on
/// non-associated links.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub kind: BeamformerKind,
    num_aps: usize,
    precoders: Vec<CVector>,
    combiners: Vec<CVector>,
}

impl BeamformerSet {
    pub fn precoder(&self, k: usize, m: usize) -> &CVector {
        &self.precoders[k * self.num_aps + m]
    }

    pub fn combiner(&self, k: usize, m: usize) -> &CVector {
        &self.combiners[k * self.num_aps + m]
    }

    /// Builds a set from explicit per-link vectors (`K·M` each, UE-major).
    pub fn from_parts(kind: BeamformerKind, num_aps: usize, precoders: Vec<CVector>, combiners: Vec<CVector>) -> Self {
        Self { kind, num_aps, precoders, combiners }
    }
}

fn normalized(v: &CVector, k: usize, m: usize) -> Result<CVector> {
    let n = norm_sqr(v).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("zero or non-finite vector on link ({k}, {m})")));
    }
    Ok(v / C64::from(n))
}

/// `b = ĥ/‖ĥ‖`, `f = ĥ`.
pub fn conjugate_beamformers(est: &ChannelEstimateSet, assoc: &Association) -> Result<BeamformerSet> {
    let (k_ues, m_aps) = (est.num_ues(), est.num_aps());
    let antennas = est.estimate(0, 0).len();
    let mut precoders = vec![CVector::zeros(antennas); k_ues * m_aps];
    let mut combiners = precoders.clone();
    for (k, m) in assoc.links() {
        let h = est.estimate(k, m);
        precoders[k * m_aps + m] = normalized(h, k, m)?;
        combiners[k * m_aps + m] = h.clone();
    }
    Ok(BeamformerSet { kind: BeamformerKind::Cb, num_aps: m_aps, precoders, combiners })
}

/// Per-AP regularized zero forcing,
/// `f_{k,m} = μ_k (Σ_j μ_j ĥ_j ĥ_jᴴ + η² I)⁻¹ ĥ_{k,m}` over all `K` UEs; the
/// precoder is the normalized combiner.
pub fn rzf_combiners(est: &ChannelEstimateSet, assoc: &Association, cfg: &SystemConfig) -> Result<BeamformerSet> {
    let (k_ues, m_aps) = (est.num_ues(), est.num_aps());
    let antennas = est.estimate(0, 0).len();
    let mu = cfg.pilot_power;
    let mut precoders = vec![CVector::zeros(antennas); k_ues * m_aps];
    let mut combiners = precoders.clone();
    for m in 0..m_aps {
        let served = assoc.served_by(m);
        if served.is_empty() {
            continue;
        }
        let mut gram = CMatrix::identity(antennas, antennas) * C64::from(cfg.noise_var_ap);
        for j in 0..k_ues {
            let h = est.estimate(j, m);
            gram += h * h.adjoint() * C64::from(mu);
        }
        let inv = hpd_inverse(&gram, "RZF Gram matrix")?;
        for k in served {
            let f = &inv * est.estimate(k, m) * C64::from(mu);
            precoders[k * m_aps + m] = normalized(&f, k, m)?;
            combiners[k * m_aps + m] = f;
        }
    }
    Ok(BeamformerSet { kind: BeamformerKind::Rzf, num_aps: m_aps, precoders, combiners })
}

pub fn build(kind: BeamformerKind, est: &ChannelEstimateSet, assoc: &Association, cfg: &SystemConfig) -> Result<BeamformerSet> {
    match kind {
        BeamformerKind::Cb => conjugate_beamformers(est, assoc),
        BeamformerKind::Rzf => rzf_combiners(est, assoc, cfg),
    }
}
