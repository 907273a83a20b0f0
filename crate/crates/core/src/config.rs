//! Physical and protocol constants of the simulated network.

use serde::{Deserialize, Serialize};

use crate::linalg::dbm_to_watt;
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One SAR body-part entry: exposure coefficient `b` (kg⁻¹) and limit `E` (W/kg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarLimit {
    pub coefficient: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub num_ues: usize,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    /// APs serving each UE.
    pub cluster_size: usize,
    /// Side of the square, wrapped-around deployment area (m).
    pub area_side: f64,
    pub ap_height: f64,
    pub ue_height: f64,
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    /// Noise power spectral density (dBm/Hz).
    pub noise_psd_dbm: f64,
    /// Receiver noise variance at the UEs (W).
    pub noise_var_ue: f64,
    /// Receiver noise variance at the APs (W).
    pub noise_var_ap: f64,
    /// Per-AP transmit budget (W).
    pub ap_power: f64,
    /// Per-UE transmit budget (W).
    pub ue_power: f64,
    /// UL pilot power (W).
    pub pilot_power: f64,
    pub frame_len: usize,
    pub pilot_len: usize,
    pub dl_len: usize,
    pub ul_len: usize,
    /// IPD limit (W/m²).
    pub ipd_limit: f64,
    pub sar_limits: Vec<SarLimit>,
    pub min_ue_ap_distance: f64,
    pub shadowing_std_db: f64,
    pub plos_cap: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SystemConfig {
    /// Full-size deployment: 8 UEs, 16 four-antenna APs, 5 APs per UE.
    pub fn paper() -> Self {
        Self::with_dimensions(8, 16, 4, 5)
    }

    /// Desk-scale deployment used for acceptance runs.
    pub fn small() -> Self {
        Self::with_dimensions(4, 8, 2, 3)
    }

    /// Default constants for the given network dimensions; the pilot length
    /// and DL/UL split follow `τ_p = K/2`, `τ_d = τ_u = (τ_c − τ_p)/2`.
    pub fn with_dimensions(num_ues: usize, num_aps: usize, antennas: usize, cluster: usize) -> Self {
        let bandwidth = 20e6;
        let noise_psd_dbm = -174.0;
        let noise = dbm_to_watt(noise_psd_dbm) * bandwidth;
        let frame_len = 200;
        let pilot_len = (num_ues / 2).max(1);
        let data = (frame_len - pilot_len) / 2;
        Self {
            num_ues,
            num_aps,
            antennas_per_ap: antennas,
            cluster_size: cluster,
            // 0.5 km² square.
            area_side: (0.5e6f64).sqrt(),
            ap_height: 10.0,
            ue_height: 1.65,
            carrier_frequency: 3.5e9,
            bandwidth,
            noise_psd_dbm,
            noise_var_ue: noise,
            noise_var_ap: noise,
            ap_power: dbm_to_watt(23.0),
            ue_power: dbm_to_watt(20.0),
            pilot_power: dbm_to_watt(20.0),
            frame_len,
            pilot_len,
            dl_len: data,
            ul_len: data,
            ipd_limit: 10.0,
            sar_limits: vec![SarLimit { coefficient: 8.0, limit: 0.08 }],
            min_ue_ap_distance: 10.0,
            shadowing_std_db: 4.0,
            plos_cap: 0.99,
        }
    }

    /// Sets `τ_p` and re-splits the remaining frame evenly between DL and UL.
    pub fn set_pilot_len(&mut self, pilot_len: usize) {
        self.pilot_len = pilot_len;
        self.dl_len = self.frame_len.saturating_sub(pilot_len) / 2;
        self.ul_len = self.dl_len;
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// `4π/λ²`, the factor converting received power into incident power density.
    pub fn ipd_factor(&self) -> f64 {
        4.0 * std::f64::consts::PI / self.wavelength().powi(2)
    }

    pub fn dl_prelog(&self) -> f64 {
        self.dl_len as f64 / self.frame_len as f64
    }

    pub fn ul_prelog(&self) -> f64 {
        self.ul_len as f64 / self.frame_len as f64
    }

    /// Largest UL power satisfying both the budget and every SAR limit.
    pub fn ul_power_cap(&self) -> f64 {
        self.sar_limits
            .iter()
            .map(|s| s.limit / s.coefficient)
            .fold(self.ue_power, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_ues == 0 || self.num_aps == 0 || self.antennas_per_ap == 0 {
            return bad("K, M and L must be positive".into());
        }
        if self.cluster_size == 0 || self.cluster_size > self.num_aps {
            return bad(format!(
                "cluster size {} must lie in 1..={}",
                self.cluster_size, self.num_aps
            ));
        }
        if self.pilot_len == 0 {
            return bad("pilot length must be at least 1".into());
        }
        if self.pilot_len + self.dl_len + self.ul_len > self.frame_len {
            return bad(format!(
                "τ_p + τ_d + τ_u = {} exceeds τ_c = {}",
                self.pilot_len + self.dl_len + self.ul_len,
                self.frame_len
            ));
        }
        let positive = [
            ("area_side", self.area_side),
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth", self.bandwidth),
            ("noise_var_ue", self.noise_var_ue),
            ("noise_var_ap", self.noise_var_ap),
            ("ap_power", self.ap_power),
            ("ue_power", self.ue_power),
            ("pilot_power", self.pilot_power),
            ("ipd_limit", self.ipd_limit),
            ("min_ue_ap_distance", self.min_ue_ap_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return bad(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.shadowing_std_db < 0.0 || !self.shadowing_std_db.is_finite() {
            return bad("shadowing_std_db must be finite and nonnegative".into());
        }
        if !(self.plos_cap > 0.0 && self.plos_cap < 1.0) {
            return bad(format!("plos_cap must lie in (0, 1), got {}", self.plos_cap));
        }
        for s in &self.sar_limits {
            if !(s.coefficient > 0.0 && s.limit > 0.0) {
                return bad("SAR coefficients and limits must be strictly positive".into());
            }
        }
        if self.min_ue_ap_distance >= self.area_side / 2.0 {
            return bad("min_ue_ap_distance must be below half the area side".into());
        }
        Ok(())
    }
}
