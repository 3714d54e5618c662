//! Scenario configuration.
//!
//! The on-disk form is a flat TOML key/value file. Every key is optional and
//! falls back to the reference simulation setting (60 GHz carrier, 100 MHz
//! bandwidth, 8x8 array with 4x4 low-resolution beams, 25 paths, -6 dB
//! reflection gain, 9.5 dB noise figure, 10 m BS height, 0.1 s frames).
//!
//! Powers are given in dBm here and converted to watts exactly once, by the
//! accessor methods below. Everything downstream works in linear units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::UpaGeometry;
use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise power spectral density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Which channel the SINR interference term is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceModel {
    /// `p_i |h_k^H w_i|^2`: UE k's own channel against other UEs' beams.
    #[default]
    OwnChannel,
    /// `p_i |h_i^H w_i|^2`: the other UE's own beam gain.
    Printed,
}

/// Stationarity conditions used by the power allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// KKT conditions of the sum-rate itself: each UE's water level is
    /// lowered by the marginal rate loss it causes the others.
    #[default]
    SumRate,
    /// Per-UE water-filling against the current interference, ignoring the
    /// effect on other UEs.
    Selfish,
}

/// How the low-resolution beam images are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LowResMode {
    /// Lattice subsampling of the high-resolution beam grid.
    #[default]
    Subsample,
    /// Sweep a small DFT codebook on a decimated sub-array.
    WideBeam,
}

/// Whether sign planes are used when turning squared parts back into
/// complex amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    Preserve,
    /// `sqrt(re^2) + j sqrt(im^2)`, signs dropped.
    Fidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub array_vertical: usize,
    pub array_horizontal: usize,
    pub lowres_vertical: usize,
    pub lowres_horizontal: usize,
    pub ue_count: usize,
    pub path_count: usize,
    /// Total downlink power budget for single runs.
    pub p_max_dbm: f64,
    /// Budgets visited by `evaluate`.
    pub p_max_dbm_sweep: Vec<f64>,
    /// Per-beam transmit power during the sweep.
    pub sweep_power_dbm: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal-noise link budget when set.
    pub noise_power_dbm: Option<f64>,
    pub reflection_gain_db: f64,
    /// Signal-to-interference power ratio. Scales the gain of reflected paths
    /// whose scatterer belongs to another UE's cluster by `10^(-sir/20)`.
    pub sir_db: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub frame_interval_s: f64,
    pub frames: usize,
    /// Number of past low-resolution frames per episode.
    pub window: usize,
    pub top_m: usize,
    pub m_sweep: Vec<usize>,
    pub seeds: Vec<u64>,
    pub ue_speed_mps: f64,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    /// Keep the `sqrt(M_tx)` factor inside each path gain.
    pub array_factor_in_path_gain: bool,
    pub interference: InterferenceModel,
    pub power_mode: PowerMode,
    pub lowres_mode: LowResMode,
    pub sign_mode: SignMode,
    pub sweep_noise: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            carrier_frequency_hz: 60e9,
            bandwidth_hz: 100e6,
            array_vertical: 8,
            array_horizontal: 8,
            lowres_vertical: 4,
            lowres_horizontal: 4,
            ue_count: 4,
            path_count: 25,
            p_max_dbm: 12.0,
            p_max_dbm_sweep: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 12.0],
            sweep_power_dbm: 12.0,
            noise_figure_db: 9.5,
            noise_power_dbm: None,
            reflection_gain_db: -6.0,
            sir_db: 10.0,
            bs_height_m: 10.0,
            ue_height_m: 1.5,
            frame_interval_s: 0.1,
            frames: 30,
            window: 3,
            top_m: 10,
            m_sweep: vec![4, 10, 30],
            seeds: vec![1],
            ue_speed_mps: 1.0,
            cell_radius_m: 50.0,
            min_distance_m: 10.0,
            array_factor_in_path_gain: true,
            interference: InterferenceModel::OwnChannel,
            power_mode: PowerMode::SumRate,
            lowres_mode: LowResMode::Subsample,
            sign_mode: SignMode::Preserve,
            sweep_noise: true,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.carrier_frequency_hz > 0.0) {
            return bad("carrier_frequency_hz must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive");
        }
        if self.array_vertical == 0 || self.array_horizontal == 0 {
            return bad("array dimensions must be at least 1");
        }
        if self.lowres_vertical == 0 || self.lowres_horizontal == 0 {
            return bad("low-resolution dimensions must be at least 1");
        }
        if self.lowres_vertical > self.array_vertical || self.lowres_horizontal > self.array_horizontal {
            return bad("low-resolution grid must not exceed the array grid");
        }
        if !self.array_vertical.is_multiple_of(self.lowres_vertical) || !self.array_horizontal.is_multiple_of(self.lowres_horizontal) {
            return bad("array dimensions must be multiples of the low-resolution dimensions");
        }
        if self.ue_count == 0 {
            return bad("ue_count must be at least 1");
        }
        if self.ue_count > self.array_vertical * self.array_horizontal {
            return bad("ue_count exceeds the number of beams");
        }
        if self.path_count == 0 {
            return bad("path_count must be at least 1");
        }
        if self.window == 0 {
            return bad("window (s) must be at least 1");
        }
        if self.top_m == 0 || self.m_sweep.contains(&0) {
            return bad("top-m parameter must be at least 1");
        }
        if !(self.frame_interval_s > 0.0) {
            return bad("frame_interval_s must be positive");
        }
        if !(self.ue_speed_mps >= 0.0) {
            return bad("ue_speed_mps must be nonnegative");
        }
        if !(self.min_distance_m > 0.0) || !(self.cell_radius_m > self.min_distance_m) {
            return bad("need 0 < min_distance_m < cell_radius_m");
        }
        let finite = [
            self.p_max_dbm,
            self.sweep_power_dbm,
            self.noise_figure_db,
            self.reflection_gain_db,
            self.sir_db,
            self.bs_height_m,
            self.ue_height_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.p_max_dbm_sweep.iter().any(|v| !v.is_finite()) {
            return bad("non-finite numeric value");
        }
        if let Some(n) = self.noise_power_dbm {
            if !n.is_finite() {
                return bad("noise_power_dbm must be finite");
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn geometry(&self) -> UpaGeometry {
        UpaGeometry::new(self.array_vertical, self.array_horizontal, self.wavelength())
            .expect("validated config yields a valid geometry")
    }

    pub fn low_res_dims(&self) -> (usize, usize) {
        (self.lowres_vertical, self.lowres_horizontal)
    }

    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_power_dbm
            .unwrap_or(THERMAL_NOISE_DBM_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db)
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm())
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn sweep_power_watts(&self) -> f64 {
        dbm_to_watts(self.sweep_power_dbm)
    }

    pub fn reflection_gain(&self) -> f64 {
        db_to_linear(self.reflection_gain_db)
    }

    /// Amplitude scale for cross-cluster reflected paths.
    pub fn cross_path_scale(&self) -> f64 {
        10f64.powf(-self.sir_db / 20.0)
    }
}
