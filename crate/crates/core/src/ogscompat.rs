//! OGS / satellite compatibility checks: quantum-band coverage, pointing
//! sensor coverage for the downlink beacon, and uplink-beacon availability.

use serde::{Deserialize, Serialize};

/// Uplink beacon wavelengths are matched within a filter-bandwidth scale.
pub const UPLINK_MATCH_TOLERANCE_NM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_nm: f64,
    pub high_nm: f64,
}

impl Band {
    pub fn contains(&self, wavelength_nm: f64) -> bool {
        (self.low_nm..=self.high_nm).contains(&wavelength_nm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingSensor {
    pub name: String,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgsSpec {
    pub quantum_rx_band: Band,
    pub pointing_sensors: Vec<PointingSensor>,
    #[serde(default)]
    pub uplink_beacons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatSpec {
    pub name: String,
    pub quantum_wavelength_nm: f64,
    pub downlink_beacon_nm: f64,
    #[serde(default)]
    pub requires_uplink_beacon: bool,
    #[serde(default)]
    pub uplink_beacon_nm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub quantum_ok: bool,
    pub beacon_ok: bool,
    pub uplink_ok: bool,
    pub overall: bool,
}

pub fn check_compatibility(ogs: &OgsSpec, sat: &SatSpec) -> CompatibilityReport {
    let quantum_ok = ogs.quantum_rx_band.contains(sat.quantum_wavelength_nm);
    let beacon_ok = ogs
        .pointing_sensors
        .iter()
        .any(|s| s.band.contains(sat.downlink_beacon_nm));
    let uplink_ok = if sat.requires_uplink_beacon {
        match sat.uplink_beacon_nm {
            Some(needed) => ogs
                .uplink_beacons
                .iter()
                .any(|&have| (have - needed).abs() <= UPLINK_MATCH_TOLERANCE_NM),
            None => false,
        }
    } else {
        true
    };
    CompatibilityReport {
        quantum_ok,
        beacon_ok,
        uplink_ok,
        overall: quantum_ok && beacon_ok && uplink_ok,
    }
}

/// One report per (ogs, satellite) pair, row-major in OGS order.
pub fn fleet_matrix(
    ogs_list: &[(&str, &OgsSpec)],
    sat_list: &[&SatSpec],
) -> Vec<Vec<CompatibilityReport>> {
    ogs_list
        .iter()
        .map(|(_, ogs)| sat_list.iter().map(|sat| check_compatibility(ogs, sat)).collect())
        .collect()
}
