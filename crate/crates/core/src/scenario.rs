//! Declarative scenario configuration: satellites, ground stations, channels,
//! adversary, and simulation horizon. Parsed from TOML; validation collects
//! every violation instead of failing fast.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::adversary::AdversaryModel;
use crate::channel::ChannelParams;
use crate::ogscompat::{OgsSpec, SatSpec};
use crate::orbitpass::{GroundSite, OrbitSpec};
use crate::qkdsession::ProtocolProfile;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("scenario is invalid:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {}: {}", v.field, v.message))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairUnderTest {
    pub ogs_a: String,
    pub ogs_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteConfig {
    pub id: String,
    pub orbit: OrbitSpec,
    pub spec: SatSpec,
    #[serde(default)]
    pub protocol: ProtocolProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgsConfig {
    pub id: String,
    pub site: GroundSite,
    pub spec: OgsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelOverride {
    pub satellite: String,
    pub ogs: String,
    #[serde(flatten)]
    pub params: ChannelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub horizon_s: f64,
    /// Coarse pass-scan resolution; crossings are refined by bisection.
    #[serde(default = "default_scan_step")]
    pub pass_scan_step_s: f64,
    pub pair_under_test: PairUnderTest,
    #[serde(default)]
    pub adversary: AdversaryModel,
    pub channel_defaults: ChannelParams,
    #[serde(default)]
    pub channel_overrides: Vec<ChannelOverride>,
    pub satellites: Vec<SatelliteConfig>,
    pub ogs: Vec<OgsConfig>,
}

fn default_scan_step() -> f64 {
    10.0
}

impl ScenarioConfig {
    pub fn channel_for(&self, satellite_id: &str, ogs_id: &str) -> &ChannelParams {
        self.channel_overrides
            .iter()
            .find(|o| o.satellite == satellite_id && o.ogs == ogs_id)
            .map(|o| &o.params)
            .unwrap_or(&self.channel_defaults)
    }

    pub fn satellite_ids(&self) -> BTreeSet<String> {
        self.satellites.iter().map(|s| s.id.clone()).collect()
    }

    pub fn ogs_by_id(&self, id: &str) -> Option<&OgsConfig> {
        self.ogs.iter().find(|o| o.id == id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates in one step.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    validate_scenario(config)
}

/// Returns the config with defaults applied, or every violation found.
pub fn validate_scenario(config: ScenarioConfig) -> Result<ScenarioConfig, ScenarioError> {
    let mut violations = Vec::new();
    let mut fail = |field: &str, message: String| {
        violations.push(Violation {
            field: field.to_string(),
            message,
        });
    };

    if config.satellites.is_empty() {
        fail("satellites", "at least one satellite is required".into());
    }
    if config.horizon_s <= 0.0 {
        fail("horizon_s", format!("must be positive, got {}", config.horizon_s));
    }
    if config.pass_scan_step_s <= 0.0 {
        fail(
            "pass_scan_step_s",
            format!("must be positive, got {}", config.pass_scan_step_s),
        );
    }

    let ogs_ids: BTreeSet<&str> = config.ogs.iter().map(|o| o.id.as_str()).collect();
    if ogs_ids.len() != config.ogs.len() {
        fail("ogs", "duplicate OGS ids".into());
    }
    let sat_ids: BTreeSet<&str> = config.satellites.iter().map(|s| s.id.as_str()).collect();
    if sat_ids.len() != config.satellites.len() {
        fail("satellites", "duplicate satellite ids".into());
    }
    for side in [&config.pair_under_test.ogs_a, &config.pair_under_test.ogs_b] {
        if !ogs_ids.contains(side.as_str()) {
            fail(
                "pair_under_test",
                format!("OGS id {side:?} is not defined in [ogs]"),
            );
        }
    }
    if config.pair_under_test.ogs_a == config.pair_under_test.ogs_b {
        fail("pair_under_test", "ogs_a and ogs_b must differ".into());
    }
    for compromised in &config.adversary.compromised {
        if !sat_ids.contains(compromised.as_str()) {
            fail(
                "adversary.compromised",
                format!("unknown satellite id {compromised:?}"),
            );
        }
    }

    for sat in &config.satellites {
        let prefix = format!("satellites[{}]", sat.id);
        if sat.orbit.altitude_km <= 0.0 {
            fail(
                &format!("{prefix}.orbit.altitude_km"),
                format!("must be positive, got {}", sat.orbit.altitude_km),
            );
        }
        if !(0.0..=180.0).contains(&sat.orbit.inclination_deg) {
            fail(
                &format!("{prefix}.orbit.inclination_deg"),
                format!("must be in [0, 180], got {}", sat.orbit.inclination_deg),
            );
        }
        for (name, wl) in [
            ("quantum_wavelength_nm", sat.spec.quantum_wavelength_nm),
            ("downlink_beacon_nm", sat.spec.downlink_beacon_nm),
        ] {
            if !(400.0..=1700.0).contains(&wl) {
                fail(
                    &format!("{prefix}.spec.{name}"),
                    format!("must be in [400, 1700] nm, got {wl}"),
                );
            }
        }
        let p = &sat.protocol;
        if !(p.sample_fraction > 0.0 && p.sample_fraction < 1.0) {
            fail(
                &format!("{prefix}.protocol.sample_fraction"),
                format!("must be in (0, 1), got {}", p.sample_fraction),
            );
        }
        if !(p.qber_abort_threshold > 0.0 && p.qber_abort_threshold < 0.5) {
            fail(
                &format!("{prefix}.protocol.qber_abort_threshold"),
                format!("must be in (0, 0.5), got {}", p.qber_abort_threshold),
            );
        }
        if p.reconciliation_block < 1 {
            fail(
                &format!("{prefix}.protocol.reconciliation_block"),
                "must be at least 1".into(),
            );
        }
        if p.pulse_rate <= 0.0 {
            fail(
                &format!("{prefix}.protocol.pulse_rate"),
                format!("must be positive, got {}", p.pulse_rate),
            );
        }
    }

    for ogs in &config.ogs {
        let prefix = format!("ogs[{}]", ogs.id);
        if ogs.site.latitude_deg.abs() > 90.0 {
            fail(
                &format!("{prefix}.site.latitude_deg"),
                format!("must be in [-90, 90], got {}", ogs.site.latitude_deg),
            );
        }
        if ogs.site.longitude_deg.abs() > 180.0 {
            fail(
                &format!("{prefix}.site.longitude_deg"),
                format!("must be in [-180, 180], got {}", ogs.site.longitude_deg),
            );
        }
        if !(0.0..90.0).contains(&ogs.site.min_elevation_deg) {
            fail(
                &format!("{prefix}.site.min_elevation_deg"),
                format!("must be in [0, 90), got {}", ogs.site.min_elevation_deg),
            );
        }
        if ogs.spec.quantum_rx_band.low_nm >= ogs.spec.quantum_rx_band.high_nm {
            fail(
                &format!("{prefix}.spec.quantum_rx_band"),
                "band must satisfy low < high".into(),
            );
        }
        if ogs.spec.pointing_sensors.is_empty() {
            fail(
                &format!("{prefix}.spec.pointing_sensors"),
                "at least one pointing sensor is required".into(),
            );
        }
        for sensor in &ogs.spec.pointing_sensors {
            if sensor.band.low_nm >= sensor.band.high_nm {
                fail(
                    &format!("{prefix}.spec.pointing_sensors[{}].band", sensor.name),
                    "band must satisfy low < high".into(),
                );
            }
        }
    }

    let mut check_channel = |field: &str, ch: &ChannelParams| {
        if !(400.0..=1700.0).contains(&ch.wavelength_nm) {
            fail(
                &format!("{field}.wavelength_nm"),
                format!("must be in [400, 1700] nm, got {}", ch.wavelength_nm),
            );
        }
        for (name, frac) in [
            ("detector_efficiency", ch.detector_efficiency),
            ("intrinsic_error", ch.intrinsic_error),
            ("background_click_prob", ch.background_click_prob),
        ] {
            if !(0.0..=1.0).contains(&frac) {
                fail(
                    &format!("{field}.{name}"),
                    format!("must be in [0, 1], got {frac}"),
                );
            }
        }
        for (name, value) in [
            ("divergence_urad", ch.divergence_urad),
            ("rx_aperture_m", ch.rx_aperture_m),
            ("range_km", ch.range_km),
        ] {
            if value <= 0.0 {
                fail(
                    &format!("{field}.{name}"),
                    format!("must be positive, got {value}"),
                );
            }
        }
        if !(0.0..90.0).contains(&ch.zenith_angle_deg) {
            fail(
                &format!("{field}.zenith_angle_deg"),
                format!("must be in [0, 90), got {}", ch.zenith_angle_deg),
            );
        }
    };
    check_channel("channel_defaults", &config.channel_defaults);
    for (i, over) in config.channel_overrides.iter().enumerate() {
        check_channel(&format!("channel_overrides[{i}]"), &over.params);
    }
    drop(check_channel);

    for (i, over) in config.channel_overrides.iter().enumerate() {
        if !sat_ids.contains(over.satellite.as_str()) {
            violations.push(Violation {
                field: format!("channel_overrides[{i}].satellite"),
                message: format!("unknown satellite id {:?}", over.satellite),
            });
        }
        if !ogs_ids.contains(over.ogs.as_str()) {
            violations.push(Violation {
                field: format!("channel_overrides[{i}].ogs"),
                message: format!("unknown OGS id {:?}", over.ogs),
            });
        }
    }

    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ogscompat::{Band, PointingSensor};

    pub(crate) fn minimal_config() -> ScenarioConfig {
        ScenarioConfig {
            master_seed: 7,
            horizon_s: 6000.0,
            pass_scan_step_s: 10.0,
            pair_under_test: PairUnderTest {
                ogs_a: "A".into(),
                ogs_b: "B".into(),
            },
            adversary: AdversaryModel::default(),
            channel_defaults: ChannelParams {
                wavelength_nm: 810.0,
                divergence_urad: 10.0,
                rx_aperture_m: 0.7,
                range_km: 600.0,
                zenith_angle_deg: 30.0,
                detector_efficiency: 0.5,
                intrinsic_error: 0.01,
                background_click_prob: 0.0,
            },
            channel_overrides: vec![],
            satellites: vec![SatelliteConfig {
                id: "C1".into(),
                orbit: OrbitSpec {
                    altitude_km: 500.0,
                    inclination_deg: 0.0,
                    raan_deg: 0.0,
                    initial_phase_deg: 0.0,
                    epoch_s: 0.0,
                },
                spec: SatSpec {
                    name: "C1".into(),
                    quantum_wavelength_nm: 810.0,
                    downlink_beacon_nm: 980.0,
                    requires_uplink_beacon: false,
                    uplink_beacon_nm: None,
                },
                protocol: ProtocolProfile::default(),
            }],
            ogs: ["A", "B"]
                .iter()
                .enumerate()
                .map(|(i, id)| OgsConfig {
                    id: id.to_string(),
                    site: GroundSite {
                        latitude_deg: 0.0,
                        longitude_deg: 6.0 * i as f64,
                        min_elevation_deg: 10.0,
                    },
                    spec: OgsSpec {
                        quantum_rx_band: Band {
                            low_nm: 750.0,
                            high_nm: 850.0,
                        },
                        pointing_sensors: vec![PointingSensor {
                            name: "Si".into(),
                            band: Band {
                                low_nm: 400.0,
                                high_nm: 1000.0,
                            },
                        }],
                        uplink_beacons: vec![],
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn valid_config_roundtrips_through_toml() {
        let config = minimal_config();
        let text = config.to_toml();
        let parsed = load_scenario(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn negative_altitude_names_the_field() {
        let mut config = minimal_config();
        config.satellites[0].orbit.altitude_km = -1.0;
        match validate_scenario(config) {
            Err(ScenarioError::Invalid(v)) => {
                assert!(v.iter().any(|x| x.field.contains("orbit.altitude_km")));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn unknown_compromised_satellite_is_a_violation() {
        let mut config = minimal_config();
        config.adversary = AdversaryModel::new(["ghost".to_string()]);
        match validate_scenario(config) {
            Err(ScenarioError::Invalid(v)) => {
                assert!(v.iter().any(|x| x.field == "adversary.compromised"));
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn validation_collects_all_violations() {
        let mut config = minimal_config();
        config.horizon_s = -5.0;
        config.satellites[0].orbit.altitude_km = 0.0;
        config.ogs[0].site.latitude_deg = 95.0;
        match validate_scenario(config) {
            Err(ScenarioError::Invalid(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn missing_pair_under_test_field_fails_parse() {
        let config = minimal_config();
        let text = config.to_toml().replace("[pair_under_test]", "[pair_x]");
        assert!(matches!(load_scenario(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn channel_override_lookup() {
        let mut config = minimal_config();
        let mut special = config.channel_defaults.clone();
        special.intrinsic_error = 0.2;
        config.channel_overrides.push(ChannelOverride {
            satellite: "C1".into(),
            ogs: "B".into(),
            params: special.clone(),
        });
        let config = validate_scenario(config).unwrap();
        assert_eq!(config.channel_for("C1", "B"), &special);
        assert_eq!(config.channel_for("C1", "A"), &config.channel_defaults);
    }
}
