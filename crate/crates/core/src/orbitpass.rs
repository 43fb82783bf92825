//! Circular-orbit pass geometry over a spherical rotating Earth.
//!
//! Good enough for pass windows and the double-downlink separation bound; no
//! J2, drag, or ephemeris ingestion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const MU_KM3_S2: f64 = 398600.4418;
/// Sidereal rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

#[derive(Debug, Error, PartialEq)]
pub enum OrbitError {
    #[error("invalid orbit: altitude_km must be positive, got {0}")]
    InvalidOrbit(f64),
    #[error("invalid geometry: arccos argument {0} outside [-1, 1]")]
    InvalidGeometry(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub initial_phase_deg: f64,
    /// Reference time (s) at which the satellite sits at `initial_phase_deg`.
    #[serde(default)]
    pub epoch_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSite {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub min_elevation_deg: f64,
}

/// One interval during which a satellite sees a site above its mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassWindow {
    pub satellite_id: String,
    pub ogs_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub max_elevation_deg: f64,
}

impl PassWindow {
    pub fn duration_s(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Kepler period for a circular orbit at the given altitude.
pub fn orbital_period(altitude_km: f64) -> Result<f64, OrbitError> {
    if altitude_km <= 0.0 {
        return Err(OrbitError::InvalidOrbit(altitude_km));
    }
    let a = EARTH_RADIUS_KM + altitude_km;
    Ok(2.0 * std::f64::consts::PI * (a.powi(3) / MU_KM3_S2).sqrt())
}

/// Earth-fixed position (km) at time `t`. In-plane circular motion, rotated
/// by inclination about x then RAAN about z, then into the rotating frame.
/// The Greenwich meridian is aligned with the inertial x axis at t = 0.
pub fn propagate(orbit: &OrbitSpec, t: f64) -> Result<[f64; 3], OrbitError> {
    let period = orbital_period(orbit.altitude_km)?;
    let radius = EARTH_RADIUS_KM + orbit.altitude_km;
    let phase = orbit.initial_phase_deg.to_radians()
        + 2.0 * std::f64::consts::PI * (t - orbit.epoch_s) / period;
    let (sin_u, cos_u) = phase.sin_cos();
    let (sin_i, cos_i) = orbit.inclination_deg.to_radians().sin_cos();
    let (sin_o, cos_o) = orbit.raan_deg.to_radians().sin_cos();

    // orbital plane -> inertial equatorial frame
    let x_p = radius * cos_u;
    let y_p = radius * sin_u;
    let x_i = x_p * cos_o - y_p * cos_i * sin_o;
    let y_i = x_p * sin_o + y_p * cos_i * cos_o;
    let z_i = y_p * sin_i;

    // inertial -> Earth-fixed
    let theta = EARTH_ROTATION_RAD_S * t;
    let (sin_t, cos_t) = theta.sin_cos();
    Ok([
        x_i * cos_t + y_i * sin_t,
        -x_i * sin_t + y_i * cos_t,
        z_i,
    ])
}

fn site_ecef(site: &GroundSite) -> [f64; 3] {
    let (sin_lat, cos_lat) = site.latitude_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = site.longitude_deg.to_radians().sin_cos();
    [
        EARTH_RADIUS_KM * cos_lat * cos_lon,
        EARTH_RADIUS_KM * cos_lat * sin_lon,
        EARTH_RADIUS_KM * sin_lat,
    ]
}

/// Elevation of a satellite position above the site's local horizon, degrees
/// in [-90, 90].
pub fn elevation(site: &GroundSite, sat_pos: &[f64; 3]) -> f64 {
    let s = site_ecef(site);
    let d = [sat_pos[0] - s[0], sat_pos[1] - s[1], sat_pos[2] - s[2]];
    let d_norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    // local up is the unit site vector on a sphere
    let up_dot = (s[0] * d[0] + s[1] * d[1] + s[2] * d[2]) / (EARTH_RADIUS_KM * d_norm);
    up_dot.clamp(-1.0, 1.0).asin().to_degrees()
}

fn elevation_at(orbit: &OrbitSpec, site: &GroundSite, t: f64) -> f64 {
    elevation(site, &propagate(orbit, t).expect("orbit validated by caller"))
}

/// Scans `[t0, t1]` at `step` resolution and refines mask crossings by
/// bisection to 0.1 s. Windows are maximal, sorted, and non-overlapping.
pub fn find_passes(
    orbit: &OrbitSpec,
    site: &GroundSite,
    satellite_id: &str,
    ogs_id: &str,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Vec<PassWindow>, OrbitError> {
    propagate(orbit, t0)?; // validates the orbit once
    assert!(t0 < t1 && step > 0.0, "require t0 < t1 and step > 0");
    let mask = site.min_elevation_deg;
    let above = |t: f64| elevation_at(orbit, site, t) >= mask;

    let bisect = |mut lo: f64, mut hi: f64, rising: bool| -> f64 {
        // invariant: above(lo) != above(hi)
        while hi - lo > 0.1 {
            let mid = 0.5 * (lo + hi);
            if above(mid) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut windows = Vec::new();
    let mut t = t0;
    let mut in_pass = above(t0);
    let mut start = if in_pass { t0 } else { 0.0 };
    while t < t1 {
        let next = (t + step).min(t1);
        let next_above = above(next);
        if !in_pass && next_above {
            start = bisect(t, next, false);
            in_pass = true;
        } else if in_pass && !next_above {
            let end = bisect(t, next, true);
            windows.push((start, end));
            in_pass = false;
        }
        t = next;
    }
    if in_pass {
        windows.push((start, t1));
    }

    Ok(windows
        .into_iter()
        .map(|(t_start, t_end)| {
            let samples = 200;
            let max_elevation_deg = (0..=samples)
                .map(|i| {
                    let tt = t_start + (t_end - t_start) * i as f64 / samples as f64;
                    elevation_at(orbit, site, tt)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            PassWindow {
                satellite_id: satellite_id.to_string(),
                ogs_id: ogs_id.to_string(),
                t_start,
                t_end,
                max_elevation_deg,
            }
        })
        .collect())
}

/// Upper bound on the separation of two ground stations that can see the same
/// satellite simultaneously: 2 R psi with
/// psi = arccos((R/(R+h)) cos e) - e at elevation mask e.
pub fn max_simultaneous_separation(
    altitude_km: f64,
    min_elevation_deg: f64,
) -> Result<f64, OrbitError> {
    if altitude_km <= 0.0 {
        return Err(OrbitError::InvalidOrbit(altitude_km));
    }
    let e = min_elevation_deg.to_radians();
    let arg = (EARTH_RADIUS_KM / (EARTH_RADIUS_KM + altitude_km)) * e.cos();
    if !(-1.0..=1.0).contains(&arg) {
        return Err(OrbitError::InvalidGeometry(arg));
    }
    let psi = arg.acos() - e;
    Ok(2.0 * EARTH_RADIUS_KM * psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equatorial_orbit() -> OrbitSpec {
        OrbitSpec {
            altitude_km: 500.0,
            inclination_deg: 0.0,
            raan_deg: 0.0,
            initial_phase_deg: 0.0,
            epoch_s: 0.0,
        }
    }

    fn equatorial_site() -> GroundSite {
        GroundSite {
            latitude_deg: 0.0,
            longitude_deg: 0.0,
            min_elevation_deg: 10.0,
        }
    }

    #[test]
    fn period_closed_form() {
        let t = orbital_period(500.0).unwrap();
        assert!((t - 5668.14).abs() < 0.01);
        assert!(orbital_period(600.0).unwrap() > t);
        assert_eq!(orbital_period(-1.0), Err(OrbitError::InvalidOrbit(-1.0)));
    }

    #[test]
    fn equatorial_orbit_stays_equatorial() {
        let orbit = equatorial_orbit();
        for t in [0.0, 137.0, 2500.0, 9000.0] {
            let p = propagate(&orbit, t).unwrap();
            assert!(p[2].abs() < 1e-9, "z stays 0 for inclination 0");
        }
    }

    #[test]
    fn radius_preserved_over_ten_periods() {
        let orbit = OrbitSpec {
            altitude_km: 550.0,
            inclination_deg: 51.6,
            raan_deg: 40.0,
            initial_phase_deg: 77.0,
            epoch_s: 0.0,
        };
        let r_expect = EARTH_RADIUS_KM + 550.0;
        let period = orbital_period(550.0).unwrap();
        for i in 0..100 {
            let t = 10.0 * period * i as f64 / 100.0;
            let p = propagate(&orbit, t).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r / r_expect - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zenith_and_antipode_elevations() {
        let site = equatorial_site();
        let zenith = [EARTH_RADIUS_KM + 500.0, 0.0, 0.0];
        assert!((elevation(&site, &zenith) - 90.0).abs() < 1e-9);
        let antipode = [-(EARTH_RADIUS_KM + 500.0), 0.0, 0.0];
        assert!(elevation(&site, &antipode) < 0.0);
    }

    #[test]
    fn horizon_cone_elevation_zero() {
        let site = equatorial_site();
        // satellite on the horizon cone: central angle psi at mask 0
        let psi = (EARTH_RADIUS_KM / (EARTH_RADIUS_KM + 500.0)).acos();
        let r = EARTH_RADIUS_KM + 500.0;
        let pos = [r * psi.cos(), r * psi.sin(), 0.0];
        assert!(elevation(&site, &pos).abs() < 1e-6);
    }

    #[test]
    fn equatorial_site_sees_equatorial_orbit() {
        let orbit = equatorial_orbit();
        let site = equatorial_site();
        let period = orbital_period(500.0).unwrap();
        let passes =
            find_passes(&orbit, &site, "C1", "A", 0.0, 1.5 * period, 10.0).unwrap();
        assert!(!passes.is_empty());
        for w in &passes {
            assert!(w.t_start < w.t_end);
            assert!(w.max_elevation_deg >= site.min_elevation_deg);
        }
        // sorted, non-overlapping
        for pair in passes.windows(2) {
            assert!(pair[0].t_end <= pair[1].t_start);
        }
    }

    #[test]
    fn polar_site_never_sees_equatorial_orbit() {
        let orbit = equatorial_orbit();
        let site = GroundSite {
            latitude_deg: 89.0,
            longitude_deg: 0.0,
            min_elevation_deg: 10.0,
        };
        let passes =
            find_passes(&orbit, &site, "C1", "P", 0.0, 2.0 * 5668.0, 10.0).unwrap();
        assert!(passes.is_empty());
    }

    #[test]
    fn window_boundaries_are_tight() {
        // phase offset keeps the pass away from the scan boundaries
        let orbit = OrbitSpec {
            initial_phase_deg: -90.0,
            ..equatorial_orbit()
        };
        let site = equatorial_site();
        let passes = find_passes(&orbit, &site, "C1", "A", 0.0, 5668.0, 10.0).unwrap();
        let w = &passes[0];
        for i in 1..=10 {
            let t = w.t_start + w.duration_s() * i as f64 / 11.0;
            assert!(elevation_at(&orbit, &site, t) >= site.min_elevation_deg);
        }
        if w.t_start > 1.0 {
            assert!(elevation_at(&orbit, &site, w.t_start - 1.0) < site.min_elevation_deg);
        }
        assert!(elevation_at(&orbit, &site, w.t_end + 1.0) < site.min_elevation_deg);
    }

    #[test]
    fn separation_closed_form_at_20deg() {
        let sep = max_simultaneous_separation(500.0, 20.0).unwrap();
        let e = 20f64.to_radians();
        let psi = ((EARTH_RADIUS_KM / 6871.0) * e.cos()).acos() - e;
        assert!((sep - 2.0 * EARTH_RADIUS_KM * psi).abs() < 1e-9);
        assert!((psi.to_degrees() - 9.39).abs() < 0.05);
        assert!((sep - 2088.0).abs() < 5.0);
    }

    #[test]
    fn separation_monotonicity() {
        // strictly decreasing in the mask
        let mut prev = f64::INFINITY;
        for e in [5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 80.0] {
            let s = max_simultaneous_separation(500.0, e).unwrap();
            assert!(s < prev);
            prev = s;
        }
        // increasing in altitude
        let mut prev = 0.0;
        for h in [300.0, 500.0, 800.0, 1200.0] {
            let s = max_simultaneous_separation(h, 20.0).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn separation_vanishes_at_zenith_only_visibility() {
        let s = max_simultaneous_separation(500.0, 89.9999).unwrap();
        assert!(s.abs() < 0.1);
    }

    #[test]
    fn separation_brackets_the_double_downlink_limit() {
        // somewhere in a realistic mask range the bound crosses 1000 km
        let hi = max_simultaneous_separation(500.0, 20.0).unwrap();
        let lo = max_simultaneous_separation(500.0, 45.0).unwrap();
        assert!(lo < 1000.0 && 1000.0 < hi);
    }
}
