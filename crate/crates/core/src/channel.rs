//! Free-space optical link budget.
//!
//! Produces a per-pulse signal click probability and an error rate for the
//! QKD session model. The geometric term is a uniform-spot overfill ratio;
//! the atmospheric term is a toy Rayleigh model with lambda^-4 scaling and a
//! plane-parallel sec(z) air mass. Absolute accuracy is a non-goal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rayleigh optical depth at the reference wavelength, zenith view.
const TAU_REF: f64 = 0.25;
const LAMBDA_REF_NM: f64 = 550.0;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("zenith angle {0} deg is at or below the horizon")]
    BelowHorizon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub wavelength_nm: f64,
    /// Transmitter full-angle divergence, microradians.
    pub divergence_urad: f64,
    pub rx_aperture_m: f64,
    pub range_km: f64,
    pub zenith_angle_deg: f64,
    pub detector_efficiency: f64,
    pub intrinsic_error: f64,
    pub background_click_prob: f64,
}

/// Collected-to-emitted power ratio for a uniform spot, clamped at 1 when the
/// aperture exceeds the spot.
pub fn geometric_transmittance(params: &ChannelParams) -> Result<f64, ChannelError> {
    if params.range_km <= 0.0 {
        return Err(ChannelError::InvalidChannel(format!(
            "range_km must be positive, got {}",
            params.range_km
        )));
    }
    if params.divergence_urad <= 0.0 {
        return Err(ChannelError::InvalidChannel(format!(
            "divergence_urad must be positive, got {}",
            params.divergence_urad
        )));
    }
    let spot_m = params.range_km * 1e3 * params.divergence_urad * 1e-6;
    Ok((params.rx_aperture_m / spot_m).powi(2).min(1.0))
}

/// T = exp(-tau(lambda) * sec(z)), tau(lambda) = tau0 * (lambda0/lambda)^4.
pub fn atmospheric_transmittance(
    wavelength_nm: f64,
    zenith_angle_deg: f64,
) -> Result<f64, ChannelError> {
    if zenith_angle_deg >= 90.0 {
        return Err(ChannelError::BelowHorizon(zenith_angle_deg));
    }
    let tau = TAU_REF * (LAMBDA_REF_NM / wavelength_nm).powi(4);
    let air_mass = 1.0 / zenith_angle_deg.to_radians().cos();
    Ok((-tau * air_mass).exp())
}

/// Per-pulse (p_signal_click, p_error). Errors on signal clicks come from the
/// intrinsic channel error; background clicks are uncorrelated and carry 0.5.
pub fn link_outcome_probabilities(params: &ChannelParams) -> Result<(f64, f64), ChannelError> {
    let p_signal = geometric_transmittance(params)?
        * atmospheric_transmittance(params.wavelength_nm, params.zenith_angle_deg)?
        * params.detector_efficiency;
    let denom = p_signal + params.background_click_prob;
    let p_error = if denom > 0.0 {
        (params.intrinsic_error * p_signal + 0.5 * params.background_click_prob) / denom
    } else {
        0.0
    };
    Ok((p_signal.clamp(0.0, 1.0), p_error.clamp(0.0, 1.0)))
}
