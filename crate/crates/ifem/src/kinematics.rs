//! Relativistic electron beam kinematics.
//!
//! For a kinetic energy T the Lorentz factor is γ = 1 + T/m₀c², with
//! β² = 1 − 1/γ². The wavenumber follows from the relativistic momentum,
//! k = γβ·m₀c²/ħc, and the de Broglie wavelength is λ = 2π/k. Inelastic
//! scattering through an energy loss ΔE concentrates near the
//! characteristic angle θ_E = ΔE/(γm₀v²), where γm₀v² = γβ²·m₀c² is
//! carried in energy units.
//!
//! At 300 keV: γ ≈ 1.587, λ ≈ 1.97 pm, k ≈ 3.19×10³ nm⁻¹, and a 20 eV
//! plasmon loss gives θ_E ≈ 41 μrad.

use serde::Serialize;

use crate::constants::{ELECTRON_REST_ENERGY_KEV, HBAR_C_KEV_NM};
use crate::{Error, Result};

/// Derived beam quantities for one accelerating voltage.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BeamParameters {
    /// Kinetic energy T in keV.
    pub kinetic_energy: f64,
    /// Lorentz factor γ = 1 + T/m₀c².
    pub gamma: f64,
    /// Speed as a fraction of c.
    pub beta: f64,
    /// Wavenumber k = γβ·m₀c²/ħc in nm⁻¹.
    pub wavenumber_k: f64,
    /// de Broglie wavelength λ = 2π/k in pm.
    pub wavelength: f64,
    /// γm₀v² = γβ²·m₀c² in keV, the denominator of θ_E.
    pub m_v_squared: f64,
}

/// Compute beam parameters for a kinetic energy in keV.
pub fn electron_parameters(kinetic_energy_kev: f64) -> Result<BeamParameters> {
    if !(kinetic_energy_kev > 0.0) {
        return Err(Error::Domain(format!(
            "kinetic energy must be positive, got {kinetic_energy_kev} keV"
        )));
    }
    let gamma = 1.0 + kinetic_energy_kev / ELECTRON_REST_ENERGY_KEV;
    let beta = (1.0 - 1.0 / (gamma * gamma)).sqrt();
    let wavenumber_k = gamma * beta * ELECTRON_REST_ENERGY_KEV / HBAR_C_KEV_NM;
    let wavelength = 2.0 * std::f64::consts::PI / wavenumber_k * 1.0e3;
    let m_v_squared = gamma * beta * beta * ELECTRON_REST_ENERGY_KEV;
    Ok(BeamParameters {
        kinetic_energy: kinetic_energy_kev,
        gamma,
        beta,
        wavenumber_k,
        wavelength,
        m_v_squared,
    })
}

/// Characteristic inelastic scattering angle θ_E = ΔE/(γm₀v²) in rad, for
/// an energy loss in eV.
pub fn characteristic_inelastic_angle(beam: &BeamParameters, energy_loss_ev: f64) -> Result<f64> {
    if !(energy_loss_ev > 0.0) {
        return Err(Error::Domain(format!(
            "energy loss must be positive, got {energy_loss_ev} eV"
        )));
    }
    Ok(energy_loss_ev * 1.0e-3 / beam.m_v_squared)
}
