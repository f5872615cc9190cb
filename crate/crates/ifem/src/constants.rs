//! Physical constants, CODATA values in the crate's internal units
//! (keV, nm, rad).

/// Electron rest energy m₀c², keV.
pub const ELECTRON_REST_ENERGY_KEV: f64 = 510.999;

/// ħc in keV·nm. Dividing an energy-momentum pc (keV) by this gives a
/// wavenumber in nm⁻¹.
pub const HBAR_C_KEV_NM: f64 = 0.19732698;

/// Bohr radius a₀, nm. Tabulated scattering amplitudes are stored in units
/// of a₀; areal densities are made dimensionless with a₀².
pub const BOHR_RADIUS_NM: f64 = 0.052918;

/// Rydberg energy, eV.
pub const RYDBERG_EV: f64 = 13.6;

/// Avogadro's number scaled for densities: molecules per nm³ equals
/// ρ[g/cm³] · AVOGADRO_PER_NM3 / M[g/mol].
pub const AVOGADRO_PER_NM3: f64 = 602.21408;
