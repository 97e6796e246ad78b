//! Physical constants (CODATA 2018 exact SI values) and unit conversions.
//!
//! Internal conventions: energies of the SNAIL junctions are carried in GHz
//! (E / h), frequencies in Hz or rad/s as named, external flux in radians.

use std::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Reduced flux quantum ħ/2e in webers.
pub const REDUCED_FLUX_QUANTUM: f64 = HBAR / (2.0 * ELEMENTARY_CHARGE);

/// Flux quantum h/2e in webers.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Energy quoted as a frequency in GHz, converted to joules.
pub fn ghz_to_joules(e_ghz: f64) -> f64 {
    e_ghz * 1e9 * PLANCK
}

/// Φ_ext / Φ₀ → φ_ext in radians.
pub fn flux_fraction_to_rad(fraction: f64) -> f64 {
    2.0 * PI * fraction
}

pub fn rad_to_flux_fraction(phi_ext: f64) -> f64 {
    phi_ext / (2.0 * PI)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// Amplitude ratio in dB (20·log10).
pub fn amp_db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Power ratio in dB (10·log10).
pub fn pow_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
