//! SNAIL potential, its expansion around the phase minimum and the derived
//! linear inductance.
//!
//! The normalized inductive energy of a loop with one small junction
//! (`alpha · E_J2`) and `n` large junctions (`E_J2` each) is
//!
//! ```text
//! U(φ) = E_S / E_J2 = -α cos φ - n cos((φ_ext - φ) / n)
//! ```
//!
//! where φ is the phase across the small junction. Around the minimum φ_min
//! the expansion `c2 φ̃² + c3 φ̃³ + c4 φ̃⁴` is taken; the constant term is
//! dropped.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::units::{ghz_to_joules, REDUCED_FLUX_QUANTUM};

/// Iteration cap of the bracketed Newton/bisection root finder.
pub const ROOT_MAX_ITER: usize = 200;
/// Absolute phase tolerance of the root finder (rad).
pub const ROOT_TOL: f64 = 1e-12;
/// Coarse energy-scan samples per 2π of the potential period.
const SCAN_PER_2PI: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnailParams {
    /// E_J1 / E_J2, strictly inside (0, 1).
    pub alpha: f64,
    /// Josephson energy of one large junction, in GHz (E_J2 / h).
    pub e_j2_ghz: f64,
    /// External flux in radians, φ_ext = 2π Φ_ext / Φ₀.
    pub phi_ext: f64,
    /// Number of large junctions.
    pub n_large: u32,
}

impl SnailParams {
    pub fn new(alpha: f64, e_j2_ghz: f64, phi_ext: f64) -> Result<Self> {
        Self::with_junctions(alpha, e_j2_ghz, phi_ext, 3)
    }

    pub fn with_junctions(alpha: f64, e_j2_ghz: f64, phi_ext: f64, n_large: u32) -> Result<Self> {
        let p = Self {
            alpha,
            e_j2_ghz,
            phi_ext,
            n_large,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.e_j2_ghz > 0.0) || !self.e_j2_ghz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "e_j2 must be positive, got {} GHz",
                self.e_j2_ghz
            )));
        }
        if self.n_large == 0 {
            return Err(Error::InvalidParameter("n_large must be >= 1".into()));
        }
        if !self.phi_ext.is_finite() {
            return Err(Error::InvalidParameter("phi_ext must be finite".into()));
        }
        Ok(())
    }

    /// Same device at a different external flux.
    pub fn at_flux(&self, phi_ext: f64) -> Self {
        Self { phi_ext, ..*self }
    }

    pub fn with_e_j2(&self, e_j2_ghz: f64) -> Self {
        Self { e_j2_ghz, ..*self }
    }

    /// φ_ext reduced into (-π, π].
    pub fn reduced_flux(&self) -> f64 {
        wrap_pi(self.phi_ext)
    }

    /// Normalized energy U(φ) = E_S/E_J2 at small-junction phase φ, using the
    /// reduced flux.
    pub fn energy(&self, phi: f64) -> f64 {
        let n = self.n_large as f64;
        -self.alpha * phi.cos() - n * ((self.reduced_flux() - phi) / n).cos()
    }

    /// Closed-form derivative dᵏU/dφᵏ for k = 0..=4.
    pub fn energy_derivative(&self, phi: f64, order: u32) -> f64 {
        let n = self.n_large as f64;
        let theta = (self.reduced_flux() - phi) / n;
        let a = self.alpha;
        match order {
            0 => self.energy(phi),
            1 => a * phi.sin() - theta.sin(),
            2 => a * phi.cos() + theta.cos() / n,
            3 => -a * phi.sin() + theta.sin() / (n * n),
            4 => -a * phi.cos() - theta.cos() / (n * n * n),
            _ => panic!("energy derivative of order {order} not implemented"),
        }
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    y
}

/// Expansion coefficients of U around φ_min and the mixing strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCoeffs {
    pub phi_min: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Three-wave mixing strength, -3 c3 / c2.
    pub chi3: f64,
    /// Four-wave mixing strength, -6 c4 / c2.
    pub chi4: f64,
}

/// Phase φ_min of the global minimum of U for the given flux.
///
/// A coarse scan over one full period of the potential (2π·n in φ) locates
/// the global-minimum basin; the stationarity condition
/// `α sin φ = sin((φ_ext − φ)/n)` is then solved inside the bracket by a
/// safeguarded Newton iteration. The flux is reduced into (−π, π] first, which
/// keeps the returned phase in [−π, π] and continuous along a sweep.
pub fn solve_phi_min(params: &SnailParams) -> Result<f64> {
    params.validate()?;
    let n = params.n_large as f64;
    let period = 2.0 * PI * n;
    let samples = SCAN_PER_2PI * params.n_large as usize;
    let step = period / samples as f64;
    // Centre the scan on the symmetric point of the reduced flux.
    let start = params.reduced_flux() / 2.0 - period / 2.0;

    let mut best = (start, f64::INFINITY);
    for i in 0..samples {
        let phi = start + i as f64 * step;
        let e = params.energy(phi);
        if e < best.1 {
            best = (phi, e);
        }
    }

    let mut lo = best.0 - step;
    let mut hi = best.0 + step;
    let f = |x: f64| params.energy_derivative(x, 1);
    let (mut f_lo, f_hi) = (f(lo), f(hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        // The scan minimum sits on a stationary point: fall back to a wider bracket.
        lo -= step;
        hi += step;
        f_lo = f(lo);
        if f_lo > 0.0 || f(hi) < 0.0 {
            return Err(Error::NoConvergence {
                phi_ext: params.phi_ext,
                iterations: 0,
            });
        }
    }

    let mut x = best.0;
    for _ in 0..ROOT_MAX_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == (f_lo < 0.0) {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let d = params.energy_derivative(x, 2);
        let newton = x - fx / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let moved = (next - x).abs();
        x = next;
        if moved < ROOT_TOL || (hi - lo) < ROOT_TOL {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        phi_ext: params.phi_ext,
        iterations: ROOT_MAX_ITER,
    })
}

/// Taylor coefficients of U around φ_min from closed-form derivatives:
/// `c_k = U⁽ᵏ⁾(φ_min) / k!`.
pub fn taylor_coeffs(params: &SnailParams) -> Result<TaylorCoeffs> {
    let phi_min = solve_phi_min(params)?;
    let c2 = params.energy_derivative(phi_min, 2) / 2.0;
    let c3 = params.energy_derivative(phi_min, 3) / 6.0;
    let c4 = params.energy_derivative(phi_min, 4) / 24.0;
    if !(c2 > 0.0) {
        return Err(Error::UnstableBranch {
            phi_ext: params.phi_ext,
            c2,
        });
    }
    Ok(TaylorCoeffs {
        phi_min,
        c2,
        c3,
        c4,
        chi3: -3.0 * c3 / c2,
        chi4: -6.0 * c4 / c2,
    })
}

/// Linear inductance L = φ₀² / (2 c2 E_J2) in henries.
pub fn snail_inductance(params: &SnailParams) -> Result<f64> {
    let coeffs = taylor_coeffs(params)?;
    Ok(inductance_from_c2(coeffs.c2, params.e_j2_ghz))
}

pub fn inductance_from_c2(c2: f64, e_j2_ghz: f64) -> f64 {
    REDUCED_FLUX_QUANTUM * REDUCED_FLUX_QUANTUM / (2.0 * c2 * ghz_to_joules(e_j2_ghz))
}

/// Josephson energy (GHz) that yields inductance `l` at curvature `c2`.
pub fn e_j2_for_inductance(c2: f64, l: f64) -> f64 {
    REDUCED_FLUX_QUANTUM * REDUCED_FLUX_QUANTUM / (2.0 * c2 * l) / ghz_to_joules(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxRow {
    /// Φ_ext / Φ₀.
    pub flux: f64,
    pub coeffs: TaylorCoeffs,
    pub inductance: f64,
}

/// One row per flux point (given as Φ_ext/Φ₀ fractions). Failures are kept
/// per row; the sweep never aborts. Output order follows the input grid.
pub fn flux_sweep(template: &SnailParams, fluxes: &[f64]) -> Vec<Result<FluxRow>> {
    fluxes
        .par_iter()
        .map(|&flux| {
            let p = template.at_flux(crate::units::flux_fraction_to_rad(flux));
            let coeffs = taylor_coeffs(&p)?;
            Ok(FluxRow {
                flux,
                coeffs,
                inductance: inductance_from_c2(coeffs.c2, p.e_j2_ghz),
            })
        })
        .collect()
}

/// Uniform grid of `points` flux fractions on [lo, hi].
pub fn flux_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// First zero crossing of χ₄ on a sweep, linearly interpolated between the
/// bracketing rows.
pub fn chi4_zero_crossing(rows: &[FluxRow]) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (w[0].coeffs.chi4, w[1].coeffs.chi4);
        if a == 0.0 {
            Some(w[0].flux)
        } else if a.signum() != b.signum() {
            Some(w[0].flux + (w[1].flux - w[0].flux) * a / (a - b))
        } else {
            None
        }
    })
}
