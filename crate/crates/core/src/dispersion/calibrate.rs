//! Fixes E_J2 and C from two observable targets: the low-frequency line
//! impedance and the lower edge of the first stop band at an operating flux.

use std::f64::consts::PI;
use std::fmt;

use super::{bloch, find_bands, first_stop_band, Band};
use crate::device::Device;
use crate::error::{Error, Result};
use crate::twoport::C64;

/// Band scan step used inside the calibration loop.
const SCAN_STEP_HZ: f64 = 5e6;
const MAX_ITER: usize = 50;
const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    /// Cell layout; `e_j2_ghz` and `capacitance` only seed the search.
    pub layout: Device,
    /// Target √(L_avg/C), ohms.
    pub line_impedance: f64,
    /// Flux (Φ_ext/Φ₀) at which the impedance target applies.
    pub impedance_flux: f64,
    /// Target lower edge of the first stop band, Hz.
    pub edge_hz: f64,
    /// Flux at which the edge target applies.
    pub edge_flux: f64,
}

impl CalibrationTargets {
    /// 50 Ω and an 11.5 GHz gap edge, both at the 0.38 Φ₀ operating point.
    pub fn reference(layout: Device) -> Self {
        Self {
            layout,
            line_impedance: 50.0,
            impedance_flux: 0.38,
            edge_hz: 11.5e9,
            edge_flux: 0.38,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub e_j2_ghz: f64,
    pub capacitance: f64,
    pub l1_zero_flux: f64,
    pub l1_edge_flux: f64,
    /// ω_c = 2/√(L₁C) of the unloaded cell at zero flux, rad/s.
    pub omega_cutoff_zero_flux: f64,
    pub line_impedance: f64,
    pub edge_hz: f64,
    pub bands_at_edge_flux: Vec<Band>,
    /// Exact Bloch impedance at 4–8 GHz (impedance flux).
    pub bloch_impedance: Vec<(f64, C64)>,
    pub residuals: [f64; 2],
    /// (iteration, e_j2 GHz, C farads, impedance residual, edge residual).
    pub trace: Vec<(usize, f64, f64, f64, f64)>,
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[calibration]")?;
        writeln!(f, "e_j2_ghz = {:.9e}", self.e_j2_ghz)?;
        writeln!(f, "capacitance_f = {:.9e}", self.capacitance)?;
        writeln!(f, "l1_zero_flux_h = {:.9e}", self.l1_zero_flux)?;
        writeln!(f, "l1_edge_flux_h = {:.9e}", self.l1_edge_flux)?;
        writeln!(
            f,
            "f_cutoff_zero_flux_hz = {:.9e}",
            self.omega_cutoff_zero_flux / (2.0 * PI)
        )?;
        writeln!(f, "line_impedance_ohm = {:.9}", self.line_impedance)?;
        writeln!(f, "first_stop_band_lower_edge_hz = {:.9e}", self.edge_hz)?;
        writeln!(
            f,
            "residuals = [{:.3e}, {:.3e}]",
            self.residuals[0], self.residuals[1]
        )?;
        writeln!(f, "\n[bands_at_edge_flux]")?;
        for b in &self.bands_at_edge_flux {
            writeln!(f, "{:?} {:.6e} {:.6e}", b.kind, b.f_lo, b.f_hi)?;
        }
        writeln!(f, "\n[bloch_impedance]")?;
        for (freq, z) in &self.bloch_impedance {
            writeln!(f, "{:.3e} Hz: {:.4} {:+.4}i ohm", freq, z.re, z.im)?;
        }
        writeln!(f, "\n[search_trace]")?;
        for (i, e, c, r1, r2) in &self.trace {
            writeln!(f, "{i}: e_j2={e:.9e} C={c:.9e} r=({r1:.3e}, {r2:.3e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub device: Device,
    pub report: CalibrationReport,
}

fn residuals(t: &CalibrationTargets, x: [f64; 2]) -> Result<[f64; 2]> {
    let d = Device {
        e_j2_ghz: x[0].exp(),
        capacitance: x[1].exp(),
        ..t.layout
    };
    let z = d.line_impedance(t.impedance_flux)?;
    let edge = first_stop_band(&d.supercell(t.edge_flux)?, SCAN_STEP_HZ)?.f_lo;
    Ok([z / t.line_impedance - 1.0, edge / t.edge_hz - 1.0])
}

/// Two-parameter Newton solve in (ln E_J2, ln C) with a forward-difference
/// Jacobian and step halving.
pub fn calibrate(targets: &CalibrationTargets) -> Result<Calibration> {
    targets.layout.validate()?;
    if !(targets.line_impedance > 0.0 && targets.edge_hz > 0.0) {
        return Err(Error::InvalidParameter("calibration targets must be positive".into()));
    }
    let mut x = [targets.layout.e_j2_ghz.ln(), targets.layout.capacitance.ln()];
    let mut r = residuals(targets, x)?;
    let mut trace = vec![(0, x[0].exp(), x[1].exp(), r[0], r[1])];
    let h = 1e-4;

    for iter in 1..=MAX_ITER {
        if r[0].abs().max(r[1].abs()) < RESIDUAL_TOL {
            break;
        }
        let r_e = residuals(targets, [x[0] + h, x[1]])?;
        let r_c = residuals(targets, [x[0], x[1] + h])?;
        let j = [
            [(r_e[0] - r[0]) / h, (r_c[0] - r[0]) / h],
            [(r_e[1] - r[1]) / h, (r_c[1] - r[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return Err(Error::Calibration(format!(
                "singular Jacobian at iteration {iter}; trace: {trace:?}"
            )));
        }
        let dx = [
            -(j[1][1] * r[0] - j[0][1] * r[1]) / det,
            -(-j[1][0] * r[0] + j[0][0] * r[1]) / det,
        ];
        let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());
        let mut step = 1.0;
        loop {
            let trial = [x[0] + step * dx[0], x[1] + step * dx[1]];
            match residuals(targets, trial) {
                Ok(rt) if norm(rt) < norm(r) || step < 1e-3 => {
                    x = trial;
                    r = rt;
                    break;
                }
                _ if step < 1e-3 => {
                    return Err(Error::Calibration(format!(
                        "line search failed at iteration {iter}; residuals {r:?}; trace: {trace:?}"
                    )))
                }
                _ => step *= 0.5,
            }
        }
        trace.push((iter, x[0].exp(), x[1].exp(), r[0], r[1]));
    }
    if r[0].abs().max(r[1].abs()) >= RESIDUAL_TOL {
        return Err(Error::Calibration(format!(
            "no convergence after {MAX_ITER} iterations; residuals {r:?}; trace: {trace:?}"
        )));
    }

    let device = Device {
        e_j2_ghz: x[0].exp(),
        capacitance: x[1].exp(),
        ..targets.layout
    };
    let sc_edge = device.supercell(targets.edge_flux)?;
    let bands = find_bands(&sc_edge, 1.05 * sc_edge.omega_bound() / (2.0 * PI), SCAN_STEP_HZ)?;
    let sc_z = device.supercell(targets.impedance_flux)?;
    let bloch_impedance = (0..=8)
        .map(|i| {
            let f = 4e9 + 0.5e9 * i as f64;
            bloch(2.0 * PI * f, &sc_z).map(|b| (f, b.bloch_impedance))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = CalibrationReport {
        e_j2_ghz: device.e_j2_ghz,
        capacitance: device.capacitance,
        l1_zero_flux: device.l1(0.0)?,
        l1_edge_flux: device.l1(targets.edge_flux)?,
        omega_cutoff_zero_flux: device.omega_cutoff(0.0)?,
        line_impedance: device.line_impedance(targets.impedance_flux)?,
        edge_hz: first_stop_band(&sc_edge, SCAN_STEP_HZ)?.f_lo,
        bands_at_edge_flux: bands.bands,
        bloch_impedance,
        residuals: r,
        trace,
    };
    Ok(Calibration { device, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{first_stop_band, SupercellSpec};
    use crate::snail::{e_j2_for_inductance, taylor_coeffs};

    fn calibrated() -> Calibration {
        calibrate(&CalibrationTargets::reference(Device::reference_layout(1000.0, 50e-15))).unwrap()
    }

    #[test]
    fn closes_both_targets() {
        let cal = calibrated();
        let z = cal.device.line_impedance(0.38).unwrap();
        assert!((z - 50.0).abs() < 0.05);
        let edge = first_stop_band(&cal.device.supercell(0.38).unwrap(), 1e6).unwrap().f_lo;
        assert!((edge - 11.5e9).abs() < 12e6, "edge {edge}");
    }

    /// Independent route: the gap edge of an L-L-1.5L supercell scales as
    /// 1/√(L₁C), so one normalized band computation plus the impedance
    /// condition determine L₁ and C in closed form.
    #[test]
    fn agrees_with_scaling_solution() {
        let unit = SupercellSpec::loaded(1.0, 1.0, 1.5, 3).unwrap();
        let x0 = 2.0 * PI * first_stop_band(&unit, 1e-5).unwrap().f_lo; // ω·√(L₁C)
        let w_edge = 2.0 * PI * 11.5e9;
        let lc = (x0 / w_edge).powi(2);
        let l1_per_c = 50f64.powi(2) * 3.0 / 3.5; // L₁/C with L_avg = (3.5/3)·L₁
        let c38 = taylor_coeffs(&Device::reference_layout(1.0, 1.0).snail(0.38)).unwrap().c2;
        let c = (lc / l1_per_c).sqrt();
        let e_j2 = e_j2_for_inductance(c38, l1_per_c * c);
        let cal = calibrated();
        assert!((cal.device.capacitance / c - 1.0).abs() < 1e-4);
        assert!((cal.device.e_j2_ghz / e_j2 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn calibrated_l1_matches_target_inductance() {
        let cal = calibrated();
        let l_avg_target = 50f64.powi(2) * cal.device.capacitance;
        assert!((cal.report.l1_edge_flux * 3.5 / 3.0 / l_avg_target - 1.0).abs() < 1e-6);
    }

    #[test]
    fn larger_e_j2_raises_the_edge() {
        let cal = calibrated();
        let bumped = Device {
            e_j2_ghz: cal.device.e_j2_ghz * 1.1,
            ..cal.device
        };
        let e0 = first_stop_band(&cal.device.supercell(0.38).unwrap(), 1e6).unwrap().f_lo;
        let e1 = first_stop_band(&bumped.supercell(0.38).unwrap(), 1e6).unwrap().f_lo;
        // More E_J2 means less inductance and a higher Bragg frequency.
        assert!(e1 > e0);
    }
}
