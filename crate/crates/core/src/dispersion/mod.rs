//! Linear transmission properties of the periodically loaded ladder:
//! supercell ABCD matrices, Bloch dispersion `2 cosh(γa) = Tr M`, band
//! structure, finite-chain S-parameters and the calibration of the
//! unpublished circuit constants.
//!
//! Each cell is a series inductor followed by a shunt capacitor to ground.
//! Elements are lossless, so the half-trace of every supercell matrix is real.

mod bands;
mod calibrate;

pub use bands::{find_bands, first_stop_band, Band, BandKind, BandStructure, EDGE_RESOLUTION_HZ};
pub use calibrate::{calibrate, Calibration, CalibrationReport, CalibrationTargets};

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::twoport::{sparams_scaled, SParams, TwoPort, C64};

/// Upper limit on angular frequency accepted by the matrix routines (2π·10 THz).
pub const OMEGA_CEILING: f64 = 2.0 * PI * 1e13;

/// Tolerance on |Tr M|/2 − 1 used to classify band edges.
pub const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    /// Series (linearized SNAIL) inductance, henries.
    pub inductance: f64,
    /// Shunt capacitance, farads.
    pub capacitance: f64,
}

impl CellSpec {
    pub fn new(inductance: f64, capacitance: f64) -> Result<Self> {
        if !(inductance > 0.0 && capacitance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cell needs L > 0 and C > 0, got L = {inductance}, C = {capacitance}"
            )));
        }
        Ok(Self {
            inductance,
            capacitance,
        })
    }

    pub fn series(&self, omega: f64) -> TwoPort {
        TwoPort::series(C64::new(0.0, omega * self.inductance))
    }

    pub fn shunt(&self, omega: f64) -> TwoPort {
        TwoPort::shunt(C64::new(0.0, omega * self.capacitance))
    }

    pub fn matrix(&self, omega: f64) -> TwoPort {
        self.series(omega).cascade(&self.shunt(omega))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupercellSpec {
    pub cells: Vec<CellSpec>,
}

impl SupercellSpec {
    pub fn new(cells: Vec<CellSpec>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidParameter("supercell needs at least one cell".into()));
        }
        for c in &cells {
            CellSpec::new(c.inductance, c.capacitance)?;
        }
        Ok(Self { cells })
    }

    /// `n - 1` cells of (l1, c) followed by one cell of (ratio·l1, c).
    pub fn loaded(l1: f64, c: f64, ratio: f64, n: usize) -> Result<Self> {
        let mut cells = vec![CellSpec::new(l1, c)?; n.max(1)];
        if let Some(last) = cells.last_mut() {
            last.inductance *= ratio;
        }
        Self::new(cells)
    }

    pub fn homogeneous(l: f64, c: f64) -> Result<Self> {
        Self::new(vec![CellSpec::new(l, c)?])
    }

    /// Supercell length in cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Upper bound on the top band edge: 2/√(L_min C_min).
    pub fn omega_bound(&self) -> f64 {
        let lmin = self.cells.iter().map(|c| c.inductance).fold(f64::INFINITY, f64::min);
        let cmin = self.cells.iter().map(|c| c.capacitance).fold(f64::INFINITY, f64::min);
        2.0 / (lmin * cmin).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub supercell: SupercellSpec,
    pub repetitions: usize,
    /// Source and load impedance, ohms.
    pub z_term: f64,
}

impl ChainSpec {
    pub fn new(supercell: SupercellSpec, repetitions: usize, z_term: f64) -> Result<Self> {
        if repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if !(z_term > 0.0) {
            return Err(Error::InvalidParameter("z_term must be positive".into()));
        }
        Ok(Self {
            supercell,
            repetitions,
            z_term,
        })
    }

    pub fn total_cells(&self) -> usize {
        self.supercell.len() * self.repetitions
    }
}

/// Bloch solution at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionResult {
    pub omega: f64,
    /// Complex propagation constant per supercell, γa = attenuation + i·k·a,
    /// with Re ≥ 0 and Im ∈ [0, π].
    pub gamma: C64,
    /// Wave impedance V/I of the forward Bloch wave at the supercell boundary.
    pub bloch_impedance: C64,
    /// Tr(M)/2.
    pub half_trace: f64,
    /// |Tr M|/2 is within `EDGE_TOL` of one.
    pub boundary: bool,
}

impl DispersionResult {
    pub fn is_stop(&self) -> bool {
        self.half_trace.abs() > 1.0 + EDGE_TOL
    }

    /// Bloch phase per cell for a supercell of `cells` cells.
    pub fn k_per_cell(&self, cells: usize) -> f64 {
        self.gamma.im / cells as f64
    }

    /// Attenuation in nepers per supercell.
    pub fn attenuation(&self) -> f64 {
        self.gamma.re
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega <= OMEGA_CEILING {
        Ok(())
    } else {
        Err(Error::OmegaOutOfRange {
            omega,
            ceiling: OMEGA_CEILING,
        })
    }
}

/// Ordered product of the per-cell matrices of one supercell.
pub fn supercell_matrix(omega: f64, spec: &SupercellSpec) -> Result<TwoPort> {
    check_omega(omega)?;
    Ok(spec
        .cells
        .iter()
        .fold(TwoPort::identity(), |m, c| m.cascade(&c.matrix(omega))))
}

/// Propagation constant from the half-trace t = Tr/2 of a lossless supercell:
/// `cosh γ = t` with Re γ ≥ 0 and Im γ ∈ [0, π].
pub fn gamma_from_half_trace(t: f64) -> C64 {
    if t.abs() <= 1.0 {
        C64::new(0.0, t.acos())
    } else if t > 1.0 {
        C64::new(t.acosh(), 0.0)
    } else {
        C64::new((-t).acosh(), PI)
    }
}

pub fn bloch(omega: f64, spec: &SupercellSpec) -> Result<DispersionResult> {
    let m = supercell_matrix(omega, spec)?;
    Ok(bloch_from_matrix(omega, &m))
}

pub fn bloch_from_matrix(omega: f64, m: &TwoPort) -> DispersionResult {
    let t = 0.5 * m.trace().re;
    let gamma = gamma_from_half_trace(t);
    // Forward wave: M v = e^γ v, so V/I = B / (e^γ − A). In a pass band pick
    // the root with positive real impedance (positive power flow).
    let mut z = m.b / (gamma.exp() - m.a);
    if t.abs() <= 1.0 && z.re < 0.0 {
        z = m.b / ((-gamma).exp() - m.a);
    }
    DispersionResult {
        omega,
        gamma,
        bloch_impedance: z,
        half_trace: t,
        boundary: (t.abs() - 1.0).abs() <= EDGE_TOL,
    }
}

/// Long-wavelength estimate of the extended-zone phase per supercell: the
/// sum of the homogeneous-cell phases 2·asin(ω√(LC)/2).
pub fn phase_estimate(omega: f64, spec: &SupercellSpec) -> f64 {
    spec.cells
        .iter()
        .map(|c| 2.0 * (0.5 * omega * (c.inductance * c.capacitance).sqrt()).min(1.0).asin())
        .sum()
}

/// Extended-zone phase per supercell of the forward wave: the member of
/// {±phase + 2πn} closest to `phase_estimate`. With the reduced phase of
/// `bloch` this unfolds the higher pass bands above π.
pub fn extended_phase(omega: f64, spec: &SupercellSpec, phase: f64) -> f64 {
    let target = phase_estimate(omega, spec);
    let nearest = |p: f64| p + 2.0 * PI * ((target - p) / (2.0 * PI)).round();
    let (a, b) = (nearest(phase), nearest(-phase));
    if (a - target).abs() <= (b - target).abs() {
        a
    } else {
        b
    }
}

/// Cascade of `repetitions` supercells converted to S-parameters at
/// `z_term`, together with |S21| in dB.
///
/// The power is renormalized as it is built, so deep stop bands give a
/// finite dB value instead of overflowing. Every LC cell has unit
/// determinant, so S12 is returned equal to S21.
pub fn chain_sparams_db(omega: f64, chain: &ChainSpec) -> Result<(SParams, f64)> {
    let m = supercell_matrix(omega, &chain.supercell)?;
    let (p, log_s) = m.pow_scaled(chain.repetitions as u64);
    Ok(sparams_scaled(&p, log_s, chain.z_term))
}

pub fn chain_sparams(omega: f64, chain: &ChainSpec) -> Result<SParams> {
    chain_sparams_db(omega, chain).map(|(s, _)| s)
}

/// |S21| in dB on a frequency grid (Hz), kept in grid order.
pub fn s21_sweep(freqs_hz: &[f64], chain: &ChainSpec) -> Vec<Result<f64>> {
    freqs_hz
        .par_iter()
        .map(|&f| chain_sparams_db(2.0 * PI * f, chain).map(|(_, db)| db))
        .collect()
}

/// |S21| in dB over a frequency × flux grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap {
    pub freqs_hz: Vec<f64>,
    /// Φ_ext/Φ₀ per column.
    pub fluxes: Vec<f64>,
    /// `db[i][j]` at frequency i and flux j; `None` where the point failed.
    pub db: Vec<Vec<Option<f64>>>,
    pub failures: Vec<String>,
}

pub fn s21_flux_map(freqs_hz: &[f64], fluxes: &[f64], device: &Device) -> FluxMap {
    let columns: Vec<(Vec<Option<f64>>, Vec<String>)> = fluxes
        .par_iter()
        .map(|&flux| match device.chain(flux) {
            Ok(chain) => {
                let mut errs = Vec::new();
                let col = s21_sweep(freqs_hz, &chain)
                    .into_iter()
                    .zip(freqs_hz)
                    .map(|(r, f)| match r {
                        Ok(v) => Some(v),
                        Err(e) => {
                            errs.push(format!("flux {flux}, f {f} Hz: {e}"));
                            None
                        }
                    })
                    .collect();
                (col, errs)
            }
            Err(e) => (vec![None; freqs_hz.len()], vec![format!("flux {flux}: {e}")]),
        })
        .collect();

    let mut db = vec![vec![None; fluxes.len()]; freqs_hz.len()];
    let mut failures = Vec::new();
    for (j, (col, errs)) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            db[i][j] = v;
        }
        failures.extend(errs);
    }
    FluxMap {
        freqs_hz: freqs_hz.to_vec(),
        fluxes: fluxes.to_vec(),
        db,
        failures,
    }
}
