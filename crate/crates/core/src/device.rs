//! Physical description of a periodically loaded SNAIL chain.

use crate::dispersion::{CellSpec, ChainSpec, SupercellSpec};
use crate::error::{Error, Result};
use crate::snail::{inductance_from_c2, taylor_coeffs, SnailParams, TaylorCoeffs};
use crate::units::flux_fraction_to_rad;

/// Loaded TWPA: supercells of `cells_per_supercell` cells, the last of which
/// carries the larger inductance `loading_ratio · L₁`.
///
/// The loaded cell is realized by scaling E_J2 of its SNAIL by
/// `1 / loading_ratio` with α unchanged, so every cell shares the same
/// expansion coefficients and χ₃/χ₄.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Device {
    pub alpha: f64,
    /// E_J2 of the regular (L₁) cells, in GHz.
    pub e_j2_ghz: f64,
    /// Shunt capacitance of the regular cells, farads.
    pub capacitance: f64,
    /// Shunt capacitance of the loaded cell; `None` means equal to `capacitance`.
    pub loaded_capacitance: Option<f64>,
    pub loading_ratio: f64,
    pub cells_per_supercell: usize,
    pub repetitions: usize,
    pub z_term: f64,
    pub n_large: u32,
}

impl Device {
    /// 147 supercells of L₁-L₁-1.5·L₁, α = 0.16, 50 Ω ports.
    pub fn reference_layout(e_j2_ghz: f64, capacitance: f64) -> Self {
        Self {
            alpha: 0.16,
            e_j2_ghz,
            capacitance,
            loaded_capacitance: None,
            loading_ratio: 1.5,
            cells_per_supercell: 3,
            repetitions: 147,
            z_term: 50.0,
            n_large: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        SnailParams::with_junctions(self.alpha, self.e_j2_ghz, 0.0, self.n_large)?;
        if !(self.capacitance > 0.0) {
            return Err(Error::InvalidParameter("capacitance must be positive".into()));
        }
        if let Some(c2) = self.loaded_capacitance {
            if !(c2 > 0.0) {
                return Err(Error::InvalidParameter("loaded capacitance must be positive".into()));
            }
        }
        if !(self.loading_ratio > 0.0) {
            return Err(Error::InvalidParameter("loading ratio must be positive".into()));
        }
        if self.cells_per_supercell == 0 || self.repetitions == 0 {
            return Err(Error::InvalidParameter(
                "cells per supercell and repetitions must be >= 1".into(),
            ));
        }
        if !(self.z_term > 0.0) {
            return Err(Error::InvalidParameter("termination must be positive".into()));
        }
        Ok(())
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_supercell * self.repetitions
    }

    /// Same cells without loading (L₂ = L₁, C₂ = C).
    pub fn unloaded(&self) -> Self {
        Self {
            loading_ratio: 1.0,
            loaded_capacitance: None,
            ..*self
        }
    }

    /// Same cell pattern, `cells` cells in total (rounded down to whole supercells).
    pub fn with_cells(&self, cells: usize) -> Self {
        Self {
            repetitions: (cells / self.cells_per_supercell).max(1),
            ..*self
        }
    }

    /// SNAIL parameters of a regular cell at flux Φ_ext/Φ₀ = `flux`.
    pub fn snail(&self, flux: f64) -> SnailParams {
        SnailParams {
            alpha: self.alpha,
            e_j2_ghz: self.e_j2_ghz,
            phi_ext: flux_fraction_to_rad(flux),
            n_large: self.n_large,
        }
    }

    pub fn is_loaded_cell(&self, index_in_supercell: usize) -> bool {
        index_in_supercell + 1 == self.cells_per_supercell && self.loading_ratio != 1.0
    }

    /// E_J2 of cell `index_in_supercell`.
    pub fn cell_e_j2(&self, index_in_supercell: usize) -> f64 {
        if self.is_loaded_cell(index_in_supercell) {
            self.e_j2_ghz / self.loading_ratio
        } else {
            self.e_j2_ghz
        }
    }

    pub fn cell_capacitance(&self, index_in_supercell: usize) -> f64 {
        if index_in_supercell + 1 == self.cells_per_supercell {
            self.loaded_capacitance.unwrap_or(self.capacitance)
        } else {
            self.capacitance
        }
    }

    pub fn coeffs(&self, flux: f64) -> Result<TaylorCoeffs> {
        taylor_coeffs(&self.snail(flux))
    }

    /// Linear inductance L₁ of a regular cell.
    pub fn l1(&self, flux: f64) -> Result<f64> {
        let c = self.coeffs(flux)?;
        Ok(inductance_from_c2(c.c2, self.e_j2_ghz))
    }

    /// Long-wavelength average inductance per cell.
    pub fn average_inductance(&self, flux: f64) -> Result<f64> {
        let l1 = self.l1(flux)?;
        let n = self.cells_per_supercell as f64;
        Ok(l1 * ((n - 1.0) + self.loading_ratio) / n)
    }

    /// √(L_avg / C) at the given flux.
    pub fn line_impedance(&self, flux: f64) -> Result<f64> {
        Ok((self.average_inductance(flux)? / self.capacitance).sqrt())
    }

    /// Cutoff of the unloaded cell, ω_c = 2/√(L₁C), in rad/s.
    pub fn omega_cutoff(&self, flux: f64) -> Result<f64> {
        Ok(2.0 / (self.l1(flux)? * self.capacitance).sqrt())
    }

    pub fn supercell(&self, flux: f64) -> Result<SupercellSpec> {
        self.validate()?;
        let c = self.coeffs(flux)?;
        let cells = (0..self.cells_per_supercell)
            .map(|i| CellSpec {
                inductance: inductance_from_c2(c.c2, self.cell_e_j2(i)),
                capacitance: self.cell_capacitance(i),
            })
            .collect();
        SupercellSpec::new(cells)
    }

    pub fn chain(&self, flux: f64) -> Result<ChainSpec> {
        ChainSpec::new(self.supercell(flux)?, self.repetitions, self.z_term)
    }
}
