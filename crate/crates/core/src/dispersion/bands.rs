use std::f64::consts::PI;

use super::{supercell_matrix, SupercellSpec, EDGE_TOL, OMEGA_CEILING};
use crate::error::{Error, Result};

/// Band edges are bisected down to this bracket width.
pub const EDGE_RESOLUTION_HZ: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Pass,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub f_lo: f64,
    pub f_hi: f64,
    pub kind: BandKind,
}

impl Band {
    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_lo && f <= self.f_hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.f_lo + self.f_hi)
    }

    pub fn width(&self) -> f64 {
        self.f_hi - self.f_lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    /// Alternating pass/stop bands covering (0, f_max].
    pub bands: Vec<Band>,
    /// Upper edge of the highest pass band; everything above is evanescent.
    pub cutoff_hz: f64,
    pub warnings: Vec<String>,
}

impl BandStructure {
    /// Stop bands lying entirely below the cutoff.
    pub fn stop_bands_below_cutoff(&self) -> Vec<Band> {
        self.bands
            .iter()
            .filter(|b| b.kind == BandKind::Stop && b.f_hi < self.cutoff_hz)
            .copied()
            .collect()
    }

    pub fn band_at(&self, f: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.contains(f))
    }

    pub fn is_stop(&self, f: f64) -> bool {
        f > self.cutoff_hz || self.band_at(f).map_or(false, |b| b.kind == BandKind::Stop)
    }
}

fn half_trace(f: f64, spec: &SupercellSpec) -> f64 {
    supercell_matrix(2.0 * PI * f, spec)
        .map(|m| 0.5 * m.trace().re)
        .unwrap_or(f64::INFINITY)
}

fn is_stop(t: f64) -> bool {
    t.abs() > 1.0 + EDGE_TOL
}

/// Bisects the pass/stop transition inside (lo, hi) on |Tr|/2 − 1.
fn refine_edge(spec: &SupercellSpec, mut lo: f64, mut hi: f64) -> f64 {
    let stop_lo = is_stop(half_trace(lo, spec));
    while hi - lo > EDGE_RESOLUTION_HZ {
        let mid = 0.5 * (lo + hi);
        if is_stop(half_trace(mid, spec)) == stop_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scans `(0, f_max]` with grid step `step_hz`, classifying each point by
/// |Tr M|/2 and bisecting every transition to `EDGE_RESOLUTION_HZ`.
///
/// Within a pass band the Bloch phase is monotone; if it reverses direction
/// between two consecutive pass samples a narrow stop band was probably
/// stepped over, and a warning names the interval.
pub fn find_bands(spec: &SupercellSpec, f_max: f64, step_hz: f64) -> Result<BandStructure> {
    if !(f_max > 0.0) || 2.0 * PI * f_max > OMEGA_CEILING {
        return Err(Error::InvalidParameter(format!("f_max {f_max} Hz out of range")));
    }
    if !(step_hz > 0.0) {
        return Err(Error::InvalidParameter("band scan step must be positive".into()));
    }
    let f_bound = 1.05 * spec.omega_bound() / (2.0 * PI);
    let scan_to = f_max.max(f_bound);
    let n = (scan_to / step_hz).ceil() as usize;

    let mut edges: Vec<f64> = Vec::new();
    let mut warnings = Vec::new();
    let mut prev_f = 0.0;
    let mut prev_t = 1.0;
    let mut prev_dir = 0.0f64;
    for i in 1..=n {
        let f = (i as f64 * step_hz).min(scan_to);
        let t = half_trace(f, spec);
        if is_stop(t) != is_stop(prev_t) {
            edges.push(refine_edge(spec, prev_f, f));
            prev_dir = 0.0;
        } else if !is_stop(t) {
            let dir = (t.clamp(-1.0, 1.0).acos() - prev_t.clamp(-1.0, 1.0).acos()).signum();
            if prev_dir != 0.0 && dir != 0.0 && dir != prev_dir && f <= f_max {
                warnings.push(format!(
                    "possibly merged bands between {:.6e} and {:.6e} Hz (scan step {:.3e} Hz)",
                    prev_f, f, step_hz
                ));
            }
            if dir != 0.0 {
                prev_dir = dir;
            }
        }
        prev_f = f;
        prev_t = t;
    }

    let cutoff_hz = if is_stop(prev_t) {
        *edges.last().unwrap_or(&0.0)
    } else {
        return Err(Error::InvalidParameter(
            "no cutoff found below the scan bound".into(),
        ));
    };

    let mut bands = Vec::new();
    let mut lo = 0.0;
    let mut kind = BandKind::Pass;
    for &e in edges.iter().filter(|&&e| e < f_max) {
        bands.push(Band { f_lo: lo, f_hi: e, kind });
        lo = e;
        kind = match kind {
            BandKind::Pass => BandKind::Stop,
            BandKind::Stop => BandKind::Pass,
        };
    }
    bands.push(Band {
        f_lo: lo,
        f_hi: f_max,
        kind,
    });

    Ok(BandStructure {
        bands,
        cutoff_hz,
        warnings,
    })
}

/// First stop band (lowest Bragg gap or the cutoff region if there is none).
pub fn first_stop_band(spec: &SupercellSpec, step_hz: f64) -> Result<Band> {
    let f_max = 1.05 * spec.omega_bound() / (2.0 * PI);
    let bs = find_bands(spec, f_max, step_hz)?;
    bs.bands
        .into_iter()
        .find(|b| b.kind == BandKind::Stop)
        .ok_or_else(|| Error::InvalidParameter("no stop band found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 0.5e-9;
    const C: f64 = 0.2e-12;

    #[test]
    fn unloaded_chain_has_no_gaps() {
        let spec = SupercellSpec::loaded(L, C, 1.0, 3).unwrap();
        let bs = find_bands(&spec, 40e9, 10e6).unwrap();
        assert!(bs.stop_bands_below_cutoff().is_empty());
        let fc = 2.0 / (L * C).sqrt() / (2.0 * PI);
        assert!((bs.cutoff_hz - fc).abs() < 2.0 * EDGE_RESOLUTION_HZ);
    }

    #[test]
    fn loaded_chain_has_two_gaps() {
        let spec = SupercellSpec::loaded(L, C, 1.5, 3).unwrap();
        let bs = find_bands(&spec, 40e9, 10e6).unwrap();
        let gaps = bs.stop_bands_below_cutoff();
        assert_eq!(gaps.len(), 2);
        // Alternation and coverage.
        for w in bs.bands.windows(2) {
            assert_ne!(w[0].kind, w[1].kind);
            assert_eq!(w[0].f_hi, w[1].f_lo);
        }
        assert_eq!(bs.bands[0].f_lo, 0.0);
        assert_eq!(bs.bands.last().unwrap().f_hi, 40e9);
        assert!(bs.warnings.is_empty());
    }

    #[test]
    fn edges_bracket_trace_crossing() {
        let spec = SupercellSpec::loaded(L, C, 1.5, 3).unwrap();
        let gap = first_stop_band(&spec, 10e6).unwrap();
        let below = half_trace(gap.f_lo - EDGE_RESOLUTION_HZ, &spec);
        let above = half_trace(gap.f_lo + EDGE_RESOLUTION_HZ, &spec);
        assert!(!is_stop(below) && is_stop(above));
    }

    #[test]
    fn coarse_scan_warns_about_merged_bands() {
        // A very mild loading opens narrow gaps a coarse scan steps over.
        let spec = SupercellSpec::loaded(L, C, 1.0005, 3).unwrap();
        let bs = find_bands(&spec, 40e9, 1e9).unwrap();
        assert!(bs.stop_bands_below_cutoff().len() < 2);
        assert!(!bs.warnings.is_empty());
    }
}
