//! Coupled-mode description of wave mixing along the loaded chain.
//!
//! Each carrier is expanded on the forward Bloch eigenvector of the supercell
//! transfer matrix, normalized to carry one watt per unit |amplitude|². The
//! nonlinear part of every SNAIL is an EMF in series with its linear
//! inductance; projecting that EMF on the left eigenvector gives first-order
//! amplitude equations along the supercell index. Carriers that cannot
//! propagate (stop band or above cutoff) are not integrated: their field is
//! the particular solution of the driven transfer recursion at each point.

mod engine;
mod shg;
mod sweeps;

pub use engine::{
    coupling_matrix, integrate_cme, CmeOptions, CouplingTable, KerrCoupling, ModeAmplitudes,
    ThreeWaveCoupling,
};
pub use shg::{shg_analytic, shg_two_mode, shg_validity_warning, ShgTrace};
pub use sweeps::{gain_sweep, harmonic_response, GainTrace, HarmonicResponse};

use std::f64::consts::PI;
use std::fmt;

use crate::device::Device;
use crate::dispersion::{bloch, extended_phase};
use crate::error::{Error, Result};
use crate::twoport::C64;
use crate::units::{dbm_to_watts, REDUCED_FLUX_QUANTUM};

/// Pump phase amplitude above which the quartic truncation is questionable.
pub const PUMP_WARN_RAD: f64 = 0.5;
/// Pump phase amplitude at which the truncation is rejected outright.
pub const PUMP_LIMIT_RAD: f64 = 1.0;
/// Default signal seed relative to the pump amplitude.
pub const SIGNAL_SEED: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Pump,
    Signal,
    Idler,
    Harmonic(String),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Pump => write!(f, "p"),
            Role::Signal => write!(f, "s"),
            Role::Idler => write!(f, "i"),
            Role::Harmonic(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub f_hz: f64,
    /// Extended-zone Bloch phase per cell, rad.
    pub k: f64,
    /// Propagation constant per supercell.
    pub gamma: C64,
    pub role: Role,
    /// Inside a stop band or above cutoff.
    pub evanescent: bool,
    /// Incident amplitude in phase units, L₁·I/φ₀ of the matched-line wave.
    pub amplitude: C64,
}

/// Integer frequency identity Σ nⱼ·ωⱼ = 0 over mode indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub terms: Vec<(usize, i32)>,
}

impl Relation {
    pub fn residual_hz(&self, modes: &[Mode]) -> f64 {
        self.terms
            .iter()
            .map(|&(j, n)| n as f64 * modes[j].f_hz)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub relations: Vec<Relation>,
    /// Φ_ext/Φ₀ at which the wavenumbers were evaluated.
    pub flux: f64,
    /// Signal and idler coincide (f_s = f_p/2).
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl ModeSet {
    /// Checks every relation and drops modes that appear in none of them.
    pub fn new(modes: Vec<Mode>, relations: Vec<Relation>, flux: f64) -> Result<Self> {
        let scale = modes.iter().map(|m| m.f_hz).fold(0.0, f64::max).max(1.0);
        for r in &relations {
            if r.terms.iter().any(|&(j, _)| j >= modes.len()) {
                return Err(Error::InvalidParameter("relation refers to a missing mode".into()));
            }
            let res = r.residual_hz(&modes);
            if res.abs() > 1e-9 * scale {
                return Err(Error::InvalidParameter(format!(
                    "frequency relation {:?} leaves {res} Hz",
                    r.terms
                )));
            }
        }
        let used: Vec<bool> = (0..modes.len())
            .map(|j| relations.iter().any(|r| r.terms.iter().any(|&(i, _)| i == j)))
            .collect();
        let mut warnings = Vec::new();
        let mut remap = vec![usize::MAX; modes.len()];
        let mut kept = Vec::new();
        for (j, m) in modes.into_iter().enumerate() {
            if used[j] {
                remap[j] = kept.len();
                kept.push(m);
            } else {
                warnings.push(format!("mode {} at {:.6e} Hz is in no relation; dropped", m.role, m.f_hz));
            }
        }
        let relations = relations
            .into_iter()
            .map(|r| Relation {
                terms: r.terms.into_iter().map(|(j, n)| (remap[j], n)).collect(),
            })
            .collect();
        Ok(Self {
            modes: kept,
            relations,
            flux,
            degenerate: false,
            warnings,
        })
    }

    pub fn index_of(&self, role: &Role) -> Option<usize> {
        self.modes.iter().position(|m| &m.role == role)
    }

    pub fn pump(&self) -> Option<usize> {
        self.index_of(&Role::Pump)
    }

    pub fn signal(&self) -> Option<usize> {
        self.index_of(&Role::Signal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// Pump, signal and idler.
    Minimal,
    /// Adds p+s, p+i and 2p.
    Extended,
    /// Sidebands n·p+s and n·p+i for n up to the order, and pump harmonics
    /// up to (order+1)·p. Order 1 is the extended tier.
    Cascade(usize),
}

impl Tier {
    fn order(self) -> usize {
        match self {
            Tier::Minimal => 0,
            Tier::Extended => 1,
            Tier::Cascade(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSpec {
    pub f_hz: f64,
    /// Power at the chip input, dBm.
    pub power_dbm: f64,
}

/// Per-cell phase amplitude of a matched-line wave: I = √(2P/z₀) and
/// φ = L·I/φ₀.
pub fn pump_amplitude(pump: &PumpSpec, inductance: f64, z0: f64) -> Result<f64> {
    if !(inductance > 0.0 && z0 > 0.0) {
        return Err(Error::InvalidParameter("inductance and z0 must be positive".into()));
    }
    let p = if pump.power_dbm == f64::NEG_INFINITY {
        0.0
    } else {
        dbm_to_watts(pump.power_dbm)
    };
    let amp = inductance * (2.0 * p / z0).sqrt() / REDUCED_FLUX_QUANTUM;
    if !(amp < PUMP_LIMIT_RAD) {
        return Err(Error::PumpTooStrong { amplitude: amp });
    }
    Ok(amp)
}

/// Builds a mode from its frequency and the Bloch solution at `flux`.
pub fn make_mode(device: &Device, flux: f64, f_hz: f64, role: Role) -> Result<Mode> {
    let sc = device.supercell(flux)?;
    let r = bloch(2.0 * PI * f_hz, &sc)?;
    Ok(Mode {
        f_hz,
        k: extended_phase(2.0 * PI * f_hz, &sc, r.gamma.im) / sc.len() as f64,
        gamma: r.gamma,
        role,
        evanescent: r.is_stop() || r.boundary,
        amplitude: C64::new(0.0, 0.0),
    })
}

/// Carriers for a pump at `pump.f_hz` and a signal at `f_s < f_p`.
///
/// When f_s = f_p/2 exactly, signal and idler are the same carrier: the set
/// keeps one signal mode and the relation p = 2s (and p+s once in the
/// extended tier). Gain is then phase sensitive.
pub fn build_modeset(
    pump: &PumpSpec,
    f_s: f64,
    tier: Tier,
    flux: f64,
    device: &Device,
) -> Result<ModeSet> {
    let f_p = pump.f_hz;
    if !(f_s > 0.0 && f_s < f_p) {
        return Err(Error::InvalidParameter(format!(
            "signal {f_s} Hz must lie in (0, f_p = {f_p} Hz)"
        )));
    }
    let amp = pump_amplitude(pump, device.l1(flux)?, device.z_term)?;
    let f_i = f_p - f_s;
    let degenerate = (f_s - f_i).abs() <= 1e-9 * f_p;

    let order = tier.order();
    let label = |n: usize, x: &str| match n {
        1 => format!("p{x}"),
        _ => format!("{n}p{x}"),
    };
    let mut freqs = vec![(f_p, Role::Pump), (f_s, Role::Signal)];
    if !degenerate {
        freqs.push((f_i, Role::Idler));
    }
    let mut relations = vec![Relation {
        terms: if degenerate {
            vec![(0, 1), (1, -2)]
        } else {
            vec![(0, 1), (1, -1), (2, -1)]
        },
    }];
    // Each sideband is the pump times the one below it.
    let mut below = if degenerate { vec![1] } else { vec![1, 2] };
    for n in 1..=order {
        let mut next = Vec::new();
        for (&prev, (f, x)) in below.iter().zip([(f_s, "+s"), (f_i, "+i")]) {
            next.push(freqs.len());
            relations.push(Relation {
                terms: vec![(freqs.len(), 1), (0, -1), (prev, -1)],
            });
            freqs.push((n as f64 * f_p + f, Role::Harmonic(label(n, x))));
        }
        below = next;
    }
    let mut harmonic = 0;
    for n in 2..=order + 1 {
        relations.push(Relation {
            terms: if n == 2 {
                vec![(freqs.len(), 1), (0, -2)]
            } else {
                vec![(freqs.len(), 1), (0, -1), (harmonic, -1)]
            },
        });
        harmonic = freqs.len();
        freqs.push((n as f64 * f_p, Role::Harmonic(label(n, ""))));
    }
    let mut modes = freqs
        .into_iter()
        .map(|(f, role)| make_mode(device, flux, f, role))
        .collect::<Result<Vec<_>>>()?;
    modes[0].amplitude = C64::new(amp, 0.0);
    modes[1].amplitude = C64::new(SIGNAL_SEED * amp, 0.0);

    let mut ms = ModeSet::new(modes, relations, flux)?;
    ms.degenerate = degenerate;
    if degenerate {
        ms.warnings
            .push("f_s = f_p/2: idler merged with signal, gain is phase sensitive".into());
    }
    if amp > PUMP_WARN_RAD {
        ms.warnings.push(format!(
            "pump phase amplitude {amp:.3} rad exceeds {PUMP_WARN_RAD} rad; quartic truncation is marginal"
        ));
    }
    for m in &ms.modes {
        if m.evanescent {
            ms.warnings.push(format!(
                "mode {} at {:.4e} Hz is evanescent (Re γa = {:.3e}); its field is slaved to the local drive",
                m.role, m.f_hz, m.gamma.re
            ));
        }
    }
    Ok(ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{calibrate, CalibrationTargets};
    use crate::units::{PLANCK, REDUCED_FLUX_QUANTUM};

    pub(crate) fn calibrated() -> Device {
        calibrate(&CalibrationTargets::reference(Device::reference_layout(800.0, 2e-13)))
            .unwrap()
            .device
    }

    #[test]
    fn pump_amplitude_conversion() {
        let p = PumpSpec {
            f_hz: 6.2e9,
            power_dbm: -91.4,
        };
        let l = 7.4e-10;
        let a = pump_amplitude(&p, l, 50.0).unwrap();
        // Two-line hand evaluation.
        let watts = 1e-3 * 10f64.powf(-9.14);
        let phi0 = PLANCK / (2.0 * PI) / (2.0 * 1.602_176_634e-19);
        assert!((a - l * (2.0 * watts / 50.0).sqrt() / phi0).abs() < 1e-12);
        assert!((phi0 / REDUCED_FLUX_QUANTUM - 1.0).abs() < 1e-15);

        let up = pump_amplitude(&PumpSpec { power_dbm: -88.4, ..p }, l, 50.0).unwrap();
        assert!((up / a - 2f64.sqrt()).abs() < 2e-3);
        let off = pump_amplitude(&PumpSpec { power_dbm: f64::NEG_INFINITY, ..p }, l, 50.0);
        assert_eq!(off.unwrap(), 0.0);
        assert!(matches!(
            pump_amplitude(&PumpSpec { power_dbm: -40.0, ..p }, l, 50.0),
            Err(Error::PumpTooStrong { .. })
        ));
    }

    #[test]
    fn modeset_arithmetic_and_flags() {
        let d = calibrated();
        let pump = PumpSpec {
            f_hz: 6.2e9,
            power_dbm: -91.4,
        };
        let ms = build_modeset(&pump, 2e9, Tier::Extended, 0.38, &d).unwrap();
        let f = |r: Role| ms.modes[ms.index_of(&r).unwrap()].f_hz;
        assert!((f(Role::Idler) - 4.2e9).abs() < 1.0);
        assert!((f(Role::Harmonic("p+s".into())) - 8.2e9).abs() < 1.0);
        let two_p = &ms.modes[ms.index_of(&Role::Harmonic("2p".into())).unwrap()];
        assert!((two_p.f_hz - 12.4e9).abs() < 1.0);
        assert!(two_p.evanescent);
        assert!(ms.modes.iter().filter(|m| m.evanescent).count() == 1);
        for r in &ms.relations {
            assert!(r.residual_hz(&ms.modes).abs() < 1e-3);
        }
        let minimal = build_modeset(&pump, 2e9, Tier::Minimal, 0.38, &d).unwrap();
        assert_eq!(minimal.modes.len(), 3);
        assert!(build_modeset(&pump, 7e9, Tier::Minimal, 0.38, &d).is_err());
    }

    #[test]
    fn upconverted_mode_near_edge_is_strongly_mismatched() {
        let d = calibrated();
        let pump = PumpSpec {
            f_hz: 6.2e9,
            power_dbm: -91.4,
        };
        let mismatch = |f_s: f64| {
            let ms = build_modeset(&pump, f_s, Tier::Extended, 0.38, &d).unwrap();
            let up = &ms.modes[ms.index_of(&Role::Harmonic("p+s".into())).unwrap()];
            (up.k - ms.modes[0].k - ms.modes[1].k).abs()
        };
        // 9.7 GHz sits close to the 11.5 GHz edge; 8.2 GHz is far from it.
        assert!(mismatch(3.5e9) > 2.0 * mismatch(2e9));
    }

    #[test]
    fn degenerate_signal_merges_idler() {
        let d = calibrated();
        let pump = PumpSpec {
            f_hz: 6.2e9,
            power_dbm: -95.0,
        };
        let ms = build_modeset(&pump, 3.1e9, Tier::Extended, 0.38, &d).unwrap();
        assert!(ms.degenerate);
        assert!(ms.index_of(&Role::Idler).is_none());
        assert_eq!(ms.modes.len(), 4);
        assert_eq!(ms.relations[0].terms, vec![(0, 1), (1, -2)]);
    }

    #[test]
    fn orphan_modes_are_dropped() {
        let d = calibrated();
        let a = make_mode(&d, 0.3, 3e9, Role::Signal).unwrap();
        let b = make_mode(&d, 0.3, 6e9, Role::Pump).unwrap();
        let c = make_mode(&d, 0.3, 4e9, Role::Idler).unwrap();
        let ms = ModeSet::new(
            vec![b, a, c],
            vec![Relation {
                terms: vec![(0, 1), (1, -2)],
            }],
            0.3,
        )
        .unwrap();
        assert_eq!(ms.modes.len(), 2);
        assert_eq!(ms.warnings.len(), 1);
        let bad = ModeSet::new(
            ms.modes.clone(),
            vec![Relation {
                terms: vec![(0, 1), (1, -1)],
            }],
            0.3,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn cascade_tier_builds_the_sideband_ladder() {
        let d = calibrated();
        let pump = PumpSpec {
            f_hz: 6.2e9,
            power_dbm: -91.4,
        };
        let one = build_modeset(&pump, 2e9, Tier::Cascade(1), 0.38, &d).unwrap();
        assert_eq!(one, build_modeset(&pump, 2e9, Tier::Extended, 0.38, &d).unwrap());
        let ms = build_modeset(&pump, 2e9, Tier::Cascade(3), 0.38, &d).unwrap();
        assert_eq!(ms.modes.len(), 12);
        assert!(ms.warnings.iter().all(|w| !w.contains("dropped")));
        for (label, f) in [("3p+s", 20.6e9), ("2p+i", 16.6e9), ("4p", 24.8e9)] {
            let j = ms.index_of(&Role::Harmonic(label.into())).unwrap();
            assert!((ms.modes[j].f_hz - f).abs() < 1.0, "{label}");
        }
        for r in &ms.relations {
            assert!(r.residual_hz(&ms.modes).abs() < 1e-3);
        }
        let deg = build_modeset(&pump, 3.1e9, Tier::Cascade(2), 0.38, &d).unwrap();
        assert_eq!(deg.modes.len(), 2 + 2 + 2);
    }
}
