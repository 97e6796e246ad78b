use rayon::prelude::*;

use super::{build_modeset, integrate_cme, make_mode, CmeOptions, ModeSet, PumpSpec, Relation, Role, Tier};
use crate::device::Device;
use crate::error::Result;
use crate::twoport::C64;
use crate::units::{dbm_to_watts, REDUCED_FLUX_QUANTUM};

#[derive(Debug, Clone, PartialEq)]
pub struct GainTrace {
    pub freqs_hz: Vec<f64>,
    /// `None` where the point failed.
    pub gain_db: Vec<Option<f64>>,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl GainTrace {
    /// (frequency, gain) of the largest finite gain.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.freqs_hz
            .iter()
            .zip(&self.gain_db)
            .filter_map(|(&f, g)| g.map(|g| (f, g)))
            .fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if b.1 >= p.1 => Some(b),
                _ => Some(p),
            })
    }
}

/// Signal gain 20·log10|A_s(end)/A_s(0)| at each grid frequency.
pub fn gain_sweep(
    freqs_hz: &[f64],
    pump: &PumpSpec,
    tier: Tier,
    device: &Device,
    flux: f64,
    opts: &CmeOptions,
) -> GainTrace {
    let results: Vec<Result<(f64, Vec<String>)>> = freqs_hz
        .par_iter()
        .map(|&f| {
            let ms = build_modeset(pump, f, tier, flux, device)?;
            let out = integrate_cme(&ms, device, None, opts)?;
            Ok((out.gain_db(1), ms.warnings))
        })
        .collect();
    let mut trace = GainTrace {
        freqs_hz: freqs_hz.to_vec(),
        gain_db: Vec::with_capacity(freqs_hz.len()),
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for (f, r) in freqs_hz.iter().zip(results) {
        match r {
            Ok((g, w)) => {
                trace.gain_db.push(Some(g));
                for w in w {
                    if !trace.warnings.contains(&w) && w.starts_with("pump") {
                        trace.warnings.push(w);
                    }
                }
            }
            Err(e) => {
                trace.gain_db.push(None);
                trace.failures.push(format!("{f:.6e} Hz: {e}"));
            }
        }
    }
    trace
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicResponse {
    pub freqs_hz: Vec<f64>,
    /// Load voltage at f relative to the incident tone, dB.
    pub out_f_db: Vec<Option<f64>>,
    /// Load voltage at 2f relative to the incident tone, dB.
    pub out_2f_db: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

/// Two-mode (f, 2f) set for a single tone of `power_dbm`.
pub fn tone_modeset(device: &Device, flux: f64, f_hz: f64, power_dbm: f64) -> Result<ModeSet> {
    let mut tone = make_mode(device, flux, f_hz, Role::Signal)?;
    let second = make_mode(device, flux, 2.0 * f_hz, Role::Harmonic("2f".into()))?;
    let current = (2.0 * dbm_to_watts(power_dbm) / device.z_term).sqrt();
    tone.amplitude = C64::new(device.l1(flux)? * current / REDUCED_FLUX_QUANTUM, 0.0);
    ModeSet::new(
        vec![tone, second],
        vec![Relation {
            terms: vec![(1, 1), (0, -2)],
        }],
        flux,
    )
}

/// Response at f and 2f to a single input tone, no pump. Where 2f cannot
/// propagate its field is slaved to the local drive by the tone.
pub fn harmonic_response(
    freqs_hz: &[f64],
    power_dbm: f64,
    device: &Device,
    flux: f64,
    opts: &CmeOptions,
) -> HarmonicResponse {
    let results: Vec<Result<(f64, f64)>> = freqs_hz
        .par_iter()
        .map(|&f| {
            let ms = tone_modeset(device, flux, f, power_dbm)?;
            let out = integrate_cme(&ms, device, None, opts)?;
            Ok((out.output_db(0, 0), out.output_db(1, 0)))
        })
        .collect();
    let mut resp = HarmonicResponse {
        freqs_hz: freqs_hz.to_vec(),
        out_f_db: Vec::with_capacity(freqs_hz.len()),
        out_2f_db: Vec::with_capacity(freqs_hz.len()),
        failures: Vec::new(),
    };
    for (f, r) in freqs_hz.iter().zip(results) {
        match r {
            Ok((a, b)) => {
                resp.out_f_db.push(Some(a));
                resp.out_2f_db.push(Some(b));
            }
            Err(e) => {
                resp.out_f_db.push(None);
                resp.out_2f_db.push(None);
                resp.failures.push(format!("{f:.6e} Hz: {e}"));
            }
        }
    }
    resp
}
