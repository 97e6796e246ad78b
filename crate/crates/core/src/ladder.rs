//! Brute-force time-domain integration of the terminated SNAIL ladder.
//!
//! Node 0 is the input port (no shunt capacitor): an ideal source of
//! open-circuit voltage 2·V_inc drives it through z_term. Cell i is the SNAIL
//! between nodes i and i+1 followed by the shunt capacitor at node i+1.
//! Node N carries the load resistor.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::snail::taylor_coeffs;
use crate::units::{dbm_to_watts, ghz_to_joules, REDUCED_FLUX_QUANTUM as PHI0};

/// Node phase (in units of φ₀) beyond which a run is declared unstable.
pub const INSTABILITY_PHASE: f64 = 1e3;
/// Minimum samples per period of the highest tone.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 40.0;
/// Default samples per period of the highest frequency of interest.
pub const SAMPLES_PER_PERIOD: f64 = 64.0;
/// Tone frequencies are matched on this grid when looking for a common period.
const GRID_HZ: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    /// The full cosine potential of the SNAIL.
    FullCosine,
    /// Expansion to fourth order in the dynamic phase.
    Quartic,
    /// Quadratic potential only (χ₃ = χ₄ = 0).
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderCircuit {
    /// E_J2 of each cell, joules.
    pub e_j2: Vec<f64>,
    /// Shunt capacitance at node i+1 of cell i.
    pub capacitance: Vec<f64>,
    pub alpha: f64,
    pub n_large: u32,
    /// Reduced external phase, rad.
    pub phi_ext: f64,
    /// Static phase of the small junction.
    pub phi_min: f64,
    /// Normalized Taylor coefficients c₂, c₃, c₄ (identical in every cell).
    pub c: [f64; 3],
    pub element: Element,
    pub z_term: f64,
}

impl LadderCircuit {
    pub fn from_device(device: &Device, flux: f64, element: Element) -> Result<Self> {
        device.validate()?;
        let snail = device.snail(flux);
        let t = taylor_coeffs(&snail)?;
        let n = device.total_cells();
        let cps = device.cells_per_supercell;
        Ok(Self {
            e_j2: (0..n).map(|i| ghz_to_joules(device.cell_e_j2(i % cps))).collect(),
            capacitance: (0..n).map(|i| device.cell_capacitance(i % cps)).collect(),
            alpha: snail.alpha,
            n_large: snail.n_large,
            phi_ext: snail.reduced_flux(),
            phi_min: t.phi_min,
            c: [t.c2, t.c3, t.c4],
            element,
            z_term: device.z_term,
        })
    }

    pub fn cells(&self) -> usize {
        self.e_j2.len()
    }

    /// Linear inductance of cell i.
    pub fn inductance(&self, i: usize) -> f64 {
        PHI0 * PHI0 / (2.0 * self.c[0] * self.e_j2[i])
    }

    /// Branch current through cell i at dynamic phase x.
    #[inline]
    pub fn branch_current(&self, i: usize, x: f64) -> f64 {
        let [c2, c3, c4] = self.c;
        let du = match self.element {
            Element::FullCosine => {
                let n = self.n_large as f64;
                self.alpha * (self.phi_min + x).sin() - ((self.phi_ext - self.phi_min - x) / n).sin()
            }
            Element::Quartic => x * (2.0 * c2 + x * (3.0 * c3 + x * 4.0 * c4)),
            Element::Linear => 2.0 * c2 * x,
        };
        self.e_j2[i] / PHI0 * du
    }

    /// Energy stored in cell i's SNAIL above the static minimum.
    pub fn branch_energy(&self, i: usize, x: f64) -> f64 {
        let [c2, c3, c4] = self.c;
        let u = match self.element {
            Element::FullCosine => {
                let n = self.n_large as f64;
                let u = |p: f64| -self.alpha * p.cos() - n * ((self.phi_ext - p) / n).cos();
                u(self.phi_min + x) - u(self.phi_min)
            }
            Element::Quartic => x * x * (c2 + x * (c3 + x * c4)),
            Element::Linear => c2 * x * x,
        };
        self.e_j2[i] * u
    }
}

/// A drive tone at the input port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub f_hz: f64,
    /// Incident wave amplitude, volts (the source EMF is twice this).
    pub v_inc: f64,
    pub phase: f64,
}

impl Tone {
    pub fn from_dbm(f_hz: f64, dbm: f64, z0: f64) -> Self {
        Self {
            f_hz,
            v_inc: (2.0 * z0 * dbm_to_watts(dbm)).sqrt(),
            phase: 0.0,
        }
    }

    /// Tone whose incident current gives phase amplitude `amp` across `inductance`.
    pub fn from_phase_amplitude(f_hz: f64, amp: f64, inductance: f64, z0: f64) -> Self {
        Self {
            f_hz,
            v_inc: amp * PHI0 * z0 / inductance,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Raised-cosine turn-on time of the source.
    pub ramp: f64,
    /// Samples are kept from this time on.
    pub record_from: f64,
    /// Nodes whose voltages are recorded.
    pub probes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    /// Time of the first recorded sample.
    pub t0: f64,
    pub probes: Vec<usize>,
    /// Voltages per probe, one entry per recorded sample.
    pub voltages: Vec<Vec<f64>>,
    /// Power flowing into node 0 from the source resistor.
    pub p_in: Vec<f64>,
    /// Power dissipated in the load.
    pub p_out: Vec<f64>,
    /// Energy stored in capacitors and SNAILs.
    pub stored: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.p_in.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_in.is_empty()
    }

    pub fn probe(&self, node: usize) -> Option<&[f64]> {
        self.probes
            .iter()
            .position(|&p| p == node)
            .map(|k| self.voltages[k].as_slice())
    }
}

fn ramp(t: f64, t_ramp: f64) -> f64 {
    if t >= t_ramp {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (PI * t / t_ramp).cos())
    }
}

struct Model<'a> {
    c: &'a LadderCircuit,
    tones: &'a [Tone],
    ramp: f64,
    n: usize,
}

impl Model<'_> {
    fn source(&self, t: f64) -> f64 {
        let r = ramp(t, self.ramp);
        if r == 0.0 {
            return 0.0;
        }
        r * self
            .tones
            .iter()
            .map(|tn| 2.0 * tn.v_inc * (2.0 * PI * tn.f_hz * t + tn.phase).cos())
            .sum::<f64>()
    }

    /// State: phases θ₀..θ_N (units of φ₀) then voltages V₁..V_N.
    fn deriv(&self, t: f64, y: &[f64], dy: &mut [f64], cur: &mut [f64]) {
        let n = self.n;
        let r = self.c.z_term;
        for (i, ci) in cur.iter_mut().enumerate() {
            *ci = self.c.branch_current(i, y[i] - y[i + 1]);
        }
        dy[0] = (self.source(t) - r * cur[0]) / PHI0;
        for k in 1..=n {
            let v = y[n + k];
            dy[k] = v / PHI0;
            let out = if k < n { cur[k] } else { v / r };
            dy[n + k] = (cur[k - 1] - out) / self.c.capacitance[k - 1];
        }
    }

    fn node_voltage(&self, t: f64, y: &[f64], node: usize) -> f64 {
        if node == 0 {
            self.source(t) - self.c.z_term * self.c.branch_current(0, y[0] - y[1])
        } else {
            y[self.n + node]
        }
    }

    fn stored(&self, y: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                0.5 * self.c.capacitance[i] * y[n + i + 1].powi(2)
                    + self.c.branch_energy(i, y[i] - y[i + 1])
            })
            .sum()
    }
}

/// Fixed-step RK4 integration of the node equations from rest.
pub fn simulate(circuit: &LadderCircuit, tones: &[Tone], opts: &SimOptions) -> Result<TimeSeries> {
    let n = circuit.cells();
    if n == 0 {
        return Err(Error::InvalidParameter("ladder needs at least one cell".into()));
    }
    if !(opts.dt > 0.0 && opts.t_end > 0.0) {
        return Err(Error::InvalidParameter("dt and t_end must be positive".into()));
    }
    let f_top = tones.iter().map(|t| t.f_hz).fold(0.0, f64::max);
    if f_top * opts.dt * MIN_SAMPLES_PER_PERIOD > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "dt = {:e} s gives fewer than {MIN_SAMPLES_PER_PERIOD} samples per period at {f_top:e} Hz",
            opts.dt
        )));
    }
    if let Some(&p) = opts.probes.iter().find(|&&p| p > n) {
        return Err(Error::InvalidParameter(format!("probe node {p} beyond node {n}")));
    }
    let model = Model {
        c: circuit,
        tones,
        ramp: opts.ramp,
        n,
    };
    let steps = (opts.t_end / opts.dt).round() as usize;
    let first = ((opts.record_from / opts.dt).round() as usize).min(steps);
    let mut ts = TimeSeries {
        dt: opts.dt,
        t0: first as f64 * opts.dt,
        probes: opts.probes.clone(),
        voltages: vec![Vec::with_capacity(steps + 1 - first); opts.probes.len()],
        p_in: Vec::with_capacity(steps + 1 - first),
        p_out: Vec::with_capacity(steps + 1 - first),
        stored: Vec::with_capacity(steps + 1 - first),
    };
    let dim = 2 * n + 1;
    let mut y = vec![0.0; dim];
    let mut k = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut tmp = vec![0.0; dim];
    let mut cur = vec![0.0; n];
    let h = opts.dt;

    let record = |ts: &mut TimeSeries, t: f64, y: &[f64]| {
        for (slot, &p) in ts.voltages.iter_mut().zip(&opts.probes) {
            slot.push(model.node_voltage(t, y, p));
        }
        let i0 = circuit.branch_current(0, y[0] - y[1]);
        ts.p_in.push(model.node_voltage(t, y, 0) * i0);
        ts.p_out.push(y[2 * n].powi(2) / circuit.z_term);
        ts.stored.push(model.stored(y));
    };

    for step in 0..=steps {
        let t = step as f64 * h;
        if step >= first {
            record(&mut ts, t, &y);
        }
        if step == steps {
            break;
        }
        model.deriv(t, &y, &mut k[0], &mut cur);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        model.deriv(t + 0.5 * h, &tmp, &mut k[1], &mut cur);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        model.deriv(t + 0.5 * h, &tmp, &mut k[2], &mut cur);
        for i in 0..dim {
            tmp[i] = y[i] + h * k[2][i];
        }
        model.deriv(t + h, &tmp, &mut k[3], &mut cur);
        for i in 0..dim {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if let Some(node) = (0..=n).find(|&j| !(y[j].abs() <= INSTABILITY_PHASE)) {
            return Err(Error::Unstable { t: t + h, node });
        }
    }
    Ok(ts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    pub freqs_hz: Vec<f64>,
    /// Complex phasors V with v(t) = Re(V·e^{iωt}), volts.
    pub amplitudes: Vec<C64>,
}

impl SpectralResponse {
    pub fn at(&self, f_hz: f64) -> Option<C64> {
        self.freqs_hz
            .iter()
            .position(|&f| (f - f_hz).abs() <= 1e-9 * f_hz.abs().max(1.0))
            .map(|k| self.amplitudes[k])
    }
}

/// Phasors at `freqs` of the probe voltage at `node`, from every recorded
/// sample except the last (the window spans `len − 1` steps).
pub fn steady_state_spectrum(ts: &TimeSeries, node: usize, freqs: &[f64]) -> Result<SpectralResponse> {
    let v = ts
        .probe(node)
        .ok_or_else(|| Error::InvalidParameter(format!("node {node} was not recorded")))?;
    if v.len() < 2 {
        return Err(Error::InvalidParameter("time series too short".into()));
    }
    let m = v.len() - 1;
    let window = m as f64 * ts.dt;
    let mut amplitudes = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let cycles = f * window;
        if (cycles - cycles.round()).abs() > 1e-6 {
            return Err(Error::Incommensurate(format!(
                "{f:e} Hz completes {cycles:.6} periods in the {window:e} s window"
            )));
        }
        if f > 0.0 && cycles < 20.0 - 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "window holds {cycles:.2} periods of {f:e} Hz; at least 20 are needed"
            )));
        }
        let w = 2.0 * PI * f;
        let sum: C64 = v[..m]
            .iter()
            .enumerate()
            .map(|(k, &x)| x * C64::from_polar(1.0, -w * (ts.t0 + k as f64 * ts.dt)))
            .sum();
        amplitudes.push(sum * (2.0 / m as f64));
    }
    Ok(SpectralResponse {
        freqs_hz: freqs.to_vec(),
        amplitudes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub p_in: f64,
    pub p_out: f64,
    /// (E_end − E_start) / window.
    pub drift: f64,
}

impl EnergyBalance {
    /// |p_in − p_out − drift| / p_in.
    pub fn relative_residual(&self) -> f64 {
        (self.p_in - self.p_out - self.drift).abs() / self.p_in.abs()
    }
}

/// Time-averaged power flow over the recorded window.
pub fn energy_balance(ts: &TimeSeries) -> Result<EnergyBalance> {
    if ts.len() < 2 {
        return Err(Error::InvalidParameter("time series too short".into()));
    }
    let m = ts.len() - 1;
    // Trapezoidal averages so that the bookkeeping is exact to O(dt²).
    let avg = |x: &[f64]| (x[1..m].iter().sum::<f64>() + 0.5 * (x[0] + x[m])) / m as f64;
    Ok(EnergyBalance {
        p_in: avg(&ts.p_in),
        p_out: avg(&ts.p_out),
        drift: (ts.stored[m] - ts.stored[0]) / (m as f64 * ts.dt),
    })
}

/// Greatest common frequency of the set on a 1 kHz grid, Hz.
pub fn common_base(freqs: &[f64]) -> Result<f64> {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut g = 0u64;
    for &f in freqs {
        let q = f / GRID_HZ;
        if !(f > 0.0) || (q - q.round()).abs() > 1e-6 {
            return Err(Error::Incommensurate(format!(
                "{f:e} Hz is not on the {GRID_HZ} Hz grid"
            )));
        }
        g = gcd(g, q.round() as u64);
    }
    if g == 0 {
        return Err(Error::Incommensurate("no frequencies given".into()));
    }
    Ok(g as f64 * GRID_HZ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Turn-on time of the source.
    pub ramp: f64,
    /// Time discarded before the analysis window; `None` picks a default
    /// from the chain length.
    pub transient: Option<f64>,
    /// The window is this many common periods long (at least).
    pub windows: usize,
    pub samples_per_period: f64,
    /// Longest common period accepted, seconds.
    pub max_window: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            ramp: 10e-9,
            transient: None,
            windows: 1,
            samples_per_period: SAMPLES_PER_PERIOD,
            max_window: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub dt: f64,
    pub record_from: f64,
    pub t_end: f64,
    pub window: f64,
}

/// Picks dt, transient and window so that every tone and analysis
/// frequency completes an integer number of periods in the window.
pub fn plan(circuit: &LadderCircuit, tones: &[Tone], analysis: &[f64], opts: &OracleOptions) -> Result<Plan> {
    let all: Vec<f64> = tones.iter().map(|t| t.f_hz).chain(analysis.iter().copied()).collect();
    let base = common_base(&all)?;
    let period = 1.0 / base;
    if period > opts.max_window {
        return Err(Error::Incommensurate(format!(
            "common period {period:e} s exceeds the {:e} s limit",
            opts.max_window
        )));
    }
    let f_min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = all.iter().copied().fold(0.0, f64::max);
    let reps = ((20.0 / f_min) / period - 1e-9).ceil().max(opts.windows.max(1) as f64) as usize;
    let window = reps as f64 * period;
    let m = (window * opts.samples_per_period * f_max).ceil();
    let dt = window / m;
    let transit: f64 = (0..circuit.cells())
        .map(|i| (circuit.inductance(i) * circuit.capacitance[i]).sqrt())
        .sum();
    // Band-edge ringing from the turn-on decays slowly, hence the generous default.
    let transient = opts.transient.unwrap_or(opts.ramp + (8.0 * transit).max(40e-9));
    let first = (transient / dt).ceil();
    Ok(Plan {
        dt,
        record_from: first * dt,
        t_end: (first + m) * dt,
        window,
    })
}

/// Output (load) phasors at the analysis frequencies for a steady drive.
pub fn steady_response(
    circuit: &LadderCircuit,
    tones: &[Tone],
    analysis: &[f64],
    opts: &OracleOptions,
) -> Result<SpectralResponse> {
    let p = plan(circuit, tones, analysis, opts)?;
    let ts = simulate(
        circuit,
        tones,
        &SimOptions {
            dt: p.dt,
            t_end: p.t_end,
            ramp: opts.ramp,
            record_from: p.record_from,
            probes: vec![circuit.cells()],
        },
    )?;
    steady_state_spectrum(&ts, circuit.cells(), analysis)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGain {
    pub gain_db: f64,
    /// Load phasors with the pump on, at (f_s, f_i, f_p, 2f_p).
    pub pumped: SpectralResponse,
    pub unpumped: SpectralResponse,
}

/// Signal gain as the output ratio at f_s between pump-on and pump-off runs.
pub fn oracle_gain(circuit: &LadderCircuit, pump: &Tone, signal: &Tone, opts: &OracleOptions) -> Result<OracleGain> {
    if signal.v_inc > pump.v_inc * 10f64.powf(-30.0 / 20.0) && pump.v_inc > 0.0 {
        return Err(Error::InvalidParameter(
            "signal must be at least 30 dB below the pump".into(),
        ));
    }
    if !(signal.f_hz < pump.f_hz) {
        return Err(Error::InvalidParameter("signal must lie below the pump".into()));
    }
    let analysis = [signal.f_hz, pump.f_hz - signal.f_hz, pump.f_hz, 2.0 * pump.f_hz];
    let off_pump = Tone { v_inc: 0.0, ..*pump };
    let (on, off) = rayon::join(
        || steady_response(circuit, &[*pump, *signal], &analysis, opts),
        || steady_response(circuit, &[off_pump, *signal], &analysis, opts),
    );
    let (on, off) = (on?, off?);
    Ok(OracleGain {
        gain_db: 20.0 * (on.amplitudes[0].norm() / off.amplitudes[0].norm()).log10(),
        pumped: on,
        unpumped: off,
    })
}

/// Oracle gains over a set of signal frequencies, one simulation pair each.
pub fn oracle_gain_sweep(
    circuit: &LadderCircuit,
    pump: &Tone,
    signals: &[Tone],
    opts: &OracleOptions,
) -> Vec<Result<OracleGain>> {
    signals
        .par_iter()
        .map(|s| oracle_gain(circuit, pump, s, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{bloch, calibrate, chain_sparams, CalibrationTargets};

    fn device(cells: usize) -> Device {
        calibrate(&CalibrationTargets::reference(Device::reference_layout(800.0, 2e-13)))
            .unwrap()
            .device
            .with_cells(cells)
    }

    fn run(c: &LadderCircuit, tones: &[Tone], analysis: &[f64], o: &OracleOptions) -> SpectralResponse {
        steady_response(c, tones, analysis, o).unwrap()
    }

    #[test]
    fn zero_drive_stays_at_rest() {
        let c = LadderCircuit::from_device(&device(12), 0.38, Element::FullCosine).unwrap();
        let ts = simulate(
            &c,
            &[],
            &SimOptions {
                dt: 1e-12,
                t_end: 2e-9,
                ramp: 1e-9,
                record_from: 0.0,
                probes: vec![0, 6, 12],
            },
        )
        .unwrap();
        assert!(ts.voltages.iter().flatten().all(|&v| v == 0.0));
        assert!(ts.stored.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn branch_current_matches_linear_inductance() {
        let c = LadderCircuit::from_device(&device(6), 0.38, Element::FullCosine).unwrap();
        for i in 0..6 {
            let x = 1e-6;
            let expect = PHI0 * x / c.inductance(i);
            assert!((c.branch_current(i, x) / expect - 1.0).abs() < 1e-5);
            // Energy and current are consistent.
            let h = 1e-5;
            let de = (c.branch_energy(i, 0.2 + h) - c.branch_energy(i, 0.2 - h)) / (2.0 * h);
            assert!((de / PHI0 / c.branch_current(i, 0.2) - 1.0).abs() < 1e-8);
        }
        let l = device(3).l1(0.38).unwrap();
        assert!((c.inductance(0) / l - 1.0).abs() < 1e-12);
        assert!((c.inductance(2) / (1.5 * l) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_ladder_reproduces_chain_transmission() {
        let d = device(30);
        let c = LadderCircuit::from_device(&d, 0.38, Element::Linear).unwrap();
        let chain = d.chain(0.38).unwrap();
        let o = OracleOptions::default();
        for f in [3e9, 6e9, 12.4e9] {
            let tone = Tone::from_dbm(f, -120.0, d.z_term);
            let out = run(&c, &[tone], &[f], &o).amplitudes[0].norm() / tone.v_inc;
            let s21 = chain_sparams(2.0 * PI * f, &chain).unwrap().s21.norm();
            assert!((out / s21 - 1.0).abs() < 0.01, "{f:e}: {out} vs {s21}");
        }
        // 12.4 GHz sits in the stop band: ten more supercells cost Re γ each.
        let g = bloch(2.0 * PI * 12.4e9, &d.supercell(0.38).unwrap()).unwrap().gamma.re;
        let tone = Tone::from_dbm(12.4e9, -120.0, d.z_term);
        let longer = LadderCircuit::from_device(&d.with_cells(60), 0.38, Element::Linear).unwrap();
        let a = run(&c, &[tone], &[12.4e9], &o).amplitudes[0].norm();
        let b = run(&longer, &[tone], &[12.4e9], &o).amplitudes[0].norm();
        let per_super = (a / b).ln() / 10.0;
        assert!((per_super / g - 1.0).abs() < 0.01, "{per_super} vs {g}");
    }

    #[test]
    fn linear_ladder_makes_no_harmonic() {
        let d = device(15);
        let c = LadderCircuit::from_device(&d, 0.38, Element::Linear).unwrap();
        let tone = Tone::from_dbm(4e9, -100.0, d.z_term);
        let r = run(&c, &[tone], &[4e9, 8e9], &OracleOptions::default());
        assert!(r.amplitudes[1].norm() < 1e-9 * r.amplitudes[0].norm());
        let c = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let r = run(&c, &[tone], &[4e9, 8e9], &OracleOptions::default());
        assert!(r.amplitudes[1].norm() > 1e-4 * r.amplitudes[0].norm());
    }

    #[test]
    fn doubling_the_window_leaves_amplitudes() {
        let d = device(15);
        let c = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let tones = [Tone::from_dbm(6.2e9, -100.0, d.z_term), Tone::from_dbm(2.9e9, -130.0, d.z_term)];
        let freqs = [2.9e9, 3.3e9, 6.2e9, 9.1e9, 12.4e9];
        let o = OracleOptions::default();
        let a = run(&c, &tones, &freqs, &o);
        let b = run(&c, &tones, &freqs, &OracleOptions { windows: 2, ..o });
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            assert!((x - y).norm() <= 1e-6 * x.norm(), "{x} {y}");
        }
        // The mixing products are there.
        assert!(a.amplitudes[1].norm() > 1e-3 * a.amplitudes[0].norm());
        assert!(a.amplitudes[3].norm() > 1e-3 * a.amplitudes[0].norm());
    }

    #[test]
    fn incommensurate_requests_are_rejected() {
        let d = device(6);
        let c = LadderCircuit::from_device(&d, 0.38, Element::Linear).unwrap();
        let tone = Tone::from_dbm(4e9, -100.0, d.z_term);
        let err = steady_response(&c, &[tone], &[4.0000000005e9], &OracleOptions::default());
        assert!(matches!(err, Err(Error::Incommensurate(_))));
        let ts = simulate(
            &c,
            &[tone],
            &SimOptions {
                dt: 1e-12,
                t_end: 11e-9,
                ramp: 1e-9,
                record_from: 1e-9,
                probes: vec![6],
            },
        )
        .unwrap();
        assert!(matches!(
            steady_state_spectrum(&ts, 6, &[4.05e9]),
            Err(Error::Incommensurate(_))
        ));
    }

    #[test]
    fn power_flow_balances() {
        let d = device(30);
        let c = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let tone = Tone::from_dbm(6.2e9, -95.0, d.z_term);
        let o = OracleOptions::default();
        let p = plan(&c, &[tone], &[6.2e9], &o).unwrap();
        let ts = simulate(
            &c,
            &[tone],
            &SimOptions {
                dt: p.dt,
                t_end: p.t_end,
                ramp: o.ramp,
                record_from: p.record_from,
                probes: vec![c.cells()],
            },
        )
        .unwrap();
        let b = energy_balance(&ts).unwrap();
        assert!(b.relative_residual() < 1e-3, "{b:?}");
        assert!(b.p_out > 0.5 * b.p_in);
    }

    #[test]
    fn quartic_and_full_elements_agree_for_moderate_drive() {
        let d = device(30);
        let full = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let quartic = LadderCircuit { element: Element::Quartic, ..full.clone() };
        let freqs = [6.2e9, 12.4e9];
        let o = OracleOptions::default();
        let rel = |amp: f64| {
            let pump = Tone::from_phase_amplitude(6.2e9, amp, d.l1(0.38).unwrap(), d.z_term);
            let a = run(&full, &[pump], &freqs, &o);
            let b = run(&quartic, &[pump], &freqs, &o);
            [0, 1].map(|k| (a.amplitudes[k].norm() / b.amplitudes[k].norm() - 1.0).abs())
        };
        let r = rel(0.2);
        assert!(r[0] < 0.01 && r[1] < 0.01, "{r:?}");
        // Near 0.3 rad the fifth-order term moves the harmonic by more than 1%.
        let r = rel(0.3);
        assert!(r[0] < 0.01 && r[1] < 0.02, "{r:?}");
    }

    #[test]
    fn runs_are_bitwise_repeatable() {
        let d = device(9);
        let c = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let tones = [Tone::from_dbm(6.2e9, -95.0, d.z_term)];
        let a = run(&c, &tones, &[6.2e9, 12.4e9], &OracleOptions::default());
        let b = run(&c, &tones, &[6.2e9, 12.4e9], &OracleOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn unpumped_gain_is_zero_db() {
        let d = device(15);
        let c = LadderCircuit::from_device(&d, 0.38, Element::FullCosine).unwrap();
        let pump = Tone::from_dbm(6.2e9, f64::NEG_INFINITY, d.z_term);
        let signal = Tone::from_dbm(2.9e9, -130.0, d.z_term);
        let g = oracle_gain(&c, &pump, &signal, &OracleOptions::default()).unwrap();
        assert_eq!(g.gain_db, 0.0);
    }

    #[test]
    fn runaway_drive_is_detected() {
        let d = device(6);
        let c = LadderCircuit::from_device(&d, 0.38, Element::Quartic).unwrap();
        let tone = Tone::from_phase_amplitude(1e9, 500.0, d.l1(0.38).unwrap(), d.z_term);
        let err = simulate(
            &c,
            &[tone],
            &SimOptions {
                dt: 1e-12,
                t_end: 20e-9,
                ramp: 0.0,
                record_from: 0.0,
                probes: vec![],
            },
        );
        assert!(matches!(err, Err(Error::Unstable { .. })), "{err:?}");
    }
}
