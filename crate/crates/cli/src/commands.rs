use std::f64::consts::PI;
use std::path::PathBuf;

use rayon::prelude::*;
use twpa_core::dispersion::{
    bloch, calibrate, find_bands, s21_flux_map, BandKind, BandStructure, CalibrationTargets,
};
use twpa_core::ladder::{self, Element, LadderCircuit, OracleOptions, SimOptions, Tone};
use twpa_core::mixing::{
    gain_sweep, harmonic_response, make_mode, pump_amplitude, shg_analytic, shg_two_mode,
    shg_validity_warning, CmeOptions, GainTrace, PumpSpec, Role,
};
use twpa_core::noise::{self, FitOptions, NoiseModel, Observation};
use twpa_core::snail::{chi4_zero_crossing, flux_sweep, FluxRow};
use twpa_core::Device;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{row, Artifacts};

/// Operating points of the published gain curves: (flux, f_p GHz, dBm).
pub const GAIN_POINTS: [(f64, f64, f64); 4] = [
    (0.38, 6.2, -91.4),
    (0.34, 7.0, -87.4),
    (0.22, 8.0, -82.25),
    (0.21, 8.4, -82.4),
];

/// Grid step of oracle signal frequencies.
const ORACLE_GRID_HZ: f64 = 10e6;

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub art: &'a mut Artifacts,
    /// Failed grid points, reported with exit code 4.
    pub gaps: Vec<String>,
}

impl Run<'_> {
    fn cme(&self) -> CmeOptions {
        CmeOptions {
            steps_per_cell: self.cfg.execution.steps_per_cell,
            ..CmeOptions::default()
        }
    }

    /// The configured device, calibrated first when requested. The
    /// calibration report is written alongside the other artifacts.
    pub fn device(&mut self) -> Result<Device, CliError> {
        let template = self.cfg.device_template();
        if !self.cfg.calibrates() {
            template.validate()?;
            return Ok(template);
        }
        let d = &self.cfg.device;
        let cal = calibrate(&CalibrationTargets {
            layout: template,
            line_impedance: d.target_impedance_ohm,
            impedance_flux: d.target_flux,
            edge_hz: d.target_edge_ghz * 1e9,
            edge_flux: d.target_flux,
        })?;
        self.art.text("calibration.txt", &cal.report.to_string())?;
        Ok(cal.device)
    }

    fn pump(&self) -> PumpSpec {
        PumpSpec {
            f_hz: self.cfg.operating.fp_ghz * 1e9,
            power_dbm: self.cfg.operating.power_dbm,
        }
    }

    fn gain_csv(&mut self, name: &str, t: &GainTrace) -> Result<(), CliError> {
        let rows = t.freqs_hz.iter().zip(&t.gain_db).map(|(f, g)| vec![Some(*f), *g]);
        self.art.csv(name, &["f_hz", "gain_db"], rows)?;
        self.gaps.extend(t.failures.iter().map(|f| format!("{name}: {f}")));
        for w in &t.warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    }
}

pub fn snail_sweep(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let fluxes = run.cfg.flux_grid();
    let results = flux_sweep(&device.snail(0.0), &fluxes);
    let mut ok: Vec<FluxRow> = Vec::new();
    let mut rows = Vec::new();
    for (flux, r) in fluxes.iter().zip(results) {
        match r {
            Ok(r) => {
                let c = r.coeffs;
                rows.push(row(&[r.flux, c.phi_min, c.c2, c.c3, c.c4, c.chi3, c.chi4, r.inductance]));
                ok.push(r);
            }
            Err(e) => {
                rows.push([Some(*flux)].into_iter().chain([None; 7]).collect());
                run.gaps.push(format!("flux {flux}: {e}"));
            }
        }
    }
    run.art.csv(
        "snail_sweep.csv",
        &["phi_ext_over_phi0", "phi_min_rad", "c2", "c3", "c4", "chi3", "chi4", "L_henries"],
        rows,
    )?;
    match chi4_zero_crossing(&ok) {
        Some(z) => println!("chi4 crosses zero at {z:.4} Phi0"),
        None => println!("chi4 does not change sign on this grid"),
    }
    Ok(())
}

fn bands_csv(art: &mut Artifacts, name: &str, b: &BandStructure) -> Result<(), CliError> {
    let rows = b.bands.iter().map(|band| {
        let kind = if band.kind == BandKind::Pass { 0.0 } else { 1.0 };
        row(&[band.f_lo, band.f_hi, kind])
    });
    art.csv(name, &["f_lo_hz", "f_hi_hz", "stop"], rows)
}

pub fn dispersion(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let sc = device.supercell(run.cfg.operating.flux)?;
    let freqs = run.cfg.freq_grid();
    let results: Vec<_> = freqs.par_iter().map(|&f| bloch(2.0 * PI * f, &sc)).collect();
    let mut rows = Vec::new();
    for (f, r) in freqs.iter().zip(results) {
        match r {
            Ok(r) => rows.push(row(&[
                *f,
                r.gamma.re,
                r.gamma.im,
                r.bloch_impedance.re,
                r.bloch_impedance.im,
            ])),
            Err(e) => {
                rows.push(vec![Some(*f), None, None, None, None]);
                run.gaps.push(format!("{f:e} Hz: {e}"));
            }
        }
    }
    run.art.csv(
        "dispersion.csv",
        &["f_hz", "re_gamma", "im_gamma_k_a", "z_bloch_re", "z_bloch_im"],
        rows,
    )?;
    let f_max = freqs.iter().copied().fold(0.0, f64::max);
    let bands = find_bands(&sc, f_max, (f_max / 2000.0).max(1e6))?;
    for w in &bands.warnings {
        eprintln!("warning: {w}");
    }
    for b in bands.stop_bands_below_cutoff() {
        println!("stop band {:.4} - {:.4} GHz", b.f_lo / 1e9, b.f_hi / 1e9);
    }
    bands_csv(run.art, "bands.csv", &bands)
}

pub fn s21_map(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let map = s21_flux_map(&run.cfg.freq_grid(), &run.cfg.flux_grid(), &device);
    let header: Vec<String> = std::iter::once("f_hz".to_string())
        .chain(map.fluxes.iter().map(|x| x.to_string()))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = map
        .freqs_hz
        .iter()
        .zip(&map.db)
        .map(|(f, r)| std::iter::once(Some(*f)).chain(r.iter().copied()).collect());
    run.art.csv("s21_map.csv", &header, rows)?;
    run.gaps.extend(map.failures);
    Ok(())
}

pub fn calibrate_cmd(run: &mut Run) -> Result<(), CliError> {
    if !run.cfg.calibrates() {
        return Err(CliError::Config(
            "device.e_j2_ghz is fixed; set it to \"calibrate\" to run the calibration".into(),
        ));
    }
    let d = run.device()?;
    println!(
        "e_j2 = {:.6} GHz, C = {:.6e} F, sqrt(L_avg/C) = {:.4} ohm",
        d.e_j2_ghz,
        d.capacitance,
        d.line_impedance(run.cfg.device.target_flux)?
    );
    Ok(())
}

pub fn gain_sweep_cmd(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let pump = run.pump();
    let flux = run.cfg.operating.flux;
    let t = gain_sweep(&run.cfg.signal_grid(), &pump, run.cfg.tier(), &device, flux, &run.cme());
    run.gain_csv("gain.csv", &t)?;
    if let Some((f, g)) = t.peak() {
        println!("peak gain {g:.2} dB at {:.4} GHz", f / 1e9);
    }
    if run.cfg.execution.oracle {
        oracle_gain_table(run, &device)?;
    }
    Ok(())
}

/// Oracle gain next to the CME gain on the oracle's chain length.
fn oracle_gain_table(run: &mut Run, device: &Device) -> Result<(), CliError> {
    let cells = match run.cfg.execution.oracle_cells {
        0 => device.total_cells(),
        n => n,
    };
    let short = device.with_cells(cells);
    let flux = run.cfg.operating.flux;
    let pump = run.pump();
    let circuit = LadderCircuit::from_device(&short, flux, Element::FullCosine)?;
    let pump_tone = Tone::from_dbm(pump.f_hz, pump.power_dbm, short.z_term);
    let mut freqs: Vec<f64> = run
        .cfg
        .signal_grid()
        .iter()
        .map(|f| (f / ORACLE_GRID_HZ).round() * ORACLE_GRID_HZ)
        .filter(|&f| f > 0.0 && f < pump.f_hz)
        .collect();
    freqs.dedup();
    let signals: Vec<Tone> = freqs
        .iter()
        .map(|&f| Tone {
            f_hz: f,
            v_inc: pump_tone.v_inc * 1e-3,
            phase: 0.0,
        })
        .collect();
    let oracle = ladder::oracle_gain_sweep(&circuit, &pump_tone, &signals, &OracleOptions::default());
    let cme = gain_sweep(&freqs, &pump, run.cfg.tier(), &short, flux, &run.cme());
    let mut rows = Vec::new();
    for ((f, o), c) in freqs.iter().zip(oracle).zip(&cme.gain_db) {
        let o = match o {
            Ok(o) => Some(o.gain_db),
            Err(e) => {
                run.gaps.push(format!("oracle {f:e} Hz: {e}"));
                None
            }
        };
        rows.push(vec![Some(*f), o, *c]);
    }
    run.gaps.extend(cme.failures.iter().map(|f| format!("cme: {f}")));
    run.art.csv("gain_oracle.csv", &["f_hz", "gain_db", "cme_gain_db"], rows)
}

pub fn shg(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let flux = run.cfg.operating.flux;
    let pump = run.pump();
    let f = pump.f_hz;
    let one = make_mode(&device, flux, f, Role::Pump)?;
    let two = make_mode(&device, flux, 2.0 * f, Role::Harmonic("2f".into()))?;
    if one.evanescent || two.evanescent {
        return Err(CliError::Numeric(format!(
            "the two-mode check needs f and 2f in pass bands; {:.4} GHz or its harmonic is evanescent",
            f / 1e9
        )));
    }
    let amp = pump_amplitude(&pump, device.l1(flux)?, device.z_term)?;
    let chi3 = device.coeffs(flux)?.chi3;
    let delta = two.k - 2.0 * one.k;
    let eps3 = (chi3 * amp).abs() * one.k;
    if let Some(w) = shg_validity_warning(delta, eps3) {
        eprintln!("warning: {w}");
    }
    let cells = device.total_cells() as f64;
    let steps = 16;
    let trace = shg_two_mode(delta, eps3, cells, steps);
    let rows = trace
        .x
        .iter()
        .zip(&trace.harmonic)
        .enumerate()
        .filter(|(i, _)| i % steps == 0)
        .map(|(_, (x, h))| row(&[*x, *h, shg_analytic(*x, delta, eps3)]));
    run.art.csv("shg.csv", &["x_cells", "two_mode", "analytic"], rows)?;
    println!("delta*a = {delta:.5}, eps3 = {eps3:.5}, peak |A2/A1(0)| = {:.5}", trace.peak());
    Ok(())
}

pub fn harmonic_response_cmd(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let o = &run.cfg.operating;
    let r = harmonic_response(&run.cfg.freq_grid(), o.tone_dbm, &device, o.flux, &run.cme());
    let rows = r
        .freqs_hz
        .iter()
        .zip(r.out_f_db.iter().zip(&r.out_2f_db))
        .map(|(f, (a, b))| vec![Some(*f), *a, *b]);
    run.art.csv("harmonic_response.csv", &["f_hz", "out_f_db", "out_2f_db"], rows)?;
    run.gaps.extend(r.failures);
    Ok(())
}

pub fn oracle(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let cells = match run.cfg.execution.oracle_cells {
        0 => device.total_cells(),
        n => n,
    };
    let short = device.with_cells(cells);
    let o = &run.cfg.operating;
    let circuit = LadderCircuit::from_device(&short, o.flux, Element::FullCosine)?;
    let fp = o.fp_ghz * 1e9;
    let fs = o.signal_ghz.map(|g| g * 1e9).unwrap_or(0.3 * fp);
    let fs = (fs / ORACLE_GRID_HZ).round() * ORACLE_GRID_HZ;
    if !(fs > 0.0 && fs < fp) {
        return Err(CliError::Config(format!("signal {fs:e} Hz must lie in (0, f_p)")));
    }
    let pump = Tone::from_dbm(fp, o.power_dbm, short.z_term);
    let signal = Tone::from_dbm(fs, o.power_dbm + o.signal_offset_db, short.z_term);
    let fi = fp - fs;
    let analysis = [fs, fi, fp, 2.0 * fp, fp + fs, fp + fi, 2.0 * fp + fs, 2.0 * fp + fi, 3.0 * fp];
    let opts = OracleOptions::default();
    let node = circuit.cells();
    let run_tones = |tones: &[Tone]| -> Result<(ladder::TimeSeries, ladder::SpectralResponse), CliError> {
        let p = ladder::plan(&circuit, tones, &analysis, &opts)?;
        let ts = ladder::simulate(
            &circuit,
            tones,
            &SimOptions {
                dt: p.dt,
                t_end: p.t_end,
                ramp: opts.ramp,
                record_from: p.record_from,
                probes: vec![node],
            },
        )?;
        let s = ladder::steady_state_spectrum(&ts, node, &analysis)?;
        Ok((ts, s))
    };
    let (on, off) = rayon::join(|| run_tones(&[pump, signal]), || run_tones(&[signal]));
    let ((ts, on), (_, off)) = (on?, off?);
    let rows = on.freqs_hz.iter().zip(&on.amplitudes).map(|(f, a)| row(&[*f, a.re, a.im]));
    run.art.csv("oracle_spectrum.csv", &["f_hz", "amp_re", "amp_im"], rows)?;
    if run.cfg.execution.dump_time_series {
        let v = ts.probe(node).unwrap_or(&[]);
        let rows = v
            .iter()
            .enumerate()
            .map(|(i, v)| row(&[ts.t0 + i as f64 * ts.dt, *v]));
        run.art.csv("oracle_time_series.csv", &["t_s", "v_load"], rows)?;
    }
    let gain = 20.0 * (on.amplitudes[0].norm() / off.amplitudes[0].norm()).log10();
    let h2 = 20.0 * (on.amplitudes[3].norm() / pump.v_inc).log10();
    println!(
        "{cells} cells: signal gain {gain:.3} dB at {:.4} GHz, 2f_p output {h2:.2} dB re incident pump",
        fs / 1e9
    );
    Ok(())
}

fn read_observations(path: &PathBuf) -> Result<Vec<Observation>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let g = col("gain_db").ok_or_else(|| bad("missing gain_db column".into()))?;
    let kind = match (col("dsnr_db"), col("t_noise_k"), col("f_hz")) {
        (Some(s), _, _) => Ok((Some(s), None)),
        (None, Some(t), Some(f)) => Ok((None, Some((t, f)))),
        _ => Err(bad("expected columns gain_db,dsnr_db or gain_db,t_noise_k,f_hz".into())),
    }?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 2, i + 1)))
        };
        let gain_db = num(g)?;
        out.push(match kind {
            (Some(s), _) => Observation::DeltaSnr { gain_db, dsnr_db: num(s)? },
            (None, Some((t, f))) => Observation::NoiseTemperature {
                gain_db,
                t_k: num(t)?,
                f_hz: num(f)?,
            },
            _ => unreachable!(),
        });
    }
    Ok(out)
}

pub fn noise_fit(run: &mut Run, data: &[PathBuf]) -> Result<(), CliError> {
    if data.is_empty() {
        return Err(CliError::Config("noise-fit needs at least one --data CSV".into()));
    }
    let mut obs = Vec::new();
    for p in data {
        obs.extend(read_observations(p)?);
    }
    let o = &run.cfg.operating;
    let opts = FitOptions {
        n_in: o.noise_n_in,
        seed: run.cfg.execution.seed,
        ..FitOptions::default()
    };
    let fit = noise::fit(&obs, &opts).map_err(|e| match e {
        twpa_core::Error::DegenerateData(m) => CliError::Config(format!("degenerate data: {m}")),
        other => other.into(),
    })?;
    let m = fit.model;
    let f = o.noise_f_ghz * 1e9;
    let a_inf = noise::added_photons_limit(m.d)?;
    let mut report = String::new();
    report.push_str("[fit]\n");
    report.push_str(&format!("d = {:.6}\na_h = {:.6}\nn_in = {}\n", m.d, m.a_h, m.n_in));
    report.push_str(&format!("sigma_d = {:.3e}\nsigma_a_h = {:.3e}\n", fit.sigma[0], fit.sigma[1]));
    report.push_str(&format!(
        "objective_change_per_percent = [{:.3e}, {:.3e}]\n",
        fit.sensitivity[0], fit.sensitivity[1]
    ));
    report.push_str(&format!("residual_norm_db = {:.6e}\n", fit.residual_norm));
    report.push_str(&format!("a_infinity_photons = {a_inf:.6}\n"));
    report.push_str(&format!(
        "a_infinity_k = {:.6}\n# kelvin = photons * h * f / k_B at f = {} GHz\n",
        noise::noise_temperature(a_inf, f)?,
        o.noise_f_ghz
    ));
    for flag in &fit.flags {
        report.push_str(&format!("# flag: {flag}\n"));
        eprintln!("warning: {flag}");
    }
    run.art.text("noise_fit.txt", &report)?;
    let table = (0..=60).map(|i| {
        let g_db = 0.5 * i as f64;
        let g = noise::db_to_linear(g_db);
        let n = noise::total_noise(&m, g).expect("validated model");
        row(&[
            g_db,
            noise::added_photons(g, m.d).expect("validated model"),
            n,
            noise::linear_to_db(noise::delta_snr(&m, g).expect("validated model")),
            noise::noise_temperature(n, f).expect("positive frequency"),
        ])
    });
    run.art.csv(
        "noise_added.csv",
        &["gain_db", "added_photons", "total_photons", "dsnr_db", "t_noise_k"],
        table,
    )?;
    let rows = obs.iter().zip(&fit.residuals_db).map(|(o, r)| row(&[o.gain_db(), *r]));
    run.art.csv("noise_residuals.csv", &["gain_db", "residual_db"], rows)?;
    println!("D = {:.4}, A_H = {:.3}, A_inf = {a_inf:.4} photons", m.d, m.a_h);
    let _ = NoiseModel::new(m.d, m.a_h, m.n_in)?;
    Ok(())
}

fn flux_tag(flux: f64) -> String {
    format!("{flux:.2}").replace('.', "p")
}

pub fn reproduce_paper(run: &mut Run) -> Result<(), CliError> {
    let device = run.device()?;
    let opts = run.cme();
    let tier = run.cfg.tier();
    let n = run.cfg.operating.signal_points;
    let mut summary = String::from("[reproduce_paper]\n");
    summary.push_str(&format!("tier = \"{}\"\nsignal_points = {n}\n", run.cfg.execution.tier));

    let sc = device.supercell(0.38)?;
    let bands = find_bands(&sc, 30e9, 10e6)?;
    bands_csv(run.art, "bands_0p38.csv", &bands)?;
    if let Some(b) = bands.stop_bands_below_cutoff().first() {
        summary.push_str(&format!("first_stop_band_hz = [{:.6e}, {:.6e}]\n", b.f_lo, b.f_hi));
    }

    let freqs: Vec<f64> = (0..70).map(|i| 3e9 + 0.15e9 * i as f64).collect();
    let h = harmonic_response(&freqs, -111.0, &device, 0.38, &opts);
    let rows = h
        .freqs_hz
        .iter()
        .zip(h.out_f_db.iter().zip(&h.out_2f_db))
        .map(|(f, (a, b))| vec![Some(*f), *a, *b]);
    run.art.csv("fig3_harmonic_response.csv", &["f_hz", "out_f_db", "out_2f_db"], rows)?;
    run.gaps.extend(h.failures.iter().map(|f| format!("fig3: {f}")));

    for (i, &(flux, fp_ghz, dbm)) in GAIN_POINTS.iter().enumerate() {
        let pump = PumpSpec { f_hz: fp_ghz * 1e9, power_dbm: dbm };
        let grid: Vec<f64> = (1..=n).map(|k| pump.f_hz * k as f64 / (n + 1) as f64).collect();
        let amp = pump_amplitude(&pump, device.l1(flux)?, device.z_term)?;
        let two_p = make_mode(&device, flux, 2.0 * pump.f_hz, Role::Harmonic("2p".into()))?;
        let mut curves = vec![("loaded", device)];
        if i == 0 {
            curves.push(("unloaded", device.unloaded()));
        }
        for (label, d) in curves {
            let t = gain_sweep(&grid, &pump, tier, &d, flux, &opts);
            let name = if i == 0 {
                format!("fig4a_gain_{label}.csv")
            } else {
                format!("fig5_gain_{}.csv", flux_tag(flux))
            };
            run.gain_csv(&name, &t)?;
            let (pf, pg) = t.peak().unwrap_or((f64::NAN, f64::NAN));
            summary.push_str(&format!(
                "\n[[point]]\nfile = \"{name}\"\nflux = {flux}\nfp_ghz = {fp_ghz}\npower_dbm = {dbm}\n\
                 pump_phase_amplitude = {amp:.6}\nsecond_harmonic_evanescent = {}\n\
                 peak_f_hz = {pf:.6e}\npeak_gain_db = {pg:.4}\n",
                two_p.evanescent
            ));
            println!("{name}: peak {pg:.2} dB at {:.4} GHz", pf / 1e9);
        }
    }
    run.art.text("summary.toml", &summary)?;
    Ok(())
}
