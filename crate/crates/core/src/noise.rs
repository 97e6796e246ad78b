//! Added-noise model of a phase-insensitive amplifier behind a lossy input
//! element, followed by a HEMT, and its least-squares fit.
//!
//! Noise is counted in photons referred to the amplifier input. Photons are
//! converted to kelvin with the single-mode convention T = N·h·f/k_B.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::units::{BOLTZMANN, PLANCK};

/// Vacuum input noise.
pub const VACUUM_PHOTONS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Transmission of the lossy input element, in (0, 1].
    pub d: f64,
    /// HEMT added noise, photons.
    pub a_h: f64,
    /// Input noise, photons.
    pub n_in: f64,
}

impl NoiseModel {
    pub fn new(d: f64, a_h: f64, n_in: f64) -> Result<Self> {
        let m = Self { d, a_h, n_in };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_d(self.d)?;
        if !(self.a_h >= 0.0) {
            return Err(Error::InvalidParameter(format!("A_H = {} must be >= 0", self.a_h)));
        }
        if !(self.n_in >= VACUUM_PHOTONS) {
            return Err(Error::InvalidParameter(format!(
                "N_in = {} is below the vacuum floor {VACUUM_PHOTONS}",
                self.n_in
            )));
        }
        Ok(())
    }
}

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("D = {d} must lie in (0, 1]")))
    }
}

fn check_gain(g: f64) -> Result<()> {
    if g >= 1.0 && g.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("linear gain {g} must be >= 1")))
    }
}

/// Photons added by the lossy element and the amplifier, referred to the
/// amplifier input: (1−D)/(2D) + (G−1)/(2GD).
pub fn added_photons(g: f64, d: f64) -> Result<f64> {
    check_gain(g)?;
    check_d(d)?;
    Ok((1.0 - d) / (2.0 * d) + (g - 1.0) / (2.0 * g * d))
}

/// The high-gain limit (2−D)/(2D).
pub fn added_photons_limit(d: f64) -> Result<f64> {
    check_d(d)?;
    Ok((2.0 - d) / (2.0 * d))
}

/// System noise N_in + (G(2−D)−1)/(2GD) + A_H/(GD).
pub fn total_noise(model: &NoiseModel, g: f64) -> Result<f64> {
    model.validate()?;
    check_gain(g)?;
    Ok(n_tot(model.d, model.a_h, model.n_in, g))
}

fn n_tot(d: f64, a_h: f64, n_in: f64, g: f64) -> f64 {
    n_in + (g * (2.0 - d) - 1.0) / (2.0 * g * d) + a_h / (g * d)
}

/// ∂N_tot/∂D and ∂N_tot/∂A_H.
fn n_tot_grad(d: f64, a_h: f64, g: f64) -> [f64; 2] {
    let du = 0.5 + (g - 1.0) / (2.0 * g) + a_h / g;
    [-du / (d * d), 1.0 / (g * d)]
}

/// Improvement of the signal-to-noise ratio, N_tot(1)/N_tot(G).
pub fn delta_snr(model: &NoiseModel, g: f64) -> Result<f64> {
    Ok(total_noise(model, 1.0)? / total_noise(model, g)?)
}

/// T = N·h·f/k_B.
pub fn noise_temperature(photons: f64, f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency {f_hz} must be positive")));
    }
    Ok(photons * PLANCK * f_hz / BOLTZMANN)
}

pub fn photons_from_temperature(t_k: f64, f_hz: f64) -> Result<f64> {
    Ok(t_k / noise_temperature(1.0, f_hz)?)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One measurement at power gain `gain_db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    DeltaSnr { gain_db: f64, dsnr_db: f64 },
    NoiseTemperature { gain_db: f64, t_k: f64, f_hz: f64 },
}

impl Observation {
    pub fn gain_db(&self) -> f64 {
        match *self {
            Observation::DeltaSnr { gain_db, .. } | Observation::NoiseTemperature { gain_db, .. } => gain_db,
        }
    }

    /// Model value in dB, and its gradient with respect to (D, A_H).
    fn model_db(&self, d: f64, a_h: f64, n_in: f64) -> (f64, [f64; 2]) {
        let g = db_to_linear(self.gain_db());
        let s = 10.0 / std::f64::consts::LN_10;
        let nt = n_tot(d, a_h, n_in, g);
        let gt = n_tot_grad(d, a_h, g);
        match *self {
            Observation::DeltaSnr { .. } => {
                let n1 = n_tot(d, a_h, n_in, 1.0);
                let g1 = n_tot_grad(d, a_h, 1.0);
                (
                    linear_to_db(n1 / nt),
                    [s * (g1[0] / n1 - gt[0] / nt), s * (g1[1] / n1 - gt[1] / nt)],
                )
            }
            Observation::NoiseTemperature { f_hz, .. } => {
                let t = nt * PLANCK * f_hz / BOLTZMANN;
                (linear_to_db(t), [s * gt[0] / nt, s * gt[1] / nt])
            }
        }
    }

    fn measured_db(&self) -> f64 {
        match *self {
            Observation::DeltaSnr { dsnr_db, .. } => dsnr_db,
            Observation::NoiseTemperature { t_k, .. } => linear_to_db(t_k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_in: f64,
    pub d_bounds: (f64, f64),
    pub a_h_bounds: (f64, f64),
    pub starts: usize,
    pub seed: u64,
    pub max_iters: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_in: VACUUM_PHOTONS,
            d_bounds: (0.01, 1.0),
            a_h_bounds: (0.0, 1000.0),
            starts: 10,
            seed: 0,
            max_iters: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFit {
    pub model: NoiseModel,
    /// Model minus measurement, dB, in input order.
    pub residuals_db: Vec<f64>,
    pub residual_norm: f64,
    /// Linearized 1σ uncertainty of (D, A_H) from the residual scatter.
    pub sigma: [f64; 2],
    /// Relative change of the objective per 1% change of D and of A_H.
    pub sensitivity: [f64; 2],
    /// Parameters pinned at a bound or not constrained by the data.
    pub flags: Vec<String>,
}

/// Sum of squared dB residuals over the data.
pub fn objective(data: &[Observation], d: f64, a_h: f64, n_in: f64) -> f64 {
    data.iter()
        .map(|o| (o.model_db(d, a_h, n_in).0 - o.measured_db()).powi(2))
        .sum()
}

/// Analytic gradient of [`objective`] with respect to (D, A_H).
pub fn objective_gradient(data: &[Observation], d: f64, a_h: f64, n_in: f64) -> [f64; 2] {
    data.iter().fold([0.0; 2], |acc, o| {
        let (m, g) = o.model_db(d, a_h, n_in);
        let r = m - o.measured_db();
        [acc[0] + 2.0 * r * g[0], acc[1] + 2.0 * r * g[1]]
    })
}

struct Problem<'a> {
    data: &'a [Observation],
    opts: &'a FitOptions,
}

impl Problem<'_> {
    fn clamp(&self, p: &[f64]) -> (f64, f64, f64) {
        let (dl, dh) = self.opts.d_bounds;
        let (al, ah) = self.opts.a_h_bounds;
        let d = p[0].clamp(dl, dh);
        let a = p[1].clamp(al, ah);
        let outside = ((p[0] - d) / (dh - dl)).powi(2) + ((p[1] - a) / (ah - al)).powi(2);
        (d, a, outside)
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (d, a, outside) = self.clamp(p);
        Ok(objective(self.data, d, a, self.opts.n_in) * (1.0 + outside) + outside)
    }
}

/// Fits (D, A_H) with N_in fixed: Nelder–Mead from seeded random starts
/// inside the bounds, best result kept.
pub fn fit(data: &[Observation], opts: &FitOptions) -> Result<NoiseFit> {
    if data.len() < 4 {
        return Err(Error::DegenerateData(format!(
            "{} points; at least 4 are needed",
            data.len()
        )));
    }
    let (g_lo, g_hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
        (lo.min(o.gain_db()), hi.max(o.gain_db()))
    });
    if !(g_hi - g_lo >= 6.0) {
        return Err(Error::DegenerateData(format!(
            "gains span {:.2} dB; at least 6 dB is needed",
            g_hi - g_lo
        )));
    }
    for o in data {
        check_gain(db_to_linear(o.gain_db()))?;
        if let Observation::NoiseTemperature { t_k, f_hz, .. } = *o {
            if !(t_k > 0.0 && f_hz > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "noise temperature {t_k} K at {f_hz} Hz must be positive"
                )));
            }
        }
    }
    if opts.starts == 0 {
        return Err(Error::InvalidParameter("at least one start is needed".into()));
    }
    let (dl, dh) = opts.d_bounds;
    let (al, ah) = opts.a_h_bounds;
    if !(0.0 < dl && dl < dh && dh <= 1.0 && 0.0 <= al && al < ah) {
        return Err(Error::InvalidParameter("empty or invalid parameter bounds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<[f64; 2]> = (0..opts.starts)
        .map(|_| [rng.gen_range(dl..=dh), rng.gen_range(al..=ah.min(al + 100.0))])
        .collect();
    let runs: Vec<(f64, [f64; 2])> = starts
        .par_iter()
        .map(|s| run_simplex(data, opts, *s))
        .collect::<Result<_>>()?;
    // First best in start order keeps the result independent of scheduling.
    let best = runs
        .iter()
        .fold(None::<&(f64, [f64; 2])>, |b, r| match b {
            Some(b) if b.0 <= r.0 => Some(b),
            _ => Some(r),
        })
        .map(|r| r.1)
        .unwrap();
    let problem = Problem { data, opts };
    let (d, a_h, _) = problem.clamp(&best);
    let model = NoiseModel::new(d, a_h, opts.n_in)?;

    let residuals_db: Vec<f64> = data
        .iter()
        .map(|o| o.model_db(d, a_h, opts.n_in).0 - o.measured_db())
        .collect();
    let ss: f64 = residuals_db.iter().map(|r| r * r).sum();
    let jac: Vec<[f64; 2]> = data.iter().map(|o| o.model_db(d, a_h, opts.n_in).1).collect();
    let (j00, j01, j11) = jac.iter().fold((0.0, 0.0, 0.0), |(a, b, c), j| {
        (a + j[0] * j[0], b + j[0] * j[1], c + j[1] * j[1])
    });
    let det = j00 * j11 - j01 * j01;
    let dof = (data.len() as f64 - 2.0).max(1.0);
    let s2 = ss / dof;
    let sigma = if det > 0.0 {
        [(s2 * j11 / det).sqrt(), (s2 * j00 / det).sqrt()]
    } else {
        [f64::INFINITY; 2]
    };
    let base = objective(data, d, a_h, opts.n_in).max(f64::MIN_POSITIVE);
    let sensitivity = [
        (objective(data, d * 1.01, a_h, opts.n_in) - base) / base,
        (objective(data, d, a_h * 1.01, opts.n_in) - base) / base,
    ];
    let mut flags = Vec::new();
    // With N_in = 1/2 the ΔSNR ratio does not depend on D at all; only
    // temperature data pin it down.
    let reach = [(j00.sqrt() * d).abs(), (j11.sqrt() * a_h).abs()];
    let scale = reach[0].max(reach[1]);
    for (i, (name, v, (lo, hi))) in [("D", d, opts.d_bounds), ("A_H", a_h, opts.a_h_bounds)]
        .into_iter()
        .enumerate()
    {
        let tol = 1e-6 * (hi - lo);
        if v - lo < tol || hi - v < tol {
            flags.push(format!("{name} = {v} sits at its bound [{lo}, {hi}]"));
        } else if reach[i] < 1e-6 * scale {
            flags.push(format!("{name} is not constrained by the data"));
        }
    }
    Ok(NoiseFit {
        model,
        residuals_db,
        residual_norm: ss.sqrt(),
        sigma,
        sensitivity,
        flags,
    })
}

fn run_simplex(data: &[Observation], opts: &FitOptions, start: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let problem = Problem { data, opts };
    let step = [0.05 * (opts.d_bounds.1 - opts.d_bounds.0), 5.0];
    let simplex = vec![
        start.to_vec(),
        vec![start[0] + step[0], start[1]],
        vec![start[0], start[1] + step[1]],
    ];
    let fail = |e: argmin::core::Error| Error::InvalidParameter(format!("simplex fit failed: {e}"));
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).map_err(fail)?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(fail)?;
    let state = res.state();
    let p = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    Ok((state.get_best_cost(), [p[0], p[1]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn truth() -> NoiseModel {
        NoiseModel::new(0.73, 24.85, 0.5).unwrap()
    }

    fn synthetic(model: &NoiseModel, gains_db: &[f64]) -> Vec<Observation> {
        gains_db
            .iter()
            .map(|&g| Observation::DeltaSnr {
                gain_db: g,
                dsnr_db: linear_to_db(delta_snr(model, db_to_linear(g)).unwrap()),
            })
            .collect()
    }

    const GAINS: [f64; 8] = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0];

    #[test]
    fn added_photon_limits() {
        for d in [0.3, 0.73, 1.0] {
            assert!((added_photons(1.0, d).unwrap() - (1.0 - d) / (2.0 * d)).abs() < 1e-15);
        }
        assert!((added_photons(1e12, 1.0).unwrap() - 0.5).abs() < 1e-12);
        let a = added_photons_limit(0.73).unwrap();
        assert!((a - 0.8699).abs() < 5e-5, "{a}");
        assert!((added_photons(1e12, 0.73).unwrap() - a).abs() < 1e-11);
        assert!(added_photons(0.9, 0.73).is_err());
        assert!(added_photons(2.0, 0.0).is_err());
    }

    #[test]
    fn total_noise_limits() {
        let m = truth();
        let big = total_noise(&m, 1e14).unwrap();
        assert!((big - (0.5 + added_photons_limit(0.73).unwrap())).abs() < 1e-10);
        let one = total_noise(&m, 1.0).unwrap();
        assert!((one - (0.5 + (1.0 - 0.73) / (2.0 * 0.73) + 24.85 / 0.73)).abs() < 1e-12);
        let ideal = NoiseModel::new(1.0, 0.0, 0.5).unwrap();
        assert_eq!(total_noise(&ideal, 1.0).unwrap(), 0.5);
        assert!(NoiseModel::new(0.7, 1.0, 0.4).is_err());
    }

    #[test]
    fn delta_snr_identities() {
        let m = truth();
        assert_eq!(delta_snr(&m, 1.0).unwrap(), 1.0);
        let d = 0.73;
        let ceiling = (0.5 + (1.0 - d) / (2.0 * d) + 24.85 / d) / (0.5 + (2.0 - d) / (2.0 * d));
        assert!((delta_snr(&m, 1e14).unwrap() - ceiling).abs() < 1e-9 * ceiling);
        // Numerator and denominator are the G = 1 and G chains of the total noise.
        for g in [1.5, 10.0, 200.0] {
            let direct = (m.n_in + added_photons(1.0, d).unwrap() + m.a_h / d)
                / (m.n_in + added_photons(g, d).unwrap() + m.a_h / (g * d));
            assert!((delta_snr(&m, g).unwrap() - direct).abs() < 1e-12 * direct);
        }
        let more = NoiseModel { a_h: 40.0, ..m };
        assert!(delta_snr(&more, 100.0).unwrap() > delta_snr(&m, 100.0).unwrap());
    }

    #[test]
    fn kelvin_conversion() {
        let t = noise_temperature(1.0, 6.034e9).unwrap();
        assert!((t - 0.2896).abs() < 5e-5, "{t}");
        assert_eq!(noise_temperature(0.0, 6.034e9).unwrap(), 0.0);
        let n = photons_from_temperature(0.6, 6.034e9).unwrap();
        assert!(n < 2.1 && n > 2.0, "{n}");
        assert!(noise_temperature(1.0, 0.0).is_err());
    }

    fn temperatures(model: &NoiseModel, gains_db: &[f64]) -> Vec<Observation> {
        gains_db
            .iter()
            .map(|&g| Observation::NoiseTemperature {
                gain_db: g,
                t_k: noise_temperature(total_noise(model, db_to_linear(g)).unwrap(), 6.034e9).unwrap(),
                f_hz: 6.034e9,
            })
            .collect()
    }

    fn combined(model: &NoiseModel) -> Vec<Observation> {
        let mut v = synthetic(model, &GAINS);
        v.extend(temperatures(model, &GAINS));
        v
    }

    #[test]
    fn noiseless_round_trip() {
        for data in [combined(&truth()), temperatures(&truth(), &GAINS)] {
            let f = fit(&data, &FitOptions::default()).unwrap();
            assert!((f.model.d - 0.73).abs() / 0.73 < 0.01, "{:?}", f.model);
            assert!((f.model.a_h - 24.85).abs() / 24.85 < 0.01, "{:?}", f.model);
            assert!(f.residual_norm < 1e-6);
            assert!(f.flags.is_empty(), "{:?}", f.flags);
        }
    }

    #[test]
    fn snr_ratio_alone_leaves_damping_free() {
        let f = fit(&synthetic(&truth(), &GAINS), &FitOptions::default()).unwrap();
        assert!((f.model.a_h - 24.85).abs() / 24.85 < 0.01, "{:?}", f.model);
        assert_eq!(f.flags, vec!["D is not constrained by the data".to_string()]);
        // Above the vacuum floor the ratio carries D, if only weakly.
        let warm = NoiseModel::new(0.73, 24.85, 1.5).unwrap();
        let opts = FitOptions { n_in: 1.5, ..FitOptions::default() };
        let f = fit(&synthetic(&warm, &GAINS), &opts).unwrap();
        assert!(f.flags.is_empty(), "{:?}", f.flags);
    }

    #[test]
    fn fit_is_deterministic() {
        let data = combined(&truth());
        let a = fit(&data, &FitOptions::default()).unwrap();
        let b = fit(&data, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_recovery_over_seeds() {
        let clean = combined(&truth());
        let noise = Normal::new(0.0, 0.02).unwrap();
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Observation> = clean
                .iter()
                .map(|o| {
                    let k = 1.0 + noise.sample(&mut rng);
                    match *o {
                        Observation::DeltaSnr { gain_db, dsnr_db } => Observation::DeltaSnr {
                            gain_db,
                            dsnr_db: linear_to_db(db_to_linear(dsnr_db) * k),
                        },
                        Observation::NoiseTemperature { gain_db, t_k, f_hz } => {
                            Observation::NoiseTemperature { gain_db, t_k: t_k * k, f_hz }
                        }
                    }
                })
                .collect();
            let f = fit(&data, &FitOptions { seed, ..FitOptions::default() }).unwrap();
            assert!((f.model.d - 0.73).abs() / 0.73 < 0.1, "seed {seed}: {:?}", f.model);
            assert!((f.model.a_h - 24.85).abs() / 24.85 < 0.1, "seed {seed}: {:?}", f.model);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = combined(&truth());
        for (d, a) in [(0.6, 20.0), (0.8, 30.0), (0.95, 5.0)] {
            let g = objective_gradient(&data, d, a, 0.5);
            let hd = 1e-5 * d;
            let ha = 1e-5 * a;
            let fd = [
                (objective(&data, d + hd, a, 0.5) - objective(&data, d - hd, a, 0.5)) / (2.0 * hd),
                (objective(&data, d, a + ha, 0.5) - objective(&data, d, a - ha, 0.5)) / (2.0 * ha),
            ];
            for i in 0..2 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * g[i].abs(), "{i}: {} vs {}", g[i], fd[i]);
            }
        }
    }

    #[test]
    fn degenerate_data_rejected() {
        let m = truth();
        assert!(matches!(fit(&synthetic(&m, &[10.0]), &FitOptions::default()), Err(Error::DegenerateData(_))));
        let flat = synthetic(&m, &[10.0; 6]);
        assert!(matches!(fit(&flat, &FitOptions::default()), Err(Error::DegenerateData(_))));
        let narrow = synthetic(&m, &[10.0, 11.0, 12.0, 13.0]);
        assert!(fit(&narrow, &FitOptions::default()).is_err());
    }

    #[test]
    fn fit_pinned_at_a_bound_is_flagged() {
        let ideal = NoiseModel::new(1.0, 24.85, 0.5).unwrap();
        let f = fit(&temperatures(&ideal, &GAINS), &FitOptions::default()).unwrap();
        assert!(f.flags.iter().any(|s| s.starts_with("D = ")), "{f:?}");
    }
}
