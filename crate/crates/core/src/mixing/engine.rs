use std::f64::consts::PI;

use super::ModeSet;
use crate::device::Device;
use crate::dispersion::{gamma_from_half_trace, phase_estimate};
use crate::error::{Error, Result};
use crate::twoport::{TwoPort, C64};
use crate::units::REDUCED_FLUX_QUANTUM as PHI0;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CmeOptions {
    /// RK4 steps per cell; amplitudes are sampled once per cell.
    pub steps_per_cell: usize,
    /// Hold the pump envelope fixed.
    pub undepleted_pump: bool,
    /// Keep the cubic (χ₃²/2 + χ₄/3) terms.
    pub kerr: bool,
    /// Mode indices removed from every product and from the output.
    pub disabled: Vec<usize>,
    /// Repeat the run at half the step and fail if the results disagree.
    pub check_step: bool,
    pub step_tolerance: f64,
}

impl Default for CmeOptions {
    fn default() -> Self {
        Self {
            steps_per_cell: 8,
            undepleted_pump: false,
            kerr: true,
            disabled: Vec::new(),
            check_step: false,
            step_tolerance: 1e-4,
        }
    }
}

/// Linear data of one carrier on the supercell.
#[derive(Debug, Clone)]
struct Carrier {
    omega: f64,
    gamma: C64,
    tracked: bool,
    /// Forward eigenvector (V, I) of the forward transfer map, power normalized.
    v: [C64; 2],
    /// Left eigenvector with w·v = 1.
    #[cfg_attr(not(test), allow(dead_code))]
    w: [C64; 2],
    /// The other eigenvector, used to close the load boundary.
    v_back: [C64; 2],
    f_cells: Vec<TwoPort>,
    f_super: TwoPort,
    /// g = Σ_c h_c·e_c maps cell EMFs to the supercell recursion.
    h: Vec<[C64; 2]>,
    /// w·h_c.
    proj: Vec<C64>,
    /// L_c·I_c/φ₀ of the forward wave per unit amplitude.
    u_cell: Vec<C64>,
}

#[derive(Debug, Clone)]
struct Term {
    /// (mode index, conjugated).
    factors: Vec<(usize, bool)>,
    coef: f64,
}

impl Term {
    fn multiplier(&self, sys: &System) -> C64 {
        self.factors.iter().fold(C64::new(1.0, 0.0), |acc, &(j, conj)| {
            let l = (-sys.carriers[j].gamma).exp();
            acc * if conj { l.conj() } else { l }
        })
    }
}

fn dot(a: &[C64; 2], b: &[C64; 2]) -> C64 {
    a[0] * b[0] + a[1] * b[1]
}

fn eigvec(m: &TwoPort, lambda: C64) -> [C64; 2] {
    let v1 = [m.b, lambda - m.a];
    let v2 = [lambda - m.d, m.c];
    if v1[0].norm() + v1[1].norm() >= v2[0].norm() + v2[1].norm() {
        v1
    } else {
        v2
    }
}

fn power(v: &[C64; 2]) -> f64 {
    0.5 * (v[0] * v[1].conj()).re
}

fn solve2(m: &TwoPort, rhs: [C64; 2]) -> [C64; 2] {
    let det = m.determinant();
    [
        (m.d * rhs[0] - m.b * rhs[1]) / det,
        (-m.c * rhs[0] + m.a * rhs[1]) / det,
    ]
}

/// Prepared coupled-mode system for one mode set on one device.
pub(crate) struct System {
    carriers: Vec<Carrier>,
    active: Vec<bool>,
    l_phi: Vec<f64>,
    cells: usize,
    repetitions: usize,
    z0: f64,
    l1: f64,
    /// Products landing on each mode (empty for inactive modes).
    terms: Vec<Vec<Term>>,
    pump: Option<usize>,
    undepleted: bool,
}

impl System {
    pub(crate) fn new(ms: &ModeSet, device: &Device, opts: &CmeOptions) -> Result<Self> {
        let sc = device.supercell(ms.flux)?;
        let coeffs = device.coeffs(ms.flux)?;
        let chi3 = coeffs.chi3;
        let kerr = if opts.kerr {
            0.5 * chi3 * chi3 + coeffs.chi4 / 3.0
        } else {
            0.0
        };
        let l_phi: Vec<f64> = sc.cells.iter().map(|c| c.inductance / PHI0).collect();
        let n = sc.len();

        let mut carriers = Vec::with_capacity(ms.modes.len());
        for m in &ms.modes {
            let omega = 2.0 * PI * m.f_hz;
            let f_cells: Vec<TwoPort> = sc.cells.iter().map(|c| c.matrix(omega).inverse()).collect();
            let f_super = f_cells
                .iter()
                .fold(TwoPort::identity(), |acc, f| f.cascade(&acc));
            let mut h = vec![[C64::new(0.0, 0.0); 2]; n];
            let mut suffix = TwoPort::identity();
            for c in (0..n).rev() {
                suffix = suffix.cascade(&f_cells[c]);
                h[c] = [-suffix.a, -suffix.c];
            }
            let t = 0.5 * f_super.trace().re;
            let gamma = gamma_from_half_trace(t);
            if (t.abs() - 1.0).abs() < 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "mode {} at {} Hz sits on a band edge",
                    m.role, m.f_hz
                )));
            }
            let (mut lf, mut lb) = ((-gamma).exp(), gamma.exp());
            let mut v = eigvec(&f_super, lf);
            let mut vb = eigvec(&f_super, lb);
            let propagating = t.abs() < 1.0;
            if propagating && power(&v) < 0.0 {
                std::mem::swap(&mut lf, &mut lb);
                std::mem::swap(&mut v, &mut vb);
            }
            // Branch of Im γ: the extended zone, where every carrier's phase
            // follows the near-linear long-wavelength dispersion and mixing
            // products stay slowly varying in the continuous coordinate.
            let mut gamma = -lf.ln();
            let target = phase_estimate(omega, &sc);
            gamma.im += 2.0 * PI * ((target - gamma.im) / (2.0 * PI)).round();
            let scale = if propagating {
                power(&v).sqrt()
            } else {
                // No power flow; normalize to the matched-line value instead.
                (0.5 * device.z_term).sqrt() * v[1].norm()
            };
            let v = [v[0] / scale, v[1] / scale];
            let mut w = eigvec(&TwoPort { b: f_super.c, c: f_super.b, ..f_super }, lf);
            let wv = dot(&w, &v);
            w = [w[0] / wv, w[1] / wv];
            let proj = h.iter().map(|hc| dot(&w, hc)).collect();
            let mut x = v;
            let mut u_cell = Vec::with_capacity(n);
            for (c, f) in f_cells.iter().enumerate() {
                u_cell.push(l_phi[c] * x[1]);
                x = f.apply(x);
            }
            carriers.push(Carrier {
                omega,
                gamma,
                tracked: !m.evanescent || m.amplitude.norm() > 0.0,
                v,
                w,
                v_back: vb,
                f_cells,
                f_super,
                h,
                proj,
                u_cell,
            });
        }

        let active: Vec<bool> = (0..ms.modes.len()).map(|j| !opts.disabled.contains(&j)).collect();
        let signed: Vec<(usize, bool, f64)> = (0..ms.modes.len())
            .filter(|&j| active[j])
            .flat_map(|j| [(j, false, ms.modes[j].f_hz), (j, true, -ms.modes[j].f_hz)])
            .collect();
        let tol = 1e-9 * ms.modes.iter().map(|m| m.f_hz).fold(1.0, f64::max);

        let mut terms = vec![Vec::new(); ms.modes.len()];
        for t in (0..ms.modes.len()).filter(|&t| active[t]) {
            let ft = ms.modes[t].f_hz;
            let slaved = !carriers[t].tracked;
            let allowed = |j: usize| !slaved || carriers[j].tracked;
            for a in signed.iter().filter(|s| allowed(s.0)) {
                for b in signed.iter().filter(|s| allowed(s.0)) {
                    if chi3 != 0.0 && (a.2 + b.2 - ft).abs() < tol {
                        terms[t].push(Term {
                            factors: vec![(a.0, a.1), (b.0, b.1)],
                            coef: 0.25 * chi3,
                        });
                    }
                    if kerr == 0.0 {
                        continue;
                    }
                    for c in signed.iter().filter(|s| allowed(s.0)) {
                        if (a.2 + b.2 + c.2 - ft).abs() < tol {
                            terms[t].push(Term {
                                factors: vec![(a.0, a.1), (b.0, b.1), (c.0, c.1)],
                                coef: 0.25 * kerr,
                            });
                        }
                    }
                }
            }
        }

        Ok(Self {
            carriers,
            active,
            l_phi,
            cells: n,
            repetitions: device.repetitions,
            z0: device.z_term,
            l1: sc.cells[0].inductance,
            terms,
            pump: ms.pump(),
            undepleted: opts.undepleted_pump,
        })
    }

    fn is_state(&self, j: usize) -> bool {
        self.active[j] && self.carriers[j].tracked
    }

    /// Cell-wise phase currents U[j][c] of every active mode at position m
    /// (in supercells), given the envelopes of the tracked modes.
    fn currents(&self, m: f64, env: &[C64]) -> Vec<Vec<C64>> {
        let n = self.carriers.len();
        let mut u = vec![vec![C64::new(0.0, 0.0); self.cells]; n];
        for j in (0..n).filter(|&j| self.is_state(j)) {
            let car = &self.carriers[j];
            let a = env[j] * (-car.gamma * m).exp();
            for c in 0..self.cells {
                u[j][c] = a * car.u_cell[c];
            }
        }
        for s in (0..n).filter(|&s| self.active[s] && !self.carriers[s].tracked) {
            u[s] = self.slaved(s, &u).1;
        }
        u
    }

    /// Particular solution of the driven transfer recursion for slaved mode
    /// `s`: its boundary state and cell-wise phase currents. Only the
    /// integrated modes in `u` drive it.
    fn slaved(&self, s: usize, u: &[Vec<C64>]) -> ([C64; 2], Vec<C64>) {
        let car = &self.carriers[s];
        let mut boundary = [C64::new(0.0, 0.0); 2];
        let mut cells = vec![C64::new(0.0, 0.0); self.cells];
        for term in &self.terms[s] {
            let e: Vec<C64> = (0..self.cells)
                .map(|c| I * car.omega * PHI0 * term.coef * product(u, &term.factors, c))
                .collect();
            let g = (0..self.cells).fold([C64::new(0.0, 0.0); 2], |acc, c| {
                [acc[0] + car.h[c][0] * e[c], acc[1] + car.h[c][1] * e[c]]
            });
            // The drive scales as μ^m from cell to cell, so x = (μ − F)⁻¹g.
            let mu = term.multiplier(self);
            let shifted = TwoPort {
                a: mu - car.f_super.a,
                b: -car.f_super.b,
                c: -car.f_super.c,
                d: mu - car.f_super.d,
            };
            let mut x = solve2(&shifted, g);
            boundary = [boundary[0] + x[0], boundary[1] + x[1]];
            for c in 0..self.cells {
                cells[c] += self.l_phi[c] * x[1];
                x = car.f_cells[c].apply([x[0] - e[c], x[1]]);
            }
        }
        (boundary, cells)
    }

    fn rhs(&self, m: f64, env: &[C64]) -> Vec<C64> {
        let u = self.currents(m, env);
        let mut d = vec![C64::new(0.0, 0.0); env.len()];
        for j in (0..env.len()).filter(|&j| self.is_state(j)) {
            if self.undepleted && Some(j) == self.pump {
                continue;
            }
            let car = &self.carriers[j];
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..self.cells {
                let q: C64 = self.terms[j]
                    .iter()
                    .map(|t| t.coef * product(&u, &t.factors, c))
                    .sum();
                acc += car.proj[c] * I * car.omega * PHI0 * q;
            }
            d[j] = (car.gamma * (m + 1.0)).exp() * acc;
        }
        d
    }

    /// Incident voltage of a mode whose incident phase amplitude is `amp`.
    fn incident_voltage(&self, amp: C64) -> C64 {
        amp * PHI0 * self.z0 / self.l1
    }

    fn launch(&self, j: usize, v_inc: C64) -> C64 {
        let v = &self.carriers[j].v;
        2.0 * v_inc / (v[0] + self.z0 * v[1])
    }

    fn load_voltage(&self, j: usize, x: [C64; 2]) -> C64 {
        let vb = &self.carriers[j].v_back;
        let beta = (self.z0 * x[1] - x[0]) / (vb[0] - self.z0 * vb[1]);
        x[0] + beta * vb[0]
    }
}

fn product(u: &[Vec<C64>], factors: &[(usize, bool)], c: usize) -> C64 {
    factors.iter().fold(C64::new(1.0, 0.0), |acc, &(j, conj)| {
        acc * if conj { u[j][c].conj() } else { u[j][c] }
    })
}

/// Amplitudes along the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    /// Sample positions in cells.
    pub positions: Vec<f64>,
    /// Envelopes (√W) of the integrated modes, `[sample][mode]`; zero for
    /// slaved and disabled modes.
    pub envelopes: Vec<Vec<C64>>,
    /// Branch phase amplitude L·I/φ₀ in the first cell of the supercell,
    /// including slaved modes, `[sample][mode]`.
    pub phase: Vec<Vec<C64>>,
    pub omegas: Vec<f64>,
    pub tracked: Vec<bool>,
    /// Incident wave voltage at the input port per mode.
    pub incident: Vec<C64>,
    /// Voltage across the load per mode at the end of the chain.
    pub load_voltage: Vec<C64>,
}

impl ModeAmplitudes {
    /// 20·log10 |A_j(end) / A_j(0)|.
    pub fn gain_db(&self, j: usize) -> f64 {
        let a0 = self.envelopes[0][j].norm();
        let a1 = self.envelopes.last().unwrap()[j].norm();
        20.0 * (a1 / a0).log10()
    }

    /// Photon flux |A|²/ω (arbitrary but common units) of mode j at a sample.
    pub fn photon_flux(&self, sample: usize, j: usize) -> f64 {
        self.envelopes[sample][j].norm_sqr() / self.omegas[j]
    }

    /// Load voltage of mode j relative to the incident voltage of mode `reference`, dB.
    pub fn output_db(&self, j: usize, reference: usize) -> f64 {
        20.0 * (self.load_voltage[j].norm() / self.incident[reference].norm()).log10()
    }
}

fn rk4(sys: &System, env0: &[C64], steps_per_cell: usize, cells_total: usize) -> Result<ModeAmplitudes> {
    let cps = sys.cells;
    let h = 1.0 / (steps_per_cell * cps) as f64;
    let n = env0.len();
    let mut env = env0.to_vec();
    let mut positions = vec![0.0];
    let mut envelopes = vec![env.clone()];
    let mut phase = vec![phase_row(sys, 0.0, &env)];
    let axpy = |a: &[C64], k: &[C64], s: f64| -> Vec<C64> {
        a.iter().zip(k).map(|(x, y)| x + y * s).collect()
    };
    for cell in 0..cells_total {
        for step in 0..steps_per_cell {
            let m = (cell * steps_per_cell + step) as f64 * h;
            let k1 = sys.rhs(m, &env);
            let k2 = sys.rhs(m + 0.5 * h, &axpy(&env, &k1, 0.5 * h));
            let k3 = sys.rhs(m + 0.5 * h, &axpy(&env, &k2, 0.5 * h));
            let k4 = sys.rhs(m + h, &axpy(&env, &k3, h));
            for j in 0..n {
                env[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if env.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                let dump = envelopes
                    .last()
                    .map(|e: &Vec<C64>| format!("last good amplitudes {e:?}"))
                    .unwrap_or_default();
                return Err(Error::Integration {
                    x: m * cps as f64,
                    reason: format!("non-finite amplitude; {dump}"),
                });
            }
        }
        let m = (cell + 1) as f64 / cps as f64;
        positions.push((cell + 1) as f64);
        phase.push(phase_row(sys, m, &env));
        envelopes.push(env.clone());
    }
    let m_end = cells_total as f64 / cps as f64;
    let u = sys.currents(m_end, &env);
    let load_voltage = (0..n)
        .map(|j| {
            if !sys.active[j] {
                return C64::new(0.0, 0.0);
            }
            let car = &sys.carriers[j];
            let x = if car.tracked {
                let a = env[j] * (-car.gamma * m_end).exp();
                [a * car.v[0], a * car.v[1]]
            } else {
                sys.slaved(j, &u).0
            };
            sys.load_voltage(j, x)
        })
        .collect();
    Ok(ModeAmplitudes {
        positions,
        envelopes,
        phase,
        omegas: sys.carriers.iter().map(|c| c.omega).collect(),
        tracked: (0..n).map(|j| sys.is_state(j)).collect(),
        incident: Vec::new(),
        load_voltage,
    })
}

fn phase_row(sys: &System, m: f64, env: &[C64]) -> Vec<C64> {
    sys.currents(m, env).into_iter().map(|u| u[0]).collect()
}

/// Integrates the coupled-mode equations over `length_cells` cells (rounded
/// down to whole cells; the device's own length when `None`).
///
/// Initial envelopes come from each mode's incident phase amplitude through
/// the input port; modes with zero amplitude start empty.
pub fn integrate_cme(
    ms: &ModeSet,
    device: &Device,
    length_cells: Option<usize>,
    opts: &CmeOptions,
) -> Result<ModeAmplitudes> {
    if opts.steps_per_cell == 0 {
        return Err(Error::InvalidParameter("steps_per_cell must be >= 1".into()));
    }
    let sys = System::new(ms, device, opts)?;
    let cells = length_cells.unwrap_or(sys.cells * sys.repetitions);
    let incident: Vec<C64> = ms
        .modes
        .iter()
        .map(|m| sys.incident_voltage(m.amplitude))
        .collect();
    let env0: Vec<C64> = (0..ms.modes.len())
        .map(|j| {
            if sys.is_state(j) {
                sys.launch(j, incident[j])
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut out = rk4(&sys, &env0, opts.steps_per_cell, cells)?;
    if opts.check_step {
        let fine = rk4(&sys, &env0, 2 * opts.steps_per_cell, cells)?;
        let a = out.envelopes.last().unwrap();
        let b = fine.envelopes.last().unwrap();
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        if diff > opts.step_tolerance * scale {
            return Err(Error::Integration {
                x: cells as f64,
                reason: format!(
                    "step halving changed amplitudes by {diff:.3e} (scale {scale:.3e}); coarse {a:?}, fine {b:?}"
                ),
            });
        }
        out = fine;
    }
    out.incident = incident;
    Ok(out)
}

/// Coefficient κ with dA_t/dm ∋ κ·Π(factors)·e^{iΔm}, m in supercells.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeWaveCoupling {
    pub relation: usize,
    pub target: usize,
    /// (mode, conjugated) pairs multiplying κ.
    pub factors: Vec<(usize, bool)>,
    pub kappa: C64,
    /// Phase mismatch per supercell (pass-band modes).
    pub delta: f64,
}

/// Coefficient κ with dA_t/dm ∋ κ·|A_other|²·A_t.
#[derive(Debug, Clone, PartialEq)]
pub struct KerrCoupling {
    pub target: usize,
    pub other: usize,
    pub kappa: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub three_wave: Vec<ThreeWaveCoupling>,
    pub kerr: Vec<KerrCoupling>,
}

/// Three-wave couplings of every relation of the form ω_a = ω_b + ω_c or
/// ω_a = 2ω_b, and self/cross Kerr coefficients between integrated modes.
pub fn coupling_matrix(ms: &ModeSet, device: &Device) -> Result<CouplingTable> {
    let sys = System::new(ms, device, &CmeOptions::default())?;
    let coeffs = device.coeffs(ms.flux)?;
    let kerr = 0.5 * coeffs.chi3 * coeffs.chi3 + coeffs.chi4 / 3.0;
    let kappa = |t: usize, factors: &[(usize, bool)], coef: f64| -> C64 {
        let car = &sys.carriers[t];
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..sys.cells {
            let p = factors.iter().fold(C64::new(1.0, 0.0), |a, &(j, conj)| {
                let u = sys.carriers[j].u_cell[c];
                a * if conj { u.conj() } else { u }
            });
            acc += car.proj[c] * I * car.omega * PHI0 * coef * p;
        }
        car.gamma.exp() * acc
    };
    let delta = |t: usize, factors: &[(usize, bool)]| -> f64 {
        factors.iter().fold(sys.carriers[t].gamma.im, |d, &(j, conj)| {
            let k = sys.carriers[j].gamma.im;
            if conj {
                d + k
            } else {
                d - k
            }
        })
    };

    let mut three_wave = Vec::new();
    for (r, rel) in ms.relations.iter().enumerate() {
        let pos: Vec<usize> = rel.terms.iter().filter(|t| t.1 == 1).map(|t| t.0).collect();
        let neg: Vec<(usize, i32)> = rel.terms.iter().filter(|t| t.1 < 0).copied().collect();
        let cases: Vec<(usize, Vec<(usize, bool)>, f64)> = match (pos.as_slice(), neg.as_slice()) {
            ([a], [(b, -1), (c, -1)]) => vec![
                (*a, vec![(*b, false), (*c, false)], 0.5 * coeffs.chi3),
                (*b, vec![(*a, false), (*c, true)], 0.5 * coeffs.chi3),
                (*c, vec![(*a, false), (*b, true)], 0.5 * coeffs.chi3),
            ],
            ([a], [(b, -2)]) => vec![
                (*a, vec![(*b, false), (*b, false)], 0.25 * coeffs.chi3),
                (*b, vec![(*a, false), (*b, true)], 0.5 * coeffs.chi3),
            ],
            _ => Vec::new(),
        };
        for (target, factors, coef) in cases {
            three_wave.push(ThreeWaveCoupling {
                relation: r,
                target,
                kappa: kappa(target, &factors, coef),
                delta: delta(target, &factors),
                factors,
            });
        }
    }

    let mut kerr_terms = Vec::new();
    let tracked: Vec<usize> = (0..ms.modes.len()).filter(|&j| sys.is_state(j)).collect();
    for &t in &tracked {
        for &s in &tracked {
            let count = if s == t { 3.0 } else { 6.0 };
            kerr_terms.push(KerrCoupling {
                target: t,
                other: s,
                kappa: kappa(t, &[(t, false), (s, false), (s, true)], 0.25 * kerr * count),
            });
        }
    }
    Ok(CouplingTable {
        three_wave,
        kerr: kerr_terms,
    })
}
