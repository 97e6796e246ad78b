//! Degenerate second-harmonic generation in the normalization of the
//! Armstrong formula: amplitudes relative to A₁(0), x in cells, Δ per cell.

use crate::twoport::C64;

const I: C64 = C64::new(0.0, 1.0);

/// ½·|tanh((4ε₃/Δ)·sin(Δx/2))|, the approximate SHG envelope for a large
/// phase mismatch. Δ → 0 is taken as the limit ½·tanh(2ε₃x).
pub fn shg_analytic(x: f64, delta: f64, eps3: f64) -> f64 {
    let arg = if delta.abs() < 1e-300 {
        2.0 * eps3 * x
    } else {
        4.0 * eps3 / delta * (0.5 * delta * x).sin()
    };
    0.5 * arg.tanh().abs()
}

/// The formula assumes ε₃ < Δ·a.
pub fn shg_validity_warning(delta: f64, eps3: f64) -> Option<String> {
    (eps3 >= delta.abs()).then(|| {
        format!("eps3 = {eps3:.4} is not below delta*a = {:.4}; the SHG formula is outside its range", delta.abs())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShgTrace {
    pub x: Vec<f64>,
    /// |A₂(x)/A₁(0)|.
    pub harmonic: Vec<f64>,
    /// |A₁(x)/A₁(0)|.
    pub fundamental: Vec<f64>,
}

impl ShgTrace {
    pub fn peak(&self) -> f64 {
        self.harmonic.iter().copied().fold(0.0, f64::max)
    }

    /// Positions of interior local maxima of |A₂|, refined by a parabola
    /// through the three samples around each.
    pub fn maxima(&self) -> Vec<f64> {
        let h = &self.harmonic;
        (1..h.len().saturating_sub(1))
            .filter(|&k| h[k] > h[k - 1] && h[k] >= h[k + 1])
            .map(|k| {
                let dx = self.x[k] - self.x[k - 1];
                let den = h[k - 1] - 2.0 * h[k] + h[k + 1];
                let shift = if den != 0.0 { 0.5 * (h[k - 1] - h[k + 1]) / den } else { 0.0 };
                self.x[k] + shift * dx
            })
            .collect()
    }
}

/// Two coupled amplitudes r = A₂/A₁(0), u = A₁/A₁(0):
///
/// r' = −i·ε₃·u²·e^{iΔx},  u' = −4i·ε₃·u*·r·e^{−iΔx},
///
/// which conserves |u|² + 4|r|² and reproduces the small-signal slope of
/// the Armstrong formula. Fixed-step RK4 with `steps_per_cell` steps per
/// cell, sampled every step.
pub fn shg_two_mode(delta: f64, eps3: f64, x_max: f64, steps_per_cell: usize) -> ShgTrace {
    let n = (x_max * steps_per_cell.max(1) as f64).ceil() as usize;
    let h = if n > 0 { x_max / n as f64 } else { 0.0 };
    let rhs = |x: f64, r: C64, u: C64| {
        let ph = C64::from_polar(1.0, delta * x);
        (-I * eps3 * u * u * ph, -4.0 * I * eps3 * u.conj() * r * ph.conj())
    };
    let (mut r, mut u) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let mut trace = ShgTrace {
        x: vec![0.0],
        harmonic: vec![0.0],
        fundamental: vec![1.0],
    };
    for k in 0..n {
        let x = k as f64 * h;
        let (r1, u1) = rhs(x, r, u);
        let (r2, u2) = rhs(x + 0.5 * h, r + 0.5 * h * r1, u + 0.5 * h * u1);
        let (r3, u3) = rhs(x + 0.5 * h, r + 0.5 * h * r2, u + 0.5 * h * u2);
        let (r4, u4) = rhs(x + h, r + h * r3, u + h * u3);
        r += h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
        u += h / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4);
        trace.x.push((k + 1) as f64 * h);
        trace.harmonic.push(r.norm());
        trace.fundamental.push(u.norm());
    }
    trace
}
