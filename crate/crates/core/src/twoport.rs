//! ABCD two-port algebra at a single frequency.

use num_complex::Complex64;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// ABCD matrix relating input port (V₁, I₁) to output port (V₂, I₂):
/// `[V₁; I₁] = [[A, B], [C, D]] · [V₂; I₂]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPort {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

/// Scattering parameters of a reciprocal two-port with equal terminations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParams {
    pub s11: C64,
    pub s21: C64,
    pub s12: C64,
    pub s22: C64,
}

impl SParams {
    /// |S11|² + |S21|², equal to one for a lossless network.
    pub fn power_sum(&self) -> f64 {
        self.s11.norm_sqr() + self.s21.norm_sqr()
    }
}

impl TwoPort {
    pub const fn identity() -> Self {
        Self {
            a: ONE,
            b: ZERO,
            c: ZERO,
            d: ONE,
        }
    }

    pub fn series(z: C64) -> Self {
        Self {
            b: z,
            ..Self::identity()
        }
    }

    pub fn shunt(y: C64) -> Self {
        Self {
            c: y,
            ..Self::identity()
        }
    }

    pub fn determinant(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    /// `self` followed by `next` along the line.
    pub fn cascade(&self, next: &TwoPort) -> TwoPort {
        TwoPort {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    /// `n` identical copies cascaded, by repeated squaring.
    pub fn pow(&self, mut n: u64) -> TwoPort {
        let mut result = TwoPort::identity();
        let mut base = *self;
        while n > 0 {
            if n & 1 == 1 {
                result = result.cascade(&base);
            }
            base = base.cascade(&base);
            n >>= 1;
        }
        result
    }

    /// Largest entry magnitude.
    pub fn max_norm(&self) -> f64 {
        [self.a, self.b, self.c, self.d]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn scaled(&self, s: f64) -> TwoPort {
        TwoPort {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    /// Like [`pow`](Self::pow) but renormalizes after every product so deep
    /// stop bands cannot overflow. Returns `(P, ln s)` with `Mⁿ = s·P`.
    pub fn pow_scaled(&self, mut n: u64) -> (TwoPort, f64) {
        let mut result = TwoPort::identity();
        let mut log_r = 0.0;
        let mut base = *self;
        let mut log_b = 0.0;
        let renorm = |m: TwoPort, log: f64| {
            let s = m.max_norm();
            if s > 0.0 && s.is_finite() {
                (m.scaled(1.0 / s), log + s.ln())
            } else {
                (m, log)
            }
        };
        while n > 0 {
            if n & 1 == 1 {
                (result, log_r) = renorm(result.cascade(&base), log_r + log_b);
            }
            n >>= 1;
            if n > 0 {
                (base, log_b) = renorm(base.cascade(&base), 2.0 * log_b);
            }
        }
        (result, log_r)
    }

    pub fn inverse(&self) -> TwoPort {
        let det = self.determinant();
        TwoPort {
            a: self.d / det,
            b: -self.b / det,
            c: -self.c / det,
            d: self.a / det,
        }
    }

    /// Applies the matrix to a column (V, I).
    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// S-parameters for reference impedance `z0` at both ports.
    pub fn to_sparams(&self, z0: f64) -> SParams {
        let z0 = C64::new(z0, 0.0);
        let delta = self.a + self.b / z0 + self.c * z0 + self.d;
        SParams {
            s11: (self.a + self.b / z0 - self.c * z0 - self.d) / delta,
            s21: C64::new(2.0, 0.0) / delta,
            s12: C64::new(2.0, 0.0) * self.determinant() / delta,
            s22: (-self.a + self.b / z0 - self.c * z0 + self.d) / delta,
        }
    }
}

/// S-parameters of `s·M` for a matrix given as `(M, ln s)`, valid when the
/// determinant of the unscaled network is one (reciprocal, S12 = S21).
/// Also returns 20·log10|S21|, which stays finite when |S21| underflows.
pub fn sparams_scaled(m: &TwoPort, log_scale: f64, z0: f64) -> (SParams, f64) {
    let z0 = C64::new(z0, 0.0);
    let delta = m.a + m.b / z0 + m.c * z0 + m.d;
    let s21 = C64::new(2.0, 0.0) / delta * (-log_scale).exp();
    let s21_db = 20.0 * ((2.0 / delta.norm()).ln() - log_scale) / std::f64::consts::LN_10;
    let s = SParams {
        s11: (m.a + m.b / z0 - m.c * z0 - m.d) / delta,
        s21,
        s12: s21,
        s22: (-m.a + m.b / z0 - m.c * z0 + m.d) / delta,
    };
    (s, s21_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(w: f64, l: f64, c: f64) -> TwoPort {
        TwoPort::series(C64::new(0.0, w * l)).cascade(&TwoPort::shunt(C64::new(0.0, w * c)))
    }

    #[test]
    fn single_cell_trace() {
        let (w, l, c) = (3.0, 0.7, 0.2);
        let m = cell(w, l, c);
        assert!((m.trace() - C64::new(2.0 - w * w * l * c, 0.0)).norm() < 1e-14);
        assert!((m.determinant() - ONE).norm() < 1e-14);
    }

    #[test]
    fn power_matches_sequential_product() {
        let m = cell(1.3, 0.9, 0.4).cascade(&cell(1.3, 1.35, 0.4));
        let mut seq = TwoPort::identity();
        for _ in 0..147 {
            seq = seq.cascade(&m);
        }
        let fast = m.pow(147);
        for (x, y) in [(fast.a, seq.a), (fast.b, seq.b), (fast.c, seq.c), (fast.d, seq.d)] {
            assert!((x - y).norm() <= 1e-8 * y.norm().max(1.0));
        }
    }

    #[test]
    fn scaled_power_matches_plain_power() {
        let m = cell(2.9, 1.0, 1.0);
        let (p, log_s) = m.pow_scaled(37);
        let plain = m.pow(37);
        for (x, y) in [(p.a, plain.a), (p.b, plain.b), (p.c, plain.c), (p.d, plain.d)] {
            assert!((x * log_s.exp() - y).norm() <= 1e-9 * plain.max_norm());
        }
        let (_, db) = sparams_scaled(&p, log_s, 1.0);
        let direct = 20.0 * plain.to_sparams(1.0).s21.norm().log10();
        assert!((db - direct).abs() < 1e-8);
        // Far past overflow of the plain product.
        let (_, huge) = m.pow_scaled(1 << 20);
        assert!(huge.is_finite() && huge > 700.0);
    }

    #[test]
    fn inverse_round_trip() {
        let m = cell(0.8, 1.1, 0.3);
        let p = m.cascade(&m.inverse());
        assert!((p.a - ONE).norm() < 1e-14 && p.b.norm() < 1e-14);
        assert!(p.c.norm() < 1e-14 && (p.d - ONE).norm() < 1e-14);
    }

    #[test]
    fn through_line_transmits_fully() {
        let s = TwoPort::identity().to_sparams(50.0);
        assert!((s.s21 - ONE).norm() < 1e-15);
        assert!(s.s11.norm() < 1e-15);
    }
}
