use std::ops::Mul;

use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2x2 complex matrix, stored row-major. Used for single-qubit propagators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    pub m: [[Complex64; 2]; 2],
}

impl Default for Unitary2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Unitary2 {
    pub const fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self::new([[ONE, ZERO], [ZERO, ONE]])
    }

    pub const fn pauli_x() -> Self {
        Self::new([[ZERO, ONE], [ONE, ZERO]])
    }

    pub const fn pauli_y() -> Self {
        Self::new([[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]])
    }

    pub const fn pauli_z() -> Self {
        Self::new([[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]])
    }

    /// `exp(-i t (hx σx + hy σy + hz σz))`, evaluated in closed form.
    pub fn exp_su2(hx: f64, hy: f64, hz: f64, t: f64) -> Self {
        let norm = (hx * hx + hy * hy + hz * hz).sqrt();
        let theta = norm * t;
        let (s, c) = theta.sin_cos();
        // sin(|h| t) / |h|, with the t -> 0 limit for a vanishing field
        let k = if norm > 0.0 { s / norm } else { t };
        Self::new([
            [Complex64::new(c, -k * hz), Complex64::new(-k * hy, -k * hx)],
            [Complex64::new(k * hy, -k * hx), Complex64::new(c, k * hz)],
        ])
    }

    /// `exp(-i φ σz)`.
    pub fn z_phase(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new([
            [Complex64::new(c, -s), ZERO],
            [ZERO, Complex64::new(c, s)],
        ])
    }

    /// Rotation by `angle` about the equatorial axis at azimuth `axis_phase`
    /// (0 is x, π/2 is y).
    pub fn rotation(angle: f64, axis_phase: f64) -> Self {
        let (sp, cp) = axis_phase.sin_cos();
        Self::exp_su2(cp, sp, 0.0, angle / 2.0)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0] * factor, m[0][1] * factor],
            [m[1][0] * factor, m[1][1] * factor],
        ])
    }

    pub fn apply(&self, psi: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.m;
        [
            m[0][0] * psi[0] + m[0][1] * psi[1],
            m[1][0] * psi[0] + m[1][1] * psi[1],
        ]
    }

    /// Frobenius norm of `U†U - I`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.adjoint() * *self;
        let d = [
            p.m[0][0] - ONE,
            p.m[0][1],
            p.m[1][0],
            p.m[1][1] - ONE,
        ];
        d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        let a = &self.m;
        let b = &rhs.m;
        Unitary2::new([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}
