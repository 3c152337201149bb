//! Forward-mode dual numbers carrying all 51 pose partials at once. Used to
//! produce the exact vertex Jacobian of the skinning forward pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const THETA_DIM: usize = 51;

#[derive(Clone, Copy)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; THETA_DIM],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; THETA_DIM] }
    }

    /// Seed variable `i` of the 51-dim parameter vector.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; THETA_DIM];
        d[i] = 1.0;
        Self { v, d }
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let scale = 0.5 / r;
        Self { v: r, d: self.d.map(|x| x * scale) }
    }

    pub fn sin(self) -> Self {
        let c = self.v.cos();
        Self { v: self.v.sin(), d: self.d.map(|x| x * c) }
    }

    pub fn cos(self) -> Self {
        let s = -self.v.sin();
        Self { v: self.v.cos(), d: self.d.map(|x| x * s) }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(&rhs.d) {
            *a += b;
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(&rhs.d) {
            *a -= b;
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut d = [0.0; THETA_DIM];
        for i in 0..THETA_DIM {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.v;
        let mut d = [0.0; THETA_DIM];
        for i in 0..THETA_DIM {
            d[i] = (self.d[i] - self.v * inv * rhs.d[i]) * inv;
        }
        Dual { v: self.v * inv, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual { v: self.v * rhs, d: self.d.map(|x| x * rhs) }
    }
}

pub type DVec3 = [Dual; 3];

pub fn dvec_constant(v: &nalgebra::Vector3<f64>) -> DVec3 {
    [Dual::constant(v.x), Dual::constant(v.y), Dual::constant(v.z)]
}

pub fn dvec_add(a: &DVec3, b: &DVec3) -> DVec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn dvec_sub(a: &DVec3, b: &DVec3) -> DVec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dvec_scale(a: &DVec3, s: Dual) -> DVec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dvec_cross(a: &DVec3, b: &DVec3) -> DVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dvec_dot(a: &DVec3, b: &DVec3) -> Dual {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rodrigues rotation of `p` by the (unnormalized) axis-angle vector `w`:
/// R p = p + a(s)·(w × p) + b(s)·(w × (w × p)), with s = |w|²,
/// a = sin t / t, b = (1 − cos t)/t². Series expansions keep the map smooth
/// through w = 0.
pub fn rotate_axis_angle(w: &DVec3, p: &DVec3) -> DVec3 {
    let s = dvec_dot(w, w);
    let (a, b) = if s.v > 1e-12 {
        let t = s.sqrt();
        (t.sin() / t, (Dual::constant(1.0) - t.cos()) / s)
    } else {
        // a = 1 - s/6 + s²/120, b = 1/2 - s/24 + s²/720
        let s2 = s * s;
        (
            Dual::constant(1.0) - s * (1.0 / 6.0) + s2 * (1.0 / 120.0),
            Dual::constant(0.5) - s * (1.0 / 24.0) + s2 * (1.0 / 720.0),
        )
    };
    let wxp = dvec_cross(w, p);
    let wxwxp = dvec_cross(w, &wxp);
    dvec_add(p, &dvec_add(&dvec_scale(&wxp, a), &dvec_scale(&wxwxp, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    #[test]
    fn rodrigues_matches_quaternion() {
        let w = Vector3::new(0.3, -0.8, 0.5);
        let p = Vector3::new(1.0, 2.0, -0.5);
        let q = UnitQuaternion::from_scaled_axis(w);
        let want = q * p;
        let got = rotate_axis_angle(
            &[
                Dual::constant(w.x),
                Dual::constant(w.y),
                Dual::constant(w.z),
            ],
            &dvec_constant(&p),
        );
        for k in 0..3 {
            assert!((got[k].v - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rodrigues_smooth_at_zero() {
        let p = dvec_constant(&Vector3::new(1.0, 0.0, 0.0));
        let w = [
            Dual::variable(0.0, 0),
            Dual::variable(0.0, 1),
            Dual::variable(0.0, 2),
        ];
        let r = rotate_axis_angle(&w, &p);
        // d(Rp)/dw at w=0 is -skew(p): rotating (1,0,0) about z moves +y.
        assert!((r[1].d[2] - 1.0).abs() < 1e-12);
        assert!((r[2].d[1] + 1.0).abs() < 1e-12);
        assert!(r[0].d[0].abs() < 1e-12);
    }

    #[test]
    fn dual_derivative_matches_finite_difference() {
        let f = |x: Dual| (x * x).sqrt().sin() / (x + Dual::constant(2.0));
        let x0 = 0.7;
        let analytic = f(Dual::variable(x0, 0)).d[0];
        let h = 1e-6;
        let fd = (f(Dual::constant(x0 + h)).v - f(Dual::constant(x0 - h)).v) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-8);
    }
}
