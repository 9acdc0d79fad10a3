//! Complex double-double scalar for the transport hierarchy and residual ladder.

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
pub use twofloat::TwoFloat as Dd;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

pub const ZERO: Cdd = Cdd { re: Dd::from_f64(0.0), im: Dd::from_f64(0.0) };

impl Cdd {
    pub fn new(re: Dd, im: Dd) -> Self {
        Cdd { re, im }
    }

    pub fn real(x: f64) -> Self {
        Cdd { re: Dd::from(x), im: Dd::from(0.0) }
    }

    pub fn from_c64(z: Complex64) -> Self {
        Cdd { re: Dd::from(z.re), im: Dd::from(z.im) }
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.hi() + self.re.lo(), self.im.hi() + self.im.lo())
    }

    pub fn scale(self, a: f64) -> Self {
        Cdd { re: self.re * a, im: self.im * a }
    }

    pub fn scale_dd(self, a: Dd) -> Self {
        Cdd { re: self.re * a, im: self.im * a }
    }

    /// Multiply by i.
    pub fn mul_i(self) -> Self {
        Cdd { re: -self.im, im: self.re }
    }

    pub fn norm(self) -> f64 {
        self.to_c64().norm()
    }

    pub fn is_zero(self) -> bool {
        self.re.hi() == 0.0 && self.im.hi() == 0.0
    }
}

impl Add for Cdd {
    type Output = Cdd;
    fn add(self, o: Cdd) -> Cdd {
        Cdd { re: self.re + o.re, im: self.im + o.im }
    }
}

impl AddAssign for Cdd {
    fn add_assign(&mut self, o: Cdd) {
        *self = *self + o;
    }
}

impl Sub for Cdd {
    type Output = Cdd;
    fn sub(self, o: Cdd) -> Cdd {
        Cdd { re: self.re - o.re, im: self.im - o.im }
    }
}

impl SubAssign for Cdd {
    fn sub_assign(&mut self, o: Cdd) {
        *self = *self - o;
    }
}

impl Neg for Cdd {
    type Output = Cdd;
    fn neg(self) -> Cdd {
        Cdd { re: -self.re, im: -self.im }
    }
}

impl Mul for Cdd {
    type Output = Cdd;
    fn mul(self, o: Cdd) -> Cdd {
        Cdd { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// Weighted sum `sum_k w[k] * v[k]` in double-double.
pub fn dot(w: &[f64], v: impl Iterator<Item = Cdd>) -> Cdd {
    let mut acc = ZERO;
    for (wk, vk) in w.iter().zip(v) {
        acc += vk.scale(*wk);
    }
    acc
}

/// `a / b` to double-double accuracy (long division with two correction terms).
pub fn div(a: Dd, b: Dd) -> Dd {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    Dd::from(q1) + Dd::from(q2) + Dd::from(q3)
}

pub fn recip(b: Dd) -> Dd {
    div(Dd::from(1.0), b)
}

/// `n^p` for integer n and real p, to double-double accuracy when p is integral.
pub fn pow_dd(n: u32, p: f64) -> Dd {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        let r = Dd::from(n as f64).powi(p.abs() as i32);
        if p < 0.0 {
            recip(r)
        } else {
            r
        }
    } else {
        (Dd::from(n as f64).ln() * p).exp()
    }
}

/// `x mod 2 pi` in [0, 2 pi), for x given in double-double.
pub fn reduce_2pi(x: Dd) -> f64 {
    let two_pi = Dd::from(2.0) * twofloat::consts::PI;
    let k = div(x, two_pi).floor();
    let r = x - k * two_pi;
    r.hi() + r.lo()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_keeps_low_bits() {
        let a = Cdd::real(1.0 + 1e-17);
        let one = Cdd::real(1.0);
        // 1 + 1e-17 is not representable in f64 but survives as a sum in dd
        let s = Cdd::real(1.0) + Cdd::real(1e-17);
        assert_eq!(a.re.hi(), 1.0);
        assert!((s - one).re.hi() > 0.9e-17);
    }

    #[test]
    fn integer_power_is_exact() {
        let l = pow_dd(20, 12.0);
        assert_eq!(l.hi(), 4.096e15);
        assert_eq!(l.lo(), 0.0);
        let r = pow_dd(5, 12.0);
        assert_eq!(r.hi(), 244140625.0);
    }

    #[test]
    fn division_is_double_double() {
        let third = div(Dd::from(1.0), Dd::from(3.0));
        let r = third * 3.0 - Dd::from(1.0);
        assert!(r.hi().abs() < 1e-31);
        let w = div(Dd::from(-0.328125), Dd::from(-6.0));
        assert_eq!((w.hi(), w.lo()), (0.0546875, 0.0));
        let m = pow_dd(12, -6.0) * 2985984.0 - Dd::from(1.0);
        assert!(m.hi().abs() < 1e-31);
    }

    #[test]
    fn phase_reduction() {
        let x = Dd::from(3.0) * twofloat::consts::PI + Dd::from(0.25);
        assert!((reduce_2pi(x) - (std::f64::consts::PI + 0.25)).abs() < 1e-14);
    }
}
