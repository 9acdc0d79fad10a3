//! Truncated Taylor series `a_0 + a_1 t + ... + a_K t^K` with `a_k = f^(k)(x)/k!`.
//!
//! Used for exact derivatives of the smooth transition functions and of
//! band fields along coordinate axes.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Coef:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + PartialEq
    + std::fmt::Debug
{
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn exp(self) -> Self;
}

impl Coef for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

impl Coef for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series<T: Coef = f64> {
    pub c: Vec<T>,
}

impl<T: Coef> Series<T> {
    pub fn constant(v: T, order: usize) -> Self {
        let mut c = vec![T::zero(); order + 1];
        c[0] = v;
        Series { c }
    }

    /// The identity `x + t` at the point `x`.
    pub fn variable(x: T, order: usize) -> Self {
        let mut s = Self::constant(x, order);
        if order > 0 {
            s.c[1] = T::from_f64(1.0);
        }
        s
    }

    pub fn from_coeffs(c: Vec<T>) -> Self {
        Series { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> T {
        let mut f = 1.0;
        for j in 2..=k {
            f *= j as f64;
        }
        self.c[k] * T::from_f64(f)
    }

    pub fn derivatives(&self) -> Vec<T> {
        (0..self.c.len()).map(|k| self.derivative(k)).collect()
    }

    pub fn scale(&self, a: T) -> Self {
        Series { c: self.c.iter().map(|&x| x * a).collect() }
    }

    pub fn add_const(&self, a: T) -> Self {
        let mut s = self.clone();
        s.c[0] = s.c[0] + a;
        s
    }

    pub fn recip(&self) -> Self {
        Self::constant(T::from_f64(1.0), self.order()).div(self)
    }

    pub fn exp(&self) -> Self {
        let k = self.order();
        let mut e = vec![T::zero(); k + 1];
        e[0] = self.c[0].exp();
        for n in 1..=k {
            let mut acc = T::zero();
            for j in 1..=n {
                acc = acc + T::from_f64(j as f64) * self.c[j] * e[n - j];
            }
            e[n] = acc / T::from_f64(n as f64);
        }
        Series { c: e }
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut r = Self::constant(T::from_f64(1.0), self.order());
        for _ in 0..p {
            r = r.mul(self);
        }
        r
    }
}

impl Series<f64> {
    pub fn ln(&self) -> Self {
        let k = self.order();
        let a = &self.c;
        let mut l = vec![0.0; k + 1];
        l[0] = a[0].ln();
        for n in 1..=k {
            let mut acc = 0.0;
            for j in 1..n {
                acc += j as f64 * l[j] * a[n - j];
            }
            l[n] = (a[n] - acc / n as f64) / a[0];
        }
        Series { c: l }
    }

    pub fn to_complex(&self) -> Series<Complex64> {
        Series { c: self.c.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }
}

impl<T: Coef> Add for &Series<T> {
    type Output = Series<T>;
    fn add(self, o: &Series<T>) -> Series<T> {
        Series { c: self.c.iter().zip(&o.c).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Coef> Sub for &Series<T> {
    type Output = Series<T>;
    fn sub(self, o: &Series<T>) -> Series<T> {
        Series { c: self.c.iter().zip(&o.c).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Coef> Neg for &Series<T> {
    type Output = Series<T>;
    fn neg(self) -> Series<T> {
        Series { c: self.c.iter().map(|&a| -a).collect() }
    }
}

impl<T: Coef> Series<T> {
    pub fn mul(&self, o: &Series<T>) -> Series<T> {
        let k = self.order().min(o.order());
        let mut c = vec![T::zero(); k + 1];
        for i in 0..=k {
            for j in 0..=(k - i) {
                c[i + j] = c[i + j] + self.c[i] * o.c[j];
            }
        }
        Series { c }
    }

    pub fn div(&self, o: &Series<T>) -> Series<T> {
        let k = self.order().min(o.order());
        let mut b = vec![T::zero(); k + 1];
        for n in 0..=k {
            let mut acc = self.c[n];
            for j in 0..n {
                acc = acc - b[j] * o.c[n - j];
            }
            b[n] = acc / o.c[0];
        }
        Series { c: b }
    }
}

/// Smooth non-decreasing step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x);
/// symmetric about x = 1/2, where it equals 1/2.
pub fn smooth_step(x: &Series<f64>) -> Series<f64> {
    let k = x.order();
    let x0 = x.value();
    // beyond these the step is 0 or 1 to full double precision, derivatives included
    if x0 <= 2e-3 {
        return Series::constant(0.0, k);
    }
    if x0 >= 1.0 - 2e-3 {
        return Series::constant(1.0, k);
    }
    // 1 / (1 + exp(1/x - 1/(1-x)))
    let one_minus = (-x).add_const(1.0);
    let u = &x.recip() - &one_minus.recip();
    u.exp().add_const(1.0).recip()
}

pub fn smooth_step_value(x: f64) -> f64 {
    smooth_step(&Series::constant(x, 0)).value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_and_ln_invert() {
        let x = Series::variable(0.3, 6);
        let e = x.exp();
        for k in 0..=6 {
            assert!((e.derivative(k) - 0.3f64.exp()).abs() < 1e-14);
        }
        let back = e.ln();
        assert!((back.c[0] - 0.3).abs() < 1e-15);
        assert!((back.c[1] - 1.0).abs() < 1e-14);
        for k in 2..=6 {
            assert!(back.c[k].abs() < 1e-13);
        }
    }

    #[test]
    fn quotient_matches_closed_form() {
        // 1/(1 - t) = sum t^k
        let x = Series::variable(0.0, 5);
        let r = (-&x).add_const(1.0).recip();
        for k in 0..=5 {
            assert!((r.c[k] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_midpoint_and_plateaus() {
        assert_eq!(smooth_step_value(-1.0), 0.0);
        assert_eq!(smooth_step_value(1.5), 1.0);
        assert!((smooth_step_value(0.5) - 0.5).abs() < 1e-15);
        let s = smooth_step(&Series::variable(0.5, 1));
        assert!((s.c[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_derivative_matches_difference_quotient() {
        for &x in &[0.05, 0.2, 0.61, 0.93] {
            let s = smooth_step(&Series::variable(x, 2));
            let h = 1e-5;
            let fd = (smooth_step_value(x + h) - smooth_step_value(x - h)) / (2.0 * h);
            assert!((s.derivative(1) - fd).abs() < 1e-8 * (1.0 + fd.abs()), "x={x}");
        }
    }
}
