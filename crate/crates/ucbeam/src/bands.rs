//! Band decomposition: domains, amplitude profiles `f_n`, transition `theta`, cutoffs `chi_n`.

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::series::{smooth_step, Series};
use serde::{Deserialize, Serialize};

/// Endpoints of the band `Omega_n`.
pub fn band_endpoints(n: u32) -> (f64, f64) {
    let a = (n + 1) as f64;
    let b = (n - 1) as f64;
    (1.0 / a + 1.0 / (8.0 * a * a), 1.0 / b - 1.0 / (8.0 * b * b))
}

/// Interval where `chi_n = 1`.
pub fn plateau(n: u32) -> (f64, f64) {
    let a = (n + 1) as f64;
    let b = (n - 1) as f64;
    (1.0 / a + 1.0 / (6.0 * a * a), 1.0 / b - 1.0 / (6.0 * b * b))
}

/// Closure of `{chi_n > 0}`.
pub fn support(n: u32) -> (f64, f64) {
    let a = (n + 1) as f64;
    let b = (n - 1) as f64;
    (1.0 / a + 1.0 / (7.0 * a * a), 1.0 / b - 1.0 / (7.0 * b * b))
}

/// Where the plateaus of bands n and n+1 overlap.
pub fn plateau_overlap(n: u32) -> (f64, f64) {
    let a = (n + 1) as f64;
    let m = n as f64;
    (1.0 / a + 1.0 / (6.0 * a * a), 1.0 / m - 1.0 / (6.0 * m * m))
}

/// `z = n^2 (sigma - 1/n)`.
pub fn rescaled(n: u32, sigma: f64) -> f64 {
    let m = n as f64;
    m * m * (sigma - 1.0 / m)
}

pub fn unrescaled(n: u32, z: f64) -> f64 {
    let m = n as f64;
    1.0 / m + z / (m * m)
}

/// Transition `theta(z) = -1/2 + (3/2) step(4z + 1/2)`: -1/2 below -1/8, 1 above 1/8.
pub fn theta(z: &Series) -> Series {
    let arg = z.scale(4.0).add_const(0.5);
    smooth_step(&arg).scale(1.5).add_const(-0.5)
}

pub fn theta_value(z: f64) -> f64 {
    theta(&Series::constant(z, 0)).value()
}

/// Taylor series of `f_n` in sigma about `sigma`, to the given order.
pub fn f_series(n: u32, sigma: f64, order: usize) -> Series {
    let m = n as f64;
    let n2 = m * m;
    let mut z = Series::constant(rescaled(n, sigma), order);
    if order > 0 {
        z.c[1] = n2;
    }
    // f = -n^2 - n^2 z theta(z)
    z.mul(&theta(&z)).scale(-n2).add_const(-n2)
}

pub fn f_value(n: u32, sigma: f64) -> f64 {
    f_series(n, sigma, 0).value()
}

/// `(f, f', f'')` at sigma.
pub fn f_jet(n: u32, sigma: f64) -> [f64; 3] {
    let s = f_series(n, sigma, 2);
    [s.value(), s.derivative(1), s.derivative(2)]
}

/// Taylor series of `chi_n` in sigma.
pub fn chi_series(n: u32, sigma: f64, order: usize) -> Series {
    let (qlo, qhi) = support(n);
    let (plo, phi) = plateau(n);
    let rise_w = plo - qlo;
    let fall_w = qhi - phi;
    let mut up = Series::constant((sigma - qlo) / rise_w, order);
    let mut down = Series::constant((qhi - sigma) / fall_w, order);
    if order > 0 {
        up.c[1] = 1.0 / rise_w;
        down.c[1] = -1.0 / fall_w;
    }
    smooth_step(&up).mul(&smooth_step(&down))
}

pub fn chi_value(n: u32, sigma: f64) -> f64 {
    chi_series(n, sigma, 0).value()
}

/// Uniform axis. A length-1 axis is a collapsed (invariant) direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub h: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, len: usize) -> Self {
        if len <= 1 {
            Axis { lo: 0.5 * (lo + hi), h: 0.0, len: 1 }
        } else {
            Axis { lo, h: (hi - lo) / (len - 1) as f64, len }
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h
    }

    pub fn hi(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }
}

/// Tensor grid of one band: sigma through the rescaled z axis, then the ybar axes,
/// then s (fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub n: u32,
    pub z: Axis,
    pub ybar: Vec<Axis>,
    pub s: Axis,
}

impl BandGrid {
    pub fn shape(&self) -> Vec<usize> {
        let mut v = vec![self.z.len];
        v.extend(self.ybar.iter().map(|a| a.len));
        v.push(self.s.len);
        v
    }

    pub fn size(&self) -> usize {
        self.shape().iter().product()
    }

    /// Number of nodes per sigma slice.
    pub fn slice_len(&self) -> usize {
        self.size() / self.z.len
    }

    pub fn sigma(&self, i: usize) -> f64 {
        unrescaled(self.n, self.z.at(i))
    }

    /// Flat index from (sigma index, ybar indices, s index).
    pub fn index(&self, i: usize, iy: &[usize], is: usize) -> usize {
        let mut k = i;
        for (a, &j) in self.ybar.iter().zip(iy) {
            k = k * a.len + j;
        }
        k * self.s.len + is
    }

    /// Inverse of `index`.
    pub fn unindex(&self, mut k: usize) -> (usize, Vec<usize>, usize) {
        let is = k % self.s.len;
        k /= self.s.len;
        let mut iy = vec![0; self.ybar.len()];
        for (a, slot) in self.ybar.iter().zip(iy.iter_mut()).rev() {
            *slot = k % a.len;
            k /= a.len;
        }
        (k, iy, is)
    }

    /// Chart coordinates of a flat index.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        let (i, iy, is) = self.unindex(k);
        let mut x = vec![self.sigma(i)];
        x.extend(self.ybar.iter().zip(&iy).map(|(a, &j)| a.at(j)));
        x.push(self.s.at(is));
        x
    }

    /// Index of the s = 0 plane.
    pub fn s_zero(&self) -> usize {
        ((0.0 - self.s.lo) / self.s.h).round() as usize
    }

    /// Stride of axis `a` (0 = sigma, 1..=m ybar, m+1 = s) in flat indexing.
    pub fn stride(&self, a: usize) -> usize {
        self.shape()[a + 1..].iter().product()
    }

    /// Grid spacing in chart units along axis `a` (sigma spacing is `h_z / n^2`).
    pub fn spacing(&self, a: usize) -> f64 {
        let m = self.ybar.len();
        if a == 0 {
            self.z.h / (self.n as f64 * self.n as f64)
        } else if a <= m {
            self.ybar[a - 1].h
        } else {
            self.s.h
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub sigma: usize,
    pub ybar: usize,
    pub s: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { sigma: 129, ybar: 65, s: 257 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandDomain {
    pub n: u32,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub grid: BandGrid,
}

/// Band `Omega_n` with its grid. `ybar_invariant` collapses the ybar axes.
pub fn band_domain(n: u32, spec: &DomainSpec, res: &Resolution, ybar_invariant: bool) -> Result<BandDomain> {
    if n < 2 {
        return Err(Error::Config(format!("band index {} must be >= 2", n)));
    }
    let (lo, hi) = band_endpoints(n);
    if hi > spec.sigma0 {
        return Err(Error::BandOutsideDomain { n, sigma_hi: hi, sigma0: spec.sigma0 });
    }
    if res.sigma < 9 || res.s < 9 || (!ybar_invariant && res.ybar < 9) {
        return Err(Error::Config("grid resolutions must be >= 9".into()));
    }
    let s = Axis::new(spec.s_minus, spec.s_plus, res.s);
    let pos = -spec.s_minus / s.h;
    if (pos - pos.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "s grid ({}, {}) with {} nodes does not contain s = 0",
            spec.s_minus, spec.s_plus, res.s
        )));
    }
    let ybar = spec
        .ybar_box
        .iter()
        .map(|&(a, b)| Axis::new(a, b, if ybar_invariant { 1 } else { res.ybar }))
        .collect();
    let z = Axis::new(rescaled(n, lo), rescaled(n, hi), res.sigma);
    Ok(BandDomain { n, sigma_lo: lo, sigma_hi: hi, grid: BandGrid { n, z, ybar, s } })
}

/// `sup |(n^-2 d_sigma)^k F|` for k = 0..=nmax over the band, on a dense sample.
pub fn rescaled_bounds(n: u32, nmax: usize, samples: usize, f: impl Fn(f64, usize) -> Series) -> Vec<f64> {
    let (lo, hi) = band_endpoints(n);
    let n2 = (n as f64).powi(2);
    let mut out = vec![0.0f64; nmax + 1];
    for i in 0..samples {
        let sigma = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        let s = f(sigma, nmax);
        for (k, o) in out.iter_mut().enumerate() {
            *o = o.max((s.derivative(k) / n2.powi(k as i32)).abs());
        }
    }
    out
}

/// Measured constants of one band's profiles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileReport {
    pub n: u32,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// `sup |(n^-2 d)^k chi_n|`
    pub chi_bounds: Vec<f64>,
    /// `sup |n^-2 d f_n| / n^2`
    pub k0_f: f64,
    pub f_piecewise_ok: bool,
    pub chi_plateau_ok: bool,
    pub chi_support_ok: bool,
    pub theta_at_zero: f64,
}

pub fn profile_report(n: u32, nmax: usize) -> ProfileReport {
    let (lo, hi) = band_endpoints(n);
    let n2 = (n as f64).powi(2);
    let chi_bounds = rescaled_bounds(n, nmax, 4001, |s, k| chi_series(n, s, k));
    let fb = rescaled_bounds(n, 1, 4001, |s, k| f_series(n, s, k));
    let mut f_ok = true;
    let mut pl_ok = true;
    let mut sup_ok = true;
    let (plo, phi) = plateau(n);
    let (qlo, qhi) = support(n);
    for i in 0..4001 {
        let sigma = lo + (hi - lo) * i as f64 / 4000.0;
        let z = rescaled(n, sigma);
        let f = f_value(n, sigma);
        let bound = if z <= -0.125 {
            -17.0 / 16.0
        } else if z >= 0.125 {
            -9.0 / 8.0
        } else {
            -7.0 / 8.0
        };
        f_ok &= f <= bound * n2 * (1.0 - 1e-14);
        let c = chi_value(n, sigma);
        if sigma >= plo && sigma <= phi {
            pl_ok &= c == 1.0;
        }
        if sigma <= qlo || sigma >= qhi {
            sup_ok &= c == 0.0;
        }
    }
    ProfileReport {
        n,
        sigma_lo: lo,
        sigma_hi: hi,
        chi_bounds,
        k0_f: fb[1] / n2,
        f_piecewise_ok: f_ok,
        chi_plateau_ok: pl_ok,
        chi_support_ok: sup_ok,
        theta_at_zero: theta_value(0.0),
    }
}

/// Every sigma in (1/nmax, 1/n0) lies on some plateau.
pub fn plateaus_cover(n0: u32, nmax: u32, samples: usize) -> bool {
    let (a, b) = (1.0 / nmax as f64, 1.0 / n0 as f64);
    (1..samples).all(|i| {
        let s = a + (b - a) * i as f64 / samples as f64;
        (n0..=nmax).any(|n| chi_value(n, s) == 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_five_endpoints() {
        let (lo, hi) = band_endpoints(5);
        assert!((lo - (1.0 / 6.0 + 1.0 / 288.0)).abs() < 1e-16);
        assert_eq!(hi, 0.2421875);
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta_value(-0.25), -0.5);
        assert_eq!(theta_value(0.25), 1.0);
        assert!((theta_value(0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn f_five_values() {
        assert!((f_value(5, 0.2) + 25.0).abs() < 1e-12);
        assert!((f_value(5, 0.21) + 31.25).abs() < 1e-11);
        let s = 0.18;
        assert!((f_value(5, s) - (-25.0 + 312.5 * (s - 0.2))).abs() < 1e-11);
    }

    #[test]
    fn chi_five_values() {
        assert_eq!(chi_value(5, 0.2), 1.0);
        assert_eq!(chi_value(5, 1.0 / 6.0 + 1.0 / 300.0), 0.0);
    }

    #[test]
    fn chi_five_slope() {
        let (qlo, qhi) = support(5);
        let (plo, _) = plateau(5);
        let k1 = (0..=20000)
            .map(|i| qlo + (qhi - qlo) * i as f64 / 20000.0)
            .map(|s| chi_series(5, s, 1).derivative(1).abs())
            .fold(0.0, f64::max)
            / 25.0;
        // mean value over the rising edge
        let floor = 1.0 / ((plo - qlo) * 25.0);
        assert!(k1 >= floor * 0.999 && k1 < 3.0 * floor, "K1={k1} floor={floor}");
    }

    #[test]
    fn band_outside_domain() {
        let spec = DomainSpec { sigma0: 0.05, ..DomainSpec::default() };
        let e = band_domain(12, &spec, &Resolution::default(), true).unwrap_err();
        assert_eq!(e.name(), "BandOutsideDomain");
    }

    #[test]
    fn grid_index_roundtrip() {
        let spec = DomainSpec::default();
        let b = band_domain(12, &spec, &Resolution { sigma: 9, ybar: 9, s: 17 }, false).unwrap();
        let g = &b.grid;
        for k in [0, 5, 100, g.size() - 1] {
            let (i, iy, is) = g.unindex(k);
            assert_eq!(g.index(i, &iy, is), k);
        }
        assert_eq!(g.s.at(g.s_zero()), 0.0);
    }
}
