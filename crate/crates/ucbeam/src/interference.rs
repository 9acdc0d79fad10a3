//! Interference surfaces `S_n = {|v_n| = |v_(n+1)|}`, the chart `eta`, probed operator
//! coefficients, the normal-derivative recursion and the correction `omega_n`.

use crate::bands::{chi_value, f_jet, plateau, plateau_overlap, rescaled, support};
use crate::dd::{Cdd, Dd, ZERO};
use crate::error::{Error, Result};
use crate::series::{smooth_step, Series};
use crate::stencil::{fornberg, window};
use crate::transport::{BandOperator, Beam, DdJet, EnvelopeField};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Nodes of the sigma interpolant.
const INTERP_POINTS: usize = 8;

/// Interpolation window for `z`; kept inside the plateau of `chi_n` when `z` lies there, so the
/// cutoff transition never enters the stencil.
pub(crate) fn plateau_window(g: &crate::bands::BandGrid, z: f64) -> usize {
    let start = window(z, g.z.lo, g.z.h, g.z.len, INTERP_POINTS);
    let (p0, p1) = plateau(g.n);
    let (z0, z1) = (rescaled(g.n, p0), rescaled(g.n, p1));
    if z < z0 || z > z1 {
        return start;
    }
    let pa = ((z0 - g.z.lo) / g.z.h).ceil().max(0.0) as usize;
    let pb = (((z1 - g.z.lo) / g.z.h).floor() as usize).min(g.z.len - 1);
    if pb + 1 < pa + INTERP_POINTS {
        return start;
    }
    start.clamp(pa, pb + 1 - INTERP_POINTS)
}

/// Value and sigma-derivatives up to `m` of a band field on the line through slice node `q`.
pub fn sigma_jet(field: &EnvelopeField, q: usize, sigma: f64, m: usize) -> Vec<Cdd> {
    let g = &field.grid;
    let n2 = (g.n as f64).powi(2);
    let z = rescaled(g.n, sigma);
    let start = plateau_window(g, z);
    let nodes: Vec<f64> = (0..INTERP_POINTS).map(|i| g.z.at(start + i)).collect();
    let w = fornberg(z, &nodes, m);
    let sl = g.slice_len();
    (0..=m)
        .map(|d| {
            let mut acc = ZERO;
            for (i, wi) in w[d].iter().enumerate() {
                acc += field.values[(start + i) * sl + q].scale(*wi);
            }
            acc.scale(n2.powi(d as i32))
        })
        .collect()
}

/// `B_n = (3/2) n^4 + 4 n^3 + 6 n^2 + 4 n + 1`.
pub fn b_n(n: u32) -> f64 {
    let m = n as f64;
    1.5 * m.powi(4) + 4.0 * m.powi(3) + 6.0 * m * m + 4.0 * m + 1.0
}

/// Balance point of `f_n = f_(n+1)` where `theta_n = -1/2`, `theta_(n+1) = 1`, as an exact
/// rational evaluated in floating point.
pub fn closed_form_root(n: u32) -> f64 {
    let m = n as f64;
    let p = m + 1.0;
    (-p * p + p.powi(3) + m * m + m.powi(3) / 2.0) / (m.powi(4) / 2.0 + p.powi(4))
}

/// `log |v_n / v_(n+1)|` on the line through slice node `q`, with its sigma-derivative.
/// Infinite where one of the envelopes is cut off.
fn phi_and_slope(n: u32, lower: &Beam, upper: &Beam, q: usize, sigma: f64) -> (f64, f64) {
    if chi_value(n, sigma) == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if chi_value(n + 1, sigma) == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let a = f_jet(n, sigma);
    let b = f_jet(n + 1, sigma);
    let ea = sigma_jet(&lower.envelope, q, sigma, 1);
    let eb = sigma_jet(&upper.envelope, q, sigma, 1);
    let (va, da) = (ea[0].to_c64(), ea[1].to_c64());
    let (vb, db) = (eb[0].to_c64(), eb[1].to_c64());
    if va.norm() == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if vb.norm() == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let phi = a[0] - b[0] + va.norm().ln() - vb.norm().ln();
    let slope = a[1] - b[1] + (da / va).re - (db / vb).re;
    (phi, slope)
}

/// `Phi_n = f_n - f_(n+1) + log|env_n| - log|env_(n+1)|` at `(sigma, slice node q)`.
pub fn interference_phi(n: u32, lower: &Beam, upper: &Beam, q: usize, sigma: f64) -> Result<f64> {
    for (beam, _m) in [(lower, n), (upper, n + 1)] {
        let v = sigma_jet(&beam.envelope, q, sigma, 0)[0].norm();
        if v < 1e-300 {
            return Err(Error::EnvelopeZero { value: v, sigma });
        }
    }
    Ok(phi_and_slope(n, lower, upper, q, sigma).0)
}

/// Bisection (40 steps) then Newton polish (at most 5) on `[lo, hi]`.
pub fn find_root(f: impl Fn(f64) -> (f64, f64), lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..40 {
        let m = 0.5 * (a + b);
        if f(m).0 < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let mut x = 0.5 * (a + b);
    let (mut v, mut d) = f(x);
    for _ in 0..5 {
        if v.abs() <= tol || !(d > 0.0) {
            break;
        }
        let next = x - v / d;
        if !(next > a - (b - a) && next < b + (b - a)) {
            break;
        }
        x = next;
        let r = f(x);
        v = r.0;
        d = r.1;
    }
    (x, v)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterferenceSurface {
    pub n: u32,
    /// `s_n` per slice node (ybar slowest, s fastest)
    pub sigma: Vec<f64>,
    pub residual: Vec<f64>,
    pub bracket: (f64, f64),
    pub overlap: (f64, f64),
    pub closed_form: f64,
    pub max_abs_phi: f64,
    /// `n^3 (s_n - 1/n + (2/3) n^-2)`, max magnitude over nodes
    pub c1: f64,
    /// min over nodes and 20 overlap samples of `d_sigma Phi_n / B_n`
    pub min_slope: f64,
}

/// Root of `Phi_n` on every slice node. The root must sit in the plateau overlap.
pub fn locate_surface(n: u32, lower: &Beam, upper: &Beam) -> Result<InterferenceSurface> {
    let g = &lower.envelope.grid;
    let sl = g.slice_len();
    let a = (n + 1) as f64;
    let m = n as f64;
    let bracket = (1.0 / a + 1.0 / (8.0 * a * a), 1.0 / m - 1.0 / (8.0 * m * m));
    let overlap = plateau_overlap(n);
    let bn = b_n(n);
    let tol = 1e-10 * bn;
    let roots: Vec<(f64, f64, f64)> = (0..sl)
        .into_par_iter()
        .map(|q| {
            let f = |s: f64| phi_and_slope(n, lower, upper, q, s);
            let (x, v) = find_root(f, bracket.0, bracket.1, tol);
            let mut slope = f64::INFINITY;
            for i in 0..20 {
                let s = overlap.0 + (overlap.1 - overlap.0) * (i as f64 + 0.5) / 20.0;
                slope = slope.min(f(s).1 / bn);
            }
            (x, v, slope)
        })
        .collect();
    let sigma: Vec<f64> = roots.iter().map(|r| r.0).collect();
    let residual: Vec<f64> = roots.iter().map(|r| r.1.abs()).collect();
    for &s in &sigma {
        if !(s > overlap.0 && s < overlap.1) {
            return Err(Error::RootOutsideOverlap { n, lo: overlap.0, hi: overlap.1 });
        }
    }
    let max_abs_phi = residual.iter().copied().fold(0.0, f64::max);
    let c1 = sigma.iter().map(|s| ((s - 1.0 / m + 2.0 / (3.0 * m * m)) * m.powi(3)).abs()).fold(0.0, f64::max);
    let min_slope = roots.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Ok(InterferenceSurface {
        n,
        sigma,
        residual,
        bracket,
        overlap,
        closed_form: closed_form_root(n),
        max_abs_phi,
        c1,
        min_slope,
    })
}

impl InterferenceSurface {
    /// CSV: `ybar.., s, sigma, residual`.
    pub fn write_csv(&self, grid: &crate::bands::BandGrid, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let m = grid.ybar.len();
        let head: Vec<String> = (0..m).map(|i| format!("ybar{}", i + 1)).collect();
        writeln!(f, "{}{}s,sigma,residual", head.join(","), if m > 0 { "," } else { "" })?;
        for q in 0..self.sigma.len() {
            let x = grid.coords(q);
            let cols: Vec<String> = x[1..].iter().map(|v| format!("{:.10e}", v)).collect();
            writeln!(f, "{},{:.15e},{:.3e}", cols.join(","), self.sigma[q], self.residual[q])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignReport {
    pub n: u32,
    /// max of `f_(n+1) - f_n` for sigma >= s_n (overlap sample)
    pub k0_above: f64,
    /// max of `f_n - f_(n+1)` for sigma <= s_n
    pub k0_below: f64,
    /// max of `(f_(n+1) - f_n) / n^2` for sigma in `[1/n - n^-2/6, 1/n]`
    pub deep_above: f64,
    /// max of `(f_n - f_(n+1)) / n^2` for sigma in `[1/(n+1), 1/(n+1) + (n+1)^-2/6]`
    pub deep_below: f64,
    pub ok: bool,
}

pub fn check_sign_bounds(n: u32, surface: &InterferenceSurface) -> SignReport {
    let (lo, hi) = surface.overlap;
    let m = n as f64;
    let a = (n + 1) as f64;
    let f = |s: f64| f_jet(n, s)[0];
    let g = |s: f64| f_jet(n + 1, s)[0];
    let samples = 400;
    let (mut k_above, mut k_below) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let smin = surface.sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = surface.sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for i in 0..=samples {
        let s = lo + (hi - lo) * i as f64 / samples as f64;
        if s >= smax {
            k_above = k_above.max(g(s) - f(s));
        }
        if s <= smin {
            k_below = k_below.max(f(s) - g(s));
        }
    }
    let (mut d_above, mut d_below) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..=samples {
        let t = i as f64 / samples as f64;
        let s = 1.0 / m - (1.0 - t) / (6.0 * m * m);
        d_above = d_above.max((g(s) - f(s)) / (m * m));
        let s = 1.0 / a + t / (6.0 * a * a);
        d_below = d_below.max((f(s) - g(s)) / (m * m));
    }
    let ok = k_above <= 1e-9 * b_n(n) && k_below <= 1e-9 * b_n(n) && d_above < 0.0 && d_below < 0.0;
    SignReport { n, k0_above: k_above, k0_below: k_below, deep_above: d_above, deep_below: d_below, ok }
}

/// First and second slice-derivatives (ytilde axes) of a real slice field.
fn slice_derivs(op: &BandOperator, vals: &[f64]) -> (Vec<Vec<f64>>, Vec<DMatrix<f64>>) {
    let r = op.rank();
    let cv: Vec<Cdd> = vals.iter().map(|v| Cdd::real(*v)).collect();
    let re = |c: Cdd| c.re.hi() + c.re.lo();
    (0..vals.len())
        .map(|q| {
            let mut g = vec![0.0; r];
            let mut h = DMatrix::zeros(r, r);
            for a in 1..r {
                g[a] = re(op.d1(&cv, q, a));
                h[(a, a)] = re(op.d2(&cv, q, a));
                for b in a + 1..r {
                    let v = re(op.dmix(&cv, q, a, b));
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
            (g, h)
        })
        .unzip()
}

/// `eta = n^-2 (sigma - s_n) / (s_(n-1) - s_n)` on the slice nodes of band n.
#[derive(Clone, Debug)]
pub struct EtaChart {
    pub n: u32,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// whether `upper` is the fallback `s_n + 1/(n (n-1))` (no surface above)
    pub upper_fallback: bool,
    lo_d: (Vec<Vec<f64>>, Vec<DMatrix<f64>>),
    gap_d: (Vec<Vec<f64>>, Vec<DMatrix<f64>>),
}

#[derive(Clone, Debug)]
pub struct EtaJet {
    pub eta: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

impl EtaChart {
    pub fn new(op: &BandOperator, lower: &InterferenceSurface, upper: Option<&InterferenceSurface>) -> Self {
        let n = op.n;
        let m = n as f64;
        let (upper_vals, fallback) = match upper {
            Some(u) => (u.sigma.clone(), false),
            None => (lower.sigma.iter().map(|s| s + 1.0 / (m * (m - 1.0))).collect(), true),
        };
        let gap: Vec<f64> = upper_vals.iter().zip(&lower.sigma).map(|(a, b)| a - b).collect();
        EtaChart {
            n,
            lo_d: slice_derivs(op, &lower.sigma),
            gap_d: slice_derivs(op, &gap),
            lower: lower.sigma.clone(),
            upper: upper_vals,
            upper_fallback: fallback,
        }
    }

    pub fn gap(&self, q: usize) -> f64 {
        self.upper[q] - self.lower[q]
    }

    pub fn eta(&self, sigma: f64, q: usize) -> f64 {
        let c = (self.n as f64).powi(-2);
        c * (sigma - self.lower[q]) / self.gap(q)
    }

    /// sigma at which `eta` takes the given value on the line of `q`.
    pub fn sigma_at(&self, eta: f64, q: usize) -> f64 {
        self.lower[q] + eta * (self.n as f64).powi(2) * self.gap(q)
    }

    /// 2-jet of eta in `(sigma, ytilde)` at `(sigma, q)`.
    pub fn jet(&self, sigma: f64, q: usize) -> EtaJet {
        let r = self.lo_d.0[q].len();
        let c = (self.n as f64).powi(-2);
        let u = sigma - self.lower[q];
        let d = self.gap(q);
        let (sk, skl) = (&self.lo_d.0[q], &self.lo_d.1[q]);
        let (dk, dkl) = (&self.gap_d.0[q], &self.gap_d.1[q]);
        let mut grad = vec![0.0; r];
        let mut hess = DMatrix::zeros(r, r);
        grad[0] = c / d;
        for k in 1..r {
            grad[k] = c * (-sk[k] / d - u * dk[k] / (d * d));
            let v = -c * dk[k] / (d * d);
            hess[(0, k)] = v;
            hess[(k, 0)] = v;
            for l in 1..r {
                hess[(k, l)] = c
                    * (-skl[(k, l)] / d + (sk[k] * dk[l] + sk[l] * dk[k]) / (d * d)
                        - u * (dkl[(k, l)] / (d * d) - 2.0 * dk[k] * dk[l] / (d * d * d)));
            }
        }
        EtaJet { eta: c * u / d, grad, hess }
    }

    /// min and max over nodes of `d eta / d sigma = n^-2 / (s_(n-1) - s_n)`.
    pub fn jacobian_bounds(&self) -> (f64, f64) {
        let c = (self.n as f64).powi(-2);
        let v: Vec<f64> = (0..self.lower.len()).map(|q| c / self.gap(q)).collect();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(0.0, f64::max))
    }
}

/// Real 2-jet of a test function in `(sigma, ytilde)`.
#[derive(Clone, Debug)]
struct Jet {
    v: f64,
    d: Vec<f64>,
    h: DMatrix<f64>,
}

impl Jet {
    fn one(r: usize) -> Self {
        Jet { v: 1.0, d: vec![0.0; r], h: DMatrix::zeros(r, r) }
    }

    fn coord(r: usize, k: usize, v: f64) -> Self {
        let mut d = vec![0.0; r];
        d[k] = 1.0;
        Jet { v, d, h: DMatrix::zeros(r, r) }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let r = self.d.len();
        let d = (0..r).map(|a| self.d[a] * o.v + self.v * o.d[a]).collect();
        let h = DMatrix::from_fn(r, r, |a, b| {
            self.h[(a, b)] * o.v + self.v * o.h[(a, b)] + self.d[a] * o.d[b] + self.d[b] * o.d[a]
        });
        Jet { v: self.v * o.v, d, h }
    }
}

fn apply_l(a: &DMatrix<f64>, b: &[Cdd], c: Cdd, u: &Jet) -> Cdd {
    let r = u.d.len();
    let mut acc = c.scale(u.v);
    for i in 0..r {
        acc += b[i].scale(u.d[i]);
        for j in 0..r {
            if a[(i, j)] != 0.0 && u.h[(i, j)] != 0.0 {
                acc += Cdd::real(a[(i, j)] * u.h[(i, j)]);
            }
        }
    }
    acc
}

/// Coefficients of `i lambda T1 + T2` in `(eta, ytilde)`: `a^ij d_i d_j + b^i d_i + c`.
#[derive(Clone, Debug)]
pub struct ProbedCoeffs {
    pub a: DMatrix<f64>,
    pub b: Vec<Cdd>,
    pub c: Cdd,
    /// `g^-1(d eta, d eta)` from the metric directly
    pub direct_aee: f64,
}

/// Recovers the operator in `(eta, ytilde)` by applying it to `1`, the coordinate functions and
/// their pairwise products.
pub fn probe_operator_coeffs(op: &BandOperator, chart: &EtaChart, sigma: f64, q: usize) -> Result<ProbedCoeffs> {
    let g = &op.grid;
    let mut x = g.coords(q);
    x[0] = sigma;
    let (am, bm, cm) = op.l_coeffs_at(&x)?;
    let r = op.rank();
    let ej = chart.jet(sigma, q);
    let mut coords: Vec<Jet> = vec![Jet { v: ej.eta, d: ej.grad.clone(), h: ej.hess.clone() }];
    for k in 1..r {
        coords.push(Jet::coord(r, k, x[k]));
    }
    let l = |u: &Jet| apply_l(&am, &bm, cm, u);
    let c = l(&Jet::one(r));
    let lx: Vec<Cdd> = coords.iter().map(l).collect();
    let b: Vec<Cdd> = (0..r).map(|i| lx[i] - c.scale(coords[i].v)).collect();
    let mut a = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let xi = coords[i].v;
            let xj = coords[j].v;
            let lij = l(&coords[i].mul(&coords[j]));
            let v = (lij - lx[j].scale(xi) - lx[i].scale(xj) + c.scale(xi * xj)).scale(0.5);
            let re = v.re.hi() + v.re.lo();
            a[(i, j)] = re;
            a[(j, i)] = re;
        }
    }
    let md = op.chart.metric_data(&x)?;
    let direct = md.contract(&ej.grad, &ej.grad);
    if (a[(0, 0)] - direct).abs() > 1e-8 * direct.abs().max(1e-300) {
        return Err(Error::ProbeInconsistent { probed: a[(0, 0)], direct });
    }
    Ok(ProbedCoeffs { a, b, c, direct_aee: direct })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    /// highest normal order cancelled, `h_M` for `M <= k_corr + 2`
    pub k_corr: usize,
    pub epsilon: f64,
    /// relative step of the coefficient derivative stencil, in units of `n^-2`
    pub probe_step: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig { k_corr: 2, epsilon: 0.25, probe_step: 2e-3 }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.epsilon >= 0.5 {
            return Err(Error::LobeOverlap { epsilon: self.epsilon });
        }
        if self.k_corr > 6 {
            return Err(Error::Config(format!("k_corr = {} exceeds 6", self.k_corr)));
        }
        Ok(())
    }
}

/// Normal data at one surface: `h[M][q]` for `M = 0..=k_corr + 2`.
#[derive(Clone, Debug)]
pub struct SurfaceData {
    pub j: usize,
    pub eta0: f64,
    pub h: Vec<Vec<Cdd>>,
    pub min_aee: f64,
}

#[derive(Clone, Debug)]
pub struct CorrectionData {
    pub n: u32,
    pub k_corr: usize,
    /// lobe parameter actually used (may be below the configured one, see `effective_epsilon`)
    pub epsilon: f64,
    pub surfaces: Vec<SurfaceData>,
}

/// Largest lobe parameter `<= cfg` keeping both lobes inside `supp chi_n`.
pub fn effective_epsilon(n: u32, chart: &EtaChart, has_upper: bool, eps_cfg: f64) -> f64 {
    let (slo, shi) = support(n);
    let mut e = eps_cfg;
    for q in 0..chart.lower.len() {
        let d = chart.gap(q);
        e = e.min(0.5 * (chart.lower[q] - slo) / d);
        if has_upper {
            e = e.min(0.5 * (shi - chart.upper[q]) / d);
        }
    }
    e
}

fn binom(m: usize, i: usize) -> f64 {
    (0..i).fold(1.0, |acc, k| acc * (m - k) as f64 / (k + 1) as f64)
}

/// Runs the triangular recursion for the normal data of `omega_n` at `S_n` (and `S_(n-1)` when
/// `has_upper`), cancelling `d_eta^M psi` for `M <= k_corr`.
pub fn correction_data(
    op: &BandOperator,
    chart: &EtaChart,
    residual: &EnvelopeField,
    has_upper: bool,
    cfg: &CorrectionConfig,
) -> Result<CorrectionData> {
    cfg.validate()?;
    let n = op.n;
    let k = cfg.k_corr;
    let r = op.rank();
    let sl = op.grid.slice_len();
    let n2 = (n as f64).powi(2);
    let de = cfg.probe_step / n2;
    let offsets: Vec<f64> = (0..2 * k + 3).map(|i| (i as f64 - (k + 1) as f64) * de).collect();
    let fw = fornberg(0.0, &offsets, k);
    let epsilon = effective_epsilon(n, chart, has_upper, cfg.epsilon);
    let mut surfaces = Vec::new();
    for j in 0..if has_upper { 2 } else { 1 } {
        let eta0 = j as f64 / n2;
        // per node: coefficient eta-derivatives and residual eta-derivatives
        type Table = (Vec<ProbedCoeffs>, Vec<Cdd>);
        let tables: Result<Vec<Table>> = (0..sl)
            .into_par_iter()
            .map(|q| {
                let probes: Result<Vec<ProbedCoeffs>> = offsets
                    .iter()
                    .map(|t| probe_operator_coeffs(op, chart, chart.sigma_at(eta0 + t, q), q))
                    .collect();
                let probes = probes?;
                let mut ders = Vec::with_capacity(k + 1);
                for i in 0..=k {
                    let w = &fw[i];
                    let mut a = DMatrix::zeros(r, r);
                    let mut b = vec![ZERO; r];
                    let mut c = ZERO;
                    for (p, wp) in probes.iter().zip(w) {
                        a += &p.a * *wp;
                        for (bb, pb) in b.iter_mut().zip(&p.b) {
                            *bb += pb.scale(*wp);
                        }
                        c += p.c.scale(*wp);
                    }
                    ders.push(ProbedCoeffs { a, b, c, direct_aee: probes[k + 1].direct_aee });
                }
                let sigma0 = chart.sigma_at(eta0, q);
                let scale = n2 * chart.gap(q);
                let rj = sigma_jet(residual, q, sigma0, k);
                let reta = rj.iter().enumerate().map(|(m, v)| v.scale(scale.powi(m as i32))).collect();
                Ok((ders, reta))
            })
            .collect();
        let tables = tables?;
        let min_aee = tables.iter().map(|t| t.0[0].a[(0, 0)].abs()).fold(f64::INFINITY, f64::min);
        if min_aee < 1e-8 {
            return Err(Error::CoefficientFloorViolated { n, value: min_aee, floor: 1e-8 });
        }
        let mut h: Vec<Vec<Cdd>> = vec![vec![ZERO; sl]; k + 3];
        for m in 0..=k {
            let (hd1, hd2) = slice_jets(op, &h);
            let next: Vec<Cdd> = (0..sl)
                .into_par_iter()
                .map(|q| {
                    let (ders, reta) = &tables[q];
                    let mut rhs = -reta[m];
                    for i in 0..=m {
                        let co = &ders[i];
                        let bc = binom(m, i);
                        let mut t = ZERO;
                        if i > 0 {
                            t += h[m - i + 2][q] * Cdd::real(co.a[(0, 0)]);
                        }
                        t += h[m - i + 1][q] * co.b[0];
                        t += h[m - i][q] * co.c;
                        for a in 1..r {
                            t += hd1[m - i + 1][q][a].scale(2.0 * co.a[(0, a)]);
                            t += hd1[m - i][q][a] * co.b[a];
                            for b in 1..r {
                                t += hd2[m - i][q][(a, b)].scale(co.a[(a, b)]);
                            }
                        }
                        rhs -= t.scale(bc);
                    }
                    let aee = ders[0].a[(0, 0)];
                    Cdd::new(rhs.re / aee, rhs.im / aee)
                })
                .collect();
            h[m + 2] = next;
        }
        surfaces.push(SurfaceData { j, eta0, h, min_aee });
    }
    Ok(CorrectionData { n, k_corr: k, epsilon, surfaces })
}

/// ytilde first derivatives `[M][q][axis]` and second derivatives `[M][q](a, b)` of h fields.
#[allow(clippy::type_complexity)]
fn slice_jets(op: &BandOperator, h: &[Vec<Cdd>]) -> (Vec<Vec<Vec<Cdd>>>, Vec<Vec<DMatrix<Cdd>>>) {
    let r = op.rank();
    let mut d1 = Vec::with_capacity(h.len());
    let mut d2 = Vec::with_capacity(h.len());
    for f in h {
        let zero = f.iter().all(|v| v.is_zero() && v.re.lo() == 0.0 && v.im.lo() == 0.0);
        let (a, b): (Vec<Vec<Cdd>>, Vec<DMatrix<Cdd>>) = (0..f.len())
            .into_par_iter()
            .map(|q| {
                let mut g = vec![ZERO; r];
                let mut hh = DMatrix::from_element(r, r, ZERO);
                if !zero {
                    for a in 1..r {
                        g[a] = op.d1(f, q, a);
                        hh[(a, a)] = op.d2(f, q, a);
                        for b in a + 1..r {
                            let v = op.dmix(f, q, a, b);
                            hh[(a, b)] = v;
                            hh[(b, a)] = v;
                        }
                    }
                }
                (g, hh)
            })
            .unzip();
        d1.push(a);
        d2.push(b);
    }
    (d1, d2)
}

/// `zeta(x) = step((eps - |x|) / (eps/2))` with its first two derivatives.
pub fn zeta_jet(x: f64, eps: f64) -> [f64; 3] {
    let d = zeta_derivs(x, eps, 2);
    [d[0], d[1], d[2]]
}

/// Derivatives `0..=m` of `zeta` at x.
pub fn zeta_derivs(x: f64, eps: f64, m: usize) -> Vec<f64> {
    let sgn = if x < 0.0 { -1.0 } else { 1.0 };
    let mut c = vec![0.0; m + 1];
    c[0] = (eps - x.abs()) / (0.5 * eps);
    if m > 0 {
        c[1] = -sgn / (0.5 * eps);
    }
    smooth_step(&Series::from_coeffs(c)).derivatives()
}

/// Correction built from the normal data, with its derivatives on the slice grid.
#[derive(Clone, Debug)]
pub struct Omega {
    pub n: u32,
    pub epsilon: f64,
    pub data: CorrectionData,
    hd1: Vec<Vec<Vec<Vec<Cdd>>>>,
    hd2: Vec<Vec<Vec<DMatrix<Cdd>>>>,
}

/// `(eta, ytilde)` partials of omega at `(sigma, q)`: value, `d_eta`, `d_eta^2`, `d_k`,
/// `d_eta d_k`, `d_k d_l`.
#[derive(Clone, Debug)]
pub struct OmegaJet {
    pub v: Cdd,
    pub e: Cdd,
    pub ee: Cdd,
    pub k: Vec<Cdd>,
    pub ek: Vec<Cdd>,
    pub kl: DMatrix<Cdd>,
}

pub fn build_omega(op: &BandOperator, data: CorrectionData) -> Result<Omega> {
    if data.epsilon >= 0.5 {
        return Err(Error::LobeOverlap { epsilon: data.epsilon });
    }
    let mut hd1 = Vec::new();
    let mut hd2 = Vec::new();
    for s in &data.surfaces {
        let (a, b) = slice_jets(op, &s.h);
        hd1.push(a);
        hd2.push(b);
    }
    Ok(Omega { n: data.n, epsilon: data.epsilon, data, hd1, hd2 })
}

impl Omega {
    pub fn jet(&self, chart: &EtaChart, sigma: f64, q: usize, r: usize) -> OmegaJet {
        let n2 = (self.n as f64).powi(2);
        let eta = chart.eta(sigma, q);
        let mut out = OmegaJet {
            v: ZERO,
            e: ZERO,
            ee: ZERO,
            k: vec![ZERO; r],
            ek: vec![ZERO; r],
            kl: DMatrix::from_element(r, r, ZERO),
        };
        for (si, s) in self.data.surfaces.iter().enumerate() {
            let x = n2 * eta - s.j as f64;
            if x.abs() >= self.epsilon {
                continue;
            }
            let z = zeta_jet(x, self.epsilon);
            let t = eta - s.eta0;
            for (m, hm) in s.h.iter().enumerate().skip(2) {
                let fact: f64 = (1..=m).map(|i| i as f64).product();
                let p0 = t.powi(m as i32) / fact;
                let p1 = t.powi(m as i32 - 1) / (fact / m as f64);
                let p2 = if m >= 2 { t.powi(m as i32 - 2) / (fact / (m * (m - 1)) as f64) } else { 0.0 };
                let w0 = z[0] * p0;
                let w1 = z[1] * n2 * p0 + z[0] * p1;
                let w2 = z[2] * n2 * n2 * p0 + 2.0 * z[1] * n2 * p1 + z[0] * p2;
                let hq = hm[q];
                out.v += hq.scale(w0);
                out.e += hq.scale(w1);
                out.ee += hq.scale(w2);
                for a in 1..r {
                    let g = self.hd1[si][m][q][a];
                    out.k[a] += g.scale(w0);
                    out.ek[a] += g.scale(w1);
                    for b in 1..r {
                        out.kl[(a, b)] += self.hd2[si][m][q][(a, b)].scale(w0);
                    }
                }
            }
        }
        out
    }

    /// `d_eta^k omega` for `k = 0..=m` at fixed ytilde.
    pub fn eta_derivs(&self, chart: &EtaChart, sigma: f64, q: usize, m: usize) -> Vec<Cdd> {
        let n2 = (self.n as f64).powi(2);
        let eta = chart.eta(sigma, q);
        let mut out = vec![ZERO; m + 1];
        for s in &self.data.surfaces {
            let x = n2 * eta - s.j as f64;
            if x.abs() >= self.epsilon {
                continue;
            }
            let z = zeta_derivs(x, self.epsilon, m);
            let t = eta - s.eta0;
            for (mm, hm) in s.h.iter().enumerate().skip(2) {
                // k-th derivative of t^mm / mm!
                let p = |k: usize| -> f64 {
                    if k > mm {
                        0.0
                    } else {
                        let fact: f64 = (1..=mm - k).map(|i| i as f64).product();
                        t.powi((mm - k) as i32) / fact
                    }
                };
                for (k, o) in out.iter_mut().enumerate() {
                    let mut w = 0.0;
                    for i in 0..=k {
                        w += binom(k, i) * z[i] * n2.powi(i as i32) * p(k - i);
                    }
                    *o += hm[q].scale(w);
                }
            }
        }
        out
    }

    /// 2-jet of omega in `(sigma, ybar, s)` by the chain rule through eta.
    pub fn chart_jet(&self, chart: &EtaChart, sigma: f64, q: usize, r: usize) -> DdJet {
        let w = self.jet(chart, sigma, q, r);
        let e = chart.jet(sigma, q);
        let mut d = vec![ZERO; r];
        let mut h = DMatrix::from_element(r, r, ZERO);
        for a in 0..r {
            d[a] = w.e.scale(e.grad[a]) + if a > 0 { w.k[a] } else { ZERO };
        }
        for a in 0..r {
            for b in a..r {
                let mut v = w.ee.scale(e.grad[a] * e.grad[b]) + w.e.scale(e.hess[(a, b)]);
                if a > 0 {
                    v += w.ek[a].scale(e.grad[b]);
                }
                if b > 0 {
                    v += w.ek[b].scale(e.grad[a]);
                }
                if a > 0 && b > 0 {
                    v += w.kl[(a, b)];
                }
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        DdJet { v: w.v, d, h }
    }

    /// `(i lambda T1 + T2) omega` at `(sigma, q)` through the probed coefficients.
    pub fn l_omega(&self, op: &BandOperator, chart: &EtaChart, sigma: f64, q: usize) -> Result<Cdd> {
        let r = op.rank();
        let w = self.jet(chart, sigma, q, r);
        if w.v.is_zero() && w.e.is_zero() && w.ee.is_zero() && w.k.iter().all(|v| v.is_zero()) {
            return Ok(ZERO);
        }
        let p = probe_operator_coeffs(op, chart, sigma, q)?;
        let mut acc = w.ee.scale(p.a[(0, 0)]) + w.e * p.b[0] + w.v * p.c;
        for a in 1..r {
            acc += w.ek[a].scale(2.0 * p.a[(0, a)]) + w.k[a] * p.b[a];
            for b in 1..r {
                acc += w.kl[(a, b)].scale(p.a[(a, b)]);
            }
        }
        Ok(acc)
    }

    /// `psi = residual + L omega` at `(sigma, q)`.
    pub fn psi(&self, op: &BandOperator, chart: &EtaChart, residual: &EnvelopeField, sigma: f64, q: usize) -> Result<Cdd> {
        Ok(sigma_jet(residual, q, sigma, 0)[0] + self.l_omega(op, chart, sigma, q)?)
    }

    /// omega sampled on the band grid.
    pub fn field(&self, op: &BandOperator, chart: &EtaChart) -> EnvelopeField {
        let g = &op.grid;
        let sl = g.slice_len();
        let r = op.rank();
        let values = (0..g.size())
            .into_par_iter()
            .map(|k| {
                let i = k / sl;
                self.jet(chart, g.sigma(i), k % sl, r).v
            })
            .collect();
        EnvelopeField { grid: g.clone(), values, tag: "omega".into() }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanishingFit {
    pub n: u32,
    pub j: usize,
    pub side: i8,
    pub q: usize,
    pub slope: f64,
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModifiedBandReport {
    pub n: u32,
    pub epsilon: f64,
    pub omega_sup: f64,
    pub omega_on_surfaces: f64,
    pub support_ok: bool,
    pub fits: Vec<VanishingFit>,
    pub min_slope: f64,
    /// `log sup |v~_n| / n^2` over the band grid
    pub log_sup_over_n2: f64,
}

/// Adds omega to the beam, recomputes the residual on the grid and fits the vanishing order of
/// psi at each surface over two decades of distance.
pub fn modified_band(
    op: &BandOperator,
    beam: &mut Beam,
    chart: &EtaChart,
    omega: &Omega,
    probe_nodes: &[usize],
) -> Result<ModifiedBandReport> {
    let n = op.n;
    let g = &op.grid;
    let sl = g.slice_len();
    let field = omega.field(op, chart);
    let omega_sup = field.sup();
    let (slo, shi) = support(n);
    let mut support_ok = true;
    for (k, v) in field.values.iter().enumerate() {
        let s = g.sigma(k / sl);
        if (s <= slo || s >= shi) && !v.is_zero() {
            support_ok = false;
        }
    }
    let r = op.rank();
    let mut on_surf = 0.0f64;
    for s in &omega.data.surfaces {
        for q in 0..sl {
            let sigma = chart.sigma_at(s.eta0, q);
            let j = omega.jet(chart, sigma, q, r);
            on_surf = on_surf.max(j.v.norm()).max(j.e.norm());
        }
    }
    let mut fits = Vec::new();
    for s in &omega.data.surfaces {
        for &q in probe_nodes {
            let gap = chart.gap(q);
            let d_max = 0.4 * omega.epsilon * gap;
            let d_min = d_max / 100.0;
            for side in [-1i8, 1] {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for i in 0..12 {
                    let d = d_min * (100f64).powf(i as f64 / 11.0);
                    let sigma = chart.sigma_at(s.eta0, q) + side as f64 * d;
                    let v = omega.psi(op, chart, &beam.residual, sigma, q)?.norm();
                    if v > 0.0 {
                        xs.push(d);
                        ys.push(v);
                    }
                }
                let slope = if xs.len() >= 3 { loglog_slope(&xs, &ys) } else { f64::INFINITY };
                fits.push(VanishingFit { n, j: s.j, side, q, slope, d_min, d_max });
            }
        }
    }
    let min_slope = fits.iter().map(|f| f.slope).fold(f64::INFINITY, f64::min);
    beam.envelope.axpy(Dd::from(1.0), &field);
    let psi: Result<Vec<Cdd>> = (0..g.size())
        .into_par_iter()
        .map(|k| {
            let lw = omega.l_omega(op, chart, g.sigma(k / sl), k % sl)?;
            Ok(beam.residual.values[k] + lw)
        })
        .collect();
    beam.residual.values = psi?;
    beam.omega = Some(field);
    let mut log_sup = f64::NEG_INFINITY;
    for (k, v) in beam.envelope.values.iter().enumerate() {
        let nv = v.norm();
        if nv > 0.0 {
            log_sup = log_sup.max(f_jet(n, g.sigma(k / sl))[0] + nv.ln());
        }
    }
    Ok(ModifiedBandReport {
        n,
        epsilon: omega.epsilon,
        omega_sup,
        omega_on_surfaces: on_surf,
        support_ok,
        fits,
        min_slope,
        log_sup_over_n2: log_sup / (n as f64).powi(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_roots() {
        assert!((closed_form_root(10) - 0.0921541672).abs() < 1e-9);
        assert!((closed_form_root(5) - (0.2 - 54.2 / 1608.5)).abs() < 1e-12);
        assert!(closed_form_root(5) < plateau_overlap(5).0);
    }

    #[test]
    fn bisection_then_newton() {
        let (x, v) = find_root(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1e-15);
        assert!((x - 2f64.sqrt()).abs() < 1e-15 && v.abs() < 1e-14);
    }

    #[test]
    fn zeta_lobes_disjoint() {
        let e = 0.25;
        assert_eq!(zeta_jet(0.1, e)[0], 1.0);
        assert_eq!(zeta_jet(0.3, e)[0], 0.0);
        // lobe around 0 ends at eps, lobe around 1 starts at 1 - eps
        assert!(e < 1.0 - e);
    }

    #[test]
    fn slope_fit() {
        let xs: Vec<f64> = (1..10).map(|i| i as f64 * 1e-3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 * x.powi(3)).collect();
        assert!((loglog_slope(&xs, &ys) - 3.0).abs() < 1e-12);
    }
}
