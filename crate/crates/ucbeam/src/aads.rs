//! Asymptotically AdS applications: conformal reduction of Klein-Gordon operators, the pure
//! AdS to planar map and its support lemma, and the null-convexity diagnostic on boundary data.

use crate::error::{Error, Result};
use crate::geometry::{box_g, metric_at, Metric, ScalarField, Stencil};
use crate::eikonal::sphere_point;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `rho^-2 gbar` for a metric `gbar` whose axis 0 is `rho`.
pub struct ConformalMetric {
    pub base: Arc<dyn Metric>,
}

impl Metric for ConformalMetric {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn name(&self) -> String {
        format!("rho^-2 {}", self.base.name())
    }
    fn components(&self, x: &[f64]) -> DMatrix<f64> {
        self.base.components(x) / (x[0] * x[0])
    }
    fn derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let g = self.base.components(x);
        let dg = self.base.derivatives(x).unwrap_or_else(|| crate::geometry::metric_derivatives_fd(self.base.as_ref(), x, self.base.fd_step()));
        let r2 = x[0] * x[0];
        Some(
            dg.into_iter()
                .enumerate()
                .map(|(k, d)| if k == 0 { d / r2 - &g * (2.0 / (r2 * x[0])) } else { d / r2 })
                .collect(),
        )
    }
}

/// Smooth test functions with analytic jets, bounded below by 1/2 on any domain.
#[derive(Clone, Copy, Debug)]
pub enum TestFunction {
    One,
    /// `1 + 0.25 sin(x_1 + rho / 2)`
    Wave,
    /// `1 + 0.2 rho^2 + 0.1 cos(x_1 - x_last)`
    Bowl,
}

impl ScalarField for TestFunction {
    fn value(&self, x: &[f64]) -> f64 {
        let l = x.len() - 1;
        match self {
            TestFunction::One => 1.0,
            TestFunction::Wave => 1.0 + 0.25 * (x[1] + 0.5 * x[0]).sin(),
            TestFunction::Bowl => 1.0 + 0.2 * x[0] * x[0] + 0.1 * (x[1] - x[l]).cos(),
        }
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = x.len();
        let l = n - 1;
        let mut g = vec![0.0; n];
        match self {
            TestFunction::One => {}
            TestFunction::Wave => {
                let c = 0.25 * (x[1] + 0.5 * x[0]).cos();
                g[0] = 0.5 * c;
                g[1] = c;
            }
            TestFunction::Bowl => {
                let s = -0.1 * (x[1] - x[l]).sin();
                g[0] = 0.4 * x[0];
                g[1] += s;
                g[l] -= s;
            }
        }
        Some(g)
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let l = n - 1;
        let mut h = DMatrix::zeros(n, n);
        match self {
            TestFunction::One => {}
            TestFunction::Wave => {
                let s = -0.25 * (x[1] + 0.5 * x[0]).sin();
                h[(0, 0)] = 0.25 * s;
                h[(0, 1)] = 0.5 * s;
                h[(1, 0)] = 0.5 * s;
                h[(1, 1)] = s;
            }
            TestFunction::Bowl => {
                let c = -0.1 * (x[1] - x[l]).cos();
                h[(0, 0)] = 0.4;
                h[(1, 1)] += c;
                h[(l, l)] += c;
                h[(1, l)] -= c;
                h[(l, 1)] -= c;
            }
        }
        Some(h)
    }
}

/// `rho^b w` with the product-rule jet.
struct RhoPower<'a> {
    b: f64,
    w: &'a dyn ScalarField,
}

impl ScalarField for RhoPower<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        x[0].powf(self.b) * self.w.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.w.gradient(x)?;
        let p = x[0].powf(self.b);
        let w = self.w.value(x);
        for v in g.iter_mut() {
            *v *= p;
        }
        g[0] += self.b * x[0].powf(self.b - 1.0) * w;
        Some(g)
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let b = self.b;
        let mut h = self.w.hessian(x)? * x[0].powf(b);
        let g = self.w.gradient(x)?;
        let p1 = b * x[0].powf(b - 1.0);
        let n = g.len();
        for k in 0..n {
            h[(0, k)] += p1 * g[k];
            h[(k, 0)] += p1 * g[k];
        }
        h[(0, 0)] += b * (b - 1.0) * x[0].powf(b - 2.0) * self.w.value(x);
        Some(h)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConformalOperator {
    pub mu: f64,
    pub d: usize,
    /// `mu - (d^2 - 1)/4`
    pub xi_singular: f64,
    pub points: Vec<Vec<f64>>,
    /// extracted `V` per point (average over the test functions)
    pub v: Vec<f64>,
    /// max disagreement of `V` across test functions
    pub spread: f64,
    /// `(b / rho) d_rho log sqrt|det g(rho)|` at the points
    pub v_closed_form: Vec<f64>,
    pub sup_v: f64,
}

/// Extracts `V` in `rho^(-2-b) (box_g + mu)(rho^b w) = box_gbar w + rho^-2 xi w + V w` with
/// `g = rho^-2 gbar` and `b = (d-1)/2`, on three test functions.
pub fn conjugate_operator(mu: f64, gbar: Arc<dyn Metric>, points: &[Vec<f64>]) -> Result<ConformalOperator> {
    let d = gbar.dim() - 1;
    let b = (d as f64 - 1.0) / 2.0;
    let xi = mu - (d * d) as f64 / 4.0 + 0.25;
    let g = ConformalMetric { base: gbar.clone() };
    let st = Stencil::uniform(d + 1, 1e-4);
    let tests = [TestFunction::One, TestFunction::Wave, TestFunction::Bowl];
    let rows: Result<Vec<(f64, f64, f64)>> = points
        .par_iter()
        .map(|x| {
            let rho = x[0];
            let mut vs = Vec::new();
            for w in &tests {
                let lifted = RhoPower { b, w };
                let pw = rho.powf(-2.0 - b) * (box_g(&g, &lifted, x, &st)? + mu * lifted.value(x));
                let bw = box_g(gbar.as_ref(), w, x, &st)?;
                let wv = w.value(x);
                vs.push((pw - bw - xi * wv / (rho * rho)) / wv);
            }
            let mean = vs.iter().sum::<f64>() / vs.len() as f64;
            let spread = vs.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            let md = metric_at(gbar.as_ref(), x)?;
            let closed = b / rho * md.dlog_sqrt_det()[0];
            Ok((mean, spread, closed))
        })
        .collect();
    let rows = rows?;
    let spread = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let scale = rows.iter().map(|r| r.0.abs()).fold(1.0, f64::max);
    if spread > 1e-7 * scale {
        return Err(Error::VExtractionInconsistent { spread });
    }
    Ok(ConformalOperator {
        mu,
        d,
        xi_singular: xi,
        points: points.to_vec(),
        v: rows.iter().map(|r| r.0).collect(),
        spread,
        v_closed_form: rows.iter().map(|r| r.2).collect(),
        sup_v: rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max),
    })
}

/// `sup |V|` over `rho in (floor, rho_max)` for each floor, from the extracted samples.
pub fn v_sup_by_floor(op: &ConformalOperator, floors: &[f64]) -> Vec<(f64, f64)> {
    floors
        .iter()
        .map(|&f| (f, op.points.iter().zip(&op.v).filter(|(p, _)| p[0] > f).map(|(_, v)| v.abs()).fold(0.0, f64::max)))
        .collect()
}

/// Point of pure AdS in `(tau, chi, theta_1..theta_(d-1))`, with `omega^d = cos theta_1`.
pub fn pure_to_planar(p: &[f64], eps: f64) -> Result<Vec<f64>> {
    let (tau, chi) = (p[0], p[1]);
    let om = sphere_point(&p[2..]);
    let d = om.len();
    if tau.abs() > std::f64::consts::FRAC_PI_2 - eps || om[d - 1] >= 0.0 {
        return Err(Error::OutsideRegion);
    }
    let den = tau.cos() - chi.cos() * om[d - 1];
    let mut out = vec![tau.sin() / den, chi.sin() / den];
    out.extend(om[..d - 1].iter().map(|w| chi.cos() * w / den));
    Ok(out)
}

/// `omega^d` of a planar point `(t, rho, xbar)`.
pub fn omega_d_from_planar(x: &[f64]) -> f64 {
    let (t, rho) = (x[0], x[1]);
    let xb2: f64 = x[2..].iter().map(|v| v * v).sum();
    let num = rho * rho - 1.0 + xb2 - t * t;
    let a = rho * rho + 1.0 + xb2 - t * t;
    num / (a * a + 4.0 * t * t - 4.0 * rho * rho).sqrt()
}

/// Pure AdS `sin^-2 chi (-d tau^2 + d chi^2 + cos^2 chi g_sphere)` at p.
pub fn pure_ads_metric(p: &[f64]) -> DMatrix<f64> {
    let d = p.len() - 1;
    let conf = crate::geometry::PureAdsConformal { d };
    conf.components(p) / p[1].sin().powi(2)
}

/// Planar AdS `rho^-2 (-dt^2 + d rho^2 + dxbar^2)` at `(t, rho, xbar)`.
pub fn planar_ads_metric(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut g = DMatrix::identity(n, n) / (x[1] * x[1]);
    g[(0, 0)] = -1.0 / (x[1] * x[1]);
    g
}

/// Max over samples of `max |pullback - g_AdS| / max |g_AdS|`, with a centered-difference
/// Jacobian of step `h`.
pub fn verify_embedding(samples: &[Vec<f64>], eps: f64, h: f64) -> Result<f64> {
    verify_map(samples, h, |p| pure_to_planar(p, eps))
}

/// Same check for an arbitrary candidate map.
pub fn verify_map(samples: &[Vec<f64>], h: f64, map: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync) -> Result<f64> {
    let devs: Result<Vec<f64>> = samples
        .par_iter()
        .map(|p| {
            let n = p.len();
            let x = map(p)?;
            let mut jac = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut a = p.clone();
                let mut b = p.clone();
                a[k] += h;
                b[k] -= h;
                let (xa, xb) = (map(&a)?, map(&b)?);
                for i in 0..n {
                    jac[(i, k)] = (xa[i] - xb[i]) / (2.0 * h);
                }
            }
            let pull = jac.transpose() * planar_ads_metric(&x) * &jac;
            let g = pure_ads_metric(p);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            Ok((pull - g).iter().map(|v| v.abs()).fold(0.0, f64::max) / scale)
        })
        .collect();
    Ok(devs?.into_iter().fold(0.0, f64::max))
}

/// Radical-inverse (Halton) point `i` in the unit cube with the first `dim` primes.
pub fn halton(i: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..dim)
        .map(|k| {
            let b = PRIMES[k];
            let (mut f, mut r, mut n) = (1.0, 0.0, i + 1);
            while n > 0 {
                f /= b as f64;
                r += f * (n % b) as f64;
                n /= b;
            }
            r
        })
        .collect()
}

/// `count` Halton samples in `|tau| <= 1`, `chi in (0.3, 1.2)`, `omega^d in (-1, -0.1)`, with the
/// polar angle kept 0.05 away from the pole; `d = 3`. `skip` offsets the sequence.
pub fn embedding_samples(count: usize, skip: usize) -> Vec<Vec<f64>> {
    let th_lo = (-0.1f64).acos();
    let th_hi = std::f64::consts::PI - 0.05;
    (0..count)
        .map(|i| {
            let u = halton(i + skip, 4);
            vec![
                -1.0 + 2.0 * u[0],
                0.3 + 0.9 * u[1],
                th_lo + (th_hi - th_lo) * u[2],
                0.05 + (2.0 * std::f64::consts::PI - 0.1) * u[3],
            ]
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportVerdict {
    pub eps: f64,
    pub delta: f64,
    pub rho0: f64,
    pub t_max: f64,
    pub max_omega_d: f64,
    pub argmax: Vec<f64>,
    /// `max ||xbar|^2 - t^2| / delta` over the samples
    pub c2: f64,
    pub pass: bool,
}

/// Maximises `omega^d` over `{|t| <= 1/sin eps, |xbar - t kbar| <= delta eps, 0 < rho <= rho0}`
/// (`d = 3`, `xbar` in the plane) by a dense scan and a compass search from the best samples.
pub fn support_in_half_space(eps: f64, delta: f64, rho0: f64, kbar: [f64; 2]) -> SupportVerdict {
    let t_max = 1.0 / eps.sin();
    let r_max = delta * eps;
    // tube coordinates (t, rho, r, angle) -> planar point
    let point = |c: &[f64; 4]| -> Vec<f64> {
        let t = c[0].clamp(-t_max, t_max);
        let rho = c[1].clamp(1e-12, rho0);
        let r = c[2].clamp(0.0, r_max);
        vec![t, rho, t * kbar[0] + r * c[3].cos(), t * kbar[1] + r * c[3].sin()]
    };
    let (nt, nr, nrad, na) = (201, 11, 6, 24);
    let mut cands: Vec<([f64; 4], f64)> = (0..nt)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut v = Vec::new();
            for j in 0..nr {
                for k in 0..nrad {
                    for a in 0..na {
                        let c = [
                            -t_max + 2.0 * t_max * i as f64 / (nt - 1) as f64,
                            rho0 * (j as f64 + 1.0) / nr as f64,
                            r_max * k as f64 / (nrad - 1) as f64,
                            2.0 * std::f64::consts::PI * a as f64 / na as f64,
                        ];
                        v.push((c, omega_d_from_planar(&point(&c))));
                    }
                }
            }
            v
        })
        .collect();
    let c2 = cands
        .iter()
        .map(|(c, _)| {
            let x = point(c);
            (x[2] * x[2] + x[3] * x[3] - x[0] * x[0]).abs() / delta
        })
        .fold(0.0, f64::max);
    cands.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut best = cands[0];
    for start in cands.iter().take(8) {
        let mut c = start.0;
        let mut v = start.1;
        let mut step = [2.0 * t_max / nt as f64, rho0 / nr as f64, r_max / nrad as f64, 0.3];
        for _ in 0..60 {
            let mut improved = false;
            for k in 0..4 {
                for s in [-1.0, 1.0] {
                    let mut y = c;
                    y[k] += s * step[k];
                    let x = point(&y);
                    let y = [x[0], x[1], c[2].max(0.0).min(r_max) + if k == 2 { s * step[2] } else { 0.0 }, y[3]];
                    let y = [y[0], y[1], y[2].clamp(0.0, r_max), y[3]];
                    let val = omega_d_from_planar(&point(&y));
                    if val > v {
                        v = val;
                        c = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in step.iter_mut() {
                    *s *= 0.5;
                }
            }
        }
        if v > best.1 {
            best = (c, v);
        }
    }
    SupportVerdict {
        eps,
        delta,
        rho0,
        t_max,
        max_omega_d: best.1,
        argmax: point(&best.0),
        c2,
        pass: best.1 < 0.0,
    }
}

/// Boundary data on a tensor grid over `(t, x_1, ..)`, row-major, last axis fastest.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    pub axes: Vec<(f64, f64, usize)>,
    pub g0: Vec<DMatrix<f64>>,
    pub g2: Vec<DMatrix<f64>>,
    pub eta: Vec<f64>,
}

impl BoundaryData {
    pub fn from_fn(
        axes: Vec<(f64, f64, usize)>,
        g0: impl Fn(&[f64]) -> DMatrix<f64>,
        g2: impl Fn(&[f64]) -> DMatrix<f64>,
        eta: impl Fn(&[f64]) -> f64,
    ) -> Self {
        let size: usize = axes.iter().map(|a| a.2).product();
        let mut d = BoundaryData { axes, g0: Vec::new(), g2: Vec::new(), eta: Vec::new() };
        for k in 0..size {
            let x = d.coords(k);
            d.g0.push(g0(&x));
            d.g2.push(g2(&x));
            d.eta.push(eta(&x));
        }
        d
    }

    fn strides(&self) -> Vec<usize> {
        let m = self.axes.len();
        let mut s = vec![1; m];
        for a in (0..m - 1).rev() {
            s[a] = s[a + 1] * self.axes[a + 1].2;
        }
        s
    }

    fn index(&self, k: usize) -> Vec<usize> {
        let s = self.strides();
        self.axes.iter().zip(&s).map(|(a, st)| (k / st) % a.2).collect()
    }

    fn step(&self, a: usize) -> f64 {
        let (lo, hi, n) = self.axes[a];
        (hi - lo) / (n - 1) as f64
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.index(k).iter().enumerate().map(|(a, i)| self.axes[a].0 + *i as f64 * self.step(a)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GnccReport {
    pub margin: f64,
    pub argmin: Vec<f64>,
    pub directions: usize,
    pub points: usize,
    /// range of eta on the boundary of the region, reported without assertion
    pub eta_boundary: (f64, f64),
    pub eta_interior_min: f64,
}

/// Null directions of a Lorentzian form: `e_0 + sum w_i e_i` over `count` unit `w`.
fn null_fan(g: &DMatrix<f64>, count: usize) -> Option<Vec<Vec<f64>>> {
    let m = g.nrows();
    let eig = g.clone().symmetric_eigen();
    let neg: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] < 0.0).collect();
    if neg.len() != 1 || eig.eigenvalues.iter().any(|e| e.abs() < 1e-14) {
        return None;
    }
    let t = neg[0];
    let sp: Vec<usize> = (0..m).filter(|&i| i != t).collect();
    let col = |i: usize| -> Vec<f64> {
        let s = eig.eigenvalues[i].abs().sqrt();
        (0..m).map(|r| eig.eigenvectors[(r, i)] / s).collect()
    };
    let e0 = col(t);
    let es: Vec<Vec<f64>> = sp.iter().map(|&i| col(i)).collect();
    let dirs: Vec<Vec<f64>> = match es.len() {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        n => (0..count)
            .map(|k| {
                // Fibonacci points on S^2, padded for higher spheres
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = k as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
                let mut v = vec![r * a.cos(), r * a.sin(), z];
                v.resize(n, 0.0);
                v
            })
            .collect(),
    };
    Some(
        dirs.into_iter()
            .map(|w| (0..m).map(|r| e0[r] + w.iter().zip(&es).map(|(wi, e)| wi * e[r]).sum::<f64>()).collect())
            .collect(),
    )
}

/// `min [(D^2 eta - eta g2)(Z, Z)] / |Z|^2` over interior grid points and null fans of `g0`,
/// with Christoffel symbols and derivatives of eta by centered differences.
pub fn gncc_check(data: &BoundaryData, fan: usize) -> Result<GnccReport> {
    let m = data.axes.len();
    let strides = data.strides();
    let size = data.eta.len();
    let interior: Vec<usize> = (0..size)
        .filter(|&k| data.index(k).iter().zip(&data.axes).all(|(i, a)| *i >= 1 && *i + 1 < a.2))
        .collect();
    let results: Result<Vec<(f64, usize)>> = interior
        .par_iter()
        .map(|&k| {
            let g = &data.g0[k];
            let ginv = g.clone().try_inverse().ok_or(Error::NotLorentzian { index: k })?;
            let mut grad = vec![0.0; m];
            let mut hess = DMatrix::zeros(m, m);
            let mut dg = Vec::with_capacity(m);
            for a in 0..m {
                let h = data.step(a);
                let (p, q) = (k + strides[a], k - strides[a]);
                grad[a] = (data.eta[p] - data.eta[q]) / (2.0 * h);
                hess[(a, a)] = (data.eta[p] - 2.0 * data.eta[k] + data.eta[q]) / (h * h);
                dg.push((&data.g0[p] - &data.g0[q]) / (2.0 * h));
                for b in 0..a {
                    let hb = data.step(b);
                    let v = (data.eta[k + strides[a] + strides[b]] - data.eta[k + strides[a] - strides[b]]
                        - data.eta[k - strides[a] + strides[b]]
                        + data.eta[k - strides[a] - strides[b]])
                        / (4.0 * h * hb);
                    hess[(a, b)] = v;
                    hess[(b, a)] = v;
                }
            }
            // covariant Hessian D_a D_b eta = d_ab eta - Gamma^c_ab d_c eta
            let mut form = hess.clone();
            for a in 0..m {
                for b in 0..m {
                    let mut acc = 0.0;
                    for c in 0..m {
                        let mut gam = 0.0;
                        for e in 0..m {
                            gam += ginv[(c, e)] * (dg[a][(e, b)] + dg[b][(e, a)] - dg[e][(a, b)]);
                        }
                        acc += 0.5 * gam * grad[c];
                    }
                    form[(a, b)] -= acc + data.eta[k] * data.g2[k][(a, b)];
                }
            }
            let dirs = null_fan(g, fan).ok_or(Error::NotLorentzian { index: k })?;
            let mut worst = f64::INFINITY;
            for z in &dirs {
                let mut q = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        q += form[(a, b)] * z[a] * z[b];
                    }
                }
                worst = worst.min(q / z.iter().map(|v| v * v).sum::<f64>());
            }
            Ok((worst, dirs.len()))
        })
        .collect();
    let results = results?;
    let (mut margin, mut arg, mut dirs) = (f64::INFINITY, 0, 0);
    for (i, (v, n)) in results.iter().enumerate() {
        dirs = *n;
        if *v < margin {
            margin = *v;
            arg = interior[i];
        }
    }
    let on_edge = |k: usize| data.index(k).iter().zip(&data.axes).any(|(i, a)| *i == 0 || *i + 1 == a.2);
    let edge: Vec<f64> = (0..size).filter(|&k| on_edge(k)).map(|k| data.eta[k]).collect();
    Ok(GnccReport {
        margin,
        argmin: data.coords(arg),
        directions: dirs,
        points: interior.len(),
        eta_boundary: (edge.iter().copied().fold(f64::INFINITY, f64::min), edge.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        eta_interior_min: interior.iter().map(|&k| data.eta[k]).fold(f64::INFINITY, f64::min),
    })
}

/// Minkowski boundary data on `[-1, 1]^2` with `g2 = 0` and the given eta.
pub fn flat_boundary(points: usize, eta: impl Fn(&[f64]) -> f64) -> BoundaryData {
    let mink = |_: &[f64]| {
        let mut g = DMatrix::identity(2, 2);
        g[(0, 0)] = -1.0;
        g
    };
    BoundaryData::from_fn(vec![(-1.0, 1.0, points), (-1.0, 1.0, points)], mink, |_| DMatrix::zeros(2, 2), eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FgGeneric;

    #[test]
    fn planar_map_closed_values() {
        let p = pure_to_planar(&[0.0, std::f64::consts::FRAC_PI_2, 3.0, 0.4], 0.1).unwrap();
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15 && p[2].abs() < 1e-15);
        let p = pure_to_planar(&[0.0, std::f64::consts::FRAC_PI_3, std::f64::consts::PI, 0.0], 0.1).unwrap();
        assert!((p[1] - 3f64.sqrt() / 3.0).abs() < 1e-15);
        assert!((omega_d_from_planar(&[0.0, 3f64.sqrt() / 3.0, 0.0, 0.0]) + 1.0).abs() < 1e-15);
        assert_eq!(pure_to_planar(&[0.0, 1.0, 0.5, 0.0], 0.1).unwrap_err().name(), "OutsideRegion");
    }

    #[test]
    fn flat_bulk_has_no_remainder() {
        let flat = FgGeneric { tables: vec![vec![vec![-1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]] };
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![0.2 + 0.15 * i as f64, 0.1, -0.3, 0.2]).collect();
        let op = conjugate_operator(0.5, Arc::new(flat), &pts).unwrap();
        assert_eq!(op.d, 3);
        assert!((op.xi_singular - (0.5 - 2.0)).abs() < 1e-15);
        assert!(op.sup_v < 1e-9, "sup V = {}", op.sup_v);
    }

    #[test]
    fn linear_eta_is_gncc_borderline() {
        let d = flat_boundary(17, |x| 1.0 + 0.3 * x[0] - 0.2 * x[1]);
        let r = gncc_check(&d, 64).unwrap();
        assert!(r.margin.abs() < 1e-9);
        assert_eq!(r.directions, 2);
    }
}
