//! Charts, Lorentzian metrics and the differential operators built on them.
//!
//! Coordinates are ordered `(sigma, ybar_1..ybar_{d-1}, s)` in adapted charts, and
//! analogously `(rho, xbar, t)` or `(tau, chi, theta_1..)` for the built-in ambient charts.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub sigma: f64,
    pub ybar: Vec<f64>,
    pub s: f64,
}

impl ChartPoint {
    pub fn new(sigma: f64, ybar: Vec<f64>, s: f64) -> Self {
        ChartPoint { sigma, ybar, s }
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.ybar.len() + 2);
        x.push(self.sigma);
        x.extend_from_slice(&self.ybar);
        x.push(self.s);
        x
    }

    pub fn from_coords(x: &[f64]) -> Self {
        let m = x.len();
        ChartPoint { sigma: x[0], ybar: x[1..m - 1].to_vec(), s: x[m - 1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub sigma0: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub ybar_box: Vec<(f64, f64)>,
    pub d: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec { sigma0: 0.5, s_minus: -1.0, s_plus: 1.0, ybar_box: vec![(-1.0, 1.0)], d: 2 }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("d = {} must be >= 2", self.d)));
        }
        if !(self.s_minus < 0.0 && 0.0 < self.s_plus) || !self.s_minus.is_finite() || !self.s_plus.is_finite() {
            return Err(Error::Config(format!("need s- < 0 < s+, got ({}, {})", self.s_minus, self.s_plus)));
        }
        if self.ybar_box.len() != self.d - 1 || self.ybar_box.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Config("ybar box must have d-1 nonempty intervals".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::Config("sigma0 must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        p.sigma > 0.0
            && p.sigma < self.sigma0
            && p.s > self.s_minus
            && p.s < self.s_plus
            && p.ybar.iter().zip(&self.ybar_box).all(|(y, (a, b))| y >= a && y <= b)
    }
}

/// Metric components and first derivatives at one point.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub sqrt_abs_det: f64,
    /// `dg[k]` is the coordinate derivative of `g` along axis k.
    pub dg: Vec<DMatrix<f64>>,
}

impl MetricData {
    /// Coordinate derivatives of the inverse metric, `-g^-1 (d_k g) g^-1`.
    pub fn dginv(&self) -> Vec<DMatrix<f64>> {
        self.dg.iter().map(|d| -(&self.ginv * d * &self.ginv)).collect()
    }

    /// `d_k log sqrt|det g| = tr(g^-1 d_k g) / 2`.
    pub fn dlog_sqrt_det(&self) -> Vec<f64> {
        self.dg.iter().map(|d| 0.5 * (&self.ginv * d).trace()).collect()
    }

    pub fn contract(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.ginv[(i, j)] * a[i] * b[j];
            }
        }
        acc
    }

    pub fn raise(&self, a: &[f64]) -> Vec<f64> {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| self.ginv[(i, j)] * a[j]).sum()).collect()
    }
}

pub trait Metric: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> String;
    fn components(&self, x: &[f64]) -> DMatrix<f64>;
    /// Analytic first derivatives when available.
    fn derivatives(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    /// Analytic inverse when available.
    fn inverse(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    /// Step for finite-difference metric derivatives.
    fn fd_step(&self) -> f64 {
        1e-4
    }
}

/// Centered 4th-order finite-difference derivatives of the metric.
pub fn metric_derivatives_fd(m: &dyn Metric, x: &[f64], h: f64) -> Vec<DMatrix<f64>> {
    let n = m.dim();
    (0..n)
        .map(|k| {
            let at = |off: f64| {
                let mut y = x.to_vec();
                y[k] += off * h;
                m.components(&y)
            };
            (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h)
        })
        .collect()
}

pub fn metric_at(m: &dyn Metric, x: &[f64]) -> Result<MetricData> {
    let g = m.components(x);
    let det = g.clone().lu().determinant();
    if !det.is_finite() || det.abs() < 1e-14 {
        return Err(Error::SingularMetric { det: det.abs(), at: x.to_vec() });
    }
    let eig = g.clone().symmetric_eigen();
    let negative = eig.eigenvalues.iter().filter(|&&e| e < 0.0).count();
    if negative != 1 {
        return Err(Error::SignatureError { negative, at: x.to_vec() });
    }
    let ginv = match m.inverse(x) {
        Some(gi) => gi,
        None => g.clone().try_inverse().ok_or(Error::SingularMetric { det: det.abs(), at: x.to_vec() })?,
    };
    let dg = match m.derivatives(x) {
        Some(d) => d,
        None => metric_derivatives_fd(m, x, m.fd_step()),
    };
    Ok(MetricData { g, ginv, sqrt_abs_det: det.abs().sqrt(), dg })
}

/// A real scalar field with optional analytic derivatives.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Closure-backed scalar field without analytic derivatives.
pub struct FnField<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

pub type SharedField = Arc<dyn ScalarField>;

/// Finite-difference stencil configuration. `bounds`, when given, is the coordinate
/// box every stencil node must stay inside.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub step: Vec<f64>,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Stencil {
    pub fn uniform(n: usize, h: f64) -> Self {
        Stencil { step: vec![h; n], bounds: None }
    }

    fn check(&self, x: &[f64], reach: f64) -> Result<()> {
        if let Some(b) = &self.bounds {
            for (k, (lo, hi)) in b.iter().enumerate() {
                let r = reach * self.step[k];
                if x[k] - r < *lo || x[k] + r > *hi {
                    return Err(Error::StencilOutOfDomain { at: x.to_vec() });
                }
            }
        }
        Ok(())
    }
}

pub fn gradient_fd(f: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<Vec<f64>> {
    st.check(x, 2.0)?;
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            let h = st.step[k];
            let at = |off: f64| {
                let mut y = x.to_vec();
                y[k] += off * h;
                f.value(&y)
            };
            (at(-2.0) - at(2.0) + 8.0 * (at(1.0) - at(-1.0))) / (12.0 * h)
        })
        .collect())
}

pub fn hessian_fd(f: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<DMatrix<f64>> {
    st.check(x, 2.0)?;
    let n = x.len();
    let at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, o) in d {
            y[k] += o * st.step[k];
        }
        f.value(&y)
    };
    let w1 = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    let mut hmat = DMatrix::zeros(n, n);
    for i in 0..n {
        let h = st.step[i];
        let f0 = at(&[]);
        let v = (-at(&[(i, 2.0)]) - at(&[(i, -2.0)]) + 16.0 * (at(&[(i, 1.0)]) + at(&[(i, -1.0)])) - 30.0 * f0)
            / (12.0 * h * h);
        hmat[(i, i)] = v;
        for j in 0..i {
            let mut acc = 0.0;
            for (oi, wi) in w1 {
                for (oj, wj) in w1 {
                    acc += wi * wj * at(&[(i, oi), (j, oj)]);
                }
            }
            let v = acc / (st.step[i] * st.step[j]);
            hmat[(i, j)] = v;
            hmat[(j, i)] = v;
        }
    }
    Ok(hmat)
}

fn field_derivatives(f: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let gr = match f.gradient(x) {
        Some(g) => g,
        None => gradient_fd(f, x, st)?,
    };
    let he = match f.hessian(x) {
        Some(h) => h,
        None => hessian_fd(f, x, st)?,
    };
    Ok((gr, he))
}

/// Wave operator from gradient and Hessian of the field:
/// `g^ab H_ab + (d_a g^ab + g^ab d_a log sqrt|g|) d_b h`.
pub fn box_from_jet(md: &MetricData, grad: &[f64], hess: &DMatrix<f64>) -> f64 {
    let n = grad.len();
    let dgi = md.dginv();
    let dl = md.dlog_sqrt_det();
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            acc += md.ginv[(a, b)] * hess[(a, b)];
            acc += (dgi[a][(a, b)] + md.ginv[(a, b)] * dl[a]) * grad[b];
        }
    }
    acc
}

pub fn box_g(m: &dyn Metric, h: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<f64> {
    let md = metric_at(m, x)?;
    let (gr, he) = field_derivatives(h, x, st)?;
    Ok(box_from_jet(&md, &gr, &he))
}

pub fn grad_g(m: &dyn Metric, h: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<Vec<f64>> {
    let md = metric_at(m, x)?;
    let gr = match h.gradient(x) {
        Some(g) => g,
        None => gradient_fd(h, x, st)?,
    };
    Ok(md.raise(&gr))
}

/// `gamma[a][b][c]` = Gamma^a_{bc}.
pub fn christoffels(m: &dyn Metric, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    let md = metric_at(m, x)?;
    Ok(christoffels_from(&md))
}

pub fn christoffels_from(md: &MetricData) -> Vec<Vec<Vec<f64>>> {
    let n = md.g.nrows();
    let mut gam = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for e in 0..n {
                    acc += md.ginv[(a, e)] * (md.dg[b][(e, c)] + md.dg[c][(e, b)] - md.dg[e][(b, c)]);
                }
                gam[a][b][c] = 0.5 * acc;
            }
        }
    }
    gam
}

/// Flat metric in adapted coordinates `(sigma, ybar, s)` with direction `kbar`:
/// `d sigma^2 + |d ybar + kbar ds|^2 - ds^2`.
#[derive(Clone, Debug)]
pub struct PlanarConformal {
    pub kbar: Vec<f64>,
}

impl Metric for PlanarConformal {
    fn dim(&self) -> usize {
        self.kbar.len() + 2
    }
    fn name(&self) -> String {
        "planar-conformal".into()
    }
    fn components(&self, _x: &[f64]) -> DMatrix<f64> {
        let m = self.kbar.len();
        let n = m + 2;
        let mut g = DMatrix::zeros(n, n);
        g[(0, 0)] = 1.0;
        for i in 0..m {
            g[(1 + i, 1 + i)] = 1.0;
            g[(1 + i, n - 1)] = self.kbar[i];
            g[(n - 1, 1 + i)] = self.kbar[i];
        }
        g[(n - 1, n - 1)] = self.kbar.iter().map(|k| k * k).sum::<f64>() - 1.0;
        g
    }
    fn derivatives(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.dim();
        Some(vec![DMatrix::zeros(n, n); n])
    }
    fn inverse(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(planar_inverse(&self.kbar, &vec![0.0; self.kbar.len()]))
    }
}

/// Inverse of `(d sigma + grad psi . d ybar)^2 + |d ybar + kbar ds|^2 - ds^2`, written in the
/// dual frame so structural zeros stay exact.
pub fn planar_inverse(kbar: &[f64], grad_psi: &[f64]) -> DMatrix<f64> {
    let m = kbar.len();
    let n = m + 2;
    let mut gi = DMatrix::zeros(n, n);
    // g^-1 = e_u e_u + sum E_i E_i - S S with E_i = d_yi - psi_i d_u, S = d_s - k.d_y + (k.grad psi) d_u
    let kp: f64 = kbar.iter().zip(grad_psi).map(|(a, b)| a * b).sum();
    let mut vecs: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    vecs.push((e0, 1.0));
    for i in 0..m {
        let mut e = vec![0.0; n];
        e[1 + i] = 1.0;
        e[0] = -grad_psi[i];
        vecs.push((e, 1.0));
    }
    let mut sv = vec![0.0; n];
    sv[n - 1] = 1.0;
    for i in 0..m {
        sv[1 + i] = -kbar[i];
    }
    sv[0] = kp;
    vecs.push((sv, -1.0));
    for (v, w) in &vecs {
        for a in 0..n {
            if v[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                if v[b] != 0.0 {
                    gi[(a, b)] += w * v[a] * v[b];
                }
            }
        }
    }
    gi
}

/// Flat boundary-adapted metric `d rho^2 + d xbar^2 - dt^2` in `(rho, xbar, t)`.
#[derive(Clone, Debug)]
pub struct PlanarAmbient {
    pub d: usize,
}

impl Metric for PlanarAmbient {
    fn dim(&self) -> usize {
        self.d + 1
    }
    fn name(&self) -> String {
        "planar-ambient".into()
    }
    fn components(&self, _x: &[f64]) -> DMatrix<f64> {
        let n = self.d + 1;
        let mut g = DMatrix::identity(n, n);
        g[(n - 1, n - 1)] = -1.0;
        g
    }
    fn derivatives(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.dim();
        Some(vec![DMatrix::zeros(n, n); n])
    }
}

/// Conformally rescaled pure AdS, `-d tau^2 + d chi^2 + cos^2 chi * round sphere`, in
/// `(tau, chi, theta_1..theta_{d-1})` with `omega^d = cos theta_1`.
#[derive(Clone, Debug)]
pub struct PureAdsConformal {
    pub d: usize,
}

impl PureAdsConformal {
    /// Round-sphere coefficients `prod_{i<k} sin^2 theta_i` and their angle derivatives.
    fn sphere(&self, th: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = th.len();
        let mut c = vec![1.0; m];
        let mut dc = vec![vec![0.0; m]; m];
        for k in 0..m {
            for i in 0..k {
                c[k] *= th[i].sin().powi(2);
            }
            for j in 0..k {
                let mut v = 2.0 * th[j].sin() * th[j].cos();
                for i in 0..k {
                    if i != j {
                        v *= th[i].sin().powi(2);
                    }
                }
                dc[j][k] = v;
            }
        }
        (c, dc)
    }
}

impl Metric for PureAdsConformal {
    fn dim(&self) -> usize {
        self.d + 1
    }
    fn name(&self) -> String {
        "pure-ads-conformal".into()
    }
    fn components(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.d + 1;
        let (c, _) = self.sphere(&x[2..]);
        let mut g = DMatrix::zeros(n, n);
        g[(0, 0)] = -1.0;
        g[(1, 1)] = 1.0;
        let c2 = x[1].cos().powi(2);
        for k in 0..c.len() {
            g[(2 + k, 2 + k)] = c2 * c[k];
        }
        g
    }
    fn derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.d + 1;
        let (c, dc) = self.sphere(&x[2..]);
        let c2 = x[1].cos().powi(2);
        let dc2 = -2.0 * x[1].cos() * x[1].sin();
        let mut out = vec![DMatrix::zeros(n, n); n];
        for k in 0..c.len() {
            out[1][(2 + k, 2 + k)] = dc2 * c[k];
            for j in 0..c.len() {
                out[2 + j][(2 + k, 2 + k)] = c2 * dc[j][k];
            }
        }
        Some(out)
    }
}

/// Fefferman-Graham form `d rho^2 + sum_k rho^k g^(k)` with constant coefficient
/// tables on the boundary coordinates; coordinates `(rho, b_0..b_{d-1})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FgGeneric {
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl FgGeneric {
    pub fn boundary_dim(&self) -> usize {
        self.tables[0].len()
    }

    /// The boundary family `g(rho)` and its rho-derivative.
    pub fn family(&self, rho: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.boundary_dim();
        let mut g = DMatrix::zeros(d, d);
        let mut dg = DMatrix::zeros(d, d);
        for (k, t) in self.tables.iter().enumerate() {
            let m = DMatrix::from_fn(d, d, |i, j| t[i][j]);
            g += &m * rho.powi(k as i32);
            if k > 0 {
                dg += &m * (k as f64 * rho.powi(k as i32 - 1));
            }
        }
        (g, dg)
    }
}

impl Metric for FgGeneric {
    fn dim(&self) -> usize {
        self.boundary_dim() + 1
    }
    fn name(&self) -> String {
        "fg-generic".into()
    }
    fn components(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.boundary_dim();
        let (gb, _) = self.family(x[0]);
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g[(0, 0)] = 1.0;
        g.view_mut((1, 1), (d, d)).copy_from(&gb);
        g
    }
    fn derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let d = self.boundary_dim();
        let (_, dgb) = self.family(x[0]);
        let mut out = vec![DMatrix::zeros(d + 1, d + 1); d + 1];
        out[0].view_mut((1, 1), (d, d)).copy_from(&dgb);
        Some(out)
    }
}

/// Metric sampled on a tensor grid, interpolated by local cubic Lagrange stencils.
#[derive(Clone, Debug)]
pub struct GridMetric {
    pub label: String,
    pub axes: Vec<(f64, f64, usize)>,
    /// row-major over axes, each entry the full symmetric matrix
    pub samples: Vec<DMatrix<f64>>,
}

impl GridMetric {
    /// Text format: lines `axis lo hi n` (one per coordinate, in order), then one line
    /// per grid node (last axis fastest) listing the upper-triangular components
    /// row by row. Blank lines and lines starting with `#` are skipped.
    pub fn parse(label: &str, text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        let mut samples = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts[0] == "axis" {
                if parts.len() != 4 {
                    return Err(Error::Config(format!("line {}: axis needs lo hi n", ln + 1)));
                }
                let lo: f64 = parse_num(parts[1], ln)?;
                let hi: f64 = parse_num(parts[2], ln)?;
                let n: usize = parts[3].parse().map_err(|_| Error::Config(format!("line {}: bad count", ln + 1)))?;
                if n < 4 || !(lo < hi) {
                    return Err(Error::Config(format!("line {}: axis needs >= 4 nodes and lo < hi", ln + 1)));
                }
                axes.push((lo, hi, n));
                continue;
            }
            let dim = axes.len();
            let vals = parts.iter().map(|p| parse_num(p, ln)).collect::<Result<Vec<f64>>>()?;
            if vals.len() != dim * (dim + 1) / 2 {
                return Err(Error::Config(format!("line {}: expected {} components", ln + 1, dim * (dim + 1) / 2)));
            }
            let mut g = DMatrix::zeros(dim, dim);
            let mut k = 0;
            for i in 0..dim {
                for j in i..dim {
                    g[(i, j)] = vals[k];
                    g[(j, i)] = vals[k];
                    k += 1;
                }
            }
            samples.push(g);
        }
        let expected: usize = axes.iter().map(|a| a.2).product();
        if axes.is_empty() || samples.len() != expected {
            return Err(Error::Config(format!("grid metric: {} samples, expected {}", samples.len(), expected)));
        }
        Ok(GridMetric { label: label.to_string(), axes, samples })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text)
    }
}

fn parse_num(s: &str, ln: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("line {}: cannot parse '{}'", ln + 1, s)))
}

impl Metric for GridMetric {
    fn dim(&self) -> usize {
        self.axes.len()
    }
    fn name(&self) -> String {
        format!("grid:{}", self.label)
    }
    fn components(&self, x: &[f64]) -> DMatrix<f64> {
        let dim = self.axes.len();
        let mut starts = Vec::with_capacity(dim);
        let mut weights = Vec::with_capacity(dim);
        for (k, &(lo, hi, n)) in self.axes.iter().enumerate() {
            let h = (hi - lo) / (n - 1) as f64;
            let (s, w) = crate::stencil::interp_weights(x[k], lo, h, n, 4, 0);
            starts.push(s);
            weights.push(w.into_iter().next().unwrap_or_default());
        }
        let mut out = DMatrix::zeros(dim, dim);
        let total = 4usize.pow(dim as u32);
        for flat in 0..total {
            let mut idx = 0usize;
            let mut w = 1.0;
            let mut rem = flat;
            for k in 0..dim {
                let o = rem % 4;
                rem /= 4;
                w *= weights[k][o];
                idx = idx * self.axes[k].2 + starts[k] + o;
            }
            if w != 0.0 {
                out += &self.samples[idx] * w;
            }
        }
        out
    }
}

/// Registry of built-in metrics by name.
pub fn builtin(name: &str, d: usize) -> Result<Box<dyn Metric>> {
    match name {
        "planar-conformal" => {
            let mut k = vec![0.0; d - 1];
            k[0] = 1.0;
            Ok(Box::new(PlanarConformal { kbar: k }))
        }
        "planar-ambient" => Ok(Box::new(PlanarAmbient { d })),
        "pure-ads-conformal" => Ok(Box::new(PureAdsConformal { d })),
        _ => Err(Error::Config(format!("unknown metric '{}'", name))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_conformal_components_and_inverse() {
        let m = PlanarConformal { kbar: vec![1.0] };
        let md = metric_at(&m, &[0.1, 0.2, 0.3]).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(md.g, expect);
        assert!((md.sqrt_abs_det - 1.0).abs() < 1e-15);
        // inverse of [[1,1],[1,0]] is [[0,1],[1,-1]]
        assert_eq!(md.ginv[(2, 2)], -1.0);
        assert_eq!(md.ginv[(1, 2)], 1.0);
        assert_eq!(md.ginv[(1, 1)], 0.0);
    }

    #[test]
    fn pure_ads_degenerates_on_equator() {
        let m = PureAdsConformal { d: 3 };
        let e = metric_at(&m, &[0.0, std::f64::consts::FRAC_PI_2, 1.0, 0.5]).unwrap_err();
        assert_eq!(e.name(), "SingularMetric");
    }

    #[test]
    fn box_of_s_squared_is_minus_two() {
        let m = PlanarConformal { kbar: vec![1.0] };
        let f = FnField(|x: &[f64]| x[2] * x[2]);
        let v = box_g(&m, &f, &[0.2, 0.0, 0.4], &Stencil::uniform(3, 1e-3)).unwrap();
        assert!((v + 2.0).abs() < 1e-8);
    }

    #[test]
    fn gradient_of_phase_is_half_ds() {
        let m = PlanarConformal { kbar: vec![1.0] };
        let f = FnField(|x: &[f64]| x[1] / 2.0);
        let g = grad_g(&m, &f, &[0.2, 0.1, 0.0], &Stencil::uniform(3, 1e-3)).unwrap();
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12 && (g[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_metric_reproduces_flat() {
        let mut text = String::from("axis 0 1 5\naxis 0 1 5\n");
        for _ in 0..25 {
            text.push_str("-1 0 1\n");
        }
        let gm = GridMetric::parse("t", &text).unwrap();
        let md = metric_at(&gm, &[0.33, 0.71]).unwrap();
        assert!((md.g[(0, 0)] + 1.0).abs() < 1e-14 && (md.g[(1, 1)] - 1.0).abs() < 1e-14);
    }
}
