//! Eikonal functions and adapted charts `(sigma, ybar, s)`: the closed-form planar case,
//! the boundary bump deformation, certification, and the geodesic-spray construction.

use crate::error::{Error, Result};
use crate::geometry::{
    christoffels_from, gradient_fd, hessian_fd, metric_at, planar_inverse, FnField, Metric, MetricData,
    PlanarConformal, ScalarField, SharedField, Stencil,
};
use crate::ode::{dopri45_dense, OdeFailure, Tolerances};
use crate::series::{smooth_step, Series};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type ChartMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Phase `phi = (kbar . xbar - t) / 2` in ambient `(rho, xbar, t)`.
#[derive(Clone, Debug)]
pub struct PlanarPhase {
    pub kbar: Vec<f64>,
}

impl ScalarField for PlanarPhase {
    fn value(&self, x: &[f64]) -> f64 {
        let m = self.kbar.len();
        0.5 * (self.kbar.iter().zip(&x[1..=m]).map(|(k, y)| k * y).sum::<f64>() - x[m + 1])
    }
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        let m = self.kbar.len();
        let mut g = vec![0.0; m + 2];
        for i in 0..m {
            g[1 + i] = 0.5 * self.kbar[i];
        }
        g[m + 1] = -0.5;
        Some(g)
    }
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.kbar.len() + 2;
        Some(DMatrix::zeros(n, n))
    }
}

/// Phase `phi = kbar . ybar / 2` written in adapted coordinates.
#[derive(Clone, Debug)]
pub struct ChartPhase {
    pub kbar: Vec<f64>,
}

impl ScalarField for ChartPhase {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.kbar.iter().zip(&x[1..]).map(|(k, y)| k * y).sum::<f64>()
    }
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        let m = self.kbar.len();
        let mut g = vec![0.0; m + 2];
        for i in 0..m {
            g[1 + i] = 0.5 * self.kbar[i];
        }
        Some(g)
    }
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.kbar.len() + 2;
        Some(DMatrix::zeros(n, n))
    }
}

/// Coordinate function `x[axis]`.
#[derive(Clone, Debug)]
pub struct CoordinateField {
    pub axis: usize,
    pub dim: usize,
}

impl ScalarField for CoordinateField {
    fn value(&self, x: &[f64]) -> f64 {
        x[self.axis]
    }
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dim];
        g[self.axis] = 1.0;
        Some(g)
    }
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
}

/// Smooth bump `Psi`: 0 on the inner box, `sigma1` outside the outer box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub sigma1: f64,
    pub inner: Vec<(f64, f64)>,
    pub outer: Vec<(f64, f64)>,
}

impl BumpProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma1 > 0.0
            && self.inner.len() == self.outer.len()
            && self.inner.iter().zip(&self.outer).all(|(i, o)| o.0 < i.0 && i.0 < i.1 && i.1 < o.1);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("bump needs sigma1 > 0 and inner box compactly inside outer box".into()))
        }
    }

    fn axis_plateau(&self, k: usize, y: f64, order: usize) -> Series {
        let (il, ih) = self.inner[k];
        let (ol, oh) = self.outer[k];
        let mut up = Series::constant((y - ol) / (il - ol), order);
        let mut down = Series::constant((oh - y) / (oh - ih), order);
        if order > 0 {
            up.c[1] = 1.0 / (il - ol);
            down.c[1] = -1.0 / (oh - ih);
        }
        smooth_step(&up).mul(&smooth_step(&down))
    }

    /// `(Psi, grad Psi, Hessian Psi)` at ybar.
    pub fn jet(&self, ybar: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let m = ybar.len();
        let p: Vec<Series> = (0..m).map(|k| self.axis_plateau(k, ybar[k], 2)).collect();
        let prod_except = |skip: &[usize]| -> f64 {
            (0..m).filter(|k| !skip.contains(k)).map(|k| p[k].value()).product()
        };
        let b = prod_except(&[]);
        let mut grad = vec![0.0; m];
        let mut hess = DMatrix::zeros(m, m);
        for i in 0..m {
            grad[i] = -self.sigma1 * p[i].derivative(1) * prod_except(&[i]);
            hess[(i, i)] = -self.sigma1 * p[i].derivative(2) * prod_except(&[i]);
            for j in 0..i {
                let v = -self.sigma1 * p[i].derivative(1) * p[j].derivative(1) * prod_except(&[i, j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        (self.sigma1 * (1.0 - b), grad, hess)
    }

    pub fn value(&self, ybar: &[f64]) -> f64 {
        self.jet(ybar).0
    }
}

/// Flat metric in the deformed chart `(sigma~, ybar, s)`, `sigma = sigma~ + Psi(ybar)`.
#[derive(Clone, Debug)]
pub struct DeformedPlanar {
    pub kbar: Vec<f64>,
    pub bump: BumpProfile,
}

impl Metric for DeformedPlanar {
    fn dim(&self) -> usize {
        self.kbar.len() + 2
    }
    fn name(&self) -> String {
        "planar-deformed".into()
    }
    fn components(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.kbar.len();
        let (_, gp, _) = self.bump.jet(&x[1..=m]);
        let mut g = PlanarConformal { kbar: self.kbar.clone() }.components(x);
        // (d u + gp . dy)^2 adds gp_i to g_{u y_i} and gp_i gp_j to g_{y_i y_j}
        for i in 0..m {
            g[(0, 1 + i)] += gp[i];
            g[(1 + i, 0)] += gp[i];
            for j in 0..m {
                g[(1 + i, 1 + j)] += gp[i] * gp[j];
            }
        }
        g
    }
    fn derivatives(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let m = self.kbar.len();
        let n = m + 2;
        let (_, gp, hp) = self.bump.jet(&x[1..=m]);
        let mut out = vec![DMatrix::zeros(n, n); n];
        for k in 0..m {
            let d = &mut out[1 + k];
            for i in 0..m {
                d[(0, 1 + i)] = hp[(i, k)];
                d[(1 + i, 0)] = hp[(i, k)];
                for j in 0..m {
                    d[(1 + i, 1 + j)] = hp[(i, k)] * gp[j] + gp[i] * hp[(j, k)];
                }
            }
        }
        Some(out)
    }
    fn inverse(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let m = self.kbar.len();
        let (_, gp, _) = self.bump.jet(&x[1..=m]);
        Some(planar_inverse(&self.kbar, &gp))
    }
}

/// Metric, phase and potential of an adapted chart `(sigma, ybar, s)` in which
/// `phi = kbar . ybar / 2` is null and `2 grad phi = d_s`.
#[derive(Clone)]
pub struct AdaptedChart {
    pub metric: Arc<dyn Metric>,
    pub kbar: Vec<f64>,
    pub xi: Complex64,
    /// Metric and data independent of ybar; the grid collapses that axis.
    pub ybar_invariant: bool,
    pub label: String,
}

impl AdaptedChart {
    pub fn planar(kbar: Vec<f64>, xi: Complex64) -> Self {
        AdaptedChart {
            metric: Arc::new(PlanarConformal { kbar: kbar.clone() }),
            kbar,
            xi,
            ybar_invariant: true,
            label: "planar".into(),
        }
    }

    pub fn deformed(kbar: Vec<f64>, bump: BumpProfile, xi: Complex64) -> Self {
        AdaptedChart {
            metric: Arc::new(DeformedPlanar { kbar: kbar.clone(), bump }),
            kbar,
            xi,
            ybar_invariant: false,
            label: "planar-localized".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.kbar.len() + 2
    }

    pub fn phase(&self) -> ChartPhase {
        ChartPhase { kbar: self.kbar.clone() }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.phase().value(x)
    }

    pub fn phi_grad(&self) -> Vec<f64> {
        self.phase().gradient(&[]).unwrap_or_default()
    }

    pub fn metric_data(&self, x: &[f64]) -> Result<MetricData> {
        metric_at(self.metric.as_ref(), x)
    }

    /// Coefficients `B^b = d_a g^ab + g^ab d_a log sqrt|g|` of the first-order part of box.
    pub fn box_first_order(md: &MetricData) -> Vec<f64> {
        let n = md.g.nrows();
        let dgi = md.dginv();
        let dl = md.dlog_sqrt_det();
        (0..n).map(|b| (0..n).map(|a| dgi[a][(a, b)] + md.ginv[(a, b)] * dl[a]).sum()).collect()
    }

    /// `box_g phi` from the metric data (phi is linear in the chart).
    pub fn box_phi(&self, md: &MetricData) -> f64 {
        let b = Self::box_first_order(md);
        b.iter().zip(self.phi_grad()).map(|(x, y)| x * y).sum()
    }
}

/// Residual summary of an eikonal certification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificationReport {
    pub points: usize,
    /// `max |g^-1(d phi, d phi)|`
    pub null_residual: f64,
    /// `max |2 grad phi - d_s|` componentwise, when a chart is attached
    pub gauge_residual: Option<f64>,
    /// `min g^-1(d sigma, d sigma) / sigma^gamma`
    pub sigma_lower_bound: f64,
    /// sup-norms of phi, |grad phi|, |Hess phi| on the sample
    pub phi_derivative_sups: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Eikonal triple in ambient coordinates with optional chart maps.
#[derive(Clone)]
pub struct EikonalData {
    pub phi: SharedField,
    pub sigma_field: SharedField,
    /// ambient -> (sigma, ybar, s)
    pub to_chart: Option<ChartMap>,
    /// (sigma, ybar, s) -> ambient
    pub from_chart: Option<ChartMap>,
    pub bump: Option<BumpProfile>,
    pub certification: Option<CertificationReport>,
}

pub fn planar_eikonal(kbar: &[f64]) -> Result<EikonalData> {
    let norm = kbar.iter().map(|k| k * k).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnit { norm });
    }
    let m = kbar.len();
    let k1 = kbar.to_vec();
    let k2 = kbar.to_vec();
    let to_chart: ChartMap = Arc::new(move |x: &[f64]| {
        let t = x[m + 1];
        let mut c = vec![x[0]];
        c.extend((0..m).map(|i| x[1 + i] - t * k1[i]));
        c.push(t);
        c
    });
    let from_chart: ChartMap = Arc::new(move |c: &[f64]| {
        let s = c[m + 1];
        let mut x = vec![c[0]];
        x.extend((0..m).map(|i| c[1 + i] + s * k2[i]));
        x.push(s);
        x
    });
    Ok(EikonalData {
        phi: Arc::new(PlanarPhase { kbar: kbar.to_vec() }),
        sigma_field: Arc::new(CoordinateField { axis: 0, dim: m + 2 }),
        to_chart: Some(to_chart),
        from_chart: Some(from_chart),
        bump: None,
        certification: None,
    })
}

/// Tensor sample of a coordinate box with `n` nodes per axis (endpoints included).
pub fn tensor_points(bx: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let dim = bx.len();
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut f| {
            let mut x = vec![0.0; dim];
            for k in (0..dim).rev() {
                let i = f % n;
                f /= n;
                let (a, b) = bx[k];
                x[k] = if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 };
            }
            x
        })
        .collect()
}

fn field_grad(f: &dyn ScalarField, x: &[f64], st: &Stencil) -> Result<Vec<f64>> {
    match f.gradient(x) {
        Some(g) => Ok(g),
        None => gradient_fd(f, x, st),
    }
}

/// Null, gauge and timelike-level-set residuals on the sample points.
pub fn verify_eikonal(
    data: &EikonalData,
    metric: &dyn Metric,
    points: &[Vec<f64>],
    st: &Stencil,
    gamma: f64,
    tol: f64,
) -> Result<CertificationReport> {
    let mut null_res = 0.0f64;
    let mut gauge: Option<f64> = None;
    let mut lower = f64::INFINITY;
    let mut sups = vec![0.0f64; 3];
    for x in points {
        let md = metric_at(metric, x)?;
        let dphi = field_grad(data.phi.as_ref(), x, st)?;
        null_res = null_res.max(md.contract(&dphi, &dphi).abs());
        let dsig = field_grad(data.sigma_field.as_ref(), x, st)?;
        let sig = data.sigma_field.value(x);
        if sig > 0.0 {
            lower = lower.min(md.contract(&dsig, &dsig) / sig.powf(gamma));
        }
        if let (Some(to), Some(from)) = (&data.to_chart, &data.from_chart) {
            let c = to(x);
            let last = c.len() - 1;
            let h = 1e-3;
            let at = |o: f64| {
                let mut cc = c.clone();
                cc[last] += o * h;
                from(&cc)
            };
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let grad = md.raise(&dphi);
            let mut r = 0.0f64;
            for k in 0..x.len() {
                let ds = (m2[k] - p2[k] + 8.0 * (p1[k] - m1[k])) / (12.0 * h);
                r = r.max((2.0 * grad[k] - ds).abs());
            }
            gauge = Some(gauge.unwrap_or(0.0).max(r));
        }
        let hphi = match data.phi.hessian(x) {
            Some(hm) => hm,
            None => hessian_fd(data.phi.as_ref(), x, st)?,
        };
        sups[0] = sups[0].max(data.phi.value(x).abs());
        sups[1] = sups[1].max(dphi.iter().map(|v| v * v).sum::<f64>().sqrt());
        sups[2] = sups[2].max(hphi.norm());
    }
    let pass = null_res <= tol && gauge.map_or(true, |g| g <= tol) && lower > 0.0;
    Ok(CertificationReport {
        points: points.len(),
        null_residual: null_res,
        gauge_residual: gauge,
        sigma_lower_bound: lower,
        phi_derivative_sups: sups,
        tolerance: tol,
        pass,
    })
}

/// `omega in S^{d-1}` from angles: `omega^d = cos theta_1`, the rest `sin theta_1` times the
/// point of `S^{d-2}` given by the remaining angles.
pub fn sphere_point(theta: &[f64]) -> Vec<f64> {
    let m = theta.len();
    if m == 1 {
        return vec![theta[0].sin(), theta[0].cos()];
    }
    let mut rest = sphere_point(&theta[1..]);
    for v in rest.iter_mut() {
        *v *= theta[0].sin();
    }
    rest.push(theta[0].cos());
    rest
}

/// Explicit pure-AdS phase in `(tau, chi, theta..)`:
/// `[cos chi kbar . omegabar - sin tau] / [2 (cos tau - cos chi omega^d)]`.
#[derive(Clone, Debug)]
pub struct PureAdsPhase {
    pub kbar: Vec<f64>,
}

impl ScalarField for PureAdsPhase {
    fn value(&self, x: &[f64]) -> f64 {
        let om = sphere_point(&x[2..]);
        let d = om.len();
        let kw: f64 = self.kbar.iter().zip(&om[..d - 1]).map(|(k, w)| k * w).sum();
        (x[1].cos() * kw - x[0].sin()) / (2.0 * (x[0].cos() - x[1].cos() * om[d - 1]))
    }
}

pub fn pure_ads_eikonal(kbar: &[f64]) -> Result<EikonalData> {
    let norm = kbar.iter().map(|k| k * k).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnit { norm });
    }
    // rho = sin chi / (cos tau - cos chi omega^d)
    let rho = FnField(move |x: &[f64]| {
        let om = sphere_point(&x[2..]);
        x[1].sin() / (x[0].cos() - x[1].cos() * om[om.len() - 1])
    });
    Ok(EikonalData {
        phi: Arc::new(PureAdsPhase { kbar: kbar.to_vec() }),
        sigma_field: Arc::new(rho),
        to_chart: None,
        from_chart: None,
        bump: None,
        certification: None,
    })
}

/// Replace sigma by `sigma - Psi(ybar)`; re-measure the level-set bound on points with
/// `sigma~ > 0`.
pub fn deform_sigma(
    data: &EikonalData,
    bump: &BumpProfile,
    metric: &dyn Metric,
    points: &[Vec<f64>],
    st: &Stencil,
) -> Result<(EikonalData, f64)> {
    bump.validate()?;
    let to = data
        .to_chart
        .clone()
        .ok_or_else(|| Error::Config("deformation needs a chart map".into()))?;
    let base = data.sigma_field.clone();
    let b = bump.clone();
    let to2 = to.clone();
    let sig: SharedField = Arc::new(FnField(move |x: &[f64]| {
        let c = to2(x);
        base.value(x) - b.value(&c[1..c.len() - 1])
    }));
    let mut lower = f64::INFINITY;
    for x in points {
        if sig.value(x) <= 0.0 {
            continue;
        }
        let md = metric_at(metric, x)?;
        let ds = gradient_fd(sig.as_ref(), x, st)?;
        lower = lower.min(md.contract(&ds, &ds));
    }
    if !(lower > 0.0) {
        return Err(Error::DeformationNotTimelike { bound: lower });
    }
    let mut out = data.clone();
    out.sigma_field = sig;
    out.bump = Some(bump.clone());
    out.certification = None;
    Ok((out, lower))
}

/// Launch data for the geodesic spray: `Sigma = {x^time = t0}` sampled on a tensor grid of
/// the remaining coordinates, foliation function `x1 = c . x`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionSpec {
    pub time_axis: usize,
    pub t0: f64,
    /// axes of the remaining coordinates, in coordinate order: (lo, hi, nodes)
    pub axes: Vec<(f64, f64, usize)>,
    pub foliation: Vec<f64>,
    /// affine parameter range and number of stored steps
    pub s_range: (f64, f64),
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub launch: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub null_residual: Vec<f64>,
    pub jacobian_log: Vec<f64>,
    /// number of leading stored steps certified free of caustics
    pub lifespan: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicFamily {
    pub params: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausticReport {
    pub threshold: f64,
    pub margin_cells: usize,
    pub min_lifespan: usize,
    pub flagged: usize,
    pub max_null_residual: f64,
    pub max_geodesic_residual: f64,
    /// spread of the Jacobian log-determinant along each geodesic (max over the family)
    pub logdet_spread: f64,
}

fn launch_nodes(spec: &SectionSpec) -> Vec<Vec<f64>> {
    let dims: Vec<usize> = spec.axes.iter().map(|a| a.2).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut f| {
            let mut q = vec![0.0; dims.len()];
            for k in (0..dims.len()).rev() {
                let (a, b, n) = spec.axes[k];
                let i = f % n;
                f /= n;
                q[k] = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
            }
            let mut x = q.clone();
            x.insert(spec.time_axis, spec.t0);
            x
        })
        .collect()
}

/// Gram-Schmidt: unit future timelike normal `T` to `Sigma` plus unit normal `E` to the
/// foliation inside `Sigma`.
fn initial_velocity(md: &MetricData, spec: &SectionSpec, index: usize) -> Result<Vec<f64>> {
    let n = md.g.nrows();
    let mut dt = vec![0.0; n];
    dt[spec.time_axis] = 1.0;
    let tt = md.contract(&dt, &dt);
    if !(tt < 0.0) {
        return Err(Error::SectionNotSpacelike { index });
    }
    let t: Vec<f64> = md.raise(&dt).iter().map(|v| -v / (-tt).sqrt()).collect();
    // future pointing: positive time component
    let t: Vec<f64> = if t[spec.time_axis] < 0.0 { t.iter().map(|v| -v).collect() } else { t };
    let e0 = md.raise(&spec.foliation);
    let gdot = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += md.g[(i, j)] * a[i] * b[j];
            }
        }
        acc
    };
    // remove the T component (g(T,T) = -1)
    let c = gdot(&e0, &t);
    let e: Vec<f64> = e0.iter().zip(&t).map(|(a, b)| a + c * b).collect();
    let ee = gdot(&e, &e);
    if !(ee > 0.0) {
        return Err(Error::SectionNotSpacelike { index });
    }
    Ok(t.iter().zip(&e).map(|(a, b)| a + b / ee.sqrt()).collect())
}

fn geodesic_rhs(metric: &dyn Metric, y: &[f64]) -> Vec<f64> {
    let n = y.len() / 2;
    let x = &y[..n];
    let v = &y[n..];
    let mut out = vec![f64::NAN; 2 * n];
    let md = match metric_at(metric, x) {
        Ok(m) => m,
        Err(_) => return out,
    };
    let gam = christoffels_from(&md);
    for a in 0..n {
        out[a] = v[a];
        let mut acc = 0.0;
        for b in 0..n {
            for c in 0..n {
                acc += gam[a][b][c] * v[b] * v[c];
            }
        }
        out[n + a] = -acc;
    }
    out
}

/// Integrates the null geodesic family from the section and records caustic indicators.
pub fn construct_eikonal_from_section(
    metric: &dyn Metric,
    spec: &SectionSpec,
    caustic_threshold: f64,
    margin_cells: usize,
) -> Result<(GeodesicFamily, CausticReport)> {
    let nodes = launch_nodes(spec);
    let (s0, s1) = spec.s_range;
    let params: Vec<f64> = (0..spec.steps).map(|k| s0 + (s1 - s0) * k as f64 / (spec.steps - 1) as f64).collect();
    let tol = Tolerances { atol: 1e-10, rtol: 1e-10, ..Tolerances::default() };
    let mut trajs = Vec::with_capacity(nodes.len());
    for (idx, x0) in nodes.iter().enumerate() {
        let md = metric_at(metric, x0)?;
        let v0 = initial_velocity(&md, spec, idx)?;
        let mut y0 = x0.clone();
        y0.extend_from_slice(&v0);
        let f = |_t: f64, y: &[f64]| geodesic_rhs(metric, y);
        let states = if s0 == 0.0 {
            dopri45_dense(&f, 0.0, &y0, &params, &tol)
        } else {
            Err(OdeFailure::NonFinite { t: s0 })
        }
        .map_err(|e| match e {
            OdeFailure::StepUnderflow { t, h } => Error::GeodesicBlowup { index: idx, param: t, step: h },
            OdeFailure::NonFinite { t } | OdeFailure::TooManySteps { t } => {
                Error::GeodesicBlowup { index: idx, param: t, step: 0.0 }
            }
        })?;
        let n = x0.len();
        let positions: Vec<Vec<f64>> = states.iter().map(|y| y[..n].to_vec()).collect();
        let velocities: Vec<Vec<f64>> = states.iter().map(|y| y[n..].to_vec()).collect();
        let null_residual = positions
            .iter()
            .zip(&velocities)
            .map(|(x, v)| {
                metric_at(metric, x)
                    .map(|m| {
                        let mut acc = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                acc += m.g[(i, j)] * v[i] * v[j];
                            }
                        }
                        acc.abs()
                    })
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        trajs.push(Trajectory {
            launch: x0.clone(),
            positions,
            velocities,
            null_residual,
            jacobian_log: vec![],
            lifespan: spec.steps,
        });
    }
    let dims: Vec<usize> = spec.axes.iter().map(|a| a.2).collect();
    let mut fam = GeodesicFamily { params, trajectories: trajs, dims };
    let report = caustic_scan(&mut fam, spec, caustic_threshold, margin_cells, metric);
    Ok((fam, report))
}

fn caustic_scan(
    fam: &mut GeodesicFamily,
    spec: &SectionSpec,
    threshold: f64,
    margin: usize,
    metric: &dyn Metric,
) -> CausticReport {
    let dims = fam.dims.clone();
    let nd = dims.len();
    let strides: Vec<usize> = (0..nd).map(|k| dims[k + 1..].iter().product()).collect();
    let steps = fam.params.len();
    let total = fam.trajectories.len();
    let mut logs = vec![vec![0.0; steps]; total];
    for p in 0..total {
        let mut idx = vec![0; nd];
        let mut r = p;
        for k in (0..nd).rev() {
            idx[k] = r % dims[k];
            r /= dims[k];
        }
        for st in 0..steps {
            let x = &fam.trajectories[p].positions[st];
            let n = x.len();
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
            for k in 0..nd {
                let (a, b, len) = spec.axes[k];
                let h = if len > 1 { (b - a) / (len - 1) as f64 } else { 1.0 };
                let (lo, hi) = if len == 1 {
                    (p, p)
                } else if idx[k] == 0 {
                    (p, p + strides[k])
                } else if idx[k] == len - 1 {
                    (p - strides[k], p)
                } else {
                    (p - strides[k], p + strides[k])
                };
                let span = if lo == hi { 1.0 } else { ((hi - lo) / strides[k]) as f64 * h };
                let xl = &fam.trajectories[lo].positions[st];
                let xh = &fam.trajectories[hi].positions[st];
                cols.push((0..n).map(|i| if lo == hi { if i == k { 1.0 } else { 0.0 } } else { (xh[i] - xl[i]) / span }).collect());
            }
            cols.push(fam.trajectories[p].velocities[st].clone());
            let jm = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
            logs[p][st] = jm.determinant().abs().ln();
        }
    }
    let lt = threshold.ln();
    let mut flagged = 0;
    let mut min_life = steps;
    let mut spread = 0.0f64;
    for p in 0..total {
        let base = logs[p][0];
        let mut life = steps;
        for st in 0..steps {
            if logs[p][st] - base < lt {
                life = st.saturating_sub(margin);
                flagged += 1;
                break;
            }
        }
        let (mn, mx) = logs[p].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        spread = spread.max(mx - mn);
        min_life = min_life.min(life);
        fam.trajectories[p].jacobian_log = logs[p].clone();
        fam.trajectories[p].lifespan = life;
    }
    let max_null = fam
        .trajectories
        .iter()
        .flat_map(|t| t.null_residual.iter().copied())
        .fold(0.0f64, f64::max);
    CausticReport {
        threshold,
        margin_cells: margin,
        min_lifespan: min_life,
        flagged,
        max_null_residual: max_null,
        max_geodesic_residual: geodesic_residual(fam, metric),
        logdet_spread: spread,
    }
}

/// `max |x'' + Gamma(x', x')|` by second differences of the stored positions.
pub fn geodesic_residual(fam: &GeodesicFamily, metric: &dyn Metric) -> f64 {
    let p = &fam.params;
    if p.len() < 3 {
        return 0.0;
    }
    let h = p[1] - p[0];
    let mut worst = 0.0f64;
    for t in &fam.trajectories {
        for k in 1..p.len() - 1 {
            let x = &t.positions[k];
            let v = &t.velocities[k];
            let n = x.len();
            let Ok(md) = metric_at(metric, x) else { continue };
            let gam = christoffels_from(&md);
            for a in 0..n {
                let acc = (t.positions[k + 1][a] - 2.0 * x[a] + t.positions[k - 1][a]) / (h * h);
                let mut g = 0.0;
                for b in 0..n {
                    for c in 0..n {
                        g += gam[a][b][c] * v[b] * v[c];
                    }
                }
                worst = worst.max((acc + g).abs());
            }
        }
    }
    worst
}

/// Chart values carried by each geodesic: `phi = c . x(launch)`, `s = (affine parameter) / 2`.
pub fn family_phase(fam: &GeodesicFamily, spec: &SectionSpec, traj: usize) -> f64 {
    fam.trajectories[traj].launch.iter().zip(&spec.foliation).map(|(a, b)| a * b).sum()
}

/// Eikonal residuals of the spray chart at interior stored points: `g^-1(d phi, d phi)` and
/// `|2 grad phi - d_s|` with `d_s = 2 Lambda'`.
pub fn family_residuals(fam: &GeodesicFamily, spec: &SectionSpec, metric: &dyn Metric) -> Result<(f64, f64)> {
    let dims = &fam.dims;
    let nd = dims.len();
    let strides: Vec<usize> = (0..nd).map(|k| dims[k + 1..].iter().product()).collect();
    let mut worst_null = 0.0f64;
    let mut worst_gauge = 0.0f64;
    for p in 0..fam.trajectories.len() {
        let mut idx = vec![0; nd];
        let mut r = p;
        for k in (0..nd).rev() {
            idx[k] = r % dims[k];
            r /= dims[k];
        }
        if (0..nd).any(|k| dims[k] > 1 && (idx[k] == 0 || idx[k] == dims[k] - 1)) {
            continue;
        }
        let life = fam.trajectories[p].lifespan;
        for st in 0..life.min(fam.params.len()) {
            let x = &fam.trajectories[p].positions[st];
            let n = x.len();
            let mut cols: Vec<Vec<f64>> = Vec::new();
            let mut dphi_q = Vec::new();
            for k in 0..nd {
                let (a, b, len) = spec.axes[k];
                if len == 1 {
                    continue;
                }
                let h = (b - a) / (len - 1) as f64;
                let xl = &fam.trajectories[p - strides[k]].positions[st];
                let xh = &fam.trajectories[p + strides[k]].positions[st];
                cols.push((0..n).map(|i| (xh[i] - xl[i]) / (2.0 * h)).collect());
                let coord = if k >= spec.time_axis { k + 1 } else { k };
                dphi_q.push(spec.foliation[coord]);
            }
            if cols.len() + 1 != n {
                return Err(Error::Config("spray residuals need every launch axis resolved".into()));
            }
            cols.push(fam.trajectories[p].velocities[st].clone());
            dphi_q.push(0.0);
            let jm = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
            let ji = jm.try_inverse().ok_or(Error::SingularMetric { det: 0.0, at: x.clone() })?;
            let dphi: Vec<f64> = (0..n).map(|a| (0..n).map(|j| dphi_q[j] * ji[(j, a)]).sum()).collect();
            let md = metric_at(metric, x)?;
            worst_null = worst_null.max(md.contract(&dphi, &dphi).abs());
            let grad = md.raise(&dphi);
            let v = &fam.trajectories[p].velocities[st];
            for a in 0..n {
                // d_s = 2 d_{s'} = 2 Lambda'
                worst_gauge = worst_gauge.max((2.0 * grad[a] - 2.0 * v[a]).abs());
            }
        }
    }
    Ok((worst_null, worst_gauge))
}

/// Affine parameter at which coordinate `axis` first comes back below its launch value after
/// rising, by linear interpolation between stored steps.
pub fn return_parameter(traj: &Trajectory, params: &[f64], axis: usize) -> Option<f64> {
    let x0 = traj.positions[0][axis];
    let mut risen = false;
    for k in 1..traj.positions.len() {
        let a = traj.positions[k - 1][axis];
        let b = traj.positions[k][axis];
        if b > 2.0 * x0 {
            risen = true;
        }
        if risen && a > x0 && b <= x0 {
            let w = (a - x0) / (a - b);
            return Some(params[k - 1] + w * (params[k] - params[k - 1]));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanarAmbient;

    #[test]
    fn planar_eikonal_values() {
        let e = planar_eikonal(&[1.0]).unwrap();
        let x = [0.1, 0.3, 0.2];
        assert!((e.phi.value(&x) - 0.05).abs() < 1e-15);
        let c = (e.to_chart.as_ref().unwrap())(&x);
        assert!((c[0] - 0.1).abs() < 1e-15 && (c[1] - 0.1).abs() < 1e-15 && (c[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn not_unit_direction() {
        assert_eq!(planar_eikonal(&[0.9]).err().map(|e| e.name()), Some("NotUnit"));
    }

    #[test]
    fn sigma_is_not_null() {
        let mut e = planar_eikonal(&[1.0]).unwrap();
        e.phi = Arc::new(CoordinateField { axis: 0, dim: 3 });
        let pts = tensor_points(&[(0.1, 0.4), (-0.5, 0.5), (-0.5, 0.5)], 3);
        let r = verify_eikonal(&e, &PlanarAmbient { d: 2 }, &pts, &Stencil::uniform(3, 1e-3), 0.0, 1e-10).unwrap();
        assert!((r.null_residual - 1.0).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn bump_plateaus() {
        let b = BumpProfile { sigma1: 0.05, inner: vec![(-1.0, 1.0)], outer: vec![(-2.0, 2.0)] };
        assert_eq!(b.value(&[0.0]), 0.0);
        assert_eq!(b.value(&[3.0]), 0.05);
        let v = b.value(&[1.5]);
        assert!(v > 0.0 && v < 0.05);
    }

    #[test]
    fn deformed_inverse_matches_numeric() {
        let b = BumpProfile { sigma1: 0.05, inner: vec![(-0.5, 0.5)], outer: vec![(-1.0, 1.0)] };
        let m = DeformedPlanar { kbar: vec![1.0], bump: b };
        let x = [0.1, 0.71, 0.2];
        let g = m.components(&x);
        let gi = m.inverse(&x).unwrap();
        let id = &g * &gi;
        assert!((id - DMatrix::identity(3, 3)).norm() < 1e-14);
    }
}
