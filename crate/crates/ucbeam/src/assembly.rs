//! The glued solution `u = sum v~_n`, its potential `a = P u / u`, decay tables and the
//! end-to-end check of `P u = a u`.

use crate::bands::{chi_value, f_series, f_value, rescaled};
use crate::dd::{reduce_2pi, Cdd, Dd, ZERO};
use crate::error::{Error, Result};
use crate::interference::{plateau_window, EtaChart, InterferenceSurface, Omega};
use crate::series::Series;
use crate::stencil::{fornberg, interp_weights};
use crate::transport::{BandOperator, Beam, DdJet, OpCoeffs};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Conditioning above which the two-band quotient is flagged.
pub const CONDITION_LIMIT: f64 = 1e6;

/// One corrected band: the uncorrected beam on its grid plus the analytic correction.
pub struct GluedBand {
    pub n: u32,
    pub op: BandOperator,
    pub beam: Beam,
    pub chart: EtaChart,
    pub omega: Omega,
}

pub struct GluedCounterexample {
    pub n0: u32,
    pub nmax: u32,
    pub bands: Vec<GluedBand>,
    /// `S_n` for `n = n0..=nmax`
    pub surfaces: Vec<InterferenceSurface>,
}

/// Per-band quantities at a point: `log`-amplitude, reduced phase, envelope, `psi` from the
/// construction and the conjugated operator applied to the envelope.
#[derive(Clone, Copy, Debug)]
pub struct BandValues {
    pub n: u32,
    pub f: f64,
    pub phase: f64,
    pub envelope: Cdd,
    pub psi: Cdd,
    pub conjugated: Cdd,
}

/// `D_a^k u = exp(log_scale) * derivs[a][k]` for pure axis derivatives.
#[derive(Clone, Debug)]
pub struct UJet {
    pub log_scale: f64,
    pub derivs: Vec<Vec<Complex64>>,
}

impl UJet {
    /// `log |D_a^k u|`
    pub fn log_abs(&self, a: usize, k: usize) -> f64 {
        self.log_scale + self.derivs[a][k].norm().ln()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AValue {
    pub value: Complex64,
    /// `sum |terms| / |sum|` of the denominator; 1 for a single band
    pub conditioning: f64,
    pub ill_conditioned: bool,
    pub bands: usize,
}

impl GluedCounterexample {
    pub fn slice_len(&self) -> usize {
        self.bands[0].op.grid.slice_len()
    }

    pub fn band(&self, n: u32) -> Option<&GluedBand> {
        if n < self.n0 || n > self.nmax {
            return None;
        }
        self.bands.get((n - self.n0) as usize)
    }

    pub fn surface(&self, n: u32) -> Option<&InterferenceSurface> {
        if n < self.n0 || n > self.nmax {
            return None;
        }
        self.surfaces.get((n - self.n0) as usize)
    }

    /// Bands with `chi_n(sigma) > 0`; at most two, consecutive.
    pub fn active(&self, sigma: f64) -> Vec<&GluedBand> {
        self.bands.iter().filter(|b| chi_value(b.n, sigma) > 0.0).collect()
    }

    /// Chart coordinates of `(sigma, slice node q)`.
    pub fn point(&self, sigma: f64, q: usize) -> Vec<f64> {
        let mut x = self.bands[0].op.grid.coords(q);
        x[0] = sigma;
        x
    }

    fn band_values(&self, b: &GluedBand, sigma: f64, q: usize) -> Result<BandValues> {
        let op = &b.op;
        let g = &op.grid;
        let sl = g.slice_len();
        let x = self.point(sigma, q);
        let mut x0 = x.clone();
        let last = x0.len() - 1;
        x0[last] = 0.0;
        let c = OpCoeffs::at(&op.chart, b.n, &x0)?;
        let z = rescaled(b.n, sigma);
        let pos = (z - g.z.lo) / g.z.h;
        let r = op.rank();
        let env = &b.beam.envelope.values;
        let res = &b.beam.residual.values;
        let (mut e, mut psi, jet) = if (pos - pos.round()).abs() < 1e-9 && pos.round() >= 0.0 {
            let k = pos.round() as usize * sl + q;
            (env[k], res[k], op.grid_jet(env, k, &c))
        } else {
            let start = plateau_window(g, z);
            let nodes: Vec<f64> = (0..8).map(|i| g.z.at(start + i)).collect();
            let w = &fornberg(z, &nodes, 0)[0];
            let mut e = ZERO;
            let mut p = ZERO;
            let mut j = DdJet::zero(r);
            for (i, wi) in w.iter().enumerate() {
                let k = (start + i) * sl + q;
                e += env[k].scale(*wi);
                p += res[k].scale(*wi);
                j.add_scaled(&op.grid_jet(env, k, &c), *wi);
            }
            (e, p, j)
        };
        let mut conj = op.conjugated_jet(&c, &jet);
        let wj = b.omega.chart_jet(&b.chart, sigma, q, r);
        if !(wj.v.is_zero() && wj.d.iter().all(|v| v.is_zero())) || wj.h.iter().any(|v| !v.is_zero()) {
            e += wj.v;
            psi += b.omega.l_omega(op, &b.chart, sigma, q)?;
            conj += op.conjugated_jet(&c, &wj);
        }
        let phi = op.chart.phi(&x);
        let phase = reduce_2pi(op.lambda * Dd::from(phi));
        Ok(BandValues { n: b.n, f: f_value(b.n, sigma), phase, envelope: e, psi, conjugated: conj })
    }

    /// Values of every active band at `(sigma, q)`.
    pub fn values_at(&self, sigma: f64, q: usize) -> Result<Vec<BandValues>> {
        let act = self.active(sigma);
        if act.is_empty() {
            return Err(Error::OutsideBands { sigma });
        }
        act.into_iter().map(|b| self.band_values(b, sigma, q)).collect()
    }

    /// Pure axis derivatives of u up to order `order` at `(sigma, q)`, in log-scaled form.
    pub fn evaluate_u(&self, sigma: f64, q: usize, order: usize) -> Result<UJet> {
        let act = self.active(sigma);
        if act.is_empty() {
            return Err(Error::OutsideBands { sigma });
        }
        let log_scale = act.iter().map(|b| f_value(b.n, sigma)).fold(f64::NEG_INFINITY, f64::max);
        let r = act[0].op.rank();
        let mut derivs = vec![vec![Complex64::new(0.0, 0.0); order + 1]; r];
        let x = self.point(sigma, q);
        for b in act {
            let op = &b.op;
            let lam = op.lambda.hi() + op.lambda.lo();
            let dphi = op.chart.phi_grad();
            let phase = reduce_2pi(op.lambda * Dd::from(op.chart.phi(&x)));
            let base = Complex64::from_polar((f_value(b.n, sigma) - log_scale).exp(), phase);
            for (a, out) in derivs.iter_mut().enumerate() {
                // envelope derivatives along axis a
                let ed = self.envelope_axis_derivs(b, sigma, q, a, order)?;
                let mut theta = vec![Complex64::new(0.0, 0.0); order + 1];
                if a == 0 {
                    let fs = f_series(b.n, sigma, order);
                    for k in 1..=order {
                        theta[k] = Complex64::new(fs.c[k], 0.0);
                    }
                }
                if order >= 1 {
                    theta[1] += Complex64::new(0.0, lam * dphi[a]);
                }
                let ex = Series::from_coeffs(theta).exp();
                let es = Series::from_coeffs(
                    ed.iter().enumerate().map(|(k, v)| *v / (1..=k).map(|i| i as f64).product::<f64>()).collect(),
                );
                let prod = ex.mul(&es);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += base * prod.derivative(k);
                }
            }
        }
        Ok(UJet { log_scale, derivs })
    }

    /// `d_a^k E` for `k = 0..=m`; interpolant derivatives in sigma, grid interpolation weights
    /// along the slice axes.
    fn envelope_axis_derivs(&self, b: &GluedBand, sigma: f64, q: usize, a: usize, m: usize) -> Result<Vec<Complex64>> {
        let g = &b.op.grid;
        let sl = g.slice_len();
        let env = &b.beam.envelope.values;
        if a == 0 {
            let z = rescaled(b.n, sigma);
            let start = plateau_window(g, z);
            let nodes: Vec<f64> = (0..8).map(|i| g.z.at(start + i)).collect();
            let w = fornberg(z, &nodes, m);
            let n2 = (b.n as f64).powi(2);
            let om = b.omega.eta_derivs(&b.chart, sigma, q, m);
            let es = b.chart.jet(sigma, q).grad[0];
            return Ok((0..=m)
                .map(|k| {
                    let mut acc = ZERO;
                    for (i, wi) in w[k].iter().enumerate() {
                        acc += env[(start + i) * sl + q].scale(*wi);
                    }
                    (acc.scale(n2.powi(k as i32)) + om[k].scale(es.powi(k as i32))).to_c64()
                })
                .collect());
        }
        let len = g.shape()[a];
        if len < 2 {
            let mut v = vec![Complex64::new(0.0, 0.0); m + 1];
            v[0] = self.band_values(b, sigma, q)?.envelope.to_c64();
            return Ok(v);
        }
        let stride = g.stride(a);
        let pos = (q / stride) % len;
        let (start, w) = interp_weights(pos as f64, 0.0, 1.0, len, 8.min(len), m);
        let h = g.spacing(a);
        let mut vals = Vec::with_capacity(w[0].len());
        for i in 0..w[0].len() {
            let qq = q - pos * stride + (start + i) * stride;
            vals.push(self.band_values(b, sigma, qq)?.envelope);
        }
        Ok((0..=m)
            .map(|k| {
                let mut acc = ZERO;
                for (wi, v) in w[k].iter().zip(&vals) {
                    acc += v.scale(*wi);
                }
                acc.scale(h.powi(-(k as i32))).to_c64()
            })
            .collect())
    }

    /// `a = P u / u` through the single- or two-band quotient, with e^f and phase factors
    /// cancelled before dividing.
    pub fn evaluate_a(&self, sigma: f64, q: usize) -> Result<AValue> {
        let vals = self.values_at(sigma, q)?;
        Ok(quotient(&vals))
    }
}

fn weights(vals: &[BandValues]) -> Vec<Complex64> {
    let top = vals.iter().map(|v| v.f).fold(f64::NEG_INFINITY, f64::max);
    vals.iter().map(|v| Complex64::from_polar((v.f - top).exp(), v.phase)).collect()
}

fn quotient(vals: &[BandValues]) -> AValue {
    if vals.len() == 1 {
        let v = &vals[0];
        return AValue {
            value: v.psi.to_c64() / v.envelope.to_c64(),
            conditioning: 1.0,
            ill_conditioned: false,
            bands: 1,
        };
    }
    let t = weights(vals);
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for (v, w) in vals.iter().zip(&t) {
        num += w * v.psi.to_c64();
        let d = w * v.envelope.to_c64();
        den += d;
        mag += d.norm();
    }
    let conditioning = mag / den.norm();
    AValue { value: num / den, conditioning, ill_conditioned: conditioning > CONDITION_LIMIT, bands: vals.len() }
}

/// Strict form of `evaluate_a`: ill-conditioned quotients become errors.
pub fn evaluate_a_checked(glued: &GluedCounterexample, sigma: f64, q: usize) -> Result<Complex64> {
    let a = glued.evaluate_a(sigma, q)?;
    if a.ill_conditioned {
        return Err(Error::NearSurfaceIllConditioned { condition: a.conditioning });
    }
    Ok(a.value)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayRow {
    pub sigma0: f64,
    pub n_deriv: usize,
    pub mu: u32,
    /// `sigma0^-mu sup |D^N .|` over the slice
    pub sup_value: f64,
    pub log_sup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub sigma_samples: Vec<f64>,
    pub u_rows: Vec<DecayRow>,
    pub a_rows: Vec<DecayRow>,
    /// fitted `q` in `log sup |u| = -q sigma^-2 + r`
    pub q_fit: f64,
    /// smallest per-step ratio `value(sigma_k) / value(sigma_(k+1))` over mu and N
    pub u_min_step: f64,
    pub a_min_step: f64,
    pub u_ok: bool,
    pub a_ok: bool,
    pub q_ok: bool,
}

/// Sup-norms of pure-axis derivatives of u (and of a) on sigma-slices, weighted by
/// `sigma^-mu`. Samples should decrease toward 0.
pub fn decay_report(glued: &GluedCounterexample, sigma_samples: &[f64], mu_list: &[u32], n_probe: usize) -> Result<DecayReport> {
    let sl = glued.slice_len();
    let mut u_logs = Vec::new();
    let mut a_logs = Vec::new();
    for &s0 in sigma_samples {
        let per_q: Result<Vec<(Vec<f64>, f64)>> = (0..sl)
            .into_par_iter()
            .map(|q| {
                let j = glued.evaluate_u(s0, q, n_probe)?;
                let logs = (0..=n_probe)
                    .map(|k| (0..j.derivs.len()).map(|a| j.log_abs(a, k)).fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                let a = glued.evaluate_a(s0, q)?.value.norm().ln();
                Ok((logs, a))
            })
            .collect();
        let per_q = per_q?;
        let sup: Vec<f64> =
            (0..=n_probe).map(|k| per_q.iter().map(|p| p.0[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        u_logs.push(sup);
        a_logs.push(per_q.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    }
    let mut u_rows = Vec::new();
    let mut a_rows = Vec::new();
    for (i, &s0) in sigma_samples.iter().enumerate() {
        for &mu in mu_list {
            let w = -(mu as f64) * s0.ln();
            for k in 0..=n_probe {
                let l = u_logs[i][k] + w;
                u_rows.push(DecayRow { sigma0: s0, n_deriv: k, mu, sup_value: l.exp(), log_sup: l });
            }
            let l = a_logs[i] + w;
            a_rows.push(DecayRow { sigma0: s0, n_deriv: 0, mu, sup_value: l.exp(), log_sup: l });
        }
    }
    let step = |rows: &[DecayRow]| {
        let mut worst = f64::INFINITY;
        for r in rows {
            if let Some(next) = rows.iter().find(|o| {
                o.mu == r.mu && o.n_deriv == r.n_deriv && o.sigma0 < r.sigma0 && {
                    let i = sigma_samples.iter().position(|s| *s == r.sigma0).unwrap();
                    sigma_samples.get(i + 1) == Some(&o.sigma0)
                }
            }) {
                worst = worst.min(r.log_sup - next.log_sup);
            }
        }
        worst.exp()
    };
    let u_min_step = step(&u_rows);
    let a_min_step = step(&a_rows);
    // least squares of log sup |u| against sigma^-2
    let xs: Vec<f64> = sigma_samples.iter().map(|s| s.powi(-2)).collect();
    let ys: Vec<f64> = u_logs.iter().map(|l| l[0]).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let q_fit = -sxy / sxx;
    Ok(DecayReport {
        sigma_samples: sigma_samples.to_vec(),
        u_rows,
        a_rows,
        q_fit,
        u_min_step,
        a_min_step,
        u_ok: u_min_step >= 10.0,
        a_ok: a_min_step >= 10.0,
        q_ok: (0.875..=1.125).contains(&q_fit),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeKind {
    Interior,
    NearSurface,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Probe {
    pub sigma: f64,
    pub q: usize,
    pub kind: ProbeKind,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe: Probe,
    pub relative: f64,
    pub conditioning: f64,
    pub bands: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificationSummary {
    pub interior: usize,
    pub near_surface: usize,
    pub max_interior: f64,
    pub max_near_surface: f64,
    pub tol_interior: f64,
    pub tol_near_surface: f64,
    pub failures: usize,
    /// min over two-band probes of `|v_n + v_(n+1)| / (|v_dominant| min(|sigma - s_n|, 1))`
    pub k0: f64,
    pub pass: bool,
    pub probes: Vec<ProbeResult>,
}

/// Band with the largest `f_n` among those active at sigma.
pub fn dominant(glued: &GluedCounterexample, sigma: f64) -> Option<u32> {
    glued
        .active(sigma)
        .into_iter()
        .map(|b| (b.n, f_value(b.n, sigma)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0)
}

/// Probes at sigma-nodes of each band: `interior` ones sit on the grid of the dominant band,
/// more than `2 near` cells from both surfaces;
/// `near` ones within `near` cells of `S_n`. Slice nodes are taken with stride `q_stride`,
/// keeping `margin` cells from every grid edge.
pub fn probe_set(glued: &GluedCounterexample, q_stride: usize, sigma_stride: usize, margin: usize, near: usize) -> Vec<Probe> {
    let mut out = Vec::new();
    let g0 = &glued.bands[0].op.grid;
    let shape = g0.shape();
    let qs: Vec<usize> = (0..g0.slice_len())
        .filter(|&q| {
            let x = g0.unindex(q);
            x.1.iter().zip(&shape[1..]).all(|(i, l)| *l == 1 || (*i >= margin && *i + margin < *l))
                && x.2 >= margin
                && x.2 + margin < g0.s.len
        })
        .step_by(q_stride.max(1))
        .collect();
    for b in &glued.bands {
        let g = &b.op.grid;
        let h = g.z.h / (b.n as f64).powi(2);
        let lower = glued.surface(b.n);
        let upper = glued.surface(b.n - 1);
        for &q in &qs {
            for i in margin..g.z.len - margin {
                let s = g.sigma(i);
                if chi_value(b.n, s) == 0.0 {
                    continue;
                }
                let dl = lower.map(|x| (s - x.sigma[q]).abs() / h).unwrap_or(f64::INFINITY);
                let du = upper.map(|x| (s - x.sigma[q]).abs() / h).unwrap_or(f64::INFINITY);
                if dl <= near as f64 {
                    out.push(Probe { sigma: s, q, kind: ProbeKind::NearSurface });
                } else if dl > 2.0 * near as f64
                    && du > 2.0 * near as f64
                    && i % sigma_stride.max(1) == 0
                    && dominant(glued, s) == Some(b.n)
                {
                    out.push(Probe { sigma: s, q, kind: ProbeKind::Interior });
                }
            }
        }
    }
    out
}

/// Compares `P u`, assembled band by band from the conjugated operator on the envelopes, with
/// `a u`, relative to `|P u| + |a u|`.
pub fn certify_equation(glued: &GluedCounterexample, probes: &[Probe], tol_interior: f64, tol_near: f64) -> Result<CertificationSummary> {
    let results: Result<Vec<(ProbeResult, Option<f64>)>> = probes
        .par_iter()
        .map(|p| {
            let vals = glued.values_at(p.sigma, p.q)?;
            let a = quotient(&vals);
            let t = weights(&vals);
            let mut pu = Complex64::new(0.0, 0.0);
            let mut u = Complex64::new(0.0, 0.0);
            let mut dom = 0.0f64;
            for (v, w) in vals.iter().zip(&t) {
                pu += w * v.conjugated.to_c64();
                let d = w * v.envelope.to_c64();
                u += d;
                dom = dom.max(d.norm());
            }
            let au = a.value * u;
            let relative = (pu - au).norm() / (pu.norm() + au.norm() + 1e-300);
            let tol = if p.kind == ProbeKind::Interior { tol_interior } else { tol_near };
            let k0 = if vals.len() == 2 {
                let n = vals[0].n.min(vals[1].n);
                glued.surface(n).map(|s| u.norm() / (dom * (p.sigma - s.sigma[p.q]).abs().min(1.0)))
            } else {
                None
            };
            Ok((
                ProbeResult { probe: *p, relative, conditioning: a.conditioning, bands: vals.len(), pass: relative <= tol },
                k0,
            ))
        })
        .collect();
    let results = results?;
    let max_of = |kind: ProbeKind| {
        results.iter().filter(|r| r.0.probe.kind == kind).map(|r| r.0.relative).fold(0.0, f64::max)
    };
    let interior = results.iter().filter(|r| r.0.probe.kind == ProbeKind::Interior).count();
    let near_surface = results.len() - interior;
    let failures = results.iter().filter(|r| !r.0.pass).count();
    let k0 = results.iter().filter_map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(CertificationSummary {
        interior,
        near_surface,
        max_interior: max_of(ProbeKind::Interior),
        max_near_surface: max_of(ProbeKind::NearSurface),
        tol_interior,
        tol_near_surface: tol_near,
        failures,
        k0,
        pass: failures == 0 && interior >= 500 && near_surface >= 100,
        probes: results.into_iter().map(|r| r.0).collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlueReport {
    pub signs: Vec<crate::interference::SignReport>,
    pub corrections: Vec<crate::interference::ModifiedBandReport>,
    /// min and max of `d eta / d sigma` per band
    pub jacobian: Vec<(f64, f64)>,
    /// `max |Phi~_n| / B_n` on `S_n` after correction, `n0..nmax`
    pub phi_tilde: Vec<f64>,
}

/// Locates the surfaces, builds the corrections and glues bands `n0..=nmax`. `bands` holds
/// operator and uncorrected beam for `n0..=nmax+1`.
pub fn glue(
    bands: Vec<(BandOperator, Beam)>,
    cfg: &crate::interference::CorrectionConfig,
    probe_nodes: &[usize],
) -> Result<(GluedCounterexample, GlueReport)> {
    use crate::interference::{build_omega, check_sign_bounds, correction_data, locate_surface, modified_band};
    if bands.len() < 2 {
        return Err(Error::Config("gluing needs at least two bands".into()));
    }
    let n0 = bands[0].0.n;
    let nmax = bands[bands.len() - 1].0.n - 1;
    let mut surfaces = Vec::new();
    let mut signs = Vec::new();
    for i in 0..bands.len() - 1 {
        let n = n0 + i as u32;
        let s = locate_surface(n, &bands[i].1, &bands[i + 1].1).map_err(|e| e.in_band(n, "interference"))?;
        signs.push(check_sign_bounds(n, &s));
        surfaces.push(s);
    }
    let mut out = Vec::new();
    let mut corrections = Vec::new();
    let mut jacobian = Vec::new();
    for (i, (op, beam)) in bands.into_iter().enumerate().take((nmax - n0 + 1) as usize) {
        let n = op.n;
        let upper = if i > 0 { Some(&surfaces[i - 1]) } else { None };
        let chart = EtaChart::new(&op, &surfaces[i], upper);
        let data = correction_data(&op, &chart, &beam.residual, upper.is_some(), cfg).map_err(|e| e.in_band(n, "correction"))?;
        let omega = build_omega(&op, data)?;
        let mut modified = beam.clone();
        corrections.push(modified_band(&op, &mut modified, &chart, &omega, probe_nodes)?);
        jacobian.push(chart.jacobian_bounds());
        out.push(GluedBand { n, op, beam, chart, omega });
    }
    let glued = GluedCounterexample { n0, nmax, bands: out, surfaces };
    let mut phi_tilde = Vec::new();
    for n in n0..nmax {
        let s = glued.surface(n).unwrap();
        let (lo, hi) = (glued.band(n).unwrap(), glued.band(n + 1).unwrap());
        let mut worst = 0.0f64;
        for q in 0..glued.slice_len() {
            let a = glued.band_values(lo, s.sigma[q], q)?;
            let b = glued.band_values(hi, s.sigma[q], q)?;
            let phi = a.f + a.envelope.norm().ln() - b.f - b.envelope.norm().ln();
            worst = worst.max(phi.abs() / crate::interference::b_n(n));
        }
        phi_tilde.push(worst);
    }
    Ok((glued, GlueReport { signs, corrections, jacobian, phi_tilde }))
}
