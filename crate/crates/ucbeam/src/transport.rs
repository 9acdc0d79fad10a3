//! Transport operators `T1 = d_s + box phi`, `T2`, the amplitude hierarchy `c_j`, the band
//! beam and the conjugation identity `i lambda T1 + T2 = e^-Theta P e^Theta`.
//!
//! Envelopes live in complex double-double: `lambda = n^(2 alpha)` reaches 1e15 and the
//! residual ladder goes down to 1e-12, so the identity has to survive ~30 digits.

use crate::bands::{chi_value, f_jet, BandDomain, BandGrid};
use crate::dd::{pow_dd, Cdd, Dd, ZERO};
use crate::eikonal::AdaptedChart;
use crate::error::{Error, Result};
use crate::stencil::AxisStencils;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Fixed truncation depth; `None` uses `min(4, n / 4)`.
    pub depth: Option<usize>,
    pub ode_tol: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig { alpha: 6.0, beta: 1.0, depth: None, ode_tol: 1e-10 }
    }
}

impl HierarchyConfig {
    pub fn validate(&self, strict_alpha: bool) -> Result<()> {
        if !(self.alpha > self.beta && self.beta > 0.0) {
            return Err(Error::Config(format!("need alpha > beta > 0, got {} and {}", self.alpha, self.beta)));
        }
        if self.alpha < 5.0 {
            return Err(Error::Config(format!("alpha = {} is below 5", self.alpha)));
        }
        if strict_alpha && self.alpha <= 8.0 {
            return Err(Error::Config(format!("strict mode needs alpha > 8, got {}", self.alpha)));
        }
        if !(self.ode_tol > 0.0) {
            return Err(Error::Config("ode_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn depth_for(&self, n: u32) -> usize {
        self.depth.unwrap_or_else(|| 4.min(n as usize / 4))
    }
}

/// Complex field on a band grid.
#[derive(Clone, Debug)]
pub struct EnvelopeField {
    pub grid: BandGrid,
    pub values: Vec<Cdd>,
    pub tag: String,
}

impl EnvelopeField {
    pub fn zeros(grid: &BandGrid, tag: &str) -> Self {
        EnvelopeField { grid: grid.clone(), values: vec![ZERO; grid.size()], tag: tag.into() }
    }

    pub fn from_fn(grid: &BandGrid, tag: &str, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.size()).map(|k| Cdd::from_c64(f(&grid.coords(k)))).collect();
        EnvelopeField { grid: grid.clone(), values, tag: tag.into() }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: Dd, other: &EnvelopeField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += y.scale_dd(a);
        }
    }

    pub fn value(&self, i: usize, iy: &[usize], is: usize) -> Complex64 {
        self.values[self.grid.index(i, iy, is)].to_c64()
    }

    /// Binary dump: `u32 n`, `u32 rank`, per axis `u64 len, f64 lo, f64 hi`, then
    /// row-major `(re, im)` little-endian doubles.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(16 + 16 * self.values.len());
        let g = &self.grid;
        buf.extend_from_slice(&g.n.to_le_bytes());
        let shape = g.shape();
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        let mut axes = vec![(g.z.len, g.sigma(0), g.sigma(g.z.len - 1))];
        axes.extend(g.ybar.iter().map(|a| (a.len, a.lo, a.hi())));
        axes.push((g.s.len, g.s.lo, g.s.hi()));
        for (len, lo, hi) in axes {
            buf.extend_from_slice(&(len as u64).to_le_bytes());
            buf.extend_from_slice(&lo.to_le_bytes());
            buf.extend_from_slice(&hi.to_le_bytes());
        }
        for v in &self.values {
            let c = v.to_c64();
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// CSV of the `s = 0`, central-ybar line: `sigma,re,im,abs`.
    pub fn write_csv_slice(&self, path: &Path) -> Result<()> {
        let g = &self.grid;
        let iy: Vec<usize> = g.ybar.iter().map(|a| a.len / 2).collect();
        let is = g.s_zero();
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "sigma,re,im,abs")?;
        for i in 0..g.z.len {
            let v = self.value(i, &iy, is);
            writeln!(f, "{:.12e},{:.12e},{:.12e},{:.12e}", g.sigma(i), v.re, v.im, v.norm())?;
        }
        Ok(())
    }
}

/// Coefficients of `i lambda T1 + T2` at one point, split by origin.
#[derive(Clone, Debug)]
pub struct OpCoeffs {
    pub ginv: DMatrix<f64>,
    /// first-order coefficients of box: `d_a g^ab + g^ab d_a log sqrt|g|`
    pub bbox: Vec<f64>,
    pub box_phi: f64,
    /// `[f, f', f'']` of the amplitude profile
    pub f: [f64; 3],
    /// `xi / sigma^2`
    pub potential: Complex64,
}

impl OpCoeffs {
    pub fn at(chart: &AdaptedChart, n: u32, x: &[f64]) -> Result<Self> {
        let md = chart.metric_data(x)?;
        let bbox = AdaptedChart::box_first_order(&md);
        let box_phi = chart.box_phi(&md);
        Ok(OpCoeffs { ginv: md.ginv, bbox, box_phi, f: f_jet(n, x[0]), potential: chart.xi / (x[0] * x[0]) })
    }

    /// Zeroth-order coefficient of `T2`: `xi/sigma^2 + f' box sigma + (f'' + f'^2) g^ss`.
    pub fn t2_zeroth(&self) -> Cdd {
        let [_, f1, f2] = self.f;
        let f1 = Dd::from(f1);
        let quad = (f1 * f1 + Dd::from(f2)) * self.ginv[(0, 0)];
        Cdd::from_c64(self.potential) + Cdd::new(f1 * self.bbox[0] + quad, Dd::from(0.0))
    }

    /// First-order coefficients of `T2`: `B^b + 2 f' g^{sigma b}`.
    pub fn t2_first(&self) -> Vec<Dd> {
        let f1 = Dd::from(self.f[1]);
        (0..self.bbox.len()).map(|b| Dd::from(self.bbox[b]) + f1 * (2.0 * self.ginv[(0, b)])).collect()
    }
}

/// Value, gradient and Hessian of a complex field at a point.
#[derive(Clone, Debug)]
pub struct DdJet {
    pub v: Cdd,
    pub d: Vec<Cdd>,
    pub h: DMatrix<Cdd>,
}

impl DdJet {
    pub fn zero(r: usize) -> Self {
        DdJet { v: ZERO, d: vec![ZERO; r], h: DMatrix::from_element(r, r, ZERO) }
    }

    pub fn add_scaled(&mut self, o: &DdJet, w: f64) {
        self.v += o.v.scale(w);
        for (a, b) in self.d.iter_mut().zip(&o.d) {
            *a += b.scale(w);
        }
        for (a, b) in self.h.iter_mut().zip(o.h.iter()) {
            *a += b.scale(w);
        }
    }
}

/// Integer-weight stencils (weights times 12) so that weight sums vanish exactly.
#[derive(Clone, Debug)]
struct IntStencils {
    d1: Vec<(usize, Vec<f64>)>,
    d2: Vec<(usize, Vec<f64>)>,
}

fn snap(w: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|x| {
            let y = x * 12.0;
            let r = y.round();
            assert!((y - r).abs() < 1e-8, "stencil weight {} is not a multiple of 1/12", x);
            r
        })
        .collect()
}

impl IntStencils {
    fn new(len: usize) -> Self {
        let a = AxisStencils::new(len);
        IntStencils {
            d1: a.d1.iter().map(|(s, w)| (*s, snap(w))).collect(),
            d2: a.d2.iter().map(|(s, w)| (*s, snap(w))).collect(),
        }
    }
}

/// Discretised band operator with per-line coefficients. The chart metric is taken to be
/// independent of `s`, so coefficients are stored per `(sigma, ybar)` line.
pub struct BandOperator {
    pub n: u32,
    pub grid: BandGrid,
    pub chart: AdaptedChart,
    pub lambda: Dd,
    /// `n^-alpha`
    pub step_factor: Dd,
    pub alpha: f64,
    pub beta: f64,
    pub coeffs: Vec<OpCoeffs>,
    stencils: Vec<IntStencils>,
    /// `1 / (12 h_a)` and `1 / (12 h_a^2)`
    scale1: Vec<Dd>,
    scale2: Vec<Dd>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl BandOperator {
    pub fn new(band: &BandDomain, chart: &AdaptedChart, cfg: &HierarchyConfig) -> Result<Self> {
        let grid = band.grid.clone();
        let n = band.n;
        let shape = grid.shape();
        let rank = shape.len();
        let strides: Vec<usize> = (0..rank).map(|a| grid.stride(a)).collect();
        let lines = grid.size() / grid.s.len;
        let coeffs: Result<Vec<OpCoeffs>> = (0..lines)
            .into_par_iter()
            .map(|l| {
                let mut x = grid.coords(l * grid.s.len);
                let last = x.len() - 1;
                x[last] = 0.0;
                OpCoeffs::at(chart, n, &x)
            })
            .collect();
        let coeffs = coeffs.map_err(|e| e.in_band(n, "operator"))?;
        let stencils = shape.iter().map(|&len| IntStencils::new(len)).collect();
        let inv12 = |p: i32, a: usize| {
            if shape[a] > 1 {
                crate::dd::recip(Dd::from(12.0) * Dd::from(grid.spacing(a)).powi(p))
            } else {
                Dd::from(0.0)
            }
        };
        let scale1 = (0..rank).map(|a| inv12(1, a)).collect();
        let scale2 = (0..rank).map(|a| inv12(2, a)).collect();
        Ok(BandOperator {
            n,
            grid,
            chart: chart.clone(),
            lambda: pow_dd(n, 2.0 * cfg.alpha),
            step_factor: pow_dd(n, -cfg.alpha),
            alpha: cfg.alpha,
            beta: cfg.beta,
            coeffs,
            stencils,
            scale1,
            scale2,
            shape,
            strides,
        })
    }

    /// Lines where `chi_n > 0`; the hierarchy is solved only there.
    pub fn supported(&self, line: usize) -> bool {
        let (i, _, _) = self.grid.unindex(line * self.grid.s.len);
        chi_value(self.n, self.grid.sigma(i)) > 0.0
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn line_of(&self, k: usize) -> usize {
        k / self.grid.s.len
    }

    fn pos(&self, k: usize, a: usize) -> usize {
        (k / self.strides[a]) % self.shape[a]
    }

    fn raw(&self, v: &[Cdd], k: usize, a: usize, w: &(usize, Vec<f64>)) -> Cdd {
        let base = k - self.pos(k, a) * self.strides[a];
        let mut acc = ZERO;
        for (i, wi) in w.1.iter().enumerate() {
            if *wi != 0.0 {
                acc += v[base + (w.0 + i) * self.strides[a]].scale(*wi);
            }
        }
        acc
    }

    /// `d_a v` at node k.
    pub fn d1(&self, v: &[Cdd], k: usize, a: usize) -> Cdd {
        if self.shape[a] < 2 {
            return ZERO;
        }
        let w = &self.stencils[a].d1[self.pos(k, a)];
        self.raw(v, k, a, w).scale_dd(self.scale1[a])
    }

    /// `d_a d_a v` at node k.
    pub fn d2(&self, v: &[Cdd], k: usize, a: usize) -> Cdd {
        if self.shape[a] < 2 {
            return ZERO;
        }
        let w = &self.stencils[a].d2[self.pos(k, a)];
        self.raw(v, k, a, w).scale_dd(self.scale2[a])
    }

    /// `d_a d_b v` (a != b) as nested first-derivative stencils.
    pub fn dmix(&self, v: &[Cdd], k: usize, a: usize, b: usize) -> Cdd {
        if self.shape[a] < 2 || self.shape[b] < 2 {
            return ZERO;
        }
        let (start, w) = &self.stencils[a].d1[self.pos(k, a)];
        let base = k - self.pos(k, a) * self.strides[a];
        let mut acc = ZERO;
        for (i, wi) in w.iter().enumerate() {
            if *wi != 0.0 {
                acc += self.d1(v, base + (start + i) * self.strides[a], b).scale(*wi);
            }
        }
        acc.scale_dd(self.scale1[a])
    }

    /// `g^ab d_a d_b v` at node k.
    fn principal(&self, v: &[Cdd], k: usize, c: &OpCoeffs) -> Cdd {
        let r = self.rank();
        let mut acc = ZERO;
        for a in 0..r {
            let gaa = c.ginv[(a, a)];
            if gaa != 0.0 {
                acc += self.d2(v, k, a).scale(gaa);
            }
            for b in a + 1..r {
                let gab = c.ginv[(a, b)];
                if gab != 0.0 {
                    acc += self.dmix(v, k, a, b).scale(2.0 * gab);
                }
            }
        }
        acc
    }

    pub fn t1_at(&self, v: &[Cdd], k: usize) -> Cdd {
        let c = &self.coeffs[self.line_of(k)];
        let s = self.rank() - 1;
        self.d1(v, k, s) + v[k].scale(c.box_phi)
    }

    pub fn t2_at(&self, v: &[Cdd], k: usize) -> Cdd {
        let c = &self.coeffs[self.line_of(k)];
        let mut acc = self.principal(v, k, c);
        for (b, cb) in c.t2_first().into_iter().enumerate() {
            if cb.hi() != 0.0 {
                acc += self.d1(v, k, b).scale_dd(cb);
            }
        }
        acc + v[k] * c.t2_zeroth()
    }

    fn map_nodes(&self, h: &EnvelopeField, tag: &str, f: impl Fn(&[Cdd], usize) -> Cdd + Sync) -> EnvelopeField {
        let values: Vec<Cdd> = (0..h.values.len()).into_par_iter().map(|k| f(&h.values, k)).collect();
        EnvelopeField { grid: h.grid.clone(), values, tag: tag.into() }
    }

    pub fn apply_t1(&self, h: &EnvelopeField) -> EnvelopeField {
        self.map_nodes(h, "T1", |v, k| self.t1_at(v, k))
    }

    pub fn apply_t2(&self, h: &EnvelopeField) -> EnvelopeField {
        self.map_nodes(h, "T2", |v, k| self.t2_at(v, k))
    }

    /// `(i lambda T1 + T2) h` assembled from the two transport operators.
    pub fn apply_l(&self, h: &EnvelopeField) -> EnvelopeField {
        self.map_nodes(h, "L", |v, k| self.t1_at(v, k).mul_i().scale_dd(self.lambda) + self.t2_at(v, k))
    }

    /// `e^-Theta P (e^Theta w)` with `Theta = f + i lambda phi`, expanded as
    /// `box w + 2 g(dTheta, dw) + (box Theta + g(dTheta, dTheta) + xi/sigma^2) w`
    /// directly from the metric and the analytic phase and profile.
    pub fn conjugated_at(&self, v: &[Cdd], k: usize) -> Cdd {
        let c = &self.coeffs[self.line_of(k)];
        let r = self.rank();
        let dphi = self.chart.phi_grad();
        let [_, f1, f2] = self.f_at(c);
        let dtheta: Vec<Cdd> = (0..r)
            .map(|a| {
                let re = if a == 0 { Dd::from(f1) } else { Dd::from(0.0) };
                Cdd::new(re, self.lambda * dphi[a])
            })
            .collect();
        let dw: Vec<Cdd> = (0..r).map(|a| self.d1(v, k, a)).collect();
        let mut acc = self.principal(v, k, c);
        let mut gtt = ZERO;
        let mut box_theta = Cdd::real(f2 * c.ginv[(0, 0)]);
        for a in 0..r {
            acc += dw[a].scale(c.bbox[a]);
            box_theta += dtheta[a].scale(c.bbox[a]);
            for b in 0..r {
                let gab = c.ginv[(a, b)];
                if gab != 0.0 {
                    acc += (dtheta[a] * dw[b]).scale(2.0 * gab);
                    gtt += (dtheta[a] * dtheta[b]).scale(gab);
                }
            }
        }
        acc + v[k] * (box_theta + gtt + Cdd::from_c64(c.potential))
    }

    /// Grid derivatives of `v` at node k, second derivatives only where `c` needs them.
    pub fn grid_jet(&self, v: &[Cdd], k: usize, c: &OpCoeffs) -> DdJet {
        let r = self.rank();
        let d = (0..r).map(|a| self.d1(v, k, a)).collect();
        let mut h = DMatrix::from_element(r, r, ZERO);
        for a in 0..r {
            if c.ginv[(a, a)] != 0.0 {
                h[(a, a)] = self.d2(v, k, a);
            }
            for b in a + 1..r {
                if c.ginv[(a, b)] != 0.0 {
                    let m = self.dmix(v, k, a, b);
                    h[(a, b)] = m;
                    h[(b, a)] = m;
                }
            }
        }
        DdJet { v: v[k], d, h }
    }

    /// Conjugated operator applied to a 2-jet with the given coefficients.
    pub fn conjugated_jet(&self, c: &OpCoeffs, j: &DdJet) -> Cdd {
        let r = self.rank();
        let dphi = self.chart.phi_grad();
        let [_, f1, f2] = c.f;
        let dtheta: Vec<Cdd> = (0..r)
            .map(|a| {
                let re = if a == 0 { Dd::from(f1) } else { Dd::from(0.0) };
                Cdd::new(re, self.lambda * dphi[a])
            })
            .collect();
        let mut acc = ZERO;
        let mut gtt = ZERO;
        let mut box_theta = Cdd::real(f2 * c.ginv[(0, 0)]);
        for a in 0..r {
            acc += j.d[a].scale(c.bbox[a]);
            box_theta += dtheta[a].scale(c.bbox[a]);
            for b in 0..r {
                let gab = c.ginv[(a, b)];
                if gab != 0.0 {
                    acc += j.h[(a, b)].scale(gab);
                    acc += (dtheta[a] * j.d[b]).scale(2.0 * gab);
                    gtt += (dtheta[a] * dtheta[b]).scale(gab);
                }
            }
        }
        acc + j.v * (box_theta + gtt + Cdd::from_c64(c.potential))
    }

    /// `(i lambda T1 + T2)` applied to a 2-jet through `l_coeffs_at`.
    pub fn l_jet(&self, x: &[f64], j: &DdJet) -> Result<Cdd> {
        let (a, b, c) = self.l_coeffs_at(x)?;
        let r = self.rank();
        let mut acc = j.v * c;
        for i in 0..r {
            acc += j.d[i] * b[i];
            for k in 0..r {
                if a[(i, k)] != 0.0 {
                    acc += j.h[(i, k)].scale(a[(i, k)]);
                }
            }
        }
        Ok(acc)
    }

    fn f_at(&self, c: &OpCoeffs) -> [f64; 3] {
        c.f
    }

    pub fn apply_conjugated(&self, w: &EnvelopeField) -> EnvelopeField {
        self.map_nodes(w, "conjugated", |v, k| self.conjugated_at(v, k))
    }

    /// `i lambda T1 + T2` in `(sigma, ybar, s)` at an arbitrary point, as second-order
    /// coefficients `(A, B, C)`: `A^ab d_a d_b + B^b d_b + C`.
    pub fn l_coeffs_at(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<Cdd>, Cdd)> {
        let c = OpCoeffs::at(&self.chart, self.n, x)?;
        let r = self.rank();
        let first = c.t2_first();
        let b: Vec<Cdd> = (0..r)
            .map(|a| {
                let re = first[a];
                let im = if a == r - 1 { self.lambda } else { Dd::from(0.0) };
                Cdd::new(re, im)
            })
            .collect();
        let cc = c.t2_zeroth() + Cdd::new(Dd::from(0.0), self.lambda * c.box_phi);
        Ok((c.ginv, b, cc))
    }
}

/// Relative deviation between `(i lambda T1 + T2) w` and the conjugated operator at nodes.
pub fn conjugation_residual(op: &BandOperator, w: &EnvelopeField, nodes: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &k in nodes {
        let a = op.t1_at(&w.values, k).mul_i().scale_dd(op.lambda) + op.t2_at(&w.values, k);
        let b = op.conjugated_at(&w.values, k);
        let scale = a.norm().max(b.norm());
        if scale > 0.0 {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    worst
}

/// Interior nodes at least `margin` cells from every resolved edge.
pub fn interior_nodes(grid: &BandGrid, margin: usize) -> Vec<usize> {
    let shape = grid.shape();
    (0..grid.size())
        .filter(|&k| {
            let (i, iy, is) = grid.unindex(k);
            let mut idx = vec![i];
            idx.extend(iy);
            idx.push(is);
            idx.iter().zip(&shape).all(|(&p, &len)| len == 1 || (p >= margin && p + margin < len))
        })
        .collect()
}

/// Cubic interpolation weights for sub-node positions `i + q/4`, q = 1..3, as exact
/// rationals evaluated in double-double.
struct SubNodes {
    table: Vec<[(usize, [Dd; 4]); 3]>,
}

fn lagrange_dd(x: f64, nodes: &[f64; 4]) -> [Dd; 4] {
    let mut w = [Dd::from(0.0); 4];
    for j in 0..4 {
        let mut num = 1.0;
        let mut den = 1.0;
        for m in 0..4 {
            if m != j {
                num *= x - nodes[m];
                den *= nodes[j] - nodes[m];
            }
        }
        w[j] = crate::dd::div(Dd::from(num), Dd::from(den));
    }
    w
}

impl SubNodes {
    fn new(len: usize) -> Self {
        let table = (0..len.saturating_sub(1))
            .map(|i| {
                let start = if i == 0 { 0 } else if i + 2 >= len { len.saturating_sub(4) } else { i - 1 };
                let nodes = [start as f64, (start + 1) as f64, (start + 2) as f64, (start + 3) as f64];
                let mut out = [(start, [Dd::from(0.0); 4]); 3];
                for q in 1..=3 {
                    out[q - 1] = (start, lagrange_dd(i as f64 + q as f64 / 4.0, &nodes));
                }
                out
            })
            .collect();
        SubNodes { table }
    }

    /// Source at index position `i + q/4`.
    fn at(&self, src: &[Cdd], i: usize, q: usize) -> Cdd {
        if q == 0 {
            return src[i];
        }
        if q == 4 {
            return src[i + 1];
        }
        let (s, w) = &self.table[i][q - 1];
        let mut acc = ZERO;
        for j in 0..4 {
            acc += src[s + j].scale_dd(w[j]);
        }
        acc
    }
}

/// RK4 along one s-line for `c' = -b c + src(s)` from `s = 0`, in both directions.
/// `sub` = 1 uses the grid step, 2 halves it.
fn rk4_line(b: f64, c0: Cdd, src: &[Cdd], i0: usize, h: f64, sub: usize, tab: &SubNodes) -> Vec<Cdd> {
    let len = src.len();
    let mut out = vec![ZERO; len];
    out[i0] = c0;
    let rhs = |c: Cdd, s: Cdd| s - c.scale(b);
    let hs = Dd::from(h) / sub as f64;
    let half = hs * 0.5;
    let sixth = hs / 6.0;
    let q_step = 4 / sub;
    // forward
    let mut c = c0;
    for i in i0..len - 1 {
        for m in 0..sub {
            let q0 = m * q_step;
            let s0 = tab.at(src, i, q0);
            let sm = tab.at(src, i, q0 + q_step / 2);
            let s1 = tab.at(src, i, q0 + q_step);
            let k1 = rhs(c, s0);
            let k2 = rhs(c + k1.scale_dd(half), sm);
            let k3 = rhs(c + k2.scale_dd(half), sm);
            let k4 = rhs(c + k3.scale_dd(hs), s1);
            c += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale_dd(sixth);
        }
        out[i + 1] = c;
    }
    // backward
    let mut c = c0;
    for i in (1..=i0).rev() {
        for m in 0..sub {
            // positions measured from node i-1: start at 4, go down
            let q0 = 4 - m * q_step;
            let s0 = tab.at(src, i - 1, q0);
            let sm = tab.at(src, i - 1, q0 - q_step / 2);
            let s1 = tab.at(src, i - 1, q0 - q_step);
            let k1 = rhs(c, s0);
            let k2 = rhs(c - k1.scale_dd(half), sm);
            let k3 = rhs(c - k2.scale_dd(half), sm);
            let k4 = rhs(c - k3.scale_dd(hs), s1);
            c -= (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale_dd(sixth);
        }
        out[i - 1] = c;
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportReport {
    pub n: u32,
    pub depth: usize,
    /// Richardson estimate per order, relative to the field sup
    pub richardson: Vec<f64>,
    /// `sup |T1 c_0|`, then `sup |i T1 c_j + n^-alpha T2 c_(j-1)| / sup |n^-alpha T2 c_(j-1)|`
    pub residuals: Vec<f64>,
    pub sups: Vec<f64>,
    /// `sup |c_j|` at nodes where `chi_n = 0`
    pub support_leak: Vec<f64>,
    /// `K0` bracket of `c_0 / chi_n` on the support
    pub c0_ratio: (f64, f64),
    pub stopped_early: bool,
}

/// Solves `T1 c_0 = 0, c_0(s=0) = chi_n` and `i T1 c_j + n^-alpha T2 c_(j-1) = 0, c_j(0) = 0`.
pub fn solve_hierarchy(op: &BandOperator, cfg: &HierarchyConfig) -> Result<(Vec<EnvelopeField>, TransportReport)> {
    let n = op.n;
    let grid = &op.grid;
    let depth = cfg.depth_for(n);
    let ls = grid.s.len;
    let i0 = grid.s_zero();
    let h = grid.s.h;
    let tab = SubNodes::new(ls);
    let mut fields: Vec<EnvelopeField> = Vec::with_capacity(depth + 1);
    let mut richardson = Vec::new();
    let mut residuals = Vec::new();
    let mut source = EnvelopeField::zeros(grid, "source");
    let mut stopped_early = false;
    let mut last_ladder = f64::INFINITY;
    for j in 0..=depth {
        let results: Vec<(Vec<Cdd>, f64)> = source
            .values
            .par_chunks(ls)
            .enumerate()
            .map(|(line, src)| {
                if !op.supported(line) {
                    return (vec![ZERO; ls], 0.0);
                }
                let b = op.coeffs[line].box_phi;
                let c0 = if j == 0 {
                    let (i, _, _) = grid.unindex(line * ls);
                    Cdd::real(chi_value(n, grid.sigma(i)))
                } else {
                    ZERO
                };
                let coarse = rk4_line(b, c0, src, i0, h, 1, &tab);
                let fine = rk4_line(b, c0, src, i0, h, 2, &tab);
                let est = coarse.iter().zip(&fine).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max) / 15.0;
                (fine, est)
            })
            .collect();
        let mut values = Vec::with_capacity(grid.size());
        let mut est = 0.0f64;
        for (v, e) in results {
            values.extend(v);
            est = est.max(e);
        }
        let field = EnvelopeField { grid: grid.clone(), values, tag: format!("c{}", j) };
        let sup = field.sup().max(f64::MIN_POSITIVE);
        let rel = est / sup;
        richardson.push(rel);
        if rel > cfg.ode_tol {
            return Err(Error::OdeToleranceFailure { n, order: j, estimate: rel });
        }
        // transport residual
        let t1 = op.apply_t1(&field);
        let res = if j == 0 {
            t1.sup()
        } else {
            let mut r = 0.0f64;
            let mut s_sup = 0.0f64;
            for (k, (a, s)) in t1.values.iter().zip(&source.values).enumerate() {
                if op.supported(op.line_of(k)) {
                    r = r.max((*a - *s).norm());
                    s_sup = s_sup.max(s.norm());
                }
            }
            r / s_sup.max(f64::MIN_POSITIVE)
        };
        residuals.push(res);
        let t2 = op.apply_t2(&field);
        // next source: i n^-alpha T2 c_j
        let mut next = t2.clone();
        for v in next.values.iter_mut() {
            *v = v.mul_i().scale_dd(op.step_factor);
        }
        let ladder = t2.sup() * pow_dd(n, -(j as f64) * cfg.alpha).hi();
        fields.push(field);
        if cfg.depth.is_none() && j > 0 && ladder > last_ladder {
            fields.pop();
            stopped_early = true;
            break;
        }
        last_ladder = ladder;
        source = next;
        source.tag = format!("source{}", j + 1);
    }
    let mut leak = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for f in &fields {
        let mut l = 0.0f64;
        for (k, v) in f.values.iter().enumerate() {
            let (i, _, _) = grid.unindex(k);
            if chi_value(n, grid.sigma(i)) == 0.0 {
                l = l.max(v.norm());
            }
        }
        leak.push(l);
    }
    for (k, v) in fields[0].values.iter().enumerate() {
        let (i, _, _) = grid.unindex(k);
        let chi = chi_value(n, grid.sigma(i));
        if chi > 1e-3 {
            let r = v.norm() / chi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let sups = fields.iter().map(|f| f.sup()).collect();
    let depth = fields.len() - 1;
    Ok((
        fields,
        TransportReport { n, depth, richardson, residuals, sups, support_leak: leak, c0_ratio: (lo, hi), stopped_early },
    ))
}

/// Band beam `e^(i lambda phi) e^(f_n) (c_0 + c_star)`.
#[derive(Clone, Debug)]
pub struct Beam {
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: Dd,
    pub depth: usize,
    pub kbar: Vec<f64>,
    pub fields: Vec<EnvelopeField>,
    /// `c_0 + sum n^(-j alpha) c_j`, plus the correction once applied
    pub envelope: EnvelopeField,
    /// `(i lambda T1 + T2)` of the envelope; before correction this is `n^(-J alpha) T2 c_J`
    /// on the support of `chi_n`
    pub residual: EnvelopeField,
    pub omega: Option<EnvelopeField>,
    pub cstar_ratio: f64,
    pub envelope_sup: f64,
}

impl Beam {
    pub fn lambda_f64(&self) -> f64 {
        self.lambda.hi() + self.lambda.lo()
    }
}

pub fn partial_sum(op: &BandOperator, fields: &[EnvelopeField], upto: usize) -> EnvelopeField {
    let mut env = fields[0].clone();
    for (j, f) in fields.iter().enumerate().take(upto + 1).skip(1) {
        env.axpy(pow_dd(op.n, -(j as f64) * op.alpha), f);
    }
    env.tag = format!("partial{}", upto);
    env
}

pub fn assemble_band(op: &BandOperator, fields: Vec<EnvelopeField>) -> Beam {
    let depth = fields.len() - 1;
    let mut envelope = partial_sum(op, &fields, depth);
    envelope.tag = "envelope".into();
    let mut cstar = envelope.clone();
    for (a, b) in cstar.values.iter_mut().zip(&fields[0].values) {
        *a -= *b;
    }
    let cstar_ratio = cstar.sup() / fields[0].sup().max(f64::MIN_POSITIVE);
    let mut residual = op.apply_l(&envelope);
    residual.tag = "residual".into();
    let envelope_sup = envelope.sup();
    Beam {
        n: op.n,
        alpha: op.alpha,
        beta: op.beta,
        lambda: op.lambda,
        depth,
        kbar: op.chart.kbar.clone(),
        fields,
        envelope,
        residual,
        omega: None,
        cstar_ratio,
        envelope_sup,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderRow {
    pub j: usize,
    /// `sup |e^-Theta P e^Theta (partial sum to j)|`
    pub measured: f64,
    /// `n^(-j alpha) sup |T2 c_j|`
    pub predicted: f64,
    pub rel_dev: f64,
    /// measured(j) / measured(j-1)
    pub factor: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderReport {
    pub n: u32,
    pub rows: Vec<LadderRow>,
    pub telescoping_ok: bool,
    pub decreasing: bool,
    /// sup of the conjugated residual on lines where `chi_n = 0` (not part of the ladder)
    pub outside_support: f64,
}

/// Residual ladder of the truncated beams, measured with the conjugated operator on the
/// support of `chi_n`.
pub fn ladder_report(op: &BandOperator, fields: &[EnvelopeField]) -> LadderReport {
    let mut rows: Vec<LadderRow> = Vec::new();
    let sup_on = |f: &EnvelopeField, inside: bool| {
        f.values
            .iter()
            .enumerate()
            .filter(|(k, _)| op.supported(op.line_of(*k)) == inside)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    };
    let mut outside = 0.0f64;
    for j in 0..fields.len() {
        let part = partial_sum(op, fields, j);
        let conj = op.apply_conjugated(&part);
        let measured = sup_on(&conj, true);
        outside = outside.max(sup_on(&conj, false));
        let predicted = sup_on(&op.apply_t2(&fields[j]), true) * (pow_dd(op.n, -(j as f64) * op.alpha)).hi();
        let rel_dev = (measured - predicted).abs() / predicted.max(f64::MIN_POSITIVE);
        let factor = rows.last().map(|r| measured / r.measured);
        rows.push(LadderRow { j, measured, predicted, rel_dev, factor });
    }
    let telescoping_ok = rows.iter().all(|r| r.rel_dev <= 0.01);
    let decreasing = rows.iter().all(|r| r.factor.map_or(true, |f| f < 1.0));
    LadderReport { n: op.n, rows, telescoping_ok, decreasing, outside_support: outside }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{band_domain, Resolution};
    use crate::geometry::DomainSpec;

    fn flat_op(n: u32) -> BandOperator {
        let chart = AdaptedChart::planar(vec![1.0], Complex64::new(-1.0, 0.0));
        let band = band_domain(n, &DomainSpec::default(), &Resolution { sigma: 33, ybar: 9, s: 33 }, true).unwrap();
        BandOperator::new(&band, &chart, &HierarchyConfig::default()).unwrap()
    }

    #[test]
    fn integer_weights() {
        let s = IntStencils::new(9);
        assert_eq!(s.d1[0].1, vec![-25.0, 48.0, -36.0, 16.0, -3.0]);
        assert_eq!(s.d2[4].1, vec![-1.0, 16.0, -30.0, 16.0, -1.0]);
        for (_, w) in s.d1.iter().chain(&s.d2) {
            assert_eq!(w.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn t1_of_s_is_one() {
        let op = flat_op(12);
        let h = EnvelopeField::from_fn(&op.grid, "s", |x| Complex64::new(x[2], 0.0));
        let t = op.apply_t1(&h);
        assert!(t.values.iter().all(|v| (v.to_c64() - 1.0).norm() < 1e-12));
    }

    #[test]
    fn hierarchy_first_order_closed_form() {
        let op = flat_op(12);
        let (f, _) = solve_hierarchy(&op, &HierarchyConfig { depth: Some(1), ..Default::default() }).unwrap();
        let g = &op.grid;
        let i = g.z.len / 2;
        let sigma = g.sigma(i);
        let [_, f1, f2] = f_jet(12, sigma);
        let t2 = -1.0 / (sigma * sigma) + f1 * f1 + f2;
        let is = g.s.len - 1;
        let s = g.s.at(is);
        let expect = Complex64::new(0.0, 12f64.powi(-6) * s * t2);
        let got = f[1].value(i, &[0], is);
        assert!((got - expect).norm() / expect.norm() < 1e-12);
    }
}
