//! Finite-difference and interpolation weights on arbitrary nodes.

/// Fornberg weights: `w[m][i]` approximates the m-th derivative at `x0`
/// from values at `nodes[i]`, for m = 0..=max_deriv.
pub fn fornberg(x0: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Uniform-grid stencil for derivative `m` at integer offset position `at`
/// (relative to the first node) using `npts` nodes, unit spacing.
pub fn unit_weights(at: f64, npts: usize, m: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..npts).map(|i| i as f64).collect();
    fornberg(at, &nodes, m).swap_remove(m)
}

/// Precomputed 4th-order first and second derivative stencils on a uniform
/// axis, centered in the interior and one-sided near the ends.
#[derive(Clone, Debug)]
pub struct AxisStencils {
    pub len: usize,
    /// per node: (start index, weights) for d/dx with unit spacing
    pub d1: Vec<(usize, Vec<f64>)>,
    pub d2: Vec<(usize, Vec<f64>)>,
}

impl AxisStencils {
    pub fn new(len: usize) -> Self {
        let mut d1 = Vec::with_capacity(len);
        let mut d2 = Vec::with_capacity(len);
        for i in 0..len {
            if len < 2 {
                d1.push((0, vec![0.0; len]));
                d2.push((0, vec![0.0; len]));
                continue;
            }
            let n1 = 5.min(len);
            let s1 = start_for(i, len, n1);
            d1.push((s1, unit_weights((i - s1) as f64, n1, 1)));
            let n2 = if i >= 2 && i + 2 < len { 5 } else { 6 }.min(len);
            let s2 = start_for(i, len, n2);
            d2.push((s2, unit_weights((i - s2) as f64, n2, 2.min(n2 - 1))));
        }
        AxisStencils { len, d1, d2 }
    }
}

fn start_for(i: usize, len: usize, npts: usize) -> usize {
    let half = npts / 2;
    if i < half {
        0
    } else if i + npts - half > len {
        len - npts
    } else {
        i - half
    }
}

/// Index window of `npts` consecutive nodes of a uniform axis
/// (origin x0, spacing h, `len` nodes) centered as well as possible on x.
pub fn window(x: f64, x0: f64, h: f64, len: usize, npts: usize) -> usize {
    let npts = npts.min(len);
    let pos = (x - x0) / h;
    let c = pos.round() as i64 - (npts as i64 - 1) / 2;
    let hi = (len - npts) as i64;
    c.clamp(0, hi) as usize
}

/// Weights (value and derivatives up to `m`) of the Lagrange interpolant
/// through `npts` nodes of a uniform axis, evaluated at x.
pub fn interp_weights(x: f64, x0: f64, h: f64, len: usize, npts: usize, m: usize) -> (usize, Vec<Vec<f64>>) {
    let npts = npts.min(len);
    let s = window(x, x0, h, len, npts);
    let nodes: Vec<f64> = (0..npts).map(|i| x0 + (s + i) as f64 * h).collect();
    (s, fornberg(x, &nodes, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_weights_are_classical() {
        let w = unit_weights(2.0, 5, 1);
        let exact = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(exact) {
            assert!((a - b).abs() < 1e-14);
        }
        let w2 = unit_weights(2.0, 5, 2);
        let exact2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w2.iter().zip(exact2) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn stencils_exact_on_quartics() {
        let st = AxisStencils::new(9);
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x.powi(3) - 0.1 * x.powi(4);
        let df = |x: f64| 1.0 - 4.0 * x + 1.5 * x * x - 0.4 * x.powi(3);
        for i in 0..9 {
            let (s, w) = &st.d1[i];
            let v: f64 = w.iter().enumerate().map(|(k, wk)| wk * f((s + k) as f64)).sum();
            assert!((v - df(i as f64)).abs() < 1e-9, "node {i}");
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let f = |x: f64| 3.0 - x + 0.25 * x.powi(5);
        let (s, w) = interp_weights(0.337, 0.0, 0.1, 20, 8, 2);
        let vals: Vec<f64> = (0..8).map(|i| f((s + i) as f64 * 0.1)).collect();
        let v: f64 = w[0].iter().zip(&vals).map(|(a, b)| a * b).sum();
        let d: f64 = w[1].iter().zip(&vals).map(|(a, b)| a * b).sum();
        assert!((v - f(0.337)).abs() < 1e-12);
        assert!((d - (-1.0 + 1.25 * 0.337f64.powi(4))).abs() < 1e-10);
    }
}
