//! Adaptive Dormand-Prince 5(4) integration for smooth first-order systems.

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { atol: 1e-10, rtol: 1e-10, h_min: 1e-14, max_steps: 200_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeFailure {
    /// Step size fell below `h_min` at parameter `t`.
    StepUnderflow { t: f64, h: f64 },
    /// Right-hand side produced a non-finite value.
    NonFinite { t: f64 },
    TooManySteps { t: f64 },
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction); returns the end state.
pub fn dopri45<F>(f: &F, t0: f64, y0: &[f64], t1: f64, tol: &Tolerances, h0: f64) -> Result<(Vec<f64>, f64), OdeFailure>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = h0.abs().max(tol.h_min) * dir;
    let mut steps = 0;
    let mut k = vec![vec![0.0; n]; 7];
    while (t1 - t) * dir > 0.0 {
        if steps >= tol.max_steps {
            return Err(OdeFailure::TooManySteps { t });
        }
        steps += 1;
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        k[0] = f(t, &y);
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut y5 = y.clone();
        let mut err = 0.0f64;
        for i in 0..n {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if y5.iter().any(|v| !v.is_finite()) {
            return Err(OdeFailure::NonFinite { t });
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h.abs() < tol.h_min {
                return Err(OdeFailure::StepUnderflow { t, h: h.abs() });
            }
        }
    }
    Ok((y, h.abs()))
}

/// Integrates and records the state at each of the requested (monotone) parameters.
pub fn dopri45_dense<F>(f: &F, t0: f64, y0: &[f64], outputs: &[f64], tol: &Tolerances) -> Result<Vec<Vec<f64>>, OdeFailure>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let mut out = Vec::with_capacity(outputs.len());
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = 1e-3;
    for &tn in outputs {
        if tn != t {
            let (yn, hn) = dopri45(f, t, &y, tn, tol, h)?;
            y = yn;
            h = hn;
            t = tn;
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &[f64]| vec![y[1], -y[0]];
        let (y, _) = dopri45(&f, 0.0, &[1.0, 0.0], 2.0 * std::f64::consts::PI, &Tolerances::default(), 1e-2).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
    }

    #[test]
    fn backward_integration() {
        let f = |_t: f64, y: &[f64]| vec![y[0]];
        let (y, _) = dopri45(&f, 0.0, &[1.0], -1.0, &Tolerances::default(), 1e-2).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }
}
