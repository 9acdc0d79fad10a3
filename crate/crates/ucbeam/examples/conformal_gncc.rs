//! Conformal reduction on an FG bulk and the null-convexity margin on boundary data.
use std::sync::Arc;
use ucbeam::aads::{conjugate_operator, flat_boundary, gncc_check, v_sup_by_floor};
use ucbeam::geometry::FgGeneric;

fn main() -> ucbeam::Result<()> {
    let g = FgGeneric {
        tables: vec![
            vec![vec![-1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.0; 3]; 3],
            vec![vec![0.3, 0.0, 0.0], vec![0.0, 0.2, 0.1], vec![0.0, 0.1, -0.1]],
        ],
    };
    let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![0.2 + 0.02 * i as f64, 0.1, 0.2, -0.3]).collect();
    let op = conjugate_operator(0.5, Arc::new(g), &pts)?;
    let dev = op.v.iter().zip(&op.v_closed_form).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("V spread {:.2e}, closed-form deviation {dev:.2e}", op.spread);
    for (f, s) in v_sup_by_floor(&op, &[0.2, 0.4, 0.6, 0.8]) {
        println!("  sup |V| on rho > {f}: {s:.4e}");
    }
    let t0 = std::time::Instant::now();
    let lin = gncc_check(&flat_boundary(64, |x| 1.0 + 0.3 * x[0] - 0.2 * x[1]), 64)?;
    let bowl = gncc_check(&flat_boundary(64, |x| 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1])), 64)?;
    println!("linear eta margin {:.2e}; engineered margin {:.4} at {:?} ({:.2?})", lin.margin, bowl.margin, bowl.argmin, t0.elapsed());
    Ok(())
}
