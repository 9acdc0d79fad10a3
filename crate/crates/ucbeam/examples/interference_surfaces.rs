//! Interference surfaces between neighbouring flat bands, and the correction omega_n.
use num_complex::Complex64;
use ucbeam::bands::{band_domain, Resolution};
use ucbeam::eikonal::AdaptedChart;
use ucbeam::geometry::DomainSpec;
use ucbeam::interference::*;
use ucbeam::transport::{assemble_band, solve_hierarchy, BandOperator, HierarchyConfig};

fn main() -> ucbeam::Result<()> {
    let chart = AdaptedChart::planar(vec![1.0], Complex64::new(-1.0, 0.0));
    let cfg = HierarchyConfig::default();
    let (n0, nmax) = (12u32, 15u32);
    let mut ops = Vec::new();
    let mut beams = Vec::new();
    for n in n0..=nmax + 1 {
        let band = band_domain(n, &DomainSpec::default(), &Resolution::default(), true)?;
        let op = BandOperator::new(&band, &chart, &cfg)?;
        let (fields, _) = solve_hierarchy(&op, &cfg)?;
        beams.push(assemble_band(&op, fields));
        ops.push(op);
    }
    let mut surfaces: Vec<InterferenceSurface> = Vec::new();
    for n in n0..=nmax {
        let i = (n - n0) as usize;
        let s = locate_surface(n, &beams[i], &beams[i + 1])?;
        let sign = check_sign_bounds(n, &s);
        println!(
            "n={n} root={:.12} closed={:.12} |phi|={:.2e} c1={:.3} slope/B={:.3} sign_ok={}",
            s.sigma[s.sigma.len() / 2], s.closed_form, s.max_abs_phi, s.c1, s.min_slope, sign.ok
        );
        surfaces.push(s);
    }
    let ccfg = CorrectionConfig::default();
    for n in n0..=nmax {
        let i = (n - n0) as usize;
        let upper = if i > 0 { Some(&surfaces[i - 1]) } else { None };
        let chart_eta = EtaChart::new(&ops[i], &surfaces[i], upper);
        let data = correction_data(&ops[i], &chart_eta, &beams[i].residual, upper.is_some(), &ccfg)?;
        let omega = build_omega(&ops[i], data)?;
        let probes = vec![ops[i].grid.s_zero(), 10, ops[i].grid.slice_len() - 10];
        let mut beam = beams[i].clone();
        let rep = modified_band(&ops[i], &mut beam, &chart_eta, &omega, &probes)?;
        println!(
            "n={n} eps={:.4} |omega|={:.3e} on_surf={:.2e} support_ok={} min_slope={:.3}",
            rep.epsilon, rep.omega_sup, rep.omega_on_surfaces, rep.support_ok, rep.min_slope
        );
        for f in &rep.fits {
            print!(" [j={} side={} q={} slope={:.3}]", f.j, f.side, f.q, f.slope);
        }
        println!();
    }
    Ok(())
}
