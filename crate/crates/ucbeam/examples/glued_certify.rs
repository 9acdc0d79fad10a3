//! Glue flat bands 12..=20, tabulate decay toward sigma = 0 and certify P u = a u.
use num_complex::Complex64;
use std::time::Instant;
use ucbeam::assembly::{certify_equation, decay_report, glue, probe_set};
use ucbeam::bands::{band_domain, Resolution};
use ucbeam::eikonal::AdaptedChart;
use ucbeam::geometry::DomainSpec;
use ucbeam::interference::CorrectionConfig;
use ucbeam::transport::{assemble_band, solve_hierarchy, BandOperator, HierarchyConfig};

fn main() -> ucbeam::Result<()> {
    let t = Instant::now();
    let chart = AdaptedChart::planar(vec![1.0], Complex64::new(-1.0, 0.0));
    let cfg = HierarchyConfig::default();
    let (n0, nmax) = (12u32, 20u32);
    let mut bands = Vec::new();
    for n in n0..=nmax + 1 {
        let band = band_domain(n, &DomainSpec::default(), &Resolution::default(), true)?;
        let op = BandOperator::new(&band, &chart, &cfg)?;
        let (fields, _) = solve_hierarchy(&op, &cfg)?;
        let beam = assemble_band(&op, fields);
        bands.push((op, beam));
    }
    println!("bands built in {:.1?}", t.elapsed());
    let probes_q = vec![128, 64, 192];
    let (glued, rep) = glue(bands, &CorrectionConfig::default(), &probes_q)?;
    println!("glued in {:.1?}", t.elapsed());
    for (c, p) in rep.corrections.iter().zip(rep.phi_tilde.iter().chain([f64::NAN].iter())) {
        println!(
            "n={} eps={:.4} min_slope={:.2} log_sup/n2={:.4} support_ok={} |Phi~|/B={:.1e}",
            c.n, c.epsilon, c.min_slope, c.log_sup_over_n2, c.support_ok, p
        );
    }
    let samples: Vec<f64> = (13..=19).map(|n| 1.0 / n as f64).collect();
    let mus: Vec<u32> = (0..=12).collect();
    let d = decay_report(&glued, &samples, &mus, 3)?;
    println!("decay: q={:.4} u_min_step={:.3e} a_min_step={:.3e}", d.q_fit, d.u_min_step, d.a_min_step);
    for r in d.a_rows.iter().filter(|r| r.mu == 0) {
        println!("  a sigma0={:.4} log sup|a|={:.3}", r.sigma0, r.log_sup);
    }
    let probes = probe_set(&glued, 16, 6, 5, 4);
    let c = certify_equation(&glued, &probes, 1e-5, 1e-4)?;
    println!(
        "certify: interior={} max={:.2e}  near={} max={:.2e} failures={} k0={:.3e} pass={}",
        c.interior, c.max_interior, c.near_surface, c.max_near_surface, c.failures, c.k0, c.pass
    );
    let mut worst: Vec<_> = c.probes.iter().filter(|p| !p.pass).collect();
    worst.sort_by(|a, b| b.relative.partial_cmp(&a.relative).unwrap());
    for p in worst.iter().take(8) {
        println!("  fail {:?} rel={:.2e} cond={:.1e} bands={}", p.probe, p.relative, p.conditioning, p.bands);
    }
    println!("total {:.1?}", t.elapsed());
    Ok(())
}
