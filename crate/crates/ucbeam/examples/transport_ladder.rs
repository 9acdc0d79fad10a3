//! Residual ladder of the transport hierarchy on flat planar bands.
use num_complex::Complex64;
use ucbeam::bands::{band_domain, Resolution};
use ucbeam::eikonal::AdaptedChart;
use ucbeam::geometry::DomainSpec;
use ucbeam::transport::{ladder_report, solve_hierarchy, BandOperator, HierarchyConfig};

fn main() -> ucbeam::Result<()> {
    let chart = AdaptedChart::planar(vec![1.0], Complex64::new(-1.0, 0.0));
    let cfg = HierarchyConfig::default();
    for n in [12u32, 14, 16, 20] {
        let band = band_domain(n, &DomainSpec::default(), &Resolution::default(), true)?;
        let op = BandOperator::new(&band, &chart, &cfg)?;
        let (fields, rep) = solve_hierarchy(&op, &cfg)?;
        println!("n={n} depth={} richardson={:?} residuals={:?}", rep.depth, rep.richardson, rep.residuals);
        println!("  sups={:?} leak={:?} c0/chi={:?}", rep.sups, rep.support_leak, rep.c0_ratio);
        let lad = ladder_report(&op, &fields);
        println!("  outside={:.3e}", lad.outside_support);
        for r in &lad.rows {
            println!("  J={} measured={:.6e} predicted={:.6e} dev={:.2e} factor={:?}", r.j, r.measured, r.predicted, r.rel_dev, r.factor);
        }
    }
    Ok(())
}
