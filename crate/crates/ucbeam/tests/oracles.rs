use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::Arc;
use ucbeam::aads::{conjugate_operator, flat_boundary, gncc_check, halton, omega_d_from_planar, pure_to_planar};
use ucbeam::bands::{band_domain, plateau_overlap, Resolution};
use ucbeam::eikonal::AdaptedChart;
use ucbeam::geometry::{DomainSpec, FgGeneric};
use ucbeam::interference::{closed_form_root, correction_data, locate_surface, sigma_jet, CorrectionConfig, EtaChart};
use ucbeam::transport::{assemble_band, solve_hierarchy, BandOperator, HierarchyConfig, OpCoeffs};

fn flat_fg(d: usize) -> FgGeneric {
    let mut t = vec![vec![0.0; d]; d];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = if i == 0 { -1.0 } else { 1.0 };
    }
    FgGeneric { tables: vec![t] }
}

#[test]
fn closed_form_roots_against_overlap() {
    assert!((closed_form_root(10) - 0.09215417).abs() < 5e-9);
    assert!(closed_form_root(10) > 1.0 / 11.0 + 1.0 / 968.0);
    assert!((closed_form_root(5) - 0.1663040).abs() < 5e-8);
    assert!(closed_form_root(5) < 0.1701389);
    for n in 12..=20u32 {
        let m = n as f64;
        let c = (closed_form_root(n) - 1.0 / m + 2.0 / (3.0 * m * m)) * m.powi(3);
        assert!(c.abs() <= 2.0 && c < 0.0, "n={n} c={c}");
    }
}

#[test]
fn leading_correction_matches_closed_source() {
    let chart = AdaptedChart::planar(vec![1.0], Complex64::new(-1.0, 0.0));
    let cfg = HierarchyConfig { depth: Some(0), ..HierarchyConfig::default() };
    let res = Resolution { sigma: 257, ybar: 9, s: 17 };
    let mut ops = Vec::new();
    let mut beams = Vec::new();
    for n in [12u32, 13] {
        let band = band_domain(n, &DomainSpec::default(), &res, true).unwrap();
        let op = BandOperator::new(&band, &chart, &cfg).unwrap();
        let (f, _) = solve_hierarchy(&op, &cfg).unwrap();
        beams.push(assemble_band(&op, f));
        ops.push(op);
    }
    let surf = locate_surface(12, &beams[0], &beams[1]).unwrap();
    let eta = EtaChart::new(&ops[0], &surf, None);
    let data = correction_data(&ops[0], &eta, &beams[0].residual, false, &CorrectionConfig::default()).unwrap();
    let h = &data.surfaces[0].h;
    assert!(h[0].iter().chain(&h[1]).all(|v| v.is_zero()));
    let grid = &ops[0].grid;
    let mut worst = 0.0f64;
    let mut recursion = 0.0f64;
    for q in 0..grid.slice_len() {
        let mut x = grid.coords(q);
        x[0] = surf.sigma[q];
        let c = OpCoeffs::at(&chart, 12, &x).unwrap();
        let deta = 1.0 / (144.0 * eta.gap(q));
        let aee = deta * deta * c.ginv[(0, 0)];
        let expect = -c.t2_zeroth().to_c64() / aee;
        worst = worst.max((h[2][q].to_c64() - expect).norm() / expect.norm());
        let r = sigma_jet(&beams[0].residual, q, surf.sigma[q], 0)[0].to_c64();
        recursion = recursion.max((h[2][q].to_c64() + r / aee).norm() / expect.norm());
    }
    assert!(recursion < 1e-12, "h2 != -R/g(deta,deta): {recursion}");
    // grid residual against the closed-form coefficient
    assert!(worst < 1e-3, "relative mismatch {worst}");
}

#[test]
fn conformal_mass_removes_singular_term() {
    let pts = vec![vec![0.5, 0.0, 0.1, 0.2]];
    let op = conjugate_operator(2.0, Arc::new(flat_fg(3)), &pts).unwrap();
    assert_eq!(op.xi_singular, 0.0);
    assert!(op.sup_v < 1e-9);
}

#[test]
fn gncc_zero_eta_has_zero_margin() {
    let r = gncc_check(&flat_boundary(9, |_| 0.0), 64).unwrap();
    assert_eq!(r.margin, 0.0);
}

#[test]
fn plateau_overlaps_are_ordered() {
    for n in 10..=20u32 {
        let (lo, hi) = plateau_overlap(n);
        assert!(lo < hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_d_round_trip(tau in -1.0f64..1.0, chi in 0.1f64..1.5, th in 1.7f64..3.1, ph in 0.0f64..6.2) {
        let x = pure_to_planar(&[tau, chi, th, ph], 0.1).unwrap();
        prop_assert!((omega_d_from_planar(&x) - th.cos()).abs() < 1e-10);
        prop_assert!(x[1] > 0.0);
    }

    #[test]
    fn halton_in_unit_cube(i in 0usize..100_000, dim in 1usize..8) {
        prop_assert!(halton(i, dim).iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn flat_remainder_vanishes(mu in -2.0f64..5.0, rho in 0.15f64..1.0, y in -1.0f64..1.0) {
        let op = conjugate_operator(mu, Arc::new(flat_fg(3)), &[vec![rho, y, 0.3, -y]]).unwrap();
        prop_assert!(op.sup_v < 1e-8 * rho.powi(-2));
    }

    #[test]
    fn gncc_ignores_linear_part(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let base = gncc_check(&flat_boundary(9, |x| 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1])), 8).unwrap();
        let tilt = gncc_check(&flat_boundary(9, |x| 1.0 + a * x[0] + b * x[1] + 0.5 * (x[0] * x[0] + x[1] * x[1])), 8).unwrap();
        prop_assert!((base.margin - tilt.margin).abs() < 1e-9);
    }
}

#[test]
fn flat_section_spray_is_straight() {
    use ucbeam::eikonal::{construct_eikonal_from_section, family_phase, family_residuals, SectionSpec};
    use ucbeam::geometry::PlanarAmbient;
    let m = PlanarAmbient { d: 2 };
    let spec = SectionSpec {
        time_axis: 2,
        t0: 0.0,
        axes: vec![(0.2, 0.8, 7), (-0.5, 0.5, 9)],
        foliation: vec![0.0, 1.0, 0.0],
        s_range: (0.0, 1.0),
        steps: 11,
    };
    let (fam, rep) = construct_eikonal_from_section(&m, &spec, 1e-3_f64.ln(), 1).unwrap();
    assert_eq!(rep.flagged, 0);
    assert_eq!(rep.min_lifespan, 11);
    assert!(rep.max_null_residual < 1e-12);
    for (p, tr) in fam.trajectories.iter().enumerate() {
        let phi = family_phase(&fam, &spec, p);
        for x in &tr.positions {
            // phase constant along x - t, rho frozen
            assert!((x[1] - x[2] - phi).abs() < 1e-9);
            assert!((x[0] - tr.launch[0]).abs() < 1e-12);
        }
    }
    let (null, gauge) = family_residuals(&fam, &spec, &m).unwrap();
    assert!(null < 1e-9 && gauge < 1e-9, "{null} {gauge}");
}
