//! Amplitude profiles f_n, cutoffs chi_n and their rescaled derivative bounds per band.
use ucbeam::bands::{band_endpoints, plateau, plateaus_cover, profile_report};

fn main() {
    for n in 12..=20u32 {
        let r = profile_report(n, 4);
        let (plo, phi) = plateau(n);
        println!(
            "n={n} band=({:.6}, {:.6}) plateau=({plo:.6}, {phi:.6}) K0_f={:.4} chi bounds={:?} ok={}",
            r.sigma_lo,
            r.sigma_hi,
            r.k0_f,
            r.chi_bounds.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>(),
            r.f_piecewise_ok && r.chi_plateau_ok && r.chi_support_ok
        );
    }
    println!("band 5 = {:?}", band_endpoints(5));
    println!("plateaus cover (1/20, 1/12): {}", plateaus_cover(12, 20, 20_000));
}
