//! Pure AdS pulled back to the planar chart, and the half-space support check.
use ucbeam::aads::{embedding_samples, omega_d_from_planar, pure_to_planar, support_in_half_space, verify_embedding};

fn main() -> ucbeam::Result<()> {
    let samples = embedding_samples(200, 0);
    println!("pullback deviation  {:.3e}", verify_embedding(&samples, 0.1, 1e-6)?);
    let mut trip: f64 = 0.0;
    for p in &samples {
        let x = pure_to_planar(p, 0.1)?;
        trip = trip.max((omega_d_from_planar(&x) - p[2].cos()).abs());
    }
    println!("omega^d round trip  {trip:.3e}");
    for delta in [0.01, 0.1, 1.0, 10.0] {
        let v = support_in_half_space(0.3, delta, 0.01, [1.0, 0.0]);
        println!("delta {delta:>5}: max omega^d {:+.4e} c2 {:.3e} pass {}", v.max_omega_d, v.c2, v.pass);
    }
    Ok(())
}
