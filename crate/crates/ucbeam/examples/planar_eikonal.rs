//! Certify the planar phase on a 33^3 grid, the pure AdS phase, and a localized deformation.
use ucbeam::eikonal::{deform_sigma, planar_eikonal, pure_ads_eikonal, tensor_points, verify_eikonal, BumpProfile};
use ucbeam::geometry::{PlanarAmbient, PureAdsConformal, Stencil};

fn main() -> ucbeam::Result<()> {
    let planar = planar_eikonal(&[1.0])?;
    let pts = tensor_points(&[(0.05, 0.5), (-1.0, 1.0), (-1.0, 1.0)], 33);
    let st = Stencil::uniform(3, 1e-3);
    let rep = verify_eikonal(&planar, &PlanarAmbient { d: 2 }, &pts, &st, 0.0, 1e-10)?;
    println!("planar: null {:.2e} gauge {:?} pass {}", rep.null_residual, rep.gauge_residual, rep.pass);

    let bump = BumpProfile { sigma1: 0.05, inner: vec![(-0.3, 0.3)], outer: vec![(-0.8, 0.8)] };
    let (_, lower) = deform_sigma(&planar, &bump, &PlanarAmbient { d: 2 }, &pts, &st)?;
    println!("deformed: min g(dsigma, dsigma) = {lower:.4}");

    let pure = pure_ads_eikonal(&[1.0, 0.0])?;
    let pts = tensor_points(&[(-1.0, 1.0), (0.3, 1.2), (1.8, 2.9), (0.3, 2.8)], 9);
    let rep = verify_eikonal(&pure, &PureAdsConformal { d: 3 }, &pts, &Stencil::uniform(4, 1e-3), 0.0, 1e-7)?;
    println!("pure AdS: null {:.2e} pass {}", rep.null_residual, rep.pass);
    Ok(())
}
