//! Build a global certificate over a box: enumerate zeros, certify each
//! locally, cover the box with margin regions, and glue with a squared
//! partition of unity.
//!
//! Run with: `cargo run --example global_certificate`

use nncert::expr::parse;
use nncert::globalcert::{global_certificate, GlobalOptions};
use nncert::kkt::CompiledProblem;
use nncert::{sample, BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    let p = Problem::new(
        2,
        parse("x1^2 + x2^2 - 1", 2)?,
        vec![parse("x1 - 1", 2)?],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;

    // Asserting the zero list makes the construction deterministic;
    // omit `zeros` to let the multistart search find it.
    let opts = GlobalOptions {
        zeros: Some(vec![vec![1.0, 0.0]]),
        ..Default::default()
    };
    let cert = global_certificate(&p, &opts)?;

    println!("zeros  = {:?} (radii {:?})", cert.zeros, cert.radii);
    println!("{} regions:", cert.regions.len());
    for r in &cert.regions {
        println!("  {:?} with margin {:.4}", r.kind, r.delta);
    }

    // The identity f = φ₀ + φ₁·g holds everywhere on the box, the
    // partition of unity sums to 1, and φ₀, φ₁ are structural sums of
    // squares.
    let cp = CompiledProblem::new(&p);
    let mut max_resid = 0.0_f64;
    for x in sample::box_samples(&p.domain, 2000, 0) {
        max_resid = max_resid.max(cert.residual(&cp, &x)?.abs());
        let (_, _, _, partition) = cert.eval_pieces(&x)?;
        assert!((partition - 1.0).abs() <= 1e-12);
    }
    println!("max |residual| over 2000 samples = {max_resid:.3e}");
    assert!(max_resid <= 1e-6);

    // Near the zero the glued pieces coincide with the hand-derived
    // local decomposition φ₀ = x2², φ₁ = x1 + 1.
    let x = [1.0 + 0.1 * cert.radii[0], 0.1 * cert.radii[0]];
    let (phi0, phi, _, _) = cert.eval_pieces(&x)?;
    println!("near the zero: φ₀ = {phi0:.9} ≈ x2², φ₁ = {:.9} ≈ x1 + 1", phi[0]);
    assert!((phi0 - x[1] * x[1]).abs() <= 1e-6);
    assert!((phi[0] - (x[0] + 1.0)).abs() <= 1e-6);
    Ok(())
}
