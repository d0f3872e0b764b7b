//! Build a local certificate f − f* = φ₀ + Σφᵢgᵢ + Σψⱼhⱼ on a ball
//! around a nondegenerate zero, and compare against the hand-derived
//! decomposition.
//!
//! For f = x1² + x2² − 1 with g = x1 − 1 ≥ 0 the exact decomposition at
//! the zero (1, 0) is f = x2² + (x1 + 1)·g, so φ₀ = x2² and
//! φ₁ = x1 + 1 with φ₁(x*) = 2 = λ₁.
//!
//! Run with: `cargo run --example local_certificate`

use nncert::expr::parse;
use nncert::{kkt, localcert, BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    let p = Problem::new(
        2,
        parse("x1^2 + x2^2 - 1", 2)?,
        vec![parse("x1 - 1", 2)?],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;
    let report = kkt::check_point(&p, &[1.0, 0.0])?;
    let cert = localcert::local_certificate(&p, &report)?;
    println!("validity radius ρ = {}", cert.radius);
    println!("active set        = {:?}", cert.active);
    println!("multipliers λ     = {:?}", cert.lambda);

    let cp = kkt::CompiledProblem::new(&p);
    for x in [[1.0, 0.0], [1.1, 0.05], [1.02, -0.08]] {
        let (phi0, phi, _psi) = cert.eval_pieces(&x)?;
        let resid = cert.residual(&cp, &x)?;
        println!(
            "x = {x:?}: φ₀ = {phi0:.9} (oracle {:.9}), φ₁ = {:.9} (oracle {:.9}), residual = {resid:.2e}",
            x[1] * x[1],
            phi[0],
            x[0] + 1.0,
        );
        assert!((phi0 - x[1] * x[1]).abs() <= 1e-8);
        assert!((phi[0] - (x[0] + 1.0)).abs() <= 1e-8);
        assert!(resid.abs() <= 1e-9);
    }

    // multiplier recovery: φ₁(x*) = λ₁
    let (_, phi_star, _) = cert.eval_pieces(&[1.0, 0.0])?;
    assert!((phi_star[0] - cert.lambda[0]).abs() <= 1e-8);
    println!("φ₁(x*) = {:.9} recovers λ₁ = {}", phi_star[0], cert.lambda[0]);
    Ok(())
}
