//! Audit the global optimality conditions with function-valued
//! multipliers: a certificate for f − f* witnesses that x* globally
//! minimizes the generalized Lagrangian
//! 𝓛(x) = f(x) − f* − Σφᵢ(x)gᵢ(x) − Σψⱼ(x)hⱼ(x).
//!
//! Run with: `cargo run --example global_optimality`

use nncert::expr::parse;
use nncert::globalcert::{global_certificate, GlobalOptions};
use nncert::verify::{check_global_optimality, Certificate, SampleSettings};
use nncert::{BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    // x* = (1, 0) globally minimizes f = x1² + x2² on {x1 ≥ 1} with
    // value f* = 1; certify f − f* ≥ 0 and audit.
    let p = Problem::new(
        2,
        parse("x1^2 + x2^2", 2)?,
        vec![parse("x1 - 1", 2)?],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;
    let opts = GlobalOptions {
        f_star: Some(1.0),
        zeros: Some(vec![vec![1.0, 0.0]]),
        ..Default::default()
    };
    let cert = Certificate::from_global(&global_certificate(&p, &opts)?);

    let settings = SampleSettings {
        seed: 0,
        count: 5000,
    };
    let report = check_global_optimality(&p, &cert, &[1.0, 0.0], &settings)?;
    println!("condition (i):  φ₀(x*) = {:.3e}, complementarity = {:?}",
        report.condition_one.phi0_at_star, report.condition_one.complementarity);
    println!("condition (ii): gradient defect = {:.3e}", report.condition_two.defect);
    println!(
        "condition (iii): min 𝓛 = {:.3e}, 𝓛(x*) = {:.3e}",
        report.condition_three.min_lagrangian, report.condition_three.lagrangian_at_star
    );
    println!("𝓛 ≡ φ₀ gap       = {:.3e}", report.lagrangian_phi0_gap);
    println!("overall pass     = {}", report.pass);
    assert!(report.pass);
    assert!(report.condition_two.defect <= 1e-8);
    Ok(())
}
