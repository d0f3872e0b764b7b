//! Check the classical optimality hypotheses — regularity, strict
//! complementarity, second-order sufficiency — at a candidate minimizer.
//!
//! Run with: `cargo run --example kkt_check`

use nncert::expr::parse;
use nncert::kkt;
use nncert::{BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    // minimize f = x1² + x2² − 1 subject to g = x1 − 1 ≥ 0
    let p = Problem::new(
        2,
        parse("x1^2 + x2^2 - 1", 2)?,
        vec![parse("x1 - 1", 2)?],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;

    let report = kkt::check_point(&p, &[1.0, 0.0])?;
    println!("point                  = {:?}", report.point);
    println!("active set             = {:?}", report.active);
    println!("multipliers λ          = {:?}", report.lambda);
    println!("stationarity residual  = {:.3e}", report.stationarity_residual);
    println!("regular                = {}", report.regular);
    println!("strict complementarity = {}", report.strict_complementarity);
    println!("SOSC                   = {}", report.sosc);
    println!("min projected eigen    = {:?}", report.min_projected_eigenvalue);
    assert!(report.hypotheses_pass());

    // A degenerate problem is flagged: f = x1⁴ at the origin fails
    // second-order sufficiency.
    let degenerate = Problem::new(
        1,
        parse("x1^4", 1)?,
        vec![],
        vec![],
        BoxDomain::new(vec![-1.0], vec![1.0])?,
    )?;
    let bad = kkt::check_point(&degenerate, &[0.0])?;
    println!(
        "x1^4 at 0: failing condition = {:?}",
        bad.failing_condition()
    );
    assert!(!bad.hypotheses_pass());
    Ok(())
}
