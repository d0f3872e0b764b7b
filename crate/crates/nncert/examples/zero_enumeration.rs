//! Enumerate the zeros of f on the constraint set by multistart
//! minimization, with a full hypothesis report at each zero.
//!
//! Run with: `cargo run --example zero_enumeration`

use nncert::expr::parse;
use nncert::globalcert::find_zeros;
use nncert::{BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    // f = (x1² − 1)² + x2² has exactly two zeros: (±1, 0).
    let p = Problem::new(
        2,
        parse("(x1^2 - 1)^2 + x2^2", 2)?,
        vec![],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;
    let z = find_zeros(&p, 0.0, 64, 0)?;
    println!(
        "{} starts, {} converged, {} distinct zeros ({:?})",
        z.starts,
        z.converged,
        z.points.len(),
        z.completeness
    );
    for (x, r) in z.points.iter().zip(&z.reports) {
        println!(
            "  zero {x:?}: SOSC min eigenvalue {:?}, hypotheses pass: {}",
            r.min_projected_eigenvalue,
            r.hypotheses_pass()
        );
    }
    assert_eq!(z.points.len(), 2);

    // A flat zero set is refused: f = x1² vanishes on the line x1 = 0.
    let flat = Problem::new(
        2,
        parse("x1^2", 2)?,
        vec![],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;
    match find_zeros(&flat, 0.0, 32, 0) {
        Err(e) => println!("flat zero line correctly refused: {e}"),
        Ok(_) => panic!("expected a non-isolated-zero refusal"),
    }
    Ok(())
}
