//! Parse an expression, compile it to an evaluation program, and read
//! exact first and second derivatives off a jet evaluation.
//!
//! Run with: `cargo run --example expressions_and_jets`

use nncert::expr::parse;

fn main() -> nncert::Result<()> {
    let expr = parse("sin(x1)*exp(x2) + x1^3/(x2 + 2)", 2)?;
    let program = expr.compile(2);

    let x = [0.7, -0.3];
    let value = program.eval_scalar(&x)?;
    println!("f({x:?}) = {value:.12}");

    // One jet evaluation produces the value, the full gradient, and the
    // full Hessian, exactly (no finite differences).
    let jet = program.eval_jet(&x)?;
    println!("gradient = {:?}", jet.gradient);
    println!("hessian  =");
    for row in 0..2 {
        println!("  {:?}", &jet.hessian[2 * row..2 * row + 2]);
    }

    // Programs serialize to a versioned JSON IR and evaluate
    // bit-identically after a round trip.
    let bytes = program.serialize();
    let restored = nncert::EvalProgram::deserialize(&bytes)?;
    assert_eq!(
        program.eval_scalar(&x)?.to_bits(),
        restored.eval_scalar(&x)?.to_bits()
    );
    println!("IR round trip: {} bytes, bit-identical evaluation", bytes.len());
    Ok(())
}
