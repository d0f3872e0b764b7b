//! Serialize a certificate to its JSON wire format and re-verify it with
//! no access to construction state — the verifier sees only the problem
//! data and the deserialized evaluation programs.
//!
//! Run with: `cargo run --example verify_certificate`

use nncert::expr::parse;
use nncert::globalcert::{global_certificate, GlobalOptions};
use nncert::verify::{sample_residual, Certificate, SampleSettings};
use nncert::{BoxDomain, Problem};

fn main() -> nncert::Result<()> {
    let p = Problem::new(
        2,
        parse("x1^2 + x2^2 - 1", 2)?,
        vec![parse("x1 - 1", 2)?],
        vec![],
        BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
    )?;
    let opts = GlobalOptions {
        zeros: Some(vec![vec![1.0, 0.0]]),
        ..Default::default()
    };
    let cert = Certificate::from_global(&global_certificate(&p, &opts)?);

    // JSON round trip is byte-stable and evaluation-identical.
    let bytes = cert.to_json();
    println!("certificate file: {} bytes", bytes.len());
    let restored = Certificate::from_json(&bytes)?;
    assert_eq!(restored.to_json(), bytes);

    let settings = SampleSettings {
        seed: 0,
        count: 5000,
    };
    let stats = sample_residual(&p, &restored, &settings);
    println!("max |residual|    = {:.3e} at {:?}", stats.max_residual, stats.argmax_point);
    println!("mean |residual|   = {:.3e}", stats.mean_abs_residual);
    println!("min φ values      = {:?}", stats.min_phi);
    println!("partition defect  = {:.3e}", stats.partition_defect);
    assert!(stats.max_residual <= 1e-6);
    assert!(stats.partition_defect <= 1e-12);
    assert!(restored.phi_structurally_sos());
    println!("every φᵢ is a recorded sum of squares");
    Ok(())
}
