//! Property-based invariants: parser/evaluator agreement against a
//! direct oracle, jet gradients against analytic derivatives, sampler
//! determinism, IR round trips, and partition-of-unity normalization
//! under random ball configurations.

use nncert::expr::parse;
use nncert::globalcert::{bump, partition_of_unity, Region, RegionKind};
use nncert::problem::{BoxDomain, Problem};
use nncert::program::EvalProgram;
use nncert::sample;
use proptest::prelude::*;

/// Coefficients of c0 + c1·x1 + c2·x2 + c3·x1·x2 + c4·x1² + c5·x2³ + c6·sin(x1).
fn poly_text(c: &[f64; 7]) -> String {
    format!(
        "{} + {}*x1 + {}*x2 + {}*x1*x2 + {}*x1^2 + {}*x2^3 + {}*sin(x1)",
        c[0], c[1], c[2], c[3], c[4], c[5], c[6]
    )
}

fn poly_eval(c: &[f64; 7], x: &[f64]) -> f64 {
    c[0] + c[1] * x[0]
        + c[2] * x[1]
        + c[3] * x[0] * x[1]
        + c[4] * x[0] * x[0]
        + c[5] * x[1].powi(3)
        + c[6] * x[0].sin()
}

fn poly_grad(c: &[f64; 7], x: &[f64]) -> [f64; 2] {
    [
        c[1] + c[3] * x[1] + 2.0 * c[4] * x[0] + c[6] * x[0].cos(),
        c[2] + c[3] * x[0] + 3.0 * c[5] * x[1] * x[1],
    ]
}

fn coeff() -> impl Strategy<Value = f64> {
    // values with exact decimal representations keep the oracle exact
    (-200i32..200).prop_map(|k| k as f64 / 100.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parsed_programs_match_direct_evaluation(
        c in [coeff(), coeff(), coeff(), coeff(), coeff(), coeff(), coeff()],
        x in [-2.0f64..2.0, -2.0f64..2.0],
    ) {
        let program = parse(&poly_text(&c), 2).unwrap().compile(2);
        let got = program.eval_scalar(&x).unwrap();
        let want = poly_eval(&c, &x);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()),
            "got {got}, oracle {want}");
    }

    #[test]
    fn jet_gradients_match_analytic_derivatives(
        c in [coeff(), coeff(), coeff(), coeff(), coeff(), coeff(), coeff()],
        x in [-2.0f64..2.0, -2.0f64..2.0],
    ) {
        let program = parse(&poly_text(&c), 2).unwrap().compile(2);
        let jet = program.eval_jet(&x).unwrap();
        let grad = poly_grad(&c, &x);
        for i in 0..2 {
            prop_assert!((jet.gradient[i] - grad[i]).abs() <= 1e-10 * (1.0 + grad[i].abs()),
                "∂{i}: got {}, oracle {}", jet.gradient[i], grad[i]);
        }
    }

    #[test]
    fn serialized_programs_evaluate_bit_identically(
        c in [coeff(), coeff(), coeff(), coeff(), coeff(), coeff(), coeff()],
        x in [-2.0f64..2.0, -2.0f64..2.0],
    ) {
        let program = parse(&poly_text(&c), 2).unwrap().compile(2);
        let round = EvalProgram::deserialize(&program.serialize()).unwrap();
        prop_assert_eq!(
            program.eval_scalar(&x).unwrap().to_bits(),
            round.eval_scalar(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn box_samples_are_deterministic_and_inside(
        seed in 0u64..1000,
        count in 1usize..200,
    ) {
        let domain = BoxDomain::new(vec![-1.5, 0.5], vec![2.5, 3.0]).unwrap();
        let a = sample::box_samples(&domain, count, seed);
        let b = sample::box_samples(&domain, count, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), count);
        for x in &a {
            prop_assert!(domain.contains(x), "{x:?} escaped the box");
        }
    }

    #[test]
    fn squared_partition_sums_to_one_on_supports(
        centers in proptest::collection::vec([-1.0f64..1.0, -1.0f64..1.0], 1..4),
        radius in 0.3f64..1.0,
        t in 0.0f64..0.9,
        angle in 0.0f64..6.28,
    ) {
        let p = Problem::new(
            2,
            parse("x1^2 + x2^2", 2).unwrap(),
            vec![],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let weights: Vec<EvalProgram> = centers
            .iter()
            .map(|c| {
                let region = Region {
                    kind: RegionKind::ZeroBall { index: 0 },
                    delta: radius,
                    center: Some(c.to_vec()),
                };
                bump(&p, 0.0, &region, &[], &[])
            })
            .collect();
        let tilde = partition_of_unity(&weights, 1e-9);
        // a point strictly inside the first ball is on some support
        let x = [
            centers[0][0] + t * radius * angle.cos(),
            centers[0][1] + t * radius * angle.sin(),
        ];
        let sum: f64 = tilde
            .iter()
            .map(|w| w.eval_scalar(&x).unwrap().powi(2))
            .sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "Σ w̃² = {sum} at {x:?}");
    }
}
