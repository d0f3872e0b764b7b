//! Acceptance suite: one test and one printed pass/fail line per
//! criterion. Run with `cargo test --test acceptance -- --nocapture` to
//! see the lines.

use nncert::expr::parse;
use nncert::globalcert::{global_certificate, GlobalCertificate, GlobalOptions};
use nncert::kkt::{self, CompiledProblem};
use nncert::localcert::{self, hadamard_split, morse_factor};
use nncert::problem::{BoxDomain, Problem};
use nncert::program::ProgramBuilder;
use nncert::sample;
use nncert::verify::{check_global_optimality, Certificate, SampleSettings};
use std::sync::OnceLock;
use std::time::Instant;

fn report(criterion: usize, desc: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("ACCEPTANCE CRITERION {criterion}: PASS — {desc}"),
        Err(msg) => println!("ACCEPTANCE CRITERION {criterion}: FAIL — {desc}: {msg}"),
    }
    if let Err(msg) = result {
        panic!("criterion {criterion} failed: {msg}");
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct SuiteEntry {
    name: &'static str,
    problem: Problem,
    zeros: Vec<Vec<f64>>,
    f_star: f64,
    transcendental: bool,
    certificate: GlobalCertificate,
    build_seconds: f64,
}

fn build_entry(
    name: &'static str,
    n: usize,
    f: &str,
    g: &[&str],
    h: &[&str],
    bounds: (f64, f64),
    zeros: Vec<Vec<f64>>,
    f_star: f64,
    transcendental: bool,
) -> SuiteEntry {
    let problem = Problem::new(
        n,
        parse(f, n).unwrap(),
        g.iter().map(|s| parse(s, n).unwrap()).collect(),
        h.iter().map(|s| parse(s, n).unwrap()).collect(),
        BoxDomain::new(vec![bounds.0; n], vec![bounds.1; n]).unwrap(),
    )
    .unwrap();
    let opts = GlobalOptions {
        f_star: Some(f_star),
        zeros: Some(zeros.clone()),
        ..Default::default()
    };
    let t0 = Instant::now();
    let certificate = global_certificate(&problem, &opts)
        .unwrap_or_else(|e| panic!("suite problem `{name}` failed to certify: {e}"));
    SuiteEntry {
        name,
        problem,
        zeros,
        f_star,
        transcendental,
        certificate,
        build_seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Six problems: three polynomial, two with sin/exp terms, one with an
/// equality constraint. Certificates are built once and shared.
fn suite() -> &'static [SuiteEntry] {
    static SUITE: OnceLock<Vec<SuiteEntry>> = OnceLock::new();
    SUITE.get_or_init(|| {
        vec![
            build_entry(
                "circle-halfplane",
                2,
                "x1^2 + x2^2 - 1",
                &["x1 - 1"],
                &[],
                (-2.0, 2.0),
                vec![vec![1.0, 0.0]],
                0.0,
                false,
            ),
            build_entry(
                "paraboloid",
                2,
                "x1^2 + x2^2",
                &[],
                &[],
                (-2.0, 2.0),
                vec![vec![0.0, 0.0]],
                0.0,
                false,
            ),
            build_entry(
                "double-well",
                2,
                "(x1^2 - 1)^2 + x2^2",
                &[],
                &[],
                (-2.0, 2.0),
                vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
                0.0,
                false,
            ),
            build_entry(
                "sine-bowl",
                2,
                "sin(x1)^2 + x2^2",
                &[],
                &[],
                (-1.0, 1.0),
                vec![vec![0.0, 0.0]],
                0.0,
                true,
            ),
            build_entry(
                "exp-gap",
                2,
                "exp(x1) - 1 - x1 + x2^2",
                &[],
                &[],
                (-1.0, 1.0),
                vec![vec![0.0, 0.0]],
                0.0,
                true,
            ),
            build_entry(
                "line-constrained",
                2,
                "x1^2",
                &[],
                &["x2"],
                (-2.0, 2.0),
                vec![vec![0.0, 0.0]],
                0.0,
                false,
            ),
        ]
    })
}

#[test]
fn criterion_1_worked_certificate_matches_hand_oracle() {
    let result = (|| -> Result<(), String> {
        let p = Problem::new(
            2,
            parse("x1^2 + x2^2 - 1", 2).unwrap(),
            vec![parse("x1 - 1", 2).unwrap()],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let opts = GlobalOptions {
            zeros: Some(vec![vec![1.0, 0.0]]),
            ..Default::default()
        };
        let t0 = Instant::now();
        let cert = global_certificate(&p, &opts).map_err(|e| e.to_string())?;
        let elapsed = t0.elapsed().as_secs_f64();
        check(elapsed < 10.0, || format!("construction took {elapsed:.1}s"))?;
        // hand-derived oracle inside the zero ball: f = x2² + (x1+1)·g
        let rho = cert.radii[0];
        for x in sample::ball_samples(&[1.0, 0.0], 0.49 * rho, 100, 11) {
            let (phi0, phi, _, _) = cert.eval_pieces(&x).map_err(|e| e.to_string())?;
            check((phi[0] - (x[0] + 1.0)).abs() <= 1e-6, || {
                format!("|φ₁ − (x1+1)| = {:.3e} at {x:?}", (phi[0] - (x[0] + 1.0)).abs())
            })?;
            check((phi0 - x[1] * x[1]).abs() <= 1e-6, || {
                format!("|φ₀ − x2²| = {:.3e} at {x:?}", (phi0 - x[1] * x[1]).abs())
            })?;
        }
        Ok(())
    })();
    report(1, "end-to-end worked certificate matches the hand-derived decomposition", result);
}

#[test]
fn criterion_2_residual_identity_on_suite() {
    let result = (|| -> Result<(), String> {
        for entry in suite() {
            let tol = if entry.transcendental { 1e-5 } else { 1e-6 };
            let cp = CompiledProblem::new(&entry.problem);
            let t0 = Instant::now();
            let mut max_resid = 0.0_f64;
            for x in sample::box_samples(&entry.problem.domain, 10_000, 0) {
                let r = entry
                    .certificate
                    .residual(&cp, &x)
                    .map_err(|e| format!("{}: {e}", entry.name))?;
                max_resid = max_resid.max(r.abs());
            }
            let total = entry.build_seconds + t0.elapsed().as_secs_f64();
            check(max_resid <= tol, || {
                format!("{}: max residual {max_resid:.3e} > {tol:.0e}", entry.name)
            })?;
            check(total < 60.0, || {
                format!("{}: build + verify took {total:.1}s", entry.name)
            })?;
        }
        Ok(())
    })();
    report(2, "residual identity holds on the 6-problem suite over 10^4 samples", result);
}

#[test]
fn criterion_3_morse_identity() {
    let result = (|| -> Result<(), String> {
        // closed-form case A = t² + t³ with θ = t·√(1 + t)
        let a = parse("x1^2 + x1^3", 1).unwrap().compile(1);
        let morse = morse_factor(&a, 1, 0.5, 32).map_err(|e| e.to_string())?;
        for k in 0..100 {
            let t = -0.45 + 0.9 * (k as f64) / 99.0;
            let theta = morse.theta.eval_values(&[t]).map_err(|e| e.to_string())?;
            let oracle = t * (1.0 + t).sqrt();
            check((theta[0] - oracle).abs() <= 1e-10, || {
                format!("θ(t) = {} vs t√(1+t) = {oracle} at t = {t}", theta[0])
            })?;
        }
        // ‖θ(t)‖² = A(t) on 500 samples per local certificate
        for entry in suite() {
            for zero in &entry.zeros {
                let report = kkt::check_point(&entry.problem, zero).map_err(|e| e.to_string())?;
                let local =
                    localcert::local_certificate_shifted(&entry.problem, &report, entry.f_star)
                        .map_err(|e| e.to_string())?;
                let cp = CompiledProblem::new(&entry.problem);
                let chart = localcert::build_chart(&cp, &entry.problem, &report, local.radius)
                    .map_err(|e| e.to_string())?;
                let f_rest = localcert::restricted_objective(&entry.problem, &chart, entry.f_star);
                // A = F restricted to the first d (tangent) coordinates
                let d = chart.d;
                let mut b = ProgramBuilder::new(d);
                let ts = b.vars();
                let mut args = ts.clone();
                for _ in d..entry.problem.n {
                    args.push(b.constant(0.0));
                }
                let root = b.import(&f_rest, &args)[0];
                let a = b.finish(vec![root]);
                let morse = morse_factor(&a, d, 0.5 * local.radius, local.quad_order)
                    .map_err(|e| format!("{}: {e}", entry.name))?;
                let origin = vec![0.0; d];
                for t in sample::ball_samples(&origin, 0.9 * morse.radius, 500, 13) {
                    let theta = morse.theta.eval_values(&t).map_err(|e| e.to_string())?;
                    let norm2: f64 = theta.iter().map(|v| v * v).sum();
                    let a_val = a.eval_scalar(&t).map_err(|e| e.to_string())?;
                    check((norm2 - a_val).abs() <= 1e-9, || {
                        format!(
                            "{}: |‖θ‖² − A| = {:.3e} at {t:?}",
                            entry.name,
                            (norm2 - a_val).abs()
                        )
                    })?;
                }
            }
        }
        Ok(())
    })();
    report(3, "Morse factorization satisfies ‖θ(t)‖² = A(t)", result);
}

#[test]
fn criterion_4_partition_of_unity() {
    let result = (|| -> Result<(), String> {
        for entry in suite() {
            for x in sample::box_samples(&entry.problem.domain, 10_000, 1) {
                let (_, _, _, partition) = entry
                    .certificate
                    .eval_pieces(&x)
                    .map_err(|e| format!("{}: {e}", entry.name))?;
                check((partition - 1.0).abs() <= 1e-12, || {
                    format!(
                        "{}: |Σ w̃² − 1| = {:.3e} at {x:?}",
                        entry.name,
                        (partition - 1.0).abs()
                    )
                })?;
            }
        }
        Ok(())
    })();
    report(4, "squared partition of unity sums to 1 within 1e-12 on all box samples", result);
}

#[test]
fn criterion_5_multiplier_recovery() {
    let result = (|| -> Result<(), String> {
        for entry in suite() {
            for zero in &entry.zeros {
                let kkt_report =
                    kkt::check_point(&entry.problem, zero).map_err(|e| e.to_string())?;
                let (_, phi, _, _) = entry
                    .certificate
                    .eval_pieces(zero)
                    .map_err(|e| e.to_string())?;
                for (i, (pv, lv)) in phi.iter().zip(&kkt_report.lambda).enumerate() {
                    check((pv - lv).abs() <= 1e-8, || {
                        format!(
                            "{}: φ_{}({zero:?}) = {pv} vs λ = {lv}",
                            entry.name,
                            i + 1
                        )
                    })?;
                }
            }
        }
        Ok(())
    })();
    report(5, "φᵢ(x*) recovers the KKT multiplier λᵢ at every certified zero", result);
}

#[test]
fn criterion_6_global_optimality_audit_and_tamper() {
    let result = (|| -> Result<(), String> {
        let settings = SampleSettings {
            seed: 0,
            count: 2000,
        };
        for entry in suite() {
            let cert = Certificate::from_global(&entry.certificate);
            for zero in &entry.zeros {
                let audit = check_global_optimality(&entry.problem, &cert, zero, &settings)
                    .map_err(|e| e.to_string())?;
                check(audit.pass, || {
                    format!(
                        "{}: audit failed at {zero:?}: {:?}",
                        entry.name, audit.failing_condition
                    )
                })?;
                check(audit.condition_two.defect <= 1e-8, || {
                    format!(
                        "{}: gradient defect {:.3e}",
                        entry.name, audit.condition_two.defect
                    )
                })?;
            }
        }
        // tamper: scale φ₁ of the worked certificate by 1.1
        let worked = &suite()[0];
        let mut cert = Certificate::from_global(&worked.certificate);
        let mut b = ProgramBuilder::new(cert.dimension);
        let xs = b.vars();
        let imported = b.import(&cert.program, &xs);
        let scale = b.constant(1.1);
        let mut roots = imported.clone();
        roots[1] = b.mul(imported[1], scale);
        cert.program = b.finish(roots);
        let audit = check_global_optimality(&worked.problem, &cert, &[1.0, 0.0], &settings)
            .map_err(|e| e.to_string())?;
        check(!audit.pass, || "tampered certificate passed the audit".into())?;
        let failing = audit.failing_condition.unwrap_or_default();
        check(
            failing.contains("residual") || failing.contains("gradient"),
            || format!("tampered certificate failed on `{failing}` instead"),
        )?;
        Ok(())
    })();
    report(6, "global optimality conditions (i)–(iii) pass; tampering is detected", result);
}

#[test]
fn criterion_7_hypothesis_gating_exit_codes() {
    let result = (|| -> Result<(), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let bin = env!("CARGO_BIN_EXE_nncert");
        let cases: [(&str, &str, i32); 4] = [
            (
                "quartic",
                r#"{"dimension": 1, "objective": "x1^4", "box": {"lower": [-1], "upper": [1]}}"#,
                3,
            ),
            (
                "zero-line",
                r#"{"dimension": 2, "objective": "x1^2", "box": {"lower": [-2,-2], "upper": [2,2]}}"#,
                5,
            ),
            (
                "parallel-gradients",
                r#"{"dimension": 2, "objective": "x1^2 + x2^2", "inequalities": ["x1", "2*x1"], "box": {"lower": [-2,-2], "upper": [2,2]}}"#,
                3,
            ),
            (
                "zero-multiplier",
                r#"{"dimension": 2, "objective": "x1^2 + x2^2", "inequalities": ["x1"], "box": {"lower": [-2,-2], "upper": [2,2]}}"#,
                3,
            ),
        ];
        for (name, json, want) in cases {
            let problem = dir.path().join(format!("{name}.json"));
            let out = dir.path().join(format!("{name}.cert.json"));
            std::fs::write(&problem, json).map_err(|e| e.to_string())?;
            let status = std::process::Command::new(bin)
                .args(["certify-global"])
                .arg(&problem)
                .arg("--out")
                .arg(&out)
                .args(["--budget", "32", "--samples", "200"])
                .output()
                .map_err(|e| e.to_string())?;
            let code = status.status.code().unwrap_or(-1);
            check(code == want, || {
                format!(
                    "{name}: exit code {code}, expected {want}; stderr: {}",
                    String::from_utf8_lossy(&status.stderr)
                )
            })?;
            check(!out.exists(), || {
                format!("{name}: certificate file written despite refusal")
            })?;
        }
        Ok(())
    })();
    report(7, "degenerate problems are refused with the documented exit codes", result);
}

#[test]
fn criterion_8_oracle_agreement() {
    use rand::{Rng, SeedableRng};
    let result = (|| -> Result<(), String> {
        // (a) projected Lagrangian Hessians vs a central finite-difference
        // oracle with step 1e-5 on 20 random problems
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let n = 2 + (trial % 2);
            let mut terms: Vec<String> = Vec::new();
            for i in 1..=n {
                terms.push(format!("{:.4}*x{i}^2", rng.gen_range(0.5..2.0)));
                terms.push(format!("{:.4}*x{i}", rng.gen_range(-1.0..1.0)));
            }
            terms.push(format!("{:.4}*x1*x2", rng.gen_range(-1.0..1.0)));
            if trial % 3 == 0 {
                terms.push(format!("{:.4}*sin(x1)", rng.gen_range(-1.0..1.0)));
            }
            if trial % 3 == 1 {
                terms.push(format!("{:.4}*exp(x2/2)", rng.gen_range(-0.5..0.5)));
            }
            let f_text = terms.join(" + ");
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
            // half the trials have a linear constraint active at x0
            let constrained = trial % 2 == 0;
            let g_text = format!("x1 - {:.16}", x0[0]);
            let p = Problem::new(
                n,
                parse(&f_text, n).map_err(|e| e.to_string())?,
                if constrained {
                    vec![parse(&g_text, n).map_err(|e| e.to_string())?]
                } else {
                    vec![]
                },
                vec![],
                BoxDomain::new(vec![-2.0; n], vec![2.0; n]).unwrap(),
            )
            .unwrap();
            let cp = CompiledProblem::new(&p);
            let active: Vec<usize> = if constrained { vec![0] } else { vec![] };
            let (lambda, nu, _) =
                kkt::solve_multipliers(&cp, &x0, &active).map_err(|e| e.to_string())?;
            let exact = kkt::lagrangian_hessian(&cp, &x0, &active, &lambda, &nu)
                .map_err(|e| e.to_string())?;
            let basis = kkt::tangent_basis(&cp, &x0, &active).map_err(|e| e.to_string())?;

            // finite-difference Hessian of the Lagrangian, step 1e-5
            let lagr = |x: &[f64]| -> Result<f64, String> {
                let mut v = cp.f.eval_scalar(x).map_err(|e| e.to_string())?;
                for (&i, gi) in active.iter().zip(&cp.g) {
                    v -= lambda[i] * gi.eval_scalar(x).map_err(|e| e.to_string())?;
                }
                Ok(v)
            };
            let hstep = 1e-5;
            let mut fd = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut xpp = x0.clone();
                    let mut xpm = x0.clone();
                    let mut xmp = x0.clone();
                    let mut xmm = x0.clone();
                    xpp[i] += hstep;
                    xpp[j] += hstep;
                    xpm[i] += hstep;
                    xpm[j] -= hstep;
                    xmp[i] -= hstep;
                    xmp[j] += hstep;
                    xmm[i] -= hstep;
                    xmm[j] -= hstep;
                    fd[i][j] = (lagr(&xpp)? - lagr(&xpm)? - lagr(&xmp)? + lagr(&xmm)?)
                        / (4.0 * hstep * hstep);
                }
            }
            // project both with the KKT tangent basis and compare
            let d = basis.len();
            let mut scale = 1.0_f64;
            let mut max_err = 0.0_f64;
            for a in 0..d {
                for b in 0..d {
                    let mut pe = 0.0;
                    let mut pf = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            pe += basis[a][i] * exact[(i, j)] * basis[b][j];
                            pf += basis[a][i] * fd[i][j] * basis[b][j];
                        }
                    }
                    scale = scale.max(pe.abs());
                    max_err = max_err.max((pe - pf).abs());
                }
            }
            check(max_err / scale <= 1e-5, || {
                format!("trial {trial}: projected Hessian relative error {:.3e}", max_err / scale)
            })?;
        }

        // (b) Hadamard quadrature vs closed-form factors within 1e-12
        let poly = parse("x1^2*x2 + x2^3", 2).unwrap().compile(2);
        let split = hadamard_split(&poly, 1, 1, 32);
        for k in 0..50 {
            let t1 = -1.0 + 0.04 * k as f64;
            let t2 = 0.9 - 0.035 * k as f64;
            let b = split.eval_values(&[t1, t2]).map_err(|e| e.to_string())?;
            let oracle = t1 * t1 + t2 * t2; // ∫₀¹ (t1² + 3s²t2²) ds
            check((b[0] - oracle).abs() <= 1e-12, || {
                format!("polynomial Hadamard factor off by {:.3e}", (b[0] - oracle).abs())
            })?;
        }
        let sine = parse("sin(x1)", 1).unwrap().compile(1);
        let split = hadamard_split(&sine, 0, 1, 32);
        for k in 1..50 {
            let t = -1.2 + 0.05 * k as f64;
            let b = split.eval_values(&[t]).map_err(|e| e.to_string())?;
            let oracle = if t.abs() < 1e-300 { 1.0 } else { t.sin() / t };
            check((b[0] - oracle).abs() <= 1e-12, || {
                format!("sine Hadamard factor off by {:.3e} at t = {t}", (b[0] - oracle).abs())
            })?;
        }
        Ok(())
    })();
    report(8, "jets agree with finite differences; quadrature matches closed forms", result);
}

#[test]
fn criterion_9_determinism() {
    let result = (|| -> Result<(), String> {
        let p = Problem::new(
            2,
            parse("x1^2 + x2^2 - 1", 2).unwrap(),
            vec![parse("x1 - 1", 2).unwrap()],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let opts = GlobalOptions {
            zeros: Some(vec![vec![1.0, 0.0]]),
            ..Default::default()
        };
        let a = Certificate::from_global(&global_certificate(&p, &opts).map_err(|e| e.to_string())?);
        let b = Certificate::from_global(&global_certificate(&p, &opts).map_err(|e| e.to_string())?);
        check(a.to_json() == b.to_json(), || {
            "repeated construction produced different certificate bytes".into()
        })?;
        let settings = SampleSettings {
            seed: 7,
            count: 1000,
        };
        let ra = check_global_optimality(&p, &a, &[1.0, 0.0], &settings).map_err(|e| e.to_string())?;
        let rb = check_global_optimality(&p, &b, &[1.0, 0.0], &settings).map_err(|e| e.to_string())?;
        let ja = serde_json::to_string(&ra).unwrap();
        let jb = serde_json::to_string(&rb).unwrap();
        check(ja == jb, || "repeated audits produced different reports".into())?;

        // the CLI path is byte-identical too
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let problem = dir.path().join("worked.json");
        std::fs::write(
            &problem,
            r#"{"dimension": 2, "objective": "x1^2 + x2^2 - 1", "inequalities": ["x1 - 1"], "box": {"lower": [-2,-2], "upper": [2,2]}}"#,
        )
        .map_err(|e| e.to_string())?;
        let bin = env!("CARGO_BIN_EXE_nncert");
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("cert{run}.json"));
            let status = std::process::Command::new(bin)
                .args(["certify-global"])
                .arg(&problem)
                .args(["--zeros", "1,0", "--samples", "500", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            check(status.status.success(), || {
                format!("CLI run {run} failed: {}", String::from_utf8_lossy(&status.stderr))
            })?;
            outputs.push((
                std::fs::read(&out).map_err(|e| e.to_string())?,
                status.stdout,
            ));
        }
        check(outputs[0] == outputs[1], || {
            "repeated CLI runs produced different certificate or report bytes".into()
        })?;
        Ok(())
    })();
    report(9, "identical seeds produce byte-identical certificates and reports", result);
}
