//! Command-line driver: problem/certificate file handling, construction
//! and verification commands, and stable exit codes for scripting.
//!
//! Exit codes: 0 pass, 2 residual failure, 3 hypothesis failure,
//! 4 coverage failure, 5 non-isolated zeros, 64 parse error,
//! 65 infeasible point, 66 file/format error.

use clap::{Args, Parser, Subcommand};
use nncert::error::Error;
use nncert::globalcert::{self, GlobalOptions};
use nncert::kkt;
use nncert::localcert;
use nncert::problem::{Problem, ProblemFile};
use nncert::verify::{self, Certificate, SampleSettings};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_RESIDUAL: u8 = 2;
const EXIT_HYPOTHESIS: u8 = 3;
const EXIT_COVERAGE: u8 = 4;
const EXIT_NON_ISOLATED: u8 = 5;
const EXIT_PARSE: u8 = 64;
const EXIT_INFEASIBLE: u8 = 65;
const EXIT_FORMAT: u8 = 66;

#[derive(Parser)]
#[command(
    name = "nncert",
    version,
    about = "Constructive sums-of-squares-weighted nonnegativity certificates",
    after_help = "Set NNCERT_LOG=debug for progress logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRun {
    /// Seed for all deterministic sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of verification samples.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Override the residual tolerance.
    #[arg(long)]
    tol_resid: Option<f64>,
    /// Override the quadrature order for integral factors.
    #[arg(long)]
    quad_order: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the KKT hypotheses (regularity, strict complementarity,
    /// second-order sufficiency) at a point.
    CheckKkt {
        problem: PathBuf,
        /// Point as comma-separated coordinates, e.g. "1,0".
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Enumerate the zeros of f - f* on the constraint set by multistart
    /// search, with full hypothesis reports.
    Zeros {
        problem: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multistart budget (number of starts).
        #[arg(long)]
        budget: Option<usize>,
        /// Certify f - f_star instead of f.
        #[arg(long, allow_hyphen_values = true)]
        f_star: Option<f64>,
    },
    /// Build a local certificate on a ball around one nondegenerate zero.
    CertifyLocal {
        problem: PathBuf,
        /// Zero as comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Write the certificate JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: CommonRun,
    },
    /// Build a global certificate over the problem box.
    CertifyGlobal {
        problem: PathBuf,
        /// User-asserted zero list, points separated by ';',
        /// coordinates by ',' (e.g. "1,0;-1,0").
        #[arg(long, allow_hyphen_values = true)]
        zeros: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        f_star: Option<f64>,
        /// Multistart budget when zeros are not asserted.
        #[arg(long)]
        budget: Option<usize>,
        /// Write the certificate JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: CommonRun,
    },
    /// Re-verify a certificate file against a problem file.
    Verify {
        problem: PathBuf,
        certificate: PathBuf,
        #[command(flatten)]
        run: CommonRun,
    },
    /// Audit the global optimality conditions at a minimizer using a
    /// certificate as the witness.
    Optimality {
        problem: PathBuf,
        certificate: PathBuf,
        /// Claimed global minimizer, comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[command(flatten)]
        run: CommonRun,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Residual(_) => EXIT_RESIDUAL,
        Error::Hypothesis(_) | Error::NotNonnegative { .. } | Error::Construction(_) => {
            EXIT_HYPOTHESIS
        }
        Error::Coverage { .. } | Error::Domain(_) | Error::ChartInverse { .. } => EXIT_COVERAGE,
        Error::NonIsolated(_) => EXIT_NON_ISOLATED,
        Error::Parse { .. } | Error::Invalid(_) | Error::Dimension { .. } => EXIT_PARSE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Format(_) | Error::Io(_) => EXIT_FORMAT,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code_for(e))
}

fn load_problem(path: &Path, run: Option<&CommonRun>) -> Result<Problem, Error> {
    let bytes = std::fs::read(path)?;
    let file = ProblemFile::from_json(&bytes)?;
    let mut p = file.build()?;
    if let Some(run) = run {
        if let Some(t) = run.tol_resid {
            p.tol.tol_resid_local = t;
            p.tol.tol_resid_global = t;
        }
        if let Some(q) = run.quad_order {
            p.tol.quad_order = q;
        }
    }
    Ok(p)
}

fn load_options(path: &Path) -> Result<(Option<Vec<Vec<f64>>>, Option<f64>), Error> {
    let bytes = std::fs::read(path)?;
    let file = ProblemFile::from_json(&bytes)?;
    Ok((file.options.zeros, file.options.f_star))
}

fn parse_point(s: &str, n: usize) -> Result<Vec<f64>, Error> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::Parse {
            pos: 0,
            msg: format!("point `{s}`: {e}"),
        })?;
    if coords.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: coords.len(),
        });
    }
    Ok(coords)
}

fn parse_zero_list(s: &str, n: usize) -> Result<Vec<Vec<f64>>, Error> {
    s.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(|part| parse_point(part, n))
        .collect()
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serialization cannot fail")
    );
}

fn cmd_check_kkt(problem: &Path, point: &str) -> Result<u8, Error> {
    let p = load_problem(problem, None)?;
    let x = parse_point(point, p.n)?;
    if !p.is_feasible(&x)? {
        return Err(Error::Infeasible(format!("point {x:?} is not feasible")));
    }
    let report = kkt::check_point(&p, &x)?;
    print_json(&report);
    Ok(if report.hypotheses_pass() {
        0
    } else {
        EXIT_HYPOTHESIS
    })
}

fn cmd_zeros(
    problem: &Path,
    seed: u64,
    budget: Option<usize>,
    f_star: Option<f64>,
) -> Result<u8, Error> {
    let p = load_problem(problem, None)?;
    let (file_zeros, file_f_star) = load_options(problem)?;
    let f_star = f_star.or(file_f_star).unwrap_or(0.0);
    let z = match file_zeros {
        Some(pts) => globalcert::zero_set_from_points(&p, f_star, &pts)?,
        None => globalcert::find_zeros(
            &p,
            f_star,
            budget.unwrap_or(p.tol.multistart_budget),
            seed,
        )?,
    };
    print_json(&json!({
        "f_star": f_star,
        "zeros": z.points,
        "completeness": z.completeness,
        "starts": z.starts,
        "converged": z.converged,
        "reports": z.reports,
    }));
    Ok(0)
}

fn write_certificate(out: Option<&PathBuf>, cert: &Certificate) -> Result<(), Error> {
    if let Some(path) = out {
        std::fs::write(path, cert.to_json())?;
        log::info!("certificate written to {}", path.display());
    }
    Ok(())
}

fn cmd_certify_local(
    problem: &Path,
    point: &str,
    out: Option<&PathBuf>,
    run: &CommonRun,
) -> Result<u8, Error> {
    let p = load_problem(problem, Some(run))?;
    let x = parse_point(point, p.n)?;
    if !p.is_feasible(&x)? {
        return Err(Error::Infeasible(format!("point {x:?} is not feasible")));
    }
    let report = kkt::check_point(&p, &x)?;
    let (_, file_f_star) = load_options(problem)?;
    let local = localcert::local_certificate_shifted(&p, &report, file_f_star.unwrap_or(0.0))?;
    let cert = Certificate::from_local(&local);
    let stats = verify::sample_residual(
        &p,
        &cert,
        &SampleSettings {
            seed: run.seed,
            count: run.samples,
        },
    );
    print_json(&json!({
        "kind": "local",
        "base": local.base,
        "radius": local.radius,
        "f_star": local.f_star,
        "active": local.active,
        "lambda": local.lambda,
        "residual": stats,
    }));
    if stats.coverage_defect.is_some() {
        return Err(Error::Coverage {
            point: stats.coverage_defect.unwrap(),
        });
    }
    if stats.max_residual > p.tol.tol_resid_local {
        return Err(Error::Residual(format!(
            "max residual {:.3e} exceeds {:.1e}",
            stats.max_residual, p.tol.tol_resid_local
        )));
    }
    write_certificate(out, &cert)?;
    Ok(0)
}

fn cmd_certify_global(
    problem: &Path,
    zeros: Option<&str>,
    f_star: Option<f64>,
    budget: Option<usize>,
    out: Option<&PathBuf>,
    run: &CommonRun,
) -> Result<u8, Error> {
    let p = load_problem(problem, Some(run))?;
    let (file_zeros, file_f_star) = load_options(problem)?;
    let zero_list = match zeros {
        Some(s) => Some(parse_zero_list(s, p.n)?),
        None => file_zeros,
    };
    let opts = GlobalOptions {
        f_star: f_star.or(file_f_star),
        zeros: zero_list,
        seed: run.seed,
        budget,
    };
    let global = globalcert::global_certificate(&p, &opts)?;
    let cert = Certificate::from_global(&global);
    let stats = verify::sample_residual(
        &p,
        &cert,
        &SampleSettings {
            seed: run.seed,
            count: run.samples,
        },
    );
    print_json(&json!({
        "kind": "global",
        "f_star": global.f_star,
        "zeros": global.zeros,
        "radii": global.radii,
        "regions": global.regions,
        "completeness": global.completeness,
        "residual": stats,
    }));
    if let Some(w) = stats.coverage_defect {
        return Err(Error::Coverage { point: w });
    }
    if stats.max_residual > p.tol.tol_resid_global {
        return Err(Error::Residual(format!(
            "max residual {:.3e} exceeds {:.1e}",
            stats.max_residual, p.tol.tol_resid_global
        )));
    }
    write_certificate(out, &cert)?;
    Ok(0)
}

fn load_certificate(path: &Path) -> Result<Certificate, Error> {
    let bytes = std::fs::read(path)?;
    Certificate::from_json(&bytes)
}

fn cmd_verify(problem: &Path, certificate: &Path, run: &CommonRun) -> Result<u8, Error> {
    let p = load_problem(problem, Some(run))?;
    let cert = load_certificate(certificate)?;
    if cert.dimension != p.n {
        return Err(Error::Dimension {
            expected: p.n,
            got: cert.dimension,
        });
    }
    let stats = verify::sample_residual(
        &p,
        &cert,
        &SampleSettings {
            seed: run.seed,
            count: run.samples,
        },
    );
    let tol = run.tol_resid.unwrap_or(p.tol.tol_resid_global);
    let sos = cert.phi_structurally_sos();
    print_json(&json!({
        "residual": stats,
        "phi_structurally_sos": sos,
        "tol_resid": tol,
    }));
    if let Some(w) = &stats.coverage_defect {
        eprintln!("coverage defect at {w:?}");
        return Ok(EXIT_COVERAGE);
    }
    if stats.max_residual > tol || !sos {
        eprintln!(
            "residual check failed: max {:.3e} > {:.1e}",
            stats.max_residual, tol
        );
        return Ok(EXIT_RESIDUAL);
    }
    Ok(0)
}

fn cmd_optimality(
    problem: &Path,
    certificate: &Path,
    point: &str,
    run: &CommonRun,
) -> Result<u8, Error> {
    let p = load_problem(problem, Some(run))?;
    let cert = load_certificate(certificate)?;
    let x = parse_point(point, p.n)?;
    let report = verify::check_global_optimality(
        &p,
        &cert,
        &x,
        &SampleSettings {
            seed: run.seed,
            count: run.samples,
        },
    )?;
    print_json(&report);
    if report.pass {
        return Ok(0);
    }
    let failing = report.failing_condition.as_deref().unwrap_or("unknown");
    eprintln!("global optimality audit failed: {failing}");
    Ok(match failing {
        f if f.contains("coverage") => EXIT_COVERAGE,
        f if f.contains("residual") => EXIT_RESIDUAL,
        _ => EXIT_HYPOTHESIS,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NNCERT_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::CheckKkt { problem, point } => cmd_check_kkt(problem, point),
        Command::Zeros {
            problem,
            seed,
            budget,
            f_star,
        } => cmd_zeros(problem, *seed, *budget, *f_star),
        Command::CertifyLocal {
            problem,
            point,
            out,
            run,
        } => cmd_certify_local(problem, point, out.as_ref(), run),
        Command::CertifyGlobal {
            problem,
            zeros,
            f_star,
            budget,
            out,
            run,
        } => cmd_certify_global(problem, zeros.as_deref(), *f_star, *budget, out.as_ref(), run),
        Command::Verify {
            problem,
            certificate,
            run,
        } => cmd_verify(problem, certificate, run),
        Command::Optimality {
            problem,
            certificate,
            point,
            run,
        } => cmd_optimality(problem, certificate, point, run),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(&e),
    }
}
