//! Independent re-verification of certificates and of the global
//! optimality conditions with function-valued multipliers.
//!
//! Everything here works from a [`Certificate`] — the serializable form
//! of a local or global construction — plus the problem data, with no
//! access to construction state. A report computed from a deserialized
//! certificate matches the in-memory one within 1e-14.
//!
//! The audited conditions, for `𝓛(x) = f(x) − f* − Σφᵢ(x)gᵢ(x) −
//! Σψⱼ(x)hⱼ(x)`:
//!
//! 1. `φ₀(x*) = 0`, `φᵢ(x*)gᵢ(x*) = 0` and `φᵢ(x*) ≥ 0`;
//! 2. `∇f(x*) − Σφᵢ(x*)∇gᵢ(x*) − Σψⱼ(x*)∇hⱼ(x*) = 0` — the `∇φᵢ` cross
//!    terms drop out exactly because of (1);
//! 3. `𝓛 ≥ 0` on samples and `𝓛(x*) = 0`; nonnegativity is structural
//!    from the sum-of-squares witness of `φ₀`, the sampled check guards
//!    against a corrupted program.

use crate::error::{Error, Result};
use crate::globalcert::{Completeness, GlobalCertificate, Region};
use crate::kkt::CompiledProblem;
use crate::localcert::LocalCertificate;
use crate::problem::{BoxDomain, Problem};
use crate::program::{is_sum_of_squares, EvalProgram, IR_VERSION};
use crate::sample;
use crate::serialize::{program_from_repr, program_to_repr, ProgramRepr};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    /// Valid on a ball around a single zero.
    Local,
    /// Valid on the recorded box.
    Global,
}

/// Serializable certificate: program roots are
/// `[φ₀, φ_1..φ_l, ψ_1..ψ_m, ...]`; global certificates carry the
/// partition sum `Σ w̃²` as root `1 + l + m`, local ones carry their
/// square-root witnesses after the ψ block.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub dimension: usize,
    pub f_star: f64,
    /// Validity box; for local certificates, the bounding box of the
    /// validity ball.
    pub domain: BoxDomain,
    pub zeros: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub completeness: Option<Completeness>,
    pub regions: Vec<Region>,
    pub l: usize,
    pub m: usize,
    pub program: EvalProgram,
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    version: u32,
    kind: CertificateKind,
    dimension: usize,
    f_star: f64,
    domain: BoxDomain,
    zeros: Vec<Vec<f64>>,
    radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completeness: Option<Completeness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    regions: Vec<Region>,
    l: usize,
    m: usize,
    program: ProgramRepr,
}

impl Certificate {
    pub fn from_global(c: &GlobalCertificate) -> Self {
        Certificate {
            kind: CertificateKind::Global,
            dimension: c.dimension,
            f_star: c.f_star,
            domain: c.domain.clone(),
            zeros: c.zeros.clone(),
            radii: c.radii.clone(),
            completeness: Some(c.completeness),
            regions: c.regions.clone(),
            l: c.l,
            m: c.m,
            program: c.program.clone(),
        }
    }

    pub fn from_local(c: &LocalCertificate) -> Self {
        let lower: Vec<f64> = c.base.iter().map(|v| v - c.radius).collect();
        let upper: Vec<f64> = c.base.iter().map(|v| v + c.radius).collect();
        Certificate {
            kind: CertificateKind::Local,
            dimension: c.dimension,
            f_star: c.f_star,
            domain: BoxDomain::new(lower, upper).expect("radius is positive"),
            zeros: vec![c.base.clone()],
            radii: vec![c.radius],
            completeness: None,
            regions: Vec::new(),
            l: c.l,
            m: c.m,
            program: c.program.clone(),
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = CertificateFile {
            version: IR_VERSION,
            kind: self.kind,
            dimension: self.dimension,
            f_star: self.f_star,
            domain: self.domain.clone(),
            zeros: self.zeros.clone(),
            radii: self.radii.clone(),
            completeness: self.completeness,
            regions: self.regions.clone(),
            l: self.l,
            m: self.m,
            program: program_to_repr(&self.program),
        };
        let mut bytes =
            serde_json::to_vec_pretty(&file).expect("certificate serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: CertificateFile = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("malformed certificate: {e}")))?;
        if file.version != IR_VERSION {
            return Err(Error::Format(format!(
                "certificate version mismatch: file has {}, supported is {IR_VERSION}",
                file.version
            )));
        }
        let program = program_from_repr(&file.program)?;
        if program.dimension != file.dimension {
            return Err(Error::Format(
                "certificate dimension does not match its program".into(),
            ));
        }
        if program.roots.len() < 1 + file.l + file.m {
            return Err(Error::Format(
                "certificate program has too few roots for its (l, m)".into(),
            ));
        }
        Ok(Certificate {
            kind: file.kind,
            dimension: file.dimension,
            f_star: file.f_star,
            domain: file.domain,
            zeros: file.zeros,
            radii: file.radii,
            completeness: file.completeness,
            regions: file.regions,
            l: file.l,
            m: file.m,
            program,
        })
    }

    /// `(φ₀, φ, ψ)` at `x`, without the residual.
    pub fn pieces(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let vals = self.program.eval_values(x)?;
        Ok((
            vals[0],
            vals[1..1 + self.l].to_vec(),
            vals[1 + self.l..1 + self.l + self.m].to_vec(),
        ))
    }

    /// Partition-of-unity sum, when the certificate records one.
    pub fn partition_sum(&self, x: &[f64]) -> Result<Option<f64>> {
        if self.kind != CertificateKind::Global {
            return Ok(None);
        }
        let vals = self.program.eval_values(x)?;
        Ok(vals.get(1 + self.l + self.m).copied())
    }

    /// Every `φᵢ` root must be a recorded sum of squares.
    pub fn phi_structurally_sos(&self) -> bool {
        (0..=self.l).all(|i| is_sum_of_squares(self.program.view(), self.program.roots[i]))
    }

    /// Validity samples: box samples for global certificates, ball
    /// samples for local ones.
    fn validity_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        match self.kind {
            CertificateKind::Global => sample::box_samples(&self.domain, count, seed),
            CertificateKind::Local => {
                sample::ball_samples(&self.zeros[0], self.radii[0], count, seed)
            }
        }
    }
}

/// Evaluate all pieces and the defining residual
/// `f(x) − f* − φ₀ − Σφᵢgᵢ − Σψⱼhⱼ` at one point.
pub fn eval_certificate(
    p: &Problem,
    cert: &Certificate,
    x: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>, f64)> {
    if x.len() != cert.dimension {
        return Err(Error::Dimension {
            expected: cert.dimension,
            got: x.len(),
        });
    }
    if !cert.domain.contains(x) {
        return Err(Error::domain(format!(
            "point {x:?} outside certificate validity box"
        )));
    }
    let cp = CompiledProblem::new(p);
    let (phi0, phi, psi) = cert.pieces(x)?;
    let mut r = cp.f.eval_scalar(x)? - cert.f_star - phi0;
    for (pi, gi) in phi.iter().zip(&cp.g) {
        r -= pi * gi.eval_scalar(x)?;
    }
    for (pj, hj) in psi.iter().zip(&cp.h) {
        r -= pj * hj.eval_scalar(x)?;
    }
    Ok((phi0, phi, psi, r))
}

/// Sampling settings for residual statistics and audits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SampleSettings {
    pub seed: u64,
    pub count: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        SampleSettings {
            seed: 0,
            count: 10_000,
        }
    }
}

/// Residual statistics over deterministic low-discrepancy samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: usize,
    pub seed: u64,
    pub max_residual: f64,
    pub argmax_point: Vec<f64>,
    pub mean_abs_residual: f64,
    /// Sampled minima of `[φ₀, φ_1..φ_l]`.
    pub min_phi: Vec<f64>,
    /// Max of `|Σ w̃² − 1|` (0 for local certificates).
    pub partition_defect: f64,
    /// Set when some sample fails to evaluate: a coverage defect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_defect: Option<Vec<f64>>,
    /// Set for degenerate input (count 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Deterministic residual statistics over the validity region.
pub fn sample_residual(p: &Problem, cert: &Certificate, s: &SampleSettings) -> ResidualStats {
    let mut stats = ResidualStats {
        count: s.count,
        seed: s.seed,
        max_residual: 0.0,
        argmax_point: Vec::new(),
        mean_abs_residual: 0.0,
        min_phi: vec![f64::INFINITY; 1 + cert.l],
        partition_defect: 0.0,
        coverage_defect: None,
        error: None,
    };
    if s.count == 0 {
        stats.min_phi.clear();
        stats.error = Some("empty sample count".into());
        return stats;
    }
    let cp = CompiledProblem::new(p);
    let mut total = 0.0;
    for x in cert.validity_samples(s.count, s.seed) {
        let eval = (|| -> Result<()> {
            let (phi0, phi, psi) = cert.pieces(&x)?;
            let mut r = cp.f.eval_scalar(&x)? - cert.f_star - phi0;
            for (pi, gi) in phi.iter().zip(&cp.g) {
                r -= pi * gi.eval_scalar(&x)?;
            }
            for (pj, hj) in psi.iter().zip(&cp.h) {
                r -= pj * hj.eval_scalar(&x)?;
            }
            if r.abs() > stats.max_residual {
                stats.max_residual = r.abs();
                stats.argmax_point = x.clone();
            }
            total += r.abs();
            stats.min_phi[0] = stats.min_phi[0].min(phi0);
            for (slot, v) in stats.min_phi[1..].iter_mut().zip(&phi) {
                *slot = slot.min(*v);
            }
            if let Some(part) = cert.partition_sum(&x)? {
                stats.partition_defect = stats.partition_defect.max((part - 1.0).abs());
            }
            Ok(())
        })();
        if eval.is_err() && stats.coverage_defect.is_none() {
            stats.coverage_defect = Some(x);
        }
    }
    stats.mean_abs_residual = total / s.count as f64;
    stats
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionOne {
    pub phi0_at_star: f64,
    /// `φᵢ(x*)·gᵢ(x*)` for each inequality.
    pub complementarity: Vec<f64>,
    pub min_phi_at_star: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionTwo {
    /// `∇f(x*) − Σφᵢ(x*)∇gᵢ(x*) − Σψⱼ(x*)∇hⱼ(x*)`.
    pub gradient: Vec<f64>,
    pub defect: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionThree {
    pub min_lagrangian: f64,
    pub min_point: Vec<f64>,
    pub lagrangian_at_star: f64,
    pub pass: bool,
}

/// Tolerances used by the audit, recorded in the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditTolerances {
    pub tol_resid: f64,
    pub tol_complementarity: f64,
    pub tol_gradient: f64,
    pub tol_lagrangian_neg: f64,
    pub tol_lagrangian_star: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        AuditTolerances {
            tol_resid: 1e-6,
            tol_complementarity: 1e-8,
            tol_gradient: 1e-8,
            tol_lagrangian_neg: 1e-12,
            tol_lagrangian_star: 1e-10,
        }
    }
}

/// Full audit report: residual statistics plus the three global
/// optimality conditions at the queried minimizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub residual: ResidualStats,
    pub condition_one: ConditionOne,
    pub condition_two: ConditionTwo,
    pub condition_three: ConditionThree,
    /// Max over samples of `|𝓛(x) − φ₀(x)|`; the two are identical by
    /// the residual identity.
    pub lagrangian_phi0_gap: f64,
    pub phi_structurally_sos: bool,
    pub tolerances: AuditTolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_condition: Option<String>,
    pub pass: bool,
}

/// Audit the certificate as a witness that `x_star` globally minimizes
/// `f` over `S` (restricted to the validity box) with value `f_star`.
pub fn check_global_optimality(
    p: &Problem,
    cert: &Certificate,
    x_star: &[f64],
    s: &SampleSettings,
) -> Result<VerificationReport> {
    if x_star.len() != cert.dimension {
        return Err(Error::Dimension {
            expected: cert.dimension,
            got: x_star.len(),
        });
    }
    let cp = CompiledProblem::new(p);
    let tol = AuditTolerances {
        tol_resid: p.tol.tol_resid_global.max(1e-12),
        ..Default::default()
    };

    // condition (i): vanishing and complementarity at x*
    let (phi0_star, phi_star, psi_star) = cert.pieces(x_star)?;
    let mut complementarity = Vec::with_capacity(cert.l);
    for (pi, gi) in phi_star.iter().zip(&cp.g) {
        complementarity.push(pi * gi.eval_scalar(x_star)?);
    }
    let min_phi_at_star = phi_star.iter().cloned().fold(f64::INFINITY, f64::min);
    let one_pass = phi0_star.abs() <= tol.tol_complementarity
        && complementarity
            .iter()
            .all(|c| c.abs() <= tol.tol_complementarity)
        && (cert.l == 0 || min_phi_at_star >= -tol.tol_complementarity);
    let condition_one = ConditionOne {
        phi0_at_star: phi0_star,
        complementarity,
        min_phi_at_star: if cert.l == 0 { 0.0 } else { min_phi_at_star },
        pass: one_pass,
    };

    // condition (ii): gradient identity with φ, ψ as multipliers
    let n = cert.dimension;
    let mut gradient = cp.f.eval_jet(x_star)?.gradient;
    for (pi, gi) in phi_star.iter().zip(&cp.g) {
        let jg = gi.eval_jet(x_star)?;
        for (slot, d) in gradient.iter_mut().zip(&jg.gradient) {
            *slot -= pi * d;
        }
    }
    for (pj, hj) in psi_star.iter().zip(&cp.h) {
        let jh = hj.eval_jet(x_star)?;
        for (slot, d) in gradient.iter_mut().zip(&jh.gradient) {
            *slot -= pj * d;
        }
    }
    let defect = gradient.iter().map(|d| d * d).sum::<f64>().sqrt();
    debug_assert_eq!(gradient.len(), n);
    let condition_two = ConditionTwo {
        gradient,
        defect,
        pass: defect <= tol.tol_gradient,
    };

    // residual statistics + condition (iii) over the same samples
    let stats = sample_residual(p, cert, s);
    let mut min_lagrangian = f64::INFINITY;
    let mut min_point = x_star.to_vec();
    let mut gap = 0.0_f64;
    for x in cert.validity_samples(s.count, s.seed) {
        let Ok((phi0, phi, psi)) = cert.pieces(&x) else {
            continue; // already recorded as a coverage defect
        };
        let mut lagr = cp.f.eval_scalar(&x)? - cert.f_star;
        for (pi, gi) in phi.iter().zip(&cp.g) {
            lagr -= pi * gi.eval_scalar(&x)?;
        }
        for (pj, hj) in psi.iter().zip(&cp.h) {
            lagr -= pj * hj.eval_scalar(&x)?;
        }
        if lagr < min_lagrangian {
            min_lagrangian = lagr;
            min_point = x.clone();
        }
        gap = gap.max((lagr - phi0).abs());
    }
    let mut lagr_star = cp.f.eval_scalar(x_star)? - cert.f_star;
    for (pi, gi) in phi_star.iter().zip(&cp.g) {
        lagr_star -= pi * gi.eval_scalar(x_star)?;
    }
    for (pj, hj) in psi_star.iter().zip(&cp.h) {
        lagr_star -= pj * hj.eval_scalar(x_star)?;
    }
    if !min_lagrangian.is_finite() {
        min_lagrangian = lagr_star;
    }
    let condition_three = ConditionThree {
        min_lagrangian,
        min_point,
        lagrangian_at_star: lagr_star,
        pass: min_lagrangian >= -tol.tol_lagrangian_neg
            && lagr_star.abs() <= tol.tol_lagrangian_star,
    };

    let residual_pass = stats.max_residual <= tol.tol_resid && stats.coverage_defect.is_none();
    let sos = cert.phi_structurally_sos();
    let gap_pass = gap <= tol.tol_resid;

    let failing_condition = if !residual_pass {
        Some(if stats.coverage_defect.is_some() {
            "coverage".to_string()
        } else {
            "residual identity".to_string()
        })
    } else if !sos {
        Some("structural sum of squares".to_string())
    } else if !condition_one.pass {
        Some("condition (i) complementarity".to_string())
    } else if !condition_two.pass {
        Some("condition (ii) gradient identity".to_string())
    } else if !condition_three.pass {
        Some("condition (iii) Lagrangian nonnegativity".to_string())
    } else if !gap_pass {
        Some("Lagrangian/φ₀ identity".to_string())
    } else {
        None
    };
    let pass = failing_condition.is_none();

    Ok(VerificationReport {
        x_star: x_star.to_vec(),
        f_star: cert.f_star,
        residual: stats,
        condition_one,
        condition_two,
        condition_three,
        lagrangian_phi0_gap: gap,
        phi_structurally_sos: sos,
        tolerances: tol,
        failing_condition,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::globalcert::{global_certificate, GlobalOptions};
    use crate::program::ProgramBuilder;
    use approx::assert_abs_diff_eq;

    fn worked_problem() -> Problem {
        Problem::new(
            2,
            parse("x1^2 + x2^2 - 1", 2).unwrap(),
            vec![parse("x1 - 1", 2).unwrap()],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap()
    }

    fn worked_certificate() -> (Problem, Certificate) {
        let p = worked_problem();
        let opts = GlobalOptions {
            zeros: Some(vec![vec![1.0, 0.0]]),
            ..Default::default()
        };
        let g = global_certificate(&p, &opts).unwrap();
        let cert = Certificate::from_global(&g);
        (p, cert)
    }

    #[test]
    fn eval_certificate_worked_example() {
        let (p, cert) = worked_certificate();
        let (_, _, _, r) = eval_certificate(&p, &cert, &[1.1, 0.1]).unwrap();
        assert!(r.abs() <= 1e-9, "residual {r:.3e}");
        let (phi0, phi, _, _) = eval_certificate(&p, &cert, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(phi0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn eval_certificate_rejects_outside_box() {
        let (p, cert) = worked_certificate();
        assert!(matches!(
            eval_certificate(&p, &cert, &[3.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn audit_passes_on_worked_example() {
        let (p, cert) = worked_certificate();
        let s = SampleSettings {
            seed: 0,
            count: 2000,
        };
        let report = check_global_optimality(&p, &cert, &[1.0, 0.0], &s).unwrap();
        assert!(report.pass, "failing: {:?}", report.failing_condition);
        assert!(report.condition_two.defect <= 1e-8);
        assert!(report.lagrangian_phi0_gap <= 1e-6);
        assert!(report.phi_structurally_sos);
    }

    #[test]
    fn audit_detects_tampered_phi() {
        let (p, mut cert) = worked_certificate();
        // scale the φ₁ root by 1.1
        let mut b = ProgramBuilder::new(cert.dimension);
        let xs = b.vars();
        let imported = b.import(&cert.program, &xs);
        let scale = b.constant(1.1);
        let mut roots = imported.clone();
        roots[1] = b.mul(imported[1], scale);
        cert.program = b.finish(roots);

        let s = SampleSettings {
            seed: 0,
            count: 500,
        };
        let report = check_global_optimality(&p, &cert, &[1.0, 0.0], &s).unwrap();
        assert!(!report.pass);
        let failing = report.failing_condition.unwrap();
        assert!(
            failing.contains("residual") || failing.contains("gradient"),
            "unexpected failing condition: {failing}"
        );
    }

    #[test]
    fn verification_is_constructor_independent() {
        let (p, cert) = worked_certificate();
        let round = Certificate::from_json(&cert.to_json()).unwrap();
        let s = SampleSettings {
            seed: 5,
            count: 500,
        };
        let a = check_global_optimality(&p, &cert, &[1.0, 0.0], &s).unwrap();
        let b = check_global_optimality(&p, &round, &[1.0, 0.0], &s).unwrap();
        assert!((a.residual.max_residual - b.residual.max_residual).abs() <= 1e-14);
        assert!((a.condition_two.defect - b.condition_two.defect).abs() <= 1e-14);
        assert!(
            (a.condition_three.min_lagrangian - b.condition_three.min_lagrangian).abs() <= 1e-14
        );
        assert_eq!(a.pass, b.pass);
    }

    #[test]
    fn certificate_json_round_trip_identical() {
        let (_, cert) = worked_certificate();
        let bytes = cert.to_json();
        let round = Certificate::from_json(&bytes).unwrap();
        assert_eq!(round.to_json(), bytes);
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let (_, cert) = worked_certificate();
        let text = String::from_utf8(cert.to_json()).unwrap();
        let bumped = text.replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(
            Certificate::from_json(bumped.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn empty_sample_count_flags_error() {
        let (p, cert) = worked_certificate();
        let stats = sample_residual(&p, &cert, &SampleSettings { seed: 0, count: 0 });
        assert!(stats.error.is_some());
        assert!(stats.min_phi.is_empty());
    }

    #[test]
    fn mismatched_problem_fails_residual() {
        let (_, cert) = worked_certificate();
        let other = Problem::new(
            2,
            parse("x1^2 + 2*x2^2 - 1", 2).unwrap(),
            vec![parse("x1 - 1", 2).unwrap()],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let stats = sample_residual(&other, &cert, &SampleSettings { seed: 0, count: 500 });
        assert!(stats.max_residual > 1e-3);
    }

    #[test]
    fn local_certificate_round_trip_verifies() {
        let p = worked_problem();
        let r = crate::kkt::check_point(&p, &[1.0, 0.0]).unwrap();
        let local = crate::localcert::local_certificate(&p, &r).unwrap();
        let cert = Certificate::from_local(&local);
        let round = Certificate::from_json(&cert.to_json()).unwrap();
        let stats = sample_residual(&p, &round, &SampleSettings { seed: 1, count: 500 });
        assert!(stats.max_residual <= 1e-8, "max {:.3e}", stats.max_residual);
        assert!(stats.coverage_defect.is_none());
    }
}
