//! Global certificate construction over a compact box.
//!
//! The pipeline: enumerate the zeros of `f - f*` on the constraint set
//! (multistart local minimization plus Lagrange–Newton polishing, or a
//! user-asserted list), build a local certificate around each zero, cover
//! the box with open regions — zero balls, the positive region
//! `{f - f* > δ}`, violated-inequality regions `{g_i < -δ_i}` and
//! violated-equality regions `{|h_j| > δ_j}` — attach an exact
//! decomposition to each region, and glue everything with a squared
//! partition of unity built from polynomial-ramp bumps.
//!
//! Regions other than zero balls exclude the half-radius interior of
//! every zero ball, so near each certified zero the glued `φ_i` coincide
//! with the local (hand-checkable) pieces. The glued functions are
//!
//! ```text
//! φ_i = Σ_k w̃_k² φ_{k,i},   ψ_j = Σ_k w̃_k² ψ_{k,j},   Σ_k w̃_k² = 1,
//! ```
//!
//! with each `φ` summand stored in squared, support-gated form so
//! nonnegativity is structural and evaluation never leaves a region's
//! domain of definition.
//!
//! The construction runs over a user-supplied compact box rather than all
//! of ℝⁿ: bump supports, margins and coverage are only decidable by
//! sampling a compact set. All reports flag validity as "on box".

use crate::error::{Error, Result};
use crate::kkt::{self, CompiledProblem, KKTReport};
use crate::localcert::{local_certificate_shifted, LocalCertificate};
use crate::problem::{BoxDomain, Problem};
use crate::program::{EvalProgram, NodeId, ProgramBuilder};
use crate::sample;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Ramp exponent `p_smooth + 1` with `p_smooth = 2`: bumps are C².
const BUMP_POWER: u32 = 3;
/// Bump support of a zero ball is this fraction of its validity radius.
const BALL_SHRINK: f64 = 0.9;
/// Non-ball regions exclude the half-radius interior of every zero ball.
const BALL_CORE: f64 = 0.5;
const MARGIN_SAMPLES: usize = 2048;
const MARGIN_SEED: u64 = 17;
const COVER_SEED: u64 = 29;
const RESIDUAL_SAMPLES: usize = 1024;
const RESIDUAL_SEED: u64 = 23;
/// Penalty weights for the multistart stage.
const PENALTY_STAGES: [f64; 3] = [1e1, 1e3, 1e5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Completeness {
    /// Zero list supplied by the user.
    UserAsserted,
    /// Zero list found by multistart search; may be incomplete.
    Heuristic,
}

/// The enumerated zeros of `f - f*` on `S ∩ box`, each with a full
/// hypothesis report.
#[derive(Clone, Debug)]
pub struct ZeroSet {
    pub points: Vec<Vec<f64>>,
    pub reports: Vec<KKTReport>,
    pub completeness: Completeness,
    pub starts: usize,
    pub converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionKind {
    /// Ball around the `index`-th zero.
    ZeroBall { index: usize },
    /// `{f - f* > delta}` minus the ball cores.
    Positive,
    /// `{g_i < -delta}` minus the ball cores.
    NegIneq { index: usize },
    /// `{|h_j| > delta}` minus the ball cores.
    NonzeroEq { index: usize },
}

/// One open set of the cover with its margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Region {
    pub kind: RegionKind,
    /// Positivity margin δ; for balls, the support radius in original
    /// coordinates.
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

/// A glued certificate `f - f* = φ₀ + Σ φ_i g_i + Σ ψ_j h_j` valid on the
/// problem box (sampled, not interval-certified).
#[derive(Clone, Debug)]
pub struct GlobalCertificate {
    pub dimension: usize,
    pub f_star: f64,
    pub domain: BoxDomain,
    pub zeros: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub regions: Vec<Region>,
    pub completeness: Completeness,
    pub l: usize,
    pub m: usize,
    /// Shared node pool; roots are `[φ₀, φ_1..φ_l, ψ_1..ψ_m, Σ_k w̃_k²]`.
    pub program: EvalProgram,
}

impl GlobalCertificate {
    /// Evaluate `(φ₀, φ, ψ, partition sum)` at `x`.
    pub fn eval_pieces(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>, f64)> {
        let vals = self.program.eval_values(x)?;
        Ok((
            vals[0],
            vals[1..1 + self.l].to_vec(),
            vals[1 + self.l..1 + self.l + self.m].to_vec(),
            vals[1 + self.l + self.m],
        ))
    }

    /// `f(x) - f* - φ₀ - Σφ_i g_i - Σψ_j h_j`.
    pub fn residual(&self, cp: &CompiledProblem, x: &[f64]) -> Result<f64> {
        let (phi0, phi, psi, _) = self.eval_pieces(x)?;
        let mut r = cp.f.eval_scalar(x)? - self.f_star - phi0;
        for (pi, gi) in phi.iter().zip(&cp.g) {
            r -= pi * gi.eval_scalar(x)?;
        }
        for (pj, hj) in psi.iter().zip(&cp.h) {
            r -= pj * hj.eval_scalar(x)?;
        }
        Ok(r)
    }
}

/// Value, gradient and Hessian of the box-clamped exterior penalty
/// `f + μ(Σ min(0, g_i)² + Σ h_j²)`.
fn penalty_jet(
    cp: &CompiledProblem,
    mu: f64,
    x: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = cp.n;
    let jf = cp.f.eval_jet(x)?;
    let mut val = jf.value;
    let mut grad = DVector::from_vec(jf.gradient);
    let mut hess = DMatrix::from_row_slice(n, n, &jf.hessian);
    let mut add = |v: f64, j: crate::jet::Jet2| {
        val += mu * v * v;
        let g = DVector::from_vec(j.gradient);
        grad += 2.0 * mu * v * &g;
        hess += 2.0 * mu * (&g * g.transpose() + v * DMatrix::from_row_slice(n, n, &j.hessian));
    };
    for gi in &cp.g {
        let j = gi.eval_jet(x)?;
        if j.value < 0.0 {
            add(j.value, j);
        }
    }
    for hj in &cp.h {
        let j = hj.eval_jet(x)?;
        add(j.value, j);
    }
    Ok((val, grad, hess))
}

fn clamp_to_box(domain: &BoxDomain, x: &mut [f64]) {
    for (v, (lo, hi)) in x.iter_mut().zip(domain.lower.iter().zip(&domain.upper)) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Levenberg-damped Newton descent of the penalty function, clamped to
/// the box. Returns the final iterate; failure of a start is not an
/// error, just a wasted start.
fn penalty_minimize(cp: &CompiledProblem, domain: &BoxDomain, start: &[f64]) -> Option<Vec<f64>> {
    let n = cp.n;
    let mut x = start.to_vec();
    for &mu in &PENALTY_STAGES {
        let mut tau = 1e-8;
        for _ in 0..40 {
            let (val, grad, hess) = penalty_jet(cp, mu, &x).ok()?;
            if grad.norm() <= 1e-10 {
                break;
            }
            let mut moved = false;
            for _ in 0..25 {
                let damped = &hess + DMatrix::identity(n, n) * tau;
                let Some(step) = damped.lu().solve(&grad) else {
                    tau *= 10.0;
                    continue;
                };
                let mut cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
                clamp_to_box(domain, &mut cand);
                match penalty_jet(cp, mu, &cand) {
                    Ok((cval, _, _)) if cval < val => {
                        x = cand;
                        tau = (tau * 0.25).max(1e-12);
                        moved = true;
                        break;
                    }
                    _ => tau *= 10.0,
                }
            }
            if !moved {
                break;
            }
        }
    }
    Some(x)
}

/// Lagrange–Newton polish on the KKT system with a frozen near-active
/// set. Returns `None` when the system is singular or does not converge —
/// the caller falls back to the penalty iterate.
fn polish(cp: &CompiledProblem, domain: &BoxDomain, x0: &[f64]) -> Option<Vec<f64>> {
    let n = cp.n;
    let near_active: Vec<usize> = (0..cp.g.len())
        .filter(|&i| {
            cp.g[i]
                .eval_scalar(x0)
                .map(|v| v.abs() <= 1e-3)
                .unwrap_or(false)
        })
        .collect();
    let k = near_active.len();
    let m = cp.h.len();
    let dim = n + k + m;
    let mut x = x0.to_vec();
    let (lambda0, nu0, _) = kkt::solve_multipliers(cp, &x, &near_active).ok()?;
    let mut mult: Vec<f64> = near_active.iter().map(|&i| lambda0[i]).collect();
    mult.extend(nu0);

    let system = |x: &[f64], mult: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let jf = cp.f.eval_jet(x)?;
        let mut r = DVector::zeros(dim);
        let mut jac = DMatrix::zeros(dim, dim);
        let mut grad_l = DVector::from_vec(jf.gradient);
        let mut hess_l = DMatrix::from_row_slice(n, n, &jf.hessian);
        for (row, &i) in near_active.iter().enumerate() {
            let j = cp.g[i].eval_jet(x)?;
            let g = DVector::from_vec(j.gradient);
            grad_l -= mult[row] * &g;
            hess_l -= mult[row] * DMatrix::from_row_slice(n, n, &j.hessian);
            r[n + row] = j.value;
            for c in 0..n {
                jac[(n + row, c)] = g[c];
                jac[(c, n + row)] = -g[c];
            }
        }
        for (row, hj) in cp.h.iter().enumerate() {
            let j = hj.eval_jet(x)?;
            let g = DVector::from_vec(j.gradient);
            grad_l -= mult[k + row] * &g;
            hess_l -= mult[k + row] * DMatrix::from_row_slice(n, n, &j.hessian);
            r[n + k + row] = j.value;
            for c in 0..n {
                jac[(n + k + row, c)] = g[c];
                jac[(c, n + k + row)] = -g[c];
            }
        }
        for i in 0..n {
            r[i] = grad_l[i];
            for c in 0..n {
                jac[(i, c)] = hess_l[(i, c)];
            }
        }
        Ok((r, jac))
    };

    for _ in 0..25 {
        let (r, jac) = system(&x, &mult).ok()?;
        let rnorm = r.amax();
        if rnorm <= 1e-12 {
            break;
        }
        let step = jac.lu().solve(&r)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand_x: Vec<f64> = (0..n).map(|i| x[i] - scale * step[i]).collect();
            let cand_m: Vec<f64> = (0..k + m).map(|i| mult[i] - scale * step[n + i]).collect();
            if let Ok((rc, _)) = system(&cand_x, &cand_m) {
                if rc.amax() < rnorm {
                    x = cand_x;
                    mult = cand_m;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    if !domain.contains(&x) {
        return None;
    }
    Some(x)
}

/// Heuristic test for a flat (non-isolated) zero: probe along the
/// eigenvector of the smallest projected-Hessian eigenvalue; if `f` stays
/// at the zero level on a nearly feasible probe, the zero is not
/// isolated.
fn flat_direction(cp: &CompiledProblem, r: &KKTReport) -> bool {
    let d = r.tangent_dim();
    if d == 0 {
        return false;
    }
    let Ok(hess) = kkt::lagrangian_hessian(cp, &r.point, &r.active, &r.lambda, &r.nu) else {
        return false;
    };
    let v = DMatrix::from_fn(cp.n, d, |row, col| r.tangent_basis[col][row]);
    let projected = v.transpose() * hess * &v;
    let eig = projected.symmetric_eigen();
    let (idx, min_eig) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &e)| (i, e))
        .unwrap();
    if min_eig.abs() > 1e-6 {
        return false;
    }
    let dir = &v * eig.eigenvectors.column(idx);
    let delta = 0.05;
    for sign in [1.0, -1.0] {
        let probe: Vec<f64> = (0..cp.n).map(|i| r.point[i] + sign * delta * dir[i]).collect();
        let feasible_enough = cp
            .g
            .iter()
            .all(|gi| gi.eval_scalar(&probe).map(|v| v >= -1e-6).unwrap_or(false))
            && cp
                .h
                .iter()
                .all(|hj| hj.eval_scalar(&probe).map(|v| v.abs() <= 1e-3).unwrap_or(false));
        if !feasible_enough {
            continue;
        }
        if let Ok(v) = cp.f.eval_scalar(&probe) {
            if (v - r.f_value).abs() <= 1e-7 {
                return true;
            }
        }
    }
    false
}

/// Gate a candidate zero's hypothesis report, distinguishing flat
/// directions (non-isolated zero sets) from plain hypothesis failures.
fn gate_report(cp: &CompiledProblem, r: &KKTReport) -> Result<()> {
    if let Some(cond) = r.failing_condition() {
        if !r.sosc && flat_direction(cp, r) {
            return Err(Error::NonIsolated(format!(
                "flat objective direction at zero {:?}",
                r.point
            )));
        }
        return Err(Error::Hypothesis(format!("{cond} fails at {:?}", r.point)));
    }
    Ok(())
}

/// Multistart enumeration of the zeros of `f - f_star` on `S ∩ box`.
pub fn find_zeros(p: &Problem, f_star: f64, budget: usize, seed: u64) -> Result<ZeroSet> {
    let cp = CompiledProblem::new(p);

    // nonnegativity precheck on sampled S
    for x in sample::box_samples(&p.domain, 512, seed.wrapping_add(100)) {
        if p.is_feasible(&x)? {
            let v = cp.f.eval_scalar(&x)? - f_star;
            if v < -p.tol.tol_zero {
                return Err(Error::NotNonnegative { point: x, value: v });
            }
        }
    }

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut converged = 0usize;
    for start in sample::box_samples(&p.domain, budget, seed) {
        let Some(rough) = penalty_minimize(&cp, &p.domain, &start) else {
            continue;
        };
        let x = polish(&cp, &p.domain, &rough).unwrap_or(rough);
        let Ok(fx) = cp.f.eval_scalar(&x) else { continue };
        if (fx - f_star).abs() > p.tol.tol_zero || !p.is_feasible(&x)? {
            continue;
        }
        converged += 1;
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        };
        if points.iter().all(|q| dist(q, &x) > p.tol.dedup_tol) {
            points.push(x);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut reports = Vec::with_capacity(points.len());
    for x in &points {
        let r = kkt::check_point_compiled(&cp, p, x)?;
        gate_report(&cp, &r)?;
        reports.push(r);
    }
    Ok(ZeroSet {
        points,
        reports,
        completeness: Completeness::Heuristic,
        starts: budget,
        converged,
    })
}

/// Zero set from a user-asserted list: each point must be feasible, at
/// the zero level and pass the hypothesis battery.
pub fn zero_set_from_points(p: &Problem, f_star: f64, pts: &[Vec<f64>]) -> Result<ZeroSet> {
    let cp = CompiledProblem::new(p);
    let mut reports = Vec::with_capacity(pts.len());
    for x in pts {
        let fx = cp.f.eval_scalar(x)?;
        if (fx - f_star).abs() > p.tol.tol_zero {
            return Err(Error::Invalid(format!(
                "asserted zero {x:?} has f - f* = {:.3e}",
                fx - f_star
            )));
        }
        let r = kkt::check_point_compiled(&cp, p, x)?;
        gate_report(&cp, &r)?;
        reports.push(r);
    }
    Ok(ZeroSet {
        points: pts.to_vec(),
        reports,
        completeness: Completeness::UserAsserted,
        starts: 0,
        converged: pts.len(),
    })
}

struct CoverContext<'a> {
    cp: &'a CompiledProblem,
    f_star: f64,
    centers: Vec<Vec<f64>>,
    radii: Vec<f64>,
}

impl CoverContext<'_> {
    fn in_ball_support(&self, x: &[f64]) -> bool {
        self.centers.iter().zip(&self.radii).any(|(c, &r)| {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 < (BALL_SHRINK * r).powi(2)
        })
    }

    fn in_ball_core(&self, x: &[f64]) -> bool {
        self.centers.iter().zip(&self.radii).any(|(c, &r)| {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 <= (BALL_CORE * r).powi(2)
        })
    }

    /// Does any region of the given margins cover `x`?
    fn covered(
        &self,
        x: &[f64],
        delta_pos: f64,
        delta_g: &[Option<f64>],
        delta_h: &[Option<f64>],
    ) -> Result<bool> {
        if self.in_ball_support(x) {
            return Ok(true);
        }
        if self.in_ball_core(x) {
            return Ok(false);
        }
        if self.cp.f.eval_scalar(x)? - self.f_star > delta_pos {
            return Ok(true);
        }
        for (i, gi) in self.cp.g.iter().enumerate() {
            if let Some(d) = delta_g[i] {
                if -gi.eval_scalar(x)? > d {
                    return Ok(true);
                }
            }
        }
        for (j, hj) in self.cp.h.iter().enumerate() {
            if let Some(d) = delta_h[j] {
                if hj.eval_scalar(x)?.abs() > d {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Build the open cover: zero balls, the positive region and one region
/// per violated constraint, with margins estimated from samples and
/// validated by a coverage check on an independent sample set.
pub fn build_cover(
    p: &Problem,
    z: &ZeroSet,
    locals: &[LocalCertificate],
) -> Result<Vec<Region>> {
    let cp = CompiledProblem::new(p);
    let f_star = locals.first().map(|c| c.f_star).unwrap_or(0.0);
    let ctx = CoverContext {
        cp: &cp,
        f_star,
        centers: z.points.clone(),
        radii: locals.iter().map(|c| c.radius).collect(),
    };
    let est = sample::box_samples(&p.domain, MARGIN_SAMPLES, MARGIN_SEED);
    let chk = sample::box_samples(&p.domain, MARGIN_SAMPLES, COVER_SEED);

    // Initial positive margin: half the sampled minimum of f - f* over
    // near-feasible points outside the ball cores. Equalities are relaxed
    // to a band — box samples almost never land exactly on {h = 0}, and
    // an overestimated margin only pushes work onto the other regions,
    // while the halving loop below recovers from an overcautious one.
    let eq_band = 0.05 * p.domain.diameter();
    let mut fmin = f64::INFINITY;
    for x in &est {
        if ctx.in_ball_core(x) {
            continue;
        }
        let mut near_feasible = true;
        for gi in &cp.g {
            if gi.eval_scalar(x)? < -p.tol.tol_feas {
                near_feasible = false;
                break;
            }
        }
        if near_feasible {
            for hj in &cp.h {
                if hj.eval_scalar(x)?.abs() > eq_band {
                    near_feasible = false;
                    break;
                }
            }
        }
        if !near_feasible {
            continue;
        }
        fmin = fmin.min(cp.f.eval_scalar(x)? - f_star);
    }
    let mut delta_pos = if fmin.is_finite() && fmin > 0.0 {
        0.5 * fmin
    } else {
        1e-6
    };

    let mut witness: Option<Vec<f64>> = None;
    for _attempt in 0..12 {
        // violated-inequality margins from samples not otherwise covered
        let mut delta_g: Vec<Option<f64>> = vec![None; p.g.len()];
        for x in &est {
            if ctx.covered(x, delta_pos, &vec![None; p.g.len()], &vec![None; p.h.len()])? {
                continue;
            }
            for (i, gi) in cp.g.iter().enumerate() {
                let v = -gi.eval_scalar(x)?;
                if v > 0.0 {
                    let d = 0.5 * v;
                    delta_g[i] = Some(delta_g[i].map_or(d, |cur: f64| cur.min(d)));
                }
            }
        }
        // violated-equality margins from what is still uncovered
        let mut delta_h: Vec<Option<f64>> = vec![None; p.h.len()];
        for x in &est {
            if ctx.covered(x, delta_pos, &delta_g, &vec![None; p.h.len()])? {
                continue;
            }
            let best = (0..p.h.len())
                .map(|j| (j, cp.h[j].eval_scalar(x).map(f64::abs)))
                .filter_map(|(j, v)| v.ok().map(|v| (j, v)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            if let Some((j, v)) = best {
                if v > 0.0 {
                    let d = 0.5 * v;
                    delta_h[j] = Some(delta_h[j].map_or(d, |cur: f64| cur.min(d)));
                }
            }
        }

        witness = None;
        for x in est.iter().chain(&chk) {
            if !ctx.covered(x, delta_pos, &delta_g, &delta_h)? {
                witness = Some(x.clone());
                break;
            }
        }
        if witness.is_none() {
            let mut regions: Vec<Region> = z
                .points
                .iter()
                .enumerate()
                .map(|(k, c)| Region {
                    kind: RegionKind::ZeroBall { index: k },
                    delta: BALL_SHRINK * locals[k].radius,
                    center: Some(c.clone()),
                })
                .collect();
            regions.push(Region {
                kind: RegionKind::Positive,
                delta: delta_pos,
                center: None,
            });
            for (i, d) in delta_g.iter().enumerate() {
                if let Some(d) = d {
                    regions.push(Region {
                        kind: RegionKind::NegIneq { index: i },
                        delta: *d,
                        center: None,
                    });
                }
            }
            for (j, d) in delta_h.iter().enumerate() {
                if let Some(d) = d {
                    regions.push(Region {
                        kind: RegionKind::NonzeroEq { index: j },
                        delta: *d,
                        center: None,
                    });
                }
            }
            return Ok(regions);
        }
        delta_pos *= 0.5;
    }
    Err(Error::Coverage {
        point: witness.unwrap_or_default(),
    })
}

/// Build the bump weight of a region: `max(0, μ)³` with the region's
/// margin program `μ`, times ball-core exclusion factors for non-ball
/// regions. Returns `(margin root, weight root)`.
fn bump_nodes(
    b: &mut ProgramBuilder,
    xs: &[NodeId],
    p: &Problem,
    f_star: f64,
    region: &Region,
    centers: &[Vec<f64>],
    radii: &[f64],
) -> (NodeId, NodeId) {
    let dist2 = |b: &mut ProgramBuilder, c: &[f64]| {
        let terms: Vec<NodeId> = xs
            .iter()
            .zip(c)
            .map(|(&xi, &ci)| {
                let cc = b.constant(ci);
                let d = b.sub(xi, cc);
                b.squared(d)
            })
            .collect();
        b.sum(&terms)
    };
    let margin = match &region.kind {
        RegionKind::ZeroBall { .. } => {
            let c = region.center.as_ref().expect("ball region has a center");
            let d2 = dist2(b, c);
            let r2 = b.constant(region.delta * region.delta);
            b.sub(r2, d2)
        }
        RegionKind::Positive => {
            let f = b.inline_expr(&p.f, xs);
            let off = b.constant(f_star + region.delta);
            b.sub(f, off)
        }
        RegionKind::NegIneq { index } => {
            let g = b.inline_expr(&p.g[*index], xs);
            let ng = b.neg(g);
            let off = b.constant(region.delta);
            b.sub(ng, off)
        }
        RegionKind::NonzeroEq { index } => {
            let h = b.inline_expr(&p.h[*index], xs);
            let h2 = b.squared(h);
            let off = b.constant(region.delta * region.delta);
            b.sub(h2, off)
        }
    };
    let mut w = b.ramp(margin, BUMP_POWER);
    if !matches!(region.kind, RegionKind::ZeroBall { .. }) {
        for (c, &r) in centers.iter().zip(radii) {
            let d2 = dist2(b, c);
            let core = b.constant((BALL_CORE * r).powi(2));
            let excl = b.sub(d2, core);
            let factor = b.ramp(excl, BUMP_POWER);
            w = b.mul(w, factor);
        }
    }
    (margin, w)
}

/// Standalone bump program for one region (single root).
pub fn bump(p: &Problem, f_star: f64, region: &Region, centers: &[Vec<f64>], radii: &[f64]) -> EvalProgram {
    let mut b = ProgramBuilder::new(p.n);
    let xs = b.vars();
    let (_, w) = bump_nodes(&mut b, &xs, p, f_star, region, centers, radii);
    b.finish(vec![w])
}

/// Normalize weight programs into a squared partition of unity:
/// `w̃_k = w_k / √(Σ_j w_j²)`, so `Σ w̃_k² = 1` wherever some `w_k > 0`.
pub fn partition_of_unity(weights: &[EvalProgram], denom_margin: f64) -> Vec<EvalProgram> {
    let n = weights.first().map(|w| w.dimension).unwrap_or(0);
    (0..weights.len())
        .map(|k| {
            let mut b = ProgramBuilder::new(n);
            let xs = b.vars();
            let squares: Vec<NodeId> = weights
                .iter()
                .map(|w| {
                    let r = b.import(w, &xs)[0];
                    b.squared(r)
                })
                .collect();
            let sum = b.sum(&squares);
            let denom = b.sqrt_pos(sum, denom_margin);
            let wk = b.import(&weights[k], &xs)[0];
            let root = b.div(wk, denom);
            b.finish(vec![root])
        })
        .collect()
}

/// Glue region certificates with the squared partition of unity into a
/// global certificate, and validate the residual identity on box samples.
pub fn glue(
    p: &Problem,
    f_star: f64,
    z: &ZeroSet,
    locals: &[LocalCertificate],
    regions: &[Region],
) -> Result<GlobalCertificate> {
    let n = p.n;
    let l = p.g.len();
    let m = p.h.len();
    let cp = CompiledProblem::new(p);
    let centers = &z.points;
    let radii: Vec<f64> = locals.iter().map(|c| c.radius).collect();

    let mut b = ProgramBuilder::new(n);
    let xs = b.vars();

    // weights and the partition denominator
    let mut margins = Vec::with_capacity(regions.len());
    let mut weights = Vec::with_capacity(regions.len());
    for region in regions {
        let (mu, w) = bump_nodes(&mut b, &xs, p, f_star, region, centers, &radii);
        margins.push(mu);
        weights.push(w);
    }
    let w_squares: Vec<NodeId> = weights.iter().map(|&w| b.squared(w)).collect();
    let sumsq = b.sum(&w_squares);

    // sampled lower bound of Σw² for the sqrt margin
    let probe = b.snapshot(vec![sumsq]);
    let mut min_sumsq = f64::INFINITY;
    for x in sample::box_samples(&p.domain, MARGIN_SAMPLES, COVER_SEED) {
        let v = probe.eval_scalar(&x)?;
        if v <= 0.0 {
            return Err(Error::Coverage { point: x });
        }
        min_sumsq = min_sumsq.min(v);
    }
    let denom = b.sqrt_pos(sumsq, 0.5 * min_sumsq);
    let wt: Vec<NodeId> = weights.iter().map(|&w| b.div(w, denom)).collect();

    // shared subexpressions for the non-ball region pieces
    let f_node = b.inline_expr(&p.f, &xs);
    let fs = b.constant(f_star);
    let f_shift = b.sub(f_node, fs); // F = f - f*
    let half = b.constant(0.5);
    let one = b.constant(1.0);
    let fp1 = b.add(f_shift, one);
    let aff_plus = b.mul(fp1, half); // (F+1)/2
    let fm1 = b.sub(f_shift, one);
    let aff_minus = b.mul(fm1, half); // (F-1)/2

    let mut phi0_summands: Vec<NodeId> = Vec::new();
    let mut phi_summands: Vec<Vec<NodeId>> = vec![Vec::new(); l];
    let mut psi_summands: Vec<Vec<NodeId>> = vec![Vec::new(); m];

    for (k, region) in regions.iter().enumerate() {
        let mu = margins[k];
        let w = wt[k];
        match &region.kind {
            RegionKind::ZeroBall { index } => {
                let local = &locals[*index];
                let imported = b.import(&local.program, &xs);
                let d = local.d;
                let kk = local.active.len();
                // φ₀: one squared summand per θ component
                for r in 0..d {
                    let theta = imported[1 + l + m + r];
                    let prod = b.mul(w, theta);
                    let sq = b.squared(prod);
                    phi0_summands.push(b.gate(mu, sq));
                }
                // active φ_i: (w̃ √B_i)²
                for (pos, &i) in local.active.iter().enumerate() {
                    debug_assert!(pos < kk);
                    let b_raw = imported[1 + l + m + d + pos];
                    let root = b.sqrt_pos(b_raw, local.eps_b);
                    let prod = b.mul(w, root);
                    let sq = b.squared(prod);
                    phi_summands[i].push(b.gate(mu, sq));
                }
                // ψ_j: w̃² ψ_{k,j}
                for j in 0..m {
                    let psi = imported[1 + l + j];
                    let w2 = b.squared(w);
                    let prod = b.mul(w2, psi);
                    psi_summands[j].push(b.gate(mu, prod));
                }
            }
            RegionKind::Positive => {
                let root = b.sqrt_pos(f_shift, region.delta);
                let prod = b.mul(w, root);
                let sq = b.squared(prod);
                phi0_summands.push(b.gate(mu, sq));
            }
            RegionKind::NegIneq { index } => {
                // φ₀ = ((F+1)/2)², φ_i = ((F-1)/2)² / (-g_i)
                let prod = b.mul(w, aff_plus);
                let sq = b.squared(prod);
                phi0_summands.push(b.gate(mu, sq));

                let g = b.inline_expr(&p.g[*index], &xs);
                let ng = b.neg(g);
                let sqrt_ng = b.sqrt_pos(ng, region.delta);
                let quot = b.div(aff_minus, sqrt_ng);
                let prod = b.mul(w, quot);
                let sq = b.squared(prod);
                phi_summands[*index].push(b.gate(mu, sq));
            }
            RegionKind::NonzeroEq { index } => {
                // ψ_j = F / h_j
                let h = b.inline_expr(&p.h[*index], &xs);
                let quot = b.div(f_shift, h);
                let w2 = b.squared(w);
                let prod = b.mul(w2, quot);
                psi_summands[*index].push(b.gate(mu, prod));
            }
        }
    }

    let phi0 = if phi0_summands.is_empty() {
        b.constant(0.0)
    } else {
        b.sum(&phi0_summands)
    };
    let mut roots = vec![phi0];
    for sums in &phi_summands {
        let r = if sums.is_empty() {
            b.constant(0.0)
        } else {
            b.sum(sums)
        };
        roots.push(r);
    }
    for sums in &psi_summands {
        let r = if sums.is_empty() {
            b.constant(0.0)
        } else {
            b.sum(sums)
        };
        roots.push(r);
    }
    // partition sum Σ w̃_k², for verification
    let wt_squares: Vec<NodeId> = wt.iter().map(|&w| b.squared(w)).collect();
    let partition = b.sum(&wt_squares);
    roots.push(partition);

    let cert = GlobalCertificate {
        dimension: n,
        f_star,
        domain: p.domain.clone(),
        zeros: z.points.clone(),
        radii,
        regions: regions.to_vec(),
        completeness: z.completeness,
        l,
        m,
        program: b.finish(roots),
    };

    // final residual + partition validation on box samples
    for x in sample::box_samples(&p.domain, RESIDUAL_SAMPLES, RESIDUAL_SEED) {
        let r = cert.residual(&cp, &x)?;
        if r.abs() > p.tol.tol_resid_global {
            return Err(Error::Residual(format!(
                "|residual| = {:.3e} > {:.1e} at {x:?}",
                r.abs(),
                p.tol.tol_resid_global
            )));
        }
        let (_, _, _, part) = cert.eval_pieces(&x)?;
        if (part - 1.0).abs() > 1e-12 {
            return Err(Error::Residual(format!(
                "partition defect {:.3e} at {x:?}",
                (part - 1.0).abs()
            )));
        }
    }
    Ok(cert)
}

/// Options for the end-to-end global construction.
#[derive(Clone, Debug, Default)]
pub struct GlobalOptions {
    /// Certify `f - f_star >= 0`; defaults to 0.
    pub f_star: Option<f64>,
    /// User-asserted zero list; switches completeness to user-asserted.
    pub zeros: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub budget: Option<usize>,
}

/// End-to-end: zeros, local certificates, cover, glue.
pub fn global_certificate(p: &Problem, opts: &GlobalOptions) -> Result<GlobalCertificate> {
    let f_star = opts.f_star.unwrap_or(0.0);
    let z = match &opts.zeros {
        Some(pts) => zero_set_from_points(p, f_star, pts)?,
        None => find_zeros(
            p,
            f_star,
            opts.budget.unwrap_or(p.tol.multistart_budget),
            opts.seed,
        )?,
    };
    let locals = z
        .reports
        .iter()
        .map(|r| local_certificate_shifted(p, r, f_star))
        .collect::<Result<Vec<_>>>()?;
    let regions = build_cover(p, &z, &locals)?;
    glue(p, f_star, &z, &locals, &regions)
}
