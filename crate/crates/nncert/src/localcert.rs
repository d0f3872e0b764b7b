//! Local certificate construction around one nondegenerate zero.
//!
//! Given a zero `x*` whose KKT report passes regularity, strict
//! complementarity and second-order sufficiency, this module builds a
//! straightening chart `Φ`, the restricted objective `F = f ∘ Φ⁻¹`, the
//! integral splitting factors `B_r`, `C_r`, the Morse square-root map `θ`,
//! and assembles programs `φ₀, φ₁..φ_l, ψ₁..ψ_m` with
//!
//! ```text
//! f - f* = φ₀ + Σ_i φ_i g_i + Σ_j ψ_j h_j    on a ball around x*,
//! ```
//!
//! where `φ₀ = ‖θ(w(x))‖²` is structurally a sum of squares, each active
//! `φ_i = B_i(w(x), g_act(x))` is stored as a squared square-root program
//! (valid because `B_i(0) = λ_i > 0`), and inactive `φ_i` are zero.
//!
//! The factors the construction composes with `θ⁻¹` on paper cancel when
//! re-composed with `θ`, so `φ_i` is implemented directly as
//! `B_i(w(x), g_act(x))`: `B̃_i ∘ (θ, id) = (B_i ∘ (θ⁻¹, id)) ∘ (θ, id)
//! = B_i`. The Morse map is realized through the symmetric integral
//! remainder `H(t) = ∫₀¹ (1-s) ∇²A(st) ds` and its Cholesky factor, which
//! is smooth wherever `H` stays positive definite — the only case that
//! arises at a certified minimizer.

use crate::error::{Error, Result};
use crate::kkt::{CompiledProblem, KKTReport};
use crate::problem::Problem;
use crate::program::{
    chart_inverse_nums, Chart as ChartMap, EvalProgram, NewtonSettings, Node, NodeId,
    ProgramBuilder,
};
use crate::jet::{sym_index, Num, Real};
use crate::sample;
use nalgebra::DMatrix;

/// Initial radius for the validity sweep, in original coordinates.
const RHO_INITIAL: f64 = 0.5;
/// The sweep refuses below this radius.
const RHO_MIN: f64 = 1e-3;
/// Samples per radius candidate during the sweep.
const SWEEP_SAMPLES: usize = 64;
const SWEEP_SEED: u64 = 1;

/// Straightening chart at a certified zero: linear change `M` followed by
/// `Φ(y) = (y_1..y_d, g_I(x(y)) - g_I(x*), h(x(y)) - h(x*))` where
/// `x(y) = x* + M⁻¹ y`. By construction `Φ(0) = 0` and `DΦ(0) = I`.
#[derive(Clone, Debug)]
pub struct Chart {
    pub base: Vec<f64>,
    /// Active inequality indices (0-based, in problem numbering).
    pub active: Vec<usize>,
    /// Tangent dimension `d = n - |active| - m`.
    pub d: usize,
    pub k: usize,
    pub m_eq: usize,
    /// Rows: orthonormal tangent basis, then active `∇g_i(x*)`, then
    /// `∇h_j(x*)`.
    pub change: Vec<Vec<f64>>,
    pub change_inv: Vec<Vec<f64>>,
    /// Values of the active `g_i` and of `h_j` at `x*` (zero at an exact
    /// zero; subtracted so the chart invariants hold exactly).
    pub g_offsets: Vec<f64>,
    pub h_offsets: Vec<f64>,
    /// Forward map with Newton settings, invertible inside `map.radius`
    /// (chart coordinates).
    pub map: ChartMap,
}

/// The integral splitting factors of the restricted objective.
#[derive(Clone, Debug)]
pub struct HadamardFactors {
    /// `k` roots over `(t_1..t_{d+k})`: `B_i(0) = λ_i`.
    pub b: EvalProgram,
    /// `m` roots over `(t_1..t_n)`.
    pub c: EvalProgram,
}

/// Morse square-root map `θ(t) = L(t)ᵀ t` with `L` the lower Cholesky
/// factor of `H(t) = ∫₀¹ (1-s) ∇²A(st) ds`, so `‖θ(t)‖² = A(t)`.
#[derive(Clone, Debug)]
pub struct MorseMap {
    pub dim: usize,
    /// `d` roots over `(t_1..t_d)`.
    pub theta: EvalProgram,
    /// `d(d+1)/2` packed-lower roots over `(t_1..t_d)`.
    pub h_matrix: EvalProgram,
    /// Minimum eigenvalue of `H` over the sampled radius.
    pub min_h_eigenvalue: f64,
    pub radius: f64,
}

/// A certified local decomposition around one zero.
#[derive(Clone, Debug)]
pub struct LocalCertificate {
    pub base: Vec<f64>,
    pub f_star: f64,
    /// Validity radius in original coordinates (sampled, not certified).
    pub radius: f64,
    pub dimension: usize,
    pub active: Vec<usize>,
    /// One multiplier per inequality, zero off the active set.
    pub lambda: Vec<f64>,
    pub l: usize,
    pub m: usize,
    /// Tangent dimension (number of θ components).
    pub d: usize,
    /// Shared node pool; roots are `[φ₀, φ_1..φ_l, ψ_1..ψ_m,
    /// θ_1..θ_d, B_1..B_k]` — the trailing θ components and raw splitting
    /// factors are the square-root witnesses the gluing step composes
    /// with the partition of unity.
    pub program: EvalProgram,
    /// Positivity margin used by the `sqrt`-of-`B` witnesses.
    pub eps_b: f64,
    /// Minimum sampled eigenvalue of the Morse remainder `H`.
    pub min_h_eigenvalue: f64,
    pub quad_order: usize,
}

impl LocalCertificate {
    pub fn phi0_root(&self) -> NodeId {
        self.program.roots[0]
    }

    /// Evaluate `(φ₀, φ_1..φ_l, ψ_1..ψ_m)` at `x`.
    pub fn eval_pieces(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let vals = self.program.eval_values(x)?;
        let phi = vals[1..1 + self.l].to_vec();
        let psi = vals[1 + self.l..1 + self.l + self.m].to_vec();
        Ok((vals[0], phi, psi))
    }

    /// Root ids of the θ components in `program`.
    pub fn theta_roots(&self) -> &[NodeId] {
        &self.program.roots[1 + self.l + self.m..1 + self.l + self.m + self.d]
    }

    /// Root ids of the raw splitting factors `B_i`, ordered as `active`.
    pub fn b_roots(&self) -> &[NodeId] {
        &self.program.roots[1 + self.l + self.m + self.d..]
    }

    /// `f(x) - f* - φ₀ - Σφ_i g_i - Σψ_j h_j`.
    pub fn residual(&self, cp: &CompiledProblem, x: &[f64]) -> Result<f64> {
        let (phi0, phi, psi) = self.eval_pieces(x)?;
        let mut r = cp.f.eval_scalar(x)? - self.f_star - phi0;
        for (pi, gi) in phi.iter().zip(&cp.g) {
            r -= pi * gi.eval_scalar(x)?;
        }
        for (pj, hj) in psi.iter().zip(&cp.h) {
            r -= pj * hj.eval_scalar(x)?;
        }
        Ok(r)
    }

    /// Single-root program for `φ_i` (`i` 0-based), e.g. for export.
    pub fn phi_program(&self, i: usize) -> EvalProgram {
        let mut p = self.program.clone();
        p.roots = vec![self.program.roots[1 + i]];
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Build the straightening chart at `r.point`. Requires all three
/// hypothesis flags; `radius` is the validity radius in original
/// coordinates the caller intends to use.
pub fn build_chart(cp: &CompiledProblem, p: &Problem, r: &KKTReport, radius: f64) -> Result<Chart> {
    if let Some(cond) = r.failing_condition() {
        return Err(Error::Hypothesis(format!(
            "{cond} fails at {:?}",
            r.point
        )));
    }
    let n = p.n;
    let d = r.tangent_dim();
    let k = r.active.len();
    let m_eq = p.h.len();
    if d + k + m_eq != n {
        return Err(Error::Dimension {
            expected: n,
            got: d + k + m_eq,
        });
    }
    let x = &r.point;
    let mut rows: Vec<Vec<f64>> = r.tangent_basis.clone();
    let mut g_offsets = Vec::with_capacity(k);
    for &i in &r.active {
        let jet = cp.g[i].eval_jet(x)?;
        rows.push(jet.gradient);
        g_offsets.push(jet.value);
    }
    let mut h_offsets = Vec::with_capacity(m_eq);
    for hj in &cp.h {
        let jet = hj.eval_jet(x)?;
        rows.push(jet.gradient);
        h_offsets.push(jet.value);
    }
    let m_mat = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let inv = m_mat.clone().try_inverse().ok_or_else(|| {
        Error::Hypothesis(format!("active gradient stack is rank deficient at {x:?}"))
    })?;
    let change_inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| inv[(i, j)]).collect())
        .collect();

    // Φ in changed coordinates: y -> (y_head, g_I(x(y)) - g_I(x*), ...)
    let mut b = ProgramBuilder::new(n);
    let ys = b.vars();
    let xs: Vec<NodeId> = (0..n)
        .map(|i| b.affine(ys.clone(), change_inv[i].clone(), x[i]))
        .collect();
    let mut roots: Vec<NodeId> = ys[..d].to_vec();
    for (pos, &i) in r.active.iter().enumerate() {
        let gi = b.inline_expr(&p.g[i], &xs);
        let off = b.constant(g_offsets[pos]);
        roots.push(b.sub(gi, off));
    }
    for (j, hj) in p.h.iter().enumerate() {
        let hv = b.inline_expr(hj, &xs);
        let off = b.constant(h_offsets[j]);
        roots.push(b.sub(hv, off));
    }
    let map_prog = b.finish(roots);
    let chart_radius = radius * frobenius(&rows).max(1.0);

    Ok(Chart {
        base: x.clone(),
        active: r.active.clone(),
        d,
        k,
        m_eq,
        change: rows,
        change_inv,
        g_offsets,
        h_offsets,
        map: ChartMap {
            map: map_prog,
            newton: NewtonSettings::default(),
            radius: chart_radius,
        },
    })
}

/// Invert the chart at `t` (chart coordinates); returns the point in
/// original coordinates.
pub fn chart_inverse(c: &Chart, t: &[f64]) -> Result<Vec<f64>> {
    let nums: Vec<Num> = t.iter().map(|&v| Num::Re(v)).collect();
    let y = chart_inverse_nums(&c.map, &nums)?;
    let yv: Vec<f64> = y.iter().map(|v| v.val()).collect();
    Ok((0..c.base.len())
        .map(|i| c.base[i] + dot(&c.change_inv[i], &yv))
        .collect())
}

/// `F = (f - f_star) ∘ Φ⁻¹` as a program over chart coordinates.
pub fn restricted_objective(p: &Problem, c: &Chart, f_star: f64) -> EvalProgram {
    let n = p.n;
    let mut b = ProgramBuilder::new(n);
    let cid = b.add_chart(c.map.clone());
    let ts = b.vars();
    let inv = b.chart_inverse(cid, ts);
    let ys: Vec<NodeId> = (0..n).map(|i| b.select(inv, i)).collect();
    let xs: Vec<NodeId> = (0..n)
        .map(|i| b.affine(ys.clone(), c.change_inv[i].clone(), c.base[i]))
        .collect();
    let f = b.inline_expr(&p.f, &xs);
    let off = b.constant(f_star);
    let root = b.sub(f, off);
    b.finish(vec![root])
}

/// Restrict a single-root program to its first `dims` inputs, setting the
/// rest to zero.
fn restrict(prog: &EvalProgram, dims: usize) -> EvalProgram {
    let mut b = ProgramBuilder::new(dims);
    let mut args = b.vars();
    while args.len() < prog.dimension {
        args.push(b.constant(0.0));
    }
    let roots = b.import(prog, &args);
    b.finish(roots)
}

/// Integral splitting factors `B_r(t) = ∫₀¹ ∂F/∂t_{head+r}(t_head,
/// s·t_tail) ds` as a program with `tail` roots over `head + tail`
/// variables, so that `F(t) - F(t_head, 0) = Σ_r t_{head+r} B_r(t)`.
pub fn hadamard_split(f: &EvalProgram, head: usize, tail: usize, order: usize) -> EvalProgram {
    assert_eq!(f.dimension, head + tail, "split arity mismatch");
    let mut b = ProgramBuilder::new(head + tail);
    let ts = b.vars();
    if tail == 0 {
        return b.finish(vec![]);
    }
    let node = b.push(Node::HadamardSplit {
        body: Box::new(f.clone()),
        head: ts[..head].to_vec(),
        tail: ts[head..].to_vec(),
        order,
    });
    let roots = (0..tail).map(|r| b.select(node, r)).collect();
    b.finish(roots)
}

/// Morse factorization of `A` on the ball of radius `radius`: builds
/// `H(t)` and `θ(t) = L(t)ᵀ t`, and samples the positive-definiteness
/// margin of `H`. Fails if `H` loses definiteness at a sample — the
/// caller must shrink the radius.
pub fn morse_factor(a: &EvalProgram, d: usize, radius: f64, order: usize) -> Result<MorseMap> {
    assert_eq!(a.dimension, d, "Morse arity mismatch");
    let packed = d * (d + 1) / 2;

    let mut b = ProgramBuilder::new(d);
    let ts = b.vars();
    let quad = b.push(Node::MorseHessQuad {
        body: Box::new(a.clone()),
        args: ts.clone(),
        order,
    });
    let roots = (0..packed).map(|idx| b.select(quad, idx)).collect();
    let h_matrix = b.finish(roots);

    let mut b = ProgramBuilder::new(d);
    let ts = b.vars();
    let chol = b.push(Node::Cholesky {
        matrix: Box::new(h_matrix.clone()),
        dim: d,
        args: ts.clone(),
    });
    let l_entries: Vec<NodeId> = (0..packed).map(|idx| b.select(chol, idx)).collect();
    // θ_r = Σ_{i>=r} L_{ir} t_i  (θ = Lᵀ t)
    let mut theta_roots = Vec::with_capacity(d);
    for r in 0..d {
        let terms: Vec<NodeId> = (r..d)
            .map(|i| b.mul(ts[i], l_entries[sym_index(i, r)]))
            .collect();
        theta_roots.push(b.sum(&terms));
    }
    let theta = b.finish(theta_roots);

    // sampled positivity margin of H over the radius
    let origin = vec![0.0; d];
    let mut min_eig = f64::INFINITY;
    let mut pts = sample::ball_samples(&origin, radius, 100, SWEEP_SEED);
    pts.push(origin);
    for t in &pts {
        let entries = h_matrix.eval_values(t).map_err(|e| {
            Error::Construction(format!("Morse remainder undefined at radius {radius}: {e}"))
        })?;
        let full = DMatrix::from_fn(d, d, |i, j| {
            entries[if i >= j { sym_index(i, j) } else { sym_index(j, i) }]
        });
        let eig = full.symmetric_eigen().eigenvalues;
        min_eig = min_eig.min(eig.min());
    }
    if min_eig <= 0.0 {
        return Err(Error::Construction(format!(
            "Morse remainder not positive definite within radius {radius} (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(MorseMap {
        dim: d,
        theta,
        h_matrix,
        min_h_eigenvalue: min_eig,
        radius,
    })
}

struct Pieces {
    chart: Chart,
    morse: Option<MorseMap>,
    program: EvalProgram,
}

fn build_pieces(
    p: &Problem,
    cp: &CompiledProblem,
    r: &KKTReport,
    f_star: f64,
    rho: f64,
    eps_b: f64,
) -> Result<Pieces> {
    let order = p.tol.quad_order;
    let n = p.n;
    let chart = build_chart(cp, p, r, rho)?;
    let (d, k, m) = (chart.d, chart.k, chart.m_eq);

    let f_prog = restricted_objective(p, &chart, f_star);
    let f_gk = restrict(&f_prog, d + k);
    let a_prog = restrict(&f_prog, d);

    let factors = HadamardFactors {
        b: hadamard_split(&f_gk, d, k, order),
        c: hadamard_split(&f_prog, d + k, m, order),
    };
    let morse = if d > 0 {
        // chart-coordinate ball covering the image of the x-ball
        Some(morse_factor(&a_prog, d, rho * frobenius(&chart.change), order)?)
    } else {
        None
    };

    // assemble φ/ψ in original coordinates
    let mut b = ProgramBuilder::new(n);
    let xs = b.vars();
    let w: Vec<NodeId> = (0..d)
        .map(|row| {
            let coeffs = chart.change[row].clone();
            let bias = -dot(&chart.change[row], &chart.base);
            b.affine(xs.clone(), coeffs, bias)
        })
        .collect();
    let tg: Vec<NodeId> = chart
        .active
        .iter()
        .zip(&chart.g_offsets)
        .map(|(&i, &off)| {
            let gi = b.inline_expr(&p.g[i], &xs);
            let c = b.constant(off);
            b.sub(gi, c)
        })
        .collect();
    let th: Vec<NodeId> = p
        .h
        .iter()
        .zip(&chart.h_offsets)
        .map(|(hj, &off)| {
            let hv = b.inline_expr(hj, &xs);
            let c = b.constant(off);
            b.sub(hv, c)
        })
        .collect();

    let theta_at_w = match &morse {
        Some(mm) => b.import(&mm.theta, &w),
        None => Vec::new(),
    };
    let phi0 = if theta_at_w.is_empty() {
        b.constant(0.0)
    } else {
        let squares: Vec<NodeId> = theta_at_w.iter().map(|&t| b.squared(t)).collect();
        b.sum(&squares)
    };

    let mut wg = w.clone();
    wg.extend(&tg);
    let b_at_x = b.import(&factors.b, &wg);
    let mut phis = Vec::with_capacity(p.g.len());
    for i in 0..p.g.len() {
        let root = match chart.active.iter().position(|&a| a == i) {
            Some(pos) => {
                let s = b.sqrt_pos(b_at_x[pos], eps_b);
                b.squared(s)
            }
            None => b.constant(0.0),
        };
        phis.push(root);
    }

    let mut wgh = wg.clone();
    wgh.extend(&th);
    let psis = b.import(&factors.c, &wgh);

    let mut roots = vec![phi0];
    roots.extend(phis);
    roots.extend(psis);
    roots.extend(&theta_at_w);
    roots.extend(&b_at_x);
    let program = b.finish(roots);

    Ok(Pieces {
        chart,
        morse,
        program,
    })
}

/// Residual / evaluability / margin validation of a candidate radius.
fn validate_radius(
    p: &Problem,
    cp: &CompiledProblem,
    pieces: &Pieces,
    f_star: f64,
    rho: f64,
    eps_b: f64,
) -> Result<()> {
    let l = p.g.len();
    let active = &pieces.chart.active;
    for x in sample::ball_samples(&pieces.chart.base, rho, SWEEP_SAMPLES, SWEEP_SEED) {
        let vals = pieces.program.eval_values(&x)?;
        for &i in active {
            if vals[1 + i] < eps_b {
                return Err(Error::Construction(format!(
                    "splitting factor B_{} = {:.3e} below margin {eps_b:.3e} at {x:?}",
                    i + 1,
                    vals[1 + i]
                )));
            }
        }
        let mut resid = cp.f.eval_scalar(&x)? - f_star - vals[0];
        for (i, gi) in cp.g.iter().enumerate() {
            resid -= vals[1 + i] * gi.eval_scalar(&x)?;
        }
        for (j, hj) in cp.h.iter().enumerate() {
            resid -= vals[1 + l + j] * hj.eval_scalar(&x)?;
        }
        if resid.abs() > p.tol.tol_resid_local {
            return Err(Error::Residual(format!(
                "|residual| = {:.3e} > {:.1e} at {x:?}",
                resid.abs(),
                p.tol.tol_resid_local
            )));
        }
    }
    Ok(())
}

/// Assemble and validate the local certificate at the zero described by
/// `r`. Requires `f(x*) = 0` within tolerance; use
/// [`local_certificate_shifted`] for a nonzero optimal value.
pub fn local_certificate(p: &Problem, r: &KKTReport) -> Result<LocalCertificate> {
    local_certificate_shifted(p, r, 0.0)
}

/// Certificate for `f - f_star` around `r.point`.
pub fn local_certificate_shifted(
    p: &Problem,
    r: &KKTReport,
    f_star: f64,
) -> Result<LocalCertificate> {
    if let Some(cond) = r.failing_condition() {
        return Err(Error::Hypothesis(format!("{cond} fails at {:?}", r.point)));
    }
    if (r.f_value - f_star).abs() > p.tol.tol_zero {
        return Err(Error::Construction(format!(
            "f(x*) - f* = {:.3e} is not zero within {:.1e}",
            r.f_value - f_star,
            p.tol.tol_zero
        )));
    }
    let cp = CompiledProblem::new(p);
    let min_lambda = r
        .active
        .iter()
        .map(|&i| r.lambda[i])
        .fold(f64::INFINITY, f64::min);
    let eps_b = if r.active.is_empty() {
        0.0
    } else {
        min_lambda / 2.0
    };

    let mut rho = RHO_INITIAL;
    let mut last_err: Option<Error> = None;
    while rho >= RHO_MIN {
        let pieces = build_pieces(p, &cp, r, f_star, rho, eps_b)?;
        match validate_radius(p, &cp, &pieces, f_star, rho, eps_b) {
            Ok(()) => {
                let min_h = pieces
                    .morse
                    .as_ref()
                    .map(|m| m.min_h_eigenvalue)
                    .unwrap_or(f64::INFINITY);
                return Ok(LocalCertificate {
                    base: r.point.clone(),
                    f_star,
                    radius: rho,
                    dimension: p.n,
                    active: r.active.clone(),
                    lambda: r.lambda.clone(),
                    l: p.g.len(),
                    m: p.h.len(),
                    d: pieces.chart.d,
                    program: pieces.program,
                    eps_b,
                    min_h_eigenvalue: min_h,
                    quad_order: p.tol.quad_order,
                });
            }
            Err(e) => {
                last_err = Some(e);
                rho *= 0.5;
            }
        }
    }
    Err(Error::Construction(format!(
        "validity radius underflowed below {RHO_MIN} at {:?}: {}",
        r.point,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Largest radius accepted by the validation sweep (exposed for reports;
/// `local_certificate` already performs the sweep internally).
pub fn estimate_radius(p: &Problem, r: &KKTReport) -> Result<f64> {
    local_certificate(p, r).map(|c| c.radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::kkt::check_point;
    use crate::problem::BoxDomain;
    use crate::program::is_sum_of_squares;
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

    #[test]
    fn chart_worked_example() {
        let p = worked_problem();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[1.0, 0.0]).unwrap();
        let c = build_chart(&cp, &p, &r, 0.5).unwrap();
        assert_eq!(c.d, 1);
        assert_eq!(c.k, 1);
        // DΦ(0) = I
        let jets = c.map.map.eval_jets(&[0.0, 0.0]).unwrap();
        for (i, j) in jets.iter().enumerate() {
            assert_abs_diff_eq!(j.value, 0.0, epsilon = 1e-12);
            for col in 0..2 {
                let expect = if col == i { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(j.gradient[col], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn chart_identity_when_unconstrained() {
        let p = Problem::new(
            2,
            parse("x1^2 + x2^2", 2).unwrap(),
            vec![],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[0.0, 0.0]).unwrap();
        let c = build_chart(&cp, &p, &r, 0.5).unwrap();
        assert_eq!(c.d, 2);
        let x = chart_inverse(&c, &[0.1, -0.2]).unwrap();
        // Φ is a rotation by the orthonormal tangent basis; round trip
        let t = c.map.map.eval_values(&x).unwrap();
        assert_abs_diff_eq!(t[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn chart_curved_constraint() {
        // g = x2 - x1^2 active at 0 with f = x2
        let p = Problem::new(
            2,
            parse("x2", 2).unwrap(),
            vec![parse("x2 - x1^2", 2).unwrap()],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[0.0, 0.0]).unwrap();
        assert!(r.hypotheses_pass());
        let c = build_chart(&cp, &p, &r, 0.5).unwrap();
        // Φ(y) = (±y1, y2 - y1^2); round trip through the inverse
        for t in [[0.2, 0.1], [-0.3, 0.05], [0.0, 0.0]] {
            let x = chart_inverse(&c, &t).unwrap();
            let back = c.map.map.eval_values(&x).unwrap();
            assert_abs_diff_eq!(back[0], t[0], epsilon = 1e-10);
            assert_abs_diff_eq!(back[1], t[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn hadamard_split_quadratic_tail() {
        // F = t2^2: B = ∫ 2 s t2 ds = t2
        let f = parse("x2^2", 2).unwrap().compile(2);
        let split = hadamard_split(&f, 1, 1, 16);
        for t2 in [-0.5, 0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(split.eval_values(&[0.2, t2]).unwrap()[0], t2, epsilon = 1e-13);
        }
    }

    #[test]
    fn hadamard_split_sine_matches_closed_form() {
        // F = sin(t2): B(t2) = sin(t2)/t2, = 0.958851... at t2 = 0.5
        let f = parse("sin(x2)", 2).unwrap().compile(2);
        let split = hadamard_split(&f, 1, 1, 32);
        let v = split.eval_values(&[0.0, 0.5]).unwrap()[0];
        assert_abs_diff_eq!(v, 0.5f64.sin() / 0.5, epsilon = 1e-12);
        // continuous extension at 0
        let v0 = split.eval_values(&[0.0, 0.0]).unwrap()[0];
        assert_abs_diff_eq!(v0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn morse_factor_quadratic() {
        let a = parse("x1^2", 1).unwrap().compile(1);
        let mm = morse_factor(&a, 1, 1.0, 16).unwrap();
        for t in [-0.9, -0.1, 0.4, 0.8] {
            assert_abs_diff_eq!(mm.theta.eval_values(&[t]).unwrap()[0], t, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(mm.min_h_eigenvalue, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn morse_factor_cubic_term() {
        // A = t^2 + t^3: H(t) = 1 + t, θ(t) = t√(1+t)
        let a = parse("x1^2 + x1^3", 1).unwrap().compile(1);
        let mm = morse_factor(&a, 1, 0.9, 32).unwrap();
        for t in [-0.8, -0.3, 0.0, 0.5, 0.9] {
            let th = mm.theta.eval_values(&[t]).unwrap()[0];
            assert_abs_diff_eq!(th, t * (1.0 + t).sqrt(), epsilon = 1e-10);
            let h = mm.h_matrix.eval_values(&[t]).unwrap()[0];
            assert_abs_diff_eq!(h, 1.0 + t, epsilon = 1e-12);
            // ‖θ‖² = A
            assert_abs_diff_eq!(th * th, a.eval_scalar(&[t]).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn morse_factor_diagonal() {
        let a = parse("x1^2 + 4*x2^2", 2).unwrap().compile(2);
        let mm = morse_factor(&a, 2, 1.0, 16).unwrap();
        let th = mm.theta.eval_values(&[0.3, -0.2]).unwrap();
        assert_abs_diff_eq!(th[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(th[1], -0.4, epsilon = 1e-12);
    }

    #[test]
    fn morse_factor_refuses_indefinite_radius() {
        // A = t^2 + t^3 has H(t) = 1 + t, singular at t = -1
        let a = parse("x1^2 + x1^3", 1).unwrap().compile(1);
        assert!(morse_factor(&a, 1, 1.5, 16).is_err());
    }

    #[test]
    fn local_certificate_worked_example() {
        let p = worked_problem();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[1.0, 0.0]).unwrap();
        let cert = local_certificate(&p, &r).unwrap();
        assert!(cert.radius >= 0.25);
        // φ₁(x*) = λ = 2
        let (phi0_star, phi_star, _) = cert.eval_pieces(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(phi0_star, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi_star[0], 2.0, epsilon = 1e-9);
        // hand-derived decomposition: φ₀ = x2², φ₁ = x1 + 1
        for x in sample::ball_samples(&[1.0, 0.0], 0.25, 100, 3) {
            let (phi0, phi, _) = cert.eval_pieces(&x).unwrap();
            assert_abs_diff_eq!(phi0, x[1] * x[1], epsilon = 1e-9);
            assert_abs_diff_eq!(phi[0], x[0] + 1.0, epsilon = 1e-9);
            assert!(cert.residual(&cp, &x).unwrap().abs() <= 1e-9);
        }
        // structural SOS of φ₀ and φ₁
        assert!(is_sum_of_squares(cert.program.view(), cert.program.roots[0]));
        assert!(is_sum_of_squares(cert.program.view(), cert.program.roots[1]));
    }

    #[test]
    fn local_certificate_unconstrained_quadratic() {
        let p = Problem::new(
            2,
            parse("x1^2 + x2^2", 2).unwrap(),
            vec![],
            vec![],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let r = check_point(&p, &[0.0, 0.0]).unwrap();
        let cert = local_certificate(&p, &r).unwrap();
        assert_abs_diff_eq!(cert.radius, RHO_INITIAL, epsilon = 0.0);
        for x in sample::ball_samples(&[0.0, 0.0], cert.radius, 50, 5) {
            let (phi0, _, _) = cert.eval_pieces(&x).unwrap();
            assert_abs_diff_eq!(phi0, x[0] * x[0] + x[1] * x[1], epsilon = 1e-11);
        }
    }

    #[test]
    fn local_certificate_equality_constraint() {
        // f = x1², h = [x2]: φ₀ ≐ x1², ψ₁ ≐ 0
        let p = Problem::new(
            2,
            parse("x1^2", 2).unwrap(),
            vec![],
            vec![parse("x2", 2).unwrap()],
            BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[0.0, 0.0]).unwrap();
        let cert = local_certificate(&p, &r).unwrap();
        for x in sample::ball_samples(&[0.0, 0.0], cert.radius, 50, 5) {
            let (phi0, _, psi) = cert.eval_pieces(&x).unwrap();
            assert_abs_diff_eq!(phi0, x[0] * x[0], epsilon = 1e-10);
            assert_abs_diff_eq!(psi[0], 0.0, epsilon = 1e-10);
            assert!(cert.residual(&cp, &x).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn local_certificate_refuses_failed_hypotheses() {
        // f = x1^4 fails SOSC at 0
        let p = Problem::new(
            1,
            parse("x1^4", 1).unwrap(),
            vec![],
            vec![],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let r = check_point(&p, &[0.0]).unwrap();
        assert!(matches!(
            local_certificate(&p, &r),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn morse_identity_on_samples() {
        // curved-constraint problem: check ‖θ(w)‖² = A(w) on samples
        let p = worked_problem();
        let cp = CompiledProblem::new(&p);
        let r = check_point(&p, &[1.0, 0.0]).unwrap();
        let chart = build_chart(&cp, &p, &r, 0.5).unwrap();
        let f_prog = restricted_objective(&p, &chart, 0.0);
        let a_prog = restrict(&f_prog, chart.d);
        let mm = morse_factor(&a_prog, chart.d, 0.5, 32).unwrap();
        for t in sample::ball_samples(&[0.0], 0.5, 200, 9) {
            let th = mm.theta.eval_values(&t).unwrap();
            let norm2: f64 = th.iter().map(|v| v * v).sum();
            let a = a_prog.eval_scalar(&t).unwrap();
            assert_abs_diff_eq!(norm2, a, epsilon = 1e-9);
        }
    }
}
