//! Hypothesis checks at a candidate zero: feasibility, active set,
//! regularity, KKT multipliers, strict complementarity and second-order
//! sufficiency. These are exactly the conditions the local and global
//! certificate constructions require.

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::problem::Problem;
use crate::program::EvalProgram;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Compiled evaluation programs for a problem, so repeated jet queries do
/// not re-compile expressions.
pub struct CompiledProblem {
    pub n: usize,
    pub f: EvalProgram,
    pub g: Vec<EvalProgram>,
    pub h: Vec<EvalProgram>,
}

impl CompiledProblem {
    pub fn new(p: &Problem) -> Self {
        CompiledProblem {
            n: p.n,
            f: p.f.compile(p.n),
            g: p.g.iter().map(|e| e.compile(p.n)).collect(),
            h: p.h.iter().map(|e| e.compile(p.n)).collect(),
        }
    }
}

/// Everything measured at a candidate point, with pass/fail flags and the
/// margins they were decided on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KKTReport {
    pub point: Vec<f64>,
    pub f_value: f64,
    /// 0-based indices of active inequality constraints.
    pub active: Vec<usize>,
    /// One multiplier per inequality constraint; zero off the active set.
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub stationarity_residual: f64,
    pub kkt_point: bool,
    pub regular: bool,
    /// Smallest singular value of the active-gradient row stack; `None`
    /// when there are no active constraints.
    pub sigma_min: Option<f64>,
    pub strict_complementarity: bool,
    pub min_active_multiplier: Option<f64>,
    pub sosc: bool,
    /// Minimum eigenvalue of the projected Lagrangian Hessian; `None`
    /// when the tangent space is trivial.
    pub min_projected_eigenvalue: Option<f64>,
    /// Orthonormal tangent-space basis, `d` columns of length `n`.
    pub tangent_basis: Vec<Vec<f64>>,
}

impl KKTReport {
    /// The three hypotheses of the certificate constructions.
    pub fn hypotheses_pass(&self) -> bool {
        self.regular && self.strict_complementarity && self.sosc
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangent_basis.len()
    }

    /// Name of the first failing hypothesis, if any.
    pub fn failing_condition(&self) -> Option<&'static str> {
        if !self.regular {
            Some("regularity")
        } else if !self.strict_complementarity {
            Some("strict complementarity")
        } else if !self.sosc {
            Some("second-order sufficiency")
        } else {
            None
        }
    }
}

/// Active inequality indices `{i : |g_i(x)| <= tol_active}` at a feasible
/// point; errors if `x` violates feasibility by more than `tol_feas`.
pub fn active_set(cp: &CompiledProblem, p: &Problem, x: &[f64], tol_active: f64) -> Result<Vec<usize>> {
    let mut active = Vec::new();
    for (i, gi) in cp.g.iter().enumerate() {
        let v = gi.eval_scalar(x)?;
        if v < -p.tol.tol_feas {
            return Err(Error::Infeasible(format!(
                "g{}({x:?}) = {v:.3e} < 0",
                i + 1
            )));
        }
        if v.abs() <= tol_active {
            active.push(i);
        }
    }
    for (j, hj) in cp.h.iter().enumerate() {
        let v = hj.eval_scalar(x)?;
        if v.abs() > p.tol.tol_feas {
            return Err(Error::Infeasible(format!(
                "h{}({x:?}) = {v:.3e} != 0",
                j + 1
            )));
        }
    }
    Ok(active)
}

/// Row stack of active inequality gradients followed by all equality
/// gradients.
fn gradient_stack(cp: &CompiledProblem, x: &[f64], active: &[usize]) -> Result<DMatrix<f64>> {
    let rows = active.len() + cp.h.len();
    let mut m = DMatrix::zeros(rows, cp.n);
    for (r, &i) in active.iter().enumerate() {
        let jet = cp.g[i].eval_jet(x)?;
        for c in 0..cp.n {
            m[(r, c)] = jet.gradient[c];
        }
    }
    for (j, hj) in cp.h.iter().enumerate() {
        let jet = hj.eval_jet(x)?;
        for c in 0..cp.n {
            m[(active.len() + j, c)] = jet.gradient[c];
        }
    }
    Ok(m)
}

/// Linear independence of the stacked gradients, decided on the smallest
/// singular value relative to the largest.
pub fn check_regularity(
    cp: &CompiledProblem,
    p: &Problem,
    x: &[f64],
    active: &[usize],
) -> Result<(bool, Option<f64>)> {
    let m = gradient_stack(cp, x, active)?;
    if m.nrows() == 0 {
        return Ok((true, None));
    }
    if m.nrows() > cp.n {
        return Ok((false, Some(0.0)));
    }
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    Ok((smin > p.tol.tol_rank * smax.max(1.0), Some(smin)))
}

/// Least-squares multipliers for `∇f = Σ λ_i ∇g_i + Σ ν_j ∇h_j` over the
/// active set; the residual is the norm of the defect, meaningful even
/// when the point is not a KKT point.
pub fn solve_multipliers(
    cp: &CompiledProblem,
    x: &[f64],
    active: &[usize],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let grad_f = DVector::from_vec(cp.f.eval_jet(x)?.gradient);
    let rows = active.len() + cp.h.len();
    if rows == 0 {
        return Ok((vec![0.0; cp.g.len()], vec![], grad_f.norm()));
    }
    let m = gradient_stack(cp, x, active)?;
    let mt = m.transpose(); // n x rows
    let svd = mt.clone().svd(true, true);
    let z = svd
        .solve(&grad_f, 1e-13)
        .map_err(|e| Error::Invalid(format!("multiplier solve failed: {e}")))?;
    let residual = (&mt * &z - &grad_f).norm();
    let mut lambda = vec![0.0; cp.g.len()];
    for (r, &i) in active.iter().enumerate() {
        lambda[i] = z[r];
    }
    let nu = (0..cp.h.len()).map(|j| z[active.len() + j]).collect();
    Ok((lambda, nu, residual))
}

/// Strict complementarity: every active multiplier strictly positive.
pub fn check_strict_complementarity(
    lambda: &[f64],
    active: &[usize],
    tol_scomp: f64,
) -> (bool, Option<f64>) {
    if active.is_empty() {
        return (true, None);
    }
    let min = active
        .iter()
        .map(|&i| lambda[i])
        .fold(f64::INFINITY, f64::min);
    (min > tol_scomp, Some(min))
}

/// Orthonormal basis of the null space of the gradient stack, computed
/// from the spectral decomposition of the orthogonal projector.
pub fn tangent_basis(cp: &CompiledProblem, x: &[f64], active: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = cp.n;
    let m = gradient_stack(cp, x, active)?;
    if m.nrows() == 0 {
        return Ok((0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect());
    }
    let d = n.saturating_sub(m.nrows());
    if d == 0 {
        return Ok(vec![]);
    }
    let gram = &m * m.transpose();
    let gram_inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Hypothesis("gradient stack is rank deficient".into()))?;
    let projector = DMatrix::identity(n, n) - m.transpose() * gram_inv * &m;
    let eig = projector.symmetric_eigen();
    // eigenvalues are 0 or 1; take the d eigenvectors with largest values
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut basis = Vec::with_capacity(d);
    for &idx in order.iter().take(d) {
        let col = eig.eigenvectors.column(idx);
        // fix the sign for determinism
        let lead = col.iter().cloned().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        basis.push(col.iter().map(|v| sign * v).collect());
    }
    Ok(basis)
}

/// Hessian of the Lagrangian `f - Σ_{i∈I} λ_i g_i - Σ ν_j h_j` at `x`.
pub fn lagrangian_hessian(
    cp: &CompiledProblem,
    x: &[f64],
    active: &[usize],
    lambda: &[f64],
    nu: &[f64],
) -> Result<DMatrix<f64>> {
    let n = cp.n;
    let to_mat = |j: &Jet2| DMatrix::from_row_slice(n, n, &j.hessian);
    let mut hess = to_mat(&cp.f.eval_jet(x)?);
    for &i in active {
        hess -= to_mat(&cp.g[i].eval_jet(x)?) * lambda[i];
    }
    for (j, hj) in cp.h.iter().enumerate() {
        hess -= to_mat(&hj.eval_jet(x)?) * nu[j];
    }
    Ok(hess)
}

/// Second-order sufficiency on the tangent space: positive definiteness
/// of `Vᵀ ∇²L V`. A trivial tangent space passes vacuously.
pub fn check_sosc(
    cp: &CompiledProblem,
    p: &Problem,
    x: &[f64],
    active: &[usize],
    lambda: &[f64],
    nu: &[f64],
    basis: &[Vec<f64>],
) -> Result<(bool, Option<f64>)> {
    let d = basis.len();
    if d == 0 {
        return Ok((true, None));
    }
    let hess = lagrangian_hessian(cp, x, active, lambda, nu)?;
    let v = DMatrix::from_fn(cp.n, d, |r, c| basis[c][r]);
    let projected = v.transpose() * hess * &v;
    let eig = projected.symmetric_eigen();
    let min = eig.eigenvalues.min();
    Ok((min > p.tol.tol_sosc, Some(min)))
}

/// Full hypothesis battery at a point.
pub fn check_point(p: &Problem, x: &[f64]) -> Result<KKTReport> {
    let cp = CompiledProblem::new(p);
    check_point_compiled(&cp, p, x)
}

pub fn check_point_compiled(cp: &CompiledProblem, p: &Problem, x: &[f64]) -> Result<KKTReport> {
    if x.len() != p.n {
        return Err(Error::Dimension {
            expected: p.n,
            got: x.len(),
        });
    }
    let f_value = cp.f.eval_scalar(x)?;
    let active = active_set(cp, p, x, p.tol.tol_active)?;
    let (regular, sigma_min) = check_regularity(cp, p, x, &active)?;
    let (lambda, nu, stationarity_residual) = solve_multipliers(cp, x, &active)?;
    let (strict_complementarity, min_active_multiplier) =
        check_strict_complementarity(&lambda, &active, p.tol.tol_scomp);
    let basis = if regular {
        tangent_basis(cp, x, &active)?
    } else {
        vec![]
    };
    let (sosc, min_projected_eigenvalue) =
        check_sosc(cp, p, x, &active, &lambda, &nu, &basis)?;
    Ok(KKTReport {
        point: x.to_vec(),
        f_value,
        active,
        lambda,
        nu,
        stationarity_residual,
        kkt_point: stationarity_residual <= p.tol.tol_stat,
        regular,
        sigma_min,
        strict_complementarity,
        min_active_multiplier,
        sosc,
        min_projected_eigenvalue,
        tangent_basis: basis,
    })
}
