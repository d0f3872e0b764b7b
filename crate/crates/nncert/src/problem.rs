//! Problem description: objective, constraints, verification box,
//! tolerances, and the JSON problem-file format consumed by the CLI.

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use serde::{Deserialize, Serialize};

/// Axis-aligned compact box, the domain over which global certificates
/// are constructed and verified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Invalid("box bounds must have equal nonzero length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("box requires lower < upper componentwise".into()));
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Map a unit-cube point into the box.
    pub fn lerp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Numerical margins for the hypothesis checks and certificate
/// validation. The constructions are exact statements about exact zeros
/// and positivity; floating point needs these margins.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_active: f64,
    pub tol_feas: f64,
    /// Relative to the largest singular value of the gradient stack.
    pub tol_rank: f64,
    pub tol_scomp: f64,
    pub tol_sosc: f64,
    pub tol_stat: f64,
    pub tol_zero: f64,
    /// Residual bound for local certificates on ball samples.
    pub tol_resid_local: f64,
    /// Residual bound for global certificates on box samples.
    pub tol_resid_global: f64,
    pub dedup_tol: f64,
    pub quad_order: usize,
    pub multistart_budget: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_active: 1e-8,
            tol_feas: 1e-8,
            tol_rank: 1e-8,
            tol_scomp: 1e-10,
            tol_sosc: 1e-10,
            tol_stat: 1e-7,
            tol_zero: 1e-8,
            tol_resid_local: 1e-8,
            tol_resid_global: 1e-6,
            dedup_tol: 1e-5,
            quad_order: crate::quad::DEFAULT_ORDER,
            multistart_budget: 256,
        }
    }
}

/// A constrained nonnegativity problem: minimize/certify `f` over
/// `S = {x : g_i(x) >= 0, h_j(x) = 0}` within `box`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub n: usize,
    pub f: Expr,
    pub g: Vec<Expr>,
    pub h: Vec<Expr>,
    pub domain: BoxDomain,
    pub tol: Tolerances,
}

impl Problem {
    pub fn new(n: usize, f: Expr, g: Vec<Expr>, h: Vec<Expr>, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: domain.dim(),
            });
        }
        for e in std::iter::once(&f).chain(&g).chain(&h) {
            if let Some(v) = e.max_var() {
                if v >= n {
                    return Err(Error::Invalid(format!(
                        "expression uses x{} but dimension is {n}",
                        v + 1
                    )));
                }
            }
        }
        Ok(Problem {
            n,
            f,
            g,
            h,
            domain,
            tol: Tolerances::default(),
        })
    }

    /// Feasibility within `tol_feas`.
    pub fn is_feasible(&self, x: &[f64]) -> Result<bool> {
        for gi in &self.g {
            if gi.compile(self.n).eval_scalar(x)? < -self.tol.tol_feas {
                return Ok(false);
            }
        }
        for hj in &self.h {
            if hj.compile(self.n).eval_scalar(x)?.abs() > self.tol.tol_feas {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Optional per-run settings carried in the problem file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProblemOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart_budget: Option<usize>,
    /// User-asserted zero list; switches zero enumeration to deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeros: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_active: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_feas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_scomp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_sosc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_stat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_zero: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_resid_local: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_resid_global: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_tol: Option<f64>,
}

impl ToleranceOverrides {
    pub fn apply(&self, tol: &mut Tolerances) {
        macro_rules! ov {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { tol.$field = v; })*
            };
        }
        ov!(
            tol_active,
            tol_feas,
            tol_rank,
            tol_scomp,
            tol_sosc,
            tol_stat,
            tol_zero,
            tol_resid_local,
            tol_resid_global,
            dedup_tol
        );
    }
}

/// On-disk problem description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<String>,
    pub objective: String,
    #[serde(default)]
    pub inequalities: Vec<String>,
    #[serde(default)]
    pub equalities: Vec<String>,
    #[serde(rename = "box")]
    pub domain: BoxDomain,
    #[serde(default)]
    pub options: ProblemOptions,
}

impl ProblemFile {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            pos: 0,
            msg: format!("problem file: {e}"),
        })
    }

    pub fn build(&self) -> Result<Problem> {
        let n = self.dimension;
        let f = expr::parse(&self.objective, n)?;
        let g = self
            .inequalities
            .iter()
            .map(|s| expr::parse(s, n))
            .collect::<Result<Vec<_>>>()?;
        let h = self
            .equalities
            .iter()
            .map(|s| expr::parse(s, n))
            .collect::<Result<Vec<_>>>()?;
        let mut problem = Problem::new(n, f, g, h, self.domain.clone())?;
        if let Some(ov) = &self.options.tolerances {
            ov.apply(&mut problem.tol);
        }
        if let Some(q) = self.options.quadrature_order {
            problem.tol.quad_order = q;
        }
        if let Some(b) = self.options.multistart_budget {
            problem.tol.multistart_budget = b;
        }
        Ok(problem)
    }
}
