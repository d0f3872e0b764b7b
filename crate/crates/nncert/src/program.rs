//! Portable evaluation IR for certificate functions.
//!
//! An [`EvalProgram`] is a DAG of scalar (and tuple-valued) nodes over a
//! fixed number of input variables. Besides plain arithmetic and the
//! elementary functions, the IR has the composite nodes the certificate
//! constructions need:
//!
//! * `ChartInv` — components of the Newton inverse of a registered chart
//!   map, differentiated by running Newton in (nested) jet arithmetic;
//! * `HadamardSplit` — the integral factors `B_r(t) = ∫_0^1 ∂_r F(t_head,
//!   s·t_tail) ds` realized by Gauss-Legendre quadrature;
//! * `MorseHessQuad` — the symmetric integral remainder `H(t) = ∫_0^1
//!   (1-s) ∇²A(s t) ds` with `A(t) = tᵀ H(t) t`;
//! * `Cholesky` — the lower Cholesky factor of a matrix-valued subgraph;
//! * `SqrtPos` / `Squared` / `Gate` — the structural pieces of the
//!   sum-of-squares witnesses and of support-guarded gluing.
//!
//! Programs are immutable after construction and safe to evaluate from
//! multiple threads. Evaluation is deterministic given fixed quadrature
//! order and Newton settings.

use crate::error::{Error, Result};
use crate::expr::{Expr, Func};
use crate::jet::{cholesky_lower, solve_linear, Jet2, Num, Real};
use crate::quad;

pub type NodeId = usize;

/// Current wire-format version of serialized programs and certificates.
pub const IR_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Powi(NodeId, u32),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    /// Square root of a subgraph known to be positive on the validity
    /// region; `margin` records the verified lower bound.
    SqrtPos { arg: NodeId, margin: f64 },
    Squared(NodeId),
    /// `max(0, arg)^power` — the bump ramp; C^(power-1) at the boundary.
    Ramp { arg: NodeId, power: u32 },
    /// `bias + Σ coeffs[i] * args[i]`.
    Affine {
        args: Vec<NodeId>,
        coeffs: Vec<f64>,
        bias: f64,
    },
    /// Evaluates to 0 (exactly, without touching `body`) when the guard's
    /// value part is non-positive. Realizes extension-by-zero outside a
    /// bump support.
    Gate { guard: NodeId, body: NodeId },
    Select { tuple: NodeId, index: usize },
    /// Tuple of all components of `Φ^{-1}(args)` for the registered chart.
    ChartInv { chart: usize, args: Vec<NodeId> },
    /// Tuple of `tail.len()` integral factors of the splitting
    /// `F(head, tail) - F(head, 0) = Σ_r tail_r · B_r(head, tail)`.
    HadamardSplit {
        body: Box<EvalProgram>,
        head: Vec<NodeId>,
        tail: Vec<NodeId>,
        order: usize,
    },
    /// Tuple (packed lower) of `∫_0^1 (1-s) ∇²A(s·args) ds`.
    MorseHessQuad {
        body: Box<EvalProgram>,
        args: Vec<NodeId>,
        order: usize,
    },
    /// Tuple (packed lower) of the Cholesky factor of the symmetric
    /// matrix program `matrix` (packed-lower roots) evaluated at `args`.
    Cholesky {
        matrix: Box<EvalProgram>,
        dim: usize,
        args: Vec<NodeId>,
    },
    /// First partial derivative `∂ body / ∂ u_index` at `args`.
    Deriv {
        body: Box<EvalProgram>,
        index: usize,
        args: Vec<NodeId>,
    },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonSettings {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            max_iter: 50,
            tol: 1e-12,
        }
    }
}

/// A straightening chart: an invertible map given by its forward program
/// (as many roots as dimensions), inverted on demand by damped Newton.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub map: EvalProgram,
    pub newton: NewtonSettings,
    /// Radius in chart coordinates within which the inverse was validated.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalProgram {
    pub dimension: usize,
    pub charts: Vec<Chart>,
    pub nodes: Vec<Node>,
    pub roots: Vec<NodeId>,
}

/// Borrowed view used by evaluation so certificates can share one node
/// pool across many roots.
#[derive(Clone, Copy)]
pub struct ProgramView<'a> {
    pub dimension: usize,
    pub nodes: &'a [Node],
    pub charts: &'a [Chart],
}

#[derive(Clone, Debug)]
enum Val {
    Scalar(Num),
    Tuple(Vec<Num>),
}

impl Val {
    fn scalar(&self) -> Result<Num> {
        match self {
            Val::Scalar(v) => Ok(v.clone()),
            Val::Tuple(_) => Err(Error::Format("expected scalar node, found tuple".into())),
        }
    }
}

fn eval_node(
    view: ProgramView<'_>,
    inputs: &[Num],
    cache: &mut Vec<Option<Val>>,
    id: NodeId,
) -> Result<Val> {
    if let Some(v) = &cache[id] {
        return Ok(v.clone());
    }
    let scalar = |view, inputs, cache: &mut Vec<Option<Val>>, id| -> Result<Num> {
        eval_node(view, inputs, cache, id)?.scalar()
    };
    let out: Val = match &view.nodes[id] {
        Node::Const(c) => Val::Scalar(Num::Re(*c)),
        Node::Var(i) => {
            if *i >= inputs.len() {
                return Err(Error::Dimension {
                    expected: inputs.len(),
                    got: *i + 1,
                });
            }
            Val::Scalar(inputs[*i].clone())
        }
        Node::Add(a, b) => {
            let (a, b) = (
                scalar(view, inputs, cache, *a)?,
                scalar(view, inputs, cache, *b)?,
            );
            Val::Scalar(a.add(&b))
        }
        Node::Sub(a, b) => {
            let (a, b) = (
                scalar(view, inputs, cache, *a)?,
                scalar(view, inputs, cache, *b)?,
            );
            Val::Scalar(a.sub(&b))
        }
        Node::Mul(a, b) => {
            let (a, b) = (
                scalar(view, inputs, cache, *a)?,
                scalar(view, inputs, cache, *b)?,
            );
            Val::Scalar(a.mul(&b))
        }
        Node::Div(a, b) => {
            let (a, b) = (
                scalar(view, inputs, cache, *a)?,
                scalar(view, inputs, cache, *b)?,
            );
            Val::Scalar(a.div(&b)?)
        }
        Node::Neg(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.neg()),
        Node::Powi(a, k) => Val::Scalar(scalar(view, inputs, cache, *a)?.powi(*k)),
        Node::Sin(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.sin()),
        Node::Cos(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.cos()),
        Node::Exp(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.exp()),
        Node::Log(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.log()?),
        Node::Sqrt(a) => Val::Scalar(scalar(view, inputs, cache, *a)?.sqrt()?),
        Node::SqrtPos { arg, .. } => Val::Scalar(scalar(view, inputs, cache, *arg)?.sqrt()?),
        Node::Squared(a) => {
            let a = scalar(view, inputs, cache, *a)?;
            Val::Scalar(a.mul(&a))
        }
        Node::Ramp { arg, power } => {
            Val::Scalar(scalar(view, inputs, cache, *arg)?.ramp(*power))
        }
        Node::Affine { args, coeffs, bias } => {
            let mut acc = Num::Re(*bias);
            for (a, c) in args.iter().zip(coeffs) {
                if *c != 0.0 {
                    let v = scalar(view, inputs, cache, *a)?;
                    acc = acc.add(&v.scale(*c));
                }
            }
            Val::Scalar(acc)
        }
        Node::Gate { guard, body } => {
            let g = scalar(view, inputs, cache, *guard)?;
            if g.val() <= 0.0 {
                Val::Scalar(Num::Re(0.0))
            } else {
                Val::Scalar(scalar(view, inputs, cache, *body)?)
            }
        }
        Node::Select { tuple, index } => {
            let t = eval_node(view, inputs, cache, *tuple)?;
            match t {
                Val::Tuple(vs) => Val::Scalar(
                    vs.get(*index)
                        .cloned()
                        .ok_or_else(|| Error::Format("tuple index out of range".into()))?,
                ),
                Val::Scalar(_) => {
                    return Err(Error::Format("select on a scalar node".into()))
                }
            }
        }
        Node::ChartInv { chart, args } => {
            let c = view
                .charts
                .get(*chart)
                .ok_or_else(|| Error::Format("unknown chart id".into()))?;
            let t: Vec<Num> = args
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            Val::Tuple(chart_inverse_nums(c, &t)?)
        }
        Node::HadamardSplit {
            body,
            head,
            tail,
            order,
        } => {
            let hv: Vec<Num> = head
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            let tv: Vec<Num> = tail
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            let p = hv.len() + tv.len();
            if body.dimension != p {
                return Err(Error::Dimension {
                    expected: body.dimension,
                    got: p,
                });
            }
            let mut acc: Vec<Num> = vec![Num::Re(0.0); tv.len()];
            for &(s, w) in quad::unit_rule(*order) {
                let mut seeds: Vec<Num> = Vec::with_capacity(p);
                for (i, v) in hv.iter().enumerate() {
                    seeds.push(Num::jet_variable(p, i, v.clone()));
                }
                for (r, v) in tv.iter().enumerate() {
                    seeds.push(Num::jet_variable(p, hv.len() + r, v.scale(s)));
                }
                let out = eval_roots(body.view(), &body.roots[..1], &seeds)?;
                let jet = out[0].as_jet()?;
                for (r, a) in acc.iter_mut().enumerate() {
                    *a = a.add(&jet.g[hv.len() + r].scale(w));
                }
            }
            Val::Tuple(acc)
        }
        Node::MorseHessQuad { body, args, order } => {
            let d = body.dimension;
            let uv: Vec<Num> = args
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            if uv.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: uv.len(),
                });
            }
            let mut acc: Vec<Num> = vec![Num::Re(0.0); d * (d + 1) / 2];
            for &(s, w) in quad::unit_rule(*order) {
                let seeds: Vec<Num> = uv
                    .iter()
                    .enumerate()
                    .map(|(i, v)| Num::jet_variable(d, i, v.scale(s)))
                    .collect();
                let out = eval_roots(body.view(), &body.roots[..1], &seeds)?;
                let jet = out[0].as_jet()?;
                let ws = w * (1.0 - s);
                for (idx, a) in acc.iter_mut().enumerate() {
                    *a = a.add(&jet.h[idx].scale(ws));
                }
            }
            Val::Tuple(acc)
        }
        Node::Cholesky { matrix, dim, args } => {
            let uv: Vec<Num> = args
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            let entries = eval_roots(matrix.view(), &matrix.roots, &uv)?;
            if entries.len() != dim * (dim + 1) / 2 {
                return Err(Error::Format("cholesky matrix program has wrong shape".into()));
            }
            Val::Tuple(cholesky_lower(&entries, *dim)?)
        }
        Node::Deriv { body, index, args } => {
            let uv: Vec<Num> = args
                .iter()
                .map(|a| scalar(view, inputs, cache, *a))
                .collect::<Result<_>>()?;
            let p = body.dimension;
            let seeds: Vec<Num> = uv
                .iter()
                .enumerate()
                .map(|(i, v)| Num::jet_variable(p, i, v.clone()))
                .collect();
            let out = eval_roots(body.view(), &body.roots[..1], &seeds)?;
            Val::Scalar(out[0].as_jet()?.g[*index].clone())
        }
    };
    cache[id] = Some(out.clone());
    Ok(out)
}

/// Evaluate the given roots over plain values or nested jets.
pub fn eval_roots(view: ProgramView<'_>, roots: &[NodeId], inputs: &[Num]) -> Result<Vec<Num>> {
    let mut cache: Vec<Option<Val>> = vec![None; view.nodes.len()];
    roots
        .iter()
        .map(|&r| eval_node(view, inputs, &mut cache, r)?.scalar())
        .collect()
}

/// Newton inversion of a chart map, run entirely in nested-jet
/// arithmetic.
///
/// Running Newton over jets converges the derivative components along
/// with the values; a few full steps after value convergence make the
/// jets exact to the truncation order.
pub(crate) fn chart_inverse_nums(chart: &Chart, t: &[Num]) -> Result<Vec<Num>> {
    let p = chart.map.dimension;
    if t.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: t.len(),
        });
    }
    let tol = chart.newton.tol;
    let t_vals: Vec<f64> = t.iter().map(|v| v.val()).collect();
    let mut x: Vec<Num> = t.to_vec();
    let mut polish = 0usize;
    let mut last_res = f64::INFINITY;
    for _ in 0..chart.newton.max_iter {
        let seeds: Vec<Num> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Num::jet_variable(p, i, v.clone()))
            .collect();
        let out = eval_roots(chart.map.view(), &chart.map.roots, &seeds)?;
        let mut res: Vec<Num> = Vec::with_capacity(p);
        let mut jac: Vec<Vec<Num>> = Vec::with_capacity(p);
        for (o, ti) in out.iter().zip(t) {
            let j = o.as_jet()?;
            res.push(j.v.sub(ti));
            jac.push(j.g.clone());
        }
        let resnorm = res.iter().map(|r| r.val().abs()).fold(0.0, f64::max);
        if resnorm <= tol {
            polish += 1;
            if polish > 3 {
                return Ok(x);
            }
            let delta = solve_linear(&jac, &res)?;
            for (xi, d) in x.iter_mut().zip(&delta) {
                *xi = xi.sub(d);
            }
            continue;
        }
        let delta = solve_linear(&jac, &res)?;
        // damped step: halve on value-residual increase
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand: Vec<Num> = x
                .iter()
                .zip(&delta)
                .map(|(xi, d)| xi.sub(&d.scale(step)))
                .collect();
            let cand_vals: Vec<Num> = cand.iter().map(|v| Num::Re(v.val())).collect();
            let vals = eval_roots(chart.map.view(), &chart.map.roots, &cand_vals)?;
            let cand_res = vals
                .iter()
                .zip(&t_vals)
                .map(|(v, ti)| (v.val() - ti).abs())
                .fold(0.0, f64::max);
            if cand_res < resnorm || cand_res <= tol {
                x = cand;
                last_res = cand_res;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::ChartInverse {
                max_iter: chart.newton.max_iter,
                residual: resnorm,
            });
        }
    }
    Err(Error::ChartInverse {
        max_iter: chart.newton.max_iter,
        residual: last_res,
    })
}

impl EvalProgram {
    pub fn view(&self) -> ProgramView<'_> {
        ProgramView {
            dimension: self.dimension,
            nodes: &self.nodes,
            charts: &self.charts,
        }
    }

    pub fn eval_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let inputs: Vec<Num> = x.iter().map(|&v| Num::Re(v)).collect();
        let out = eval_roots(self.view(), &self.roots, &inputs)?;
        Ok(out.iter().map(|v| v.val()).collect())
    }

    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_values(x)?[0])
    }

    /// Exact value/gradient/Hessian of the first root at `x`.
    pub fn eval_jet(&self, x: &[f64]) -> Result<Jet2> {
        Ok(self.eval_jets(x)?.remove(0))
    }

    pub fn eval_jets(&self, x: &[f64]) -> Result<Vec<Jet2>> {
        self.check_input(x)?;
        let n = self.dimension;
        let seeds: Vec<Num> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Num::jet_variable(n, i, Num::Re(v)))
            .collect();
        let out = eval_roots(self.view(), &self.roots, &seeds)?;
        out.iter().map(Jet2::from_num).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite evaluation point"));
        }
        Ok(())
    }

    /// Certificate wire format: JSON, see [`crate::serialize`].
    pub fn serialize(&self) -> Vec<u8> {
        crate::serialize::program_to_bytes(self)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        crate::serialize::program_from_bytes(bytes)
    }
}

/// Structural sum-of-squares check: the subtree is a sum (possibly gated)
/// of squared programs and zero constants.
pub fn is_sum_of_squares(view: ProgramView<'_>, root: NodeId) -> bool {
    match &view.nodes[root] {
        Node::Const(c) => *c == 0.0,
        Node::Squared(_) => true,
        Node::Add(a, b) => is_sum_of_squares(view, *a) && is_sum_of_squares(view, *b),
        Node::Gate { body, .. } => is_sum_of_squares(view, *body),
        _ => false,
    }
}

/// Incremental builder for [`EvalProgram`]s.
pub struct ProgramBuilder {
    dimension: usize,
    nodes: Vec<Node>,
    charts: Vec<Chart>,
}

impl ProgramBuilder {
    pub fn new(dimension: usize) -> Self {
        ProgramBuilder {
            dimension,
            nodes: Vec::new(),
            charts: Vec::new(),
        }
    }

    pub fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    pub fn var(&mut self, i: usize) -> NodeId {
        assert!(i < self.dimension, "variable index out of range");
        self.push(Node::Var(i))
    }

    pub fn vars(&mut self) -> Vec<NodeId> {
        (0..self.dimension).map(|i| self.var(i)).collect()
    }

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Node::Const(c))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Neg(a))
    }

    pub fn squared(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Squared(a))
    }

    pub fn sqrt_pos(&mut self, a: NodeId, margin: f64) -> NodeId {
        self.push(Node::SqrtPos { arg: a, margin })
    }

    pub fn ramp(&mut self, a: NodeId, power: u32) -> NodeId {
        self.push(Node::Ramp { arg: a, power })
    }

    pub fn gate(&mut self, guard: NodeId, body: NodeId) -> NodeId {
        self.push(Node::Gate { guard, body })
    }

    pub fn select(&mut self, tuple: NodeId, index: usize) -> NodeId {
        self.push(Node::Select { tuple, index })
    }

    pub fn affine(&mut self, args: Vec<NodeId>, coeffs: Vec<f64>, bias: f64) -> NodeId {
        assert_eq!(args.len(), coeffs.len());
        self.push(Node::Affine { args, coeffs, bias })
    }

    pub fn sum(&mut self, ids: &[NodeId]) -> NodeId {
        match ids.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => {
                let mut acc = first;
                for &id in rest {
                    acc = self.add(acc, id);
                }
                acc
            }
        }
    }

    pub fn add_chart(&mut self, chart: Chart) -> usize {
        self.charts.push(chart);
        self.charts.len() - 1
    }

    pub fn chart_inverse(&mut self, chart: usize, args: Vec<NodeId>) -> NodeId {
        self.push(Node::ChartInv { chart, args })
    }

    /// Compile an expression with its variables bound to `args`.
    pub fn inline_expr(&mut self, e: &Expr, args: &[NodeId]) -> NodeId {
        match e {
            Expr::Const(c) => self.constant(*c),
            Expr::Var(i) => args[*i],
            Expr::Add(a, b) => {
                let (a, b) = (self.inline_expr(a, args), self.inline_expr(b, args));
                self.add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = (self.inline_expr(a, args), self.inline_expr(b, args));
                self.sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = (self.inline_expr(a, args), self.inline_expr(b, args));
                self.mul(a, b)
            }
            Expr::Div(a, b) => {
                let (a, b) = (self.inline_expr(a, args), self.inline_expr(b, args));
                self.div(a, b)
            }
            Expr::Neg(a) => {
                let a = self.inline_expr(a, args);
                self.neg(a)
            }
            Expr::Pow(a, k) => {
                let a = self.inline_expr(a, args);
                self.push(Node::Powi(a, *k))
            }
            Expr::Apply(func, a) => {
                let a = self.inline_expr(a, args);
                self.push(match func {
                    Func::Sin => Node::Sin(a),
                    Func::Cos => Node::Cos(a),
                    Func::Exp => Node::Exp(a),
                    Func::Log => Node::Log(a),
                    Func::Sqrt => Node::Sqrt(a),
                })
            }
        }
    }

    /// Copy another program's nodes into this builder, binding its input
    /// variables to `args`. Returns the remapped roots.
    pub fn import(&mut self, prog: &EvalProgram, args: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(args.len(), prog.dimension, "import arity mismatch");
        let chart_offset = self.charts.len();
        self.charts.extend(prog.charts.iter().cloned());
        let mut map: Vec<NodeId> = Vec::with_capacity(prog.nodes.len());
        for node in &prog.nodes {
            let remap = |id: NodeId| map[id];
            let remap_vec = |ids: &Vec<NodeId>| ids.iter().map(|&i| map[i]).collect::<Vec<_>>();
            let new_id = match node {
                Node::Var(i) => {
                    map.push(args[*i]);
                    continue;
                }
                Node::Const(c) => self.push(Node::Const(*c)),
                Node::Add(a, b) => self.push(Node::Add(remap(*a), remap(*b))),
                Node::Sub(a, b) => self.push(Node::Sub(remap(*a), remap(*b))),
                Node::Mul(a, b) => self.push(Node::Mul(remap(*a), remap(*b))),
                Node::Div(a, b) => self.push(Node::Div(remap(*a), remap(*b))),
                Node::Neg(a) => self.push(Node::Neg(remap(*a))),
                Node::Powi(a, k) => self.push(Node::Powi(remap(*a), *k)),
                Node::Sin(a) => self.push(Node::Sin(remap(*a))),
                Node::Cos(a) => self.push(Node::Cos(remap(*a))),
                Node::Exp(a) => self.push(Node::Exp(remap(*a))),
                Node::Log(a) => self.push(Node::Log(remap(*a))),
                Node::Sqrt(a) => self.push(Node::Sqrt(remap(*a))),
                Node::SqrtPos { arg, margin } => self.push(Node::SqrtPos {
                    arg: remap(*arg),
                    margin: *margin,
                }),
                Node::Squared(a) => self.push(Node::Squared(remap(*a))),
                Node::Ramp { arg, power } => self.push(Node::Ramp {
                    arg: remap(*arg),
                    power: *power,
                }),
                Node::Affine { args: a, coeffs, bias } => self.push(Node::Affine {
                    args: remap_vec(a),
                    coeffs: coeffs.clone(),
                    bias: *bias,
                }),
                Node::Gate { guard, body } => self.push(Node::Gate {
                    guard: remap(*guard),
                    body: remap(*body),
                }),
                Node::Select { tuple, index } => self.push(Node::Select {
                    tuple: remap(*tuple),
                    index: *index,
                }),
                Node::ChartInv { chart, args: a } => self.push(Node::ChartInv {
                    chart: chart + chart_offset,
                    args: remap_vec(a),
                }),
                Node::HadamardSplit {
                    body,
                    head,
                    tail,
                    order,
                } => self.push(Node::HadamardSplit {
                    body: body.clone(),
                    head: remap_vec(head),
                    tail: remap_vec(tail),
                    order: *order,
                }),
                Node::MorseHessQuad { body, args: a, order } => self.push(Node::MorseHessQuad {
                    body: body.clone(),
                    args: remap_vec(a),
                    order: *order,
                }),
                Node::Cholesky { matrix, dim, args: a } => self.push(Node::Cholesky {
                    matrix: matrix.clone(),
                    dim: *dim,
                    args: remap_vec(a),
                }),
                Node::Deriv { body, index, args: a } => self.push(Node::Deriv {
                    body: body.clone(),
                    index: *index,
                    args: remap_vec(a),
                }),
            };
            map.push(new_id);
        }
        prog.roots.iter().map(|&r| map[r]).collect()
    }

    pub fn finish(self, roots: Vec<NodeId>) -> EvalProgram {
        EvalProgram {
            dimension: self.dimension,
            charts: self.charts,
            nodes: self.nodes,
            roots,
        }
    }

    /// Split `finish` for callers that keep building after recording roots.
    pub fn snapshot(&self, roots: Vec<NodeId>) -> EvalProgram {
        EvalProgram {
            dimension: self.dimension,
            charts: self.charts.clone(),
            nodes: self.nodes.clone(),
            roots,
        }
    }
}

impl Expr {
    /// Compile into a single-root program over `n` variables.
    pub fn compile(&self, n: usize) -> EvalProgram {
        let mut b = ProgramBuilder::new(n);
        let vars = b.vars();
        let root = b.inline_expr(self, &vars);
        b.finish(vec![root])
    }
}
