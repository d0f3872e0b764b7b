//! JSON wire format for evaluation programs and certificates.
//!
//! A program file is `{version, dimension, charts: [...], nodes: [...],
//! roots: [...]}` where each node entry is `{id, kind, args, payload}`.
//! Node ids must be the position in the node table and arguments must
//! reference strictly earlier nodes, so well-formed files are acyclic by
//! construction. Floating-point numbers round-trip binary64 exactly.

use crate::error::{Error, Result};
use crate::program::{Chart, EvalProgram, NewtonSettings, Node, NodeId, IR_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    id: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    args: Vec<usize>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    payload: Value,
}

#[derive(Serialize, Deserialize)]
struct ChartRepr {
    map: ProgramRepr,
    newton: NewtonSettings,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ProgramRepr {
    dimension: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    charts: Vec<ChartRepr>,
    nodes: Vec<NodeRepr>,
    roots: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ProgramFile {
    version: u32,
    #[serde(flatten)]
    program: ProgramRepr,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub(crate) fn program_to_repr(p: &EvalProgram) -> ProgramRepr {
    let nodes = p
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| node_to_repr(id, n))
        .collect();
    ProgramRepr {
        dimension: p.dimension,
        charts: p
            .charts
            .iter()
            .map(|c| ChartRepr {
                map: program_to_repr(&c.map),
                newton: c.newton.clone(),
                radius: c.radius,
            })
            .collect(),
        nodes,
        roots: p.roots.clone(),
    }
}

fn node_to_repr(id: usize, n: &Node) -> NodeRepr {
    let (kind, args, payload): (&str, Vec<usize>, Value) = match n {
        Node::Const(c) => ("const", vec![], json!({ "value": c })),
        Node::Var(i) => ("var", vec![], json!({ "index": i })),
        Node::Add(a, b) => ("add", vec![*a, *b], Value::Null),
        Node::Sub(a, b) => ("sub", vec![*a, *b], Value::Null),
        Node::Mul(a, b) => ("mul", vec![*a, *b], Value::Null),
        Node::Div(a, b) => ("div", vec![*a, *b], Value::Null),
        Node::Neg(a) => ("neg", vec![*a], Value::Null),
        Node::Powi(a, k) => ("powi", vec![*a], json!({ "exponent": k })),
        Node::Sin(a) => ("sin", vec![*a], Value::Null),
        Node::Cos(a) => ("cos", vec![*a], Value::Null),
        Node::Exp(a) => ("exp", vec![*a], Value::Null),
        Node::Log(a) => ("log", vec![*a], Value::Null),
        Node::Sqrt(a) => ("sqrt", vec![*a], Value::Null),
        Node::SqrtPos { arg, margin } => {
            ("sqrt-positive", vec![*arg], json!({ "margin": margin }))
        }
        Node::Squared(a) => ("squared", vec![*a], Value::Null),
        Node::Ramp { arg, power } => ("ramp", vec![*arg], json!({ "power": power })),
        Node::Affine { args, coeffs, bias } => (
            "affine",
            args.clone(),
            json!({ "coeffs": coeffs, "bias": bias }),
        ),
        Node::Gate { guard, body } => ("gate", vec![*guard, *body], Value::Null),
        Node::Select { tuple, index } => ("select", vec![*tuple], json!({ "index": index })),
        Node::ChartInv { chart, args } => {
            ("chart-inverse", args.clone(), json!({ "chart": chart }))
        }
        Node::HadamardSplit {
            body,
            head,
            tail,
            order,
        } => {
            let mut args = head.clone();
            args.extend(tail);
            (
                "hadamard-quadrature",
                args,
                json!({
                    "body": program_to_repr(body),
                    "head_len": head.len(),
                    "order": order,
                }),
            )
        }
        Node::MorseHessQuad { body, args, order } => (
            "morse-quadrature",
            args.clone(),
            json!({ "body": program_to_repr(body), "order": order }),
        ),
        Node::Cholesky { matrix, dim, args } => (
            "cholesky-factor",
            args.clone(),
            json!({ "matrix": program_to_repr(matrix), "dim": dim }),
        ),
        Node::Deriv { body, index, args } => (
            "jet-of",
            args.clone(),
            json!({ "body": program_to_repr(body), "index": index }),
        ),
    };
    NodeRepr {
        id,
        kind: kind.to_string(),
        args,
        payload,
    }
}

fn payload_field<T: serde::de::DeserializeOwned>(payload: &Value, field: &str) -> Result<T> {
    let v = payload
        .get(field)
        .ok_or_else(|| fmt_err(format!("missing payload field `{field}`")))?;
    serde_json::from_value(v.clone())
        .map_err(|e| fmt_err(format!("bad payload field `{field}`: {e}")))
}

pub(crate) fn program_from_repr(repr: &ProgramRepr) -> Result<EvalProgram> {
    let n_nodes = repr.nodes.len();
    let mut nodes = Vec::with_capacity(n_nodes);
    for (pos, nr) in repr.nodes.iter().enumerate() {
        if nr.id != pos {
            return Err(fmt_err(format!(
                "node id {} out of order at position {pos}",
                nr.id
            )));
        }
        for &a in &nr.args {
            if a >= pos {
                return Err(fmt_err(format!(
                    "node {pos} references non-earlier node {a}"
                )));
            }
        }
        nodes.push(node_from_repr(nr)?);
    }
    let charts = repr
        .charts
        .iter()
        .map(|c| {
            Ok(Chart {
                map: program_from_repr(&c.map)?,
                newton: c.newton.clone(),
                radius: c.radius,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for &r in &repr.roots {
        if r >= n_nodes {
            return Err(fmt_err(format!("root {r} out of range")));
        }
    }
    Ok(EvalProgram {
        dimension: repr.dimension,
        charts,
        nodes,
        roots: repr.roots.clone(),
    })
}

fn node_from_repr(nr: &NodeRepr) -> Result<Node> {
    let args = &nr.args;
    let unary = || -> Result<NodeId> {
        if args.len() != 1 {
            return Err(fmt_err(format!("kind `{}` expects 1 arg", nr.kind)));
        }
        Ok(args[0])
    };
    let binary = || -> Result<(NodeId, NodeId)> {
        if args.len() != 2 {
            return Err(fmt_err(format!("kind `{}` expects 2 args", nr.kind)));
        }
        Ok((args[0], args[1]))
    };
    Ok(match nr.kind.as_str() {
        "const" => Node::Const(payload_field(&nr.payload, "value")?),
        "var" => Node::Var(payload_field(&nr.payload, "index")?),
        "add" => {
            let (a, b) = binary()?;
            Node::Add(a, b)
        }
        "sub" => {
            let (a, b) = binary()?;
            Node::Sub(a, b)
        }
        "mul" => {
            let (a, b) = binary()?;
            Node::Mul(a, b)
        }
        "div" => {
            let (a, b) = binary()?;
            Node::Div(a, b)
        }
        "neg" => Node::Neg(unary()?),
        "powi" => Node::Powi(unary()?, payload_field(&nr.payload, "exponent")?),
        "sin" => Node::Sin(unary()?),
        "cos" => Node::Cos(unary()?),
        "exp" => Node::Exp(unary()?),
        "log" => Node::Log(unary()?),
        "sqrt" => Node::Sqrt(unary()?),
        "sqrt-positive" => Node::SqrtPos {
            arg: unary()?,
            margin: payload_field(&nr.payload, "margin")?,
        },
        "squared" => Node::Squared(unary()?),
        "ramp" => Node::Ramp {
            arg: unary()?,
            power: payload_field(&nr.payload, "power")?,
        },
        "affine" => {
            let coeffs: Vec<f64> = payload_field(&nr.payload, "coeffs")?;
            if coeffs.len() != args.len() {
                return Err(fmt_err("affine coeffs/args length mismatch"));
            }
            Node::Affine {
                args: args.clone(),
                coeffs,
                bias: payload_field(&nr.payload, "bias")?,
            }
        }
        "gate" => {
            let (g, b) = binary()?;
            Node::Gate { guard: g, body: b }
        }
        "select" => Node::Select {
            tuple: unary()?,
            index: payload_field(&nr.payload, "index")?,
        },
        "chart-inverse" => Node::ChartInv {
            chart: payload_field(&nr.payload, "chart")?,
            args: args.clone(),
        },
        "hadamard-quadrature" => {
            let body: ProgramRepr = payload_field(&nr.payload, "body")?;
            let head_len: usize = payload_field(&nr.payload, "head_len")?;
            if head_len > args.len() {
                return Err(fmt_err("hadamard head_len exceeds args"));
            }
            Node::HadamardSplit {
                body: Box::new(program_from_repr(&body)?),
                head: args[..head_len].to_vec(),
                tail: args[head_len..].to_vec(),
                order: payload_field(&nr.payload, "order")?,
            }
        }
        "morse-quadrature" => {
            let body: ProgramRepr = payload_field(&nr.payload, "body")?;
            Node::MorseHessQuad {
                body: Box::new(program_from_repr(&body)?),
                args: args.clone(),
                order: payload_field(&nr.payload, "order")?,
            }
        }
        "cholesky-factor" => {
            let matrix: ProgramRepr = payload_field(&nr.payload, "matrix")?;
            Node::Cholesky {
                matrix: Box::new(program_from_repr(&matrix)?),
                dim: payload_field(&nr.payload, "dim")?,
                args: args.clone(),
            }
        }
        "jet-of" => {
            let body: ProgramRepr = payload_field(&nr.payload, "body")?;
            Node::Deriv {
                body: Box::new(program_from_repr(&body)?),
                index: payload_field(&nr.payload, "index")?,
                args: args.clone(),
            }
        }
        other => return Err(fmt_err(format!("unknown node kind `{other}`"))),
    })
}

pub(crate) fn program_to_bytes(p: &EvalProgram) -> Vec<u8> {
    let file = ProgramFile {
        version: IR_VERSION,
        program: program_to_repr(p),
    };
    serde_json::to_vec_pretty(&file).expect("program serialization cannot fail")
}

pub(crate) fn program_from_bytes(bytes: &[u8]) -> Result<EvalProgram> {
    let file: ProgramFile =
        serde_json::from_slice(bytes).map_err(|e| fmt_err(format!("malformed payload: {e}")))?;
    if file.version != IR_VERSION {
        return Err(fmt_err(format!(
            "version mismatch: file has {}, supported is {IR_VERSION}",
            file.version
        )));
    }
    program_from_repr(&file.program)
}
