//! Constructive sums-of-squares-weighted nonnegativity certificates.
//!
//! Given a smooth function `f` that is nonnegative on a basic constraint
//! set `S = {x : g_1(x) >= 0, ..., h_m(x) = 0}`, this crate constructs and
//! independently re-verifies explicit decompositions
//!
//! ```text
//! f - f* = φ0 + Σ_i φ_i g_i + Σ_j ψ_j h_j
//! ```
//!
//! where every `φ_i` is structurally a sum of squares of evaluable
//! programs. Local certificates are built around a single nondegenerate
//! zero from a straightening chart, integral splitting factors and a
//! Morse-type square-root map; global certificates glue local ones over a
//! compact box with a squared partition of unity. The same decomposition
//! yields checkable global optimality conditions with function-valued
//! multipliers.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `nncert` binary for the file-based command-line interface.

pub mod error;
pub mod expr;
pub mod globalcert;
pub mod jet;
pub mod kkt;
pub mod localcert;
pub mod problem;
pub mod program;
pub mod quad;
pub mod sample;
mod serialize;
pub mod verify;

pub use error::{Error, Result};
pub use expr::Expr;
pub use globalcert::{GlobalCertificate, GlobalOptions, ZeroSet};
pub use jet::Jet2;
pub use kkt::{CompiledProblem, KKTReport};
pub use localcert::LocalCertificate;
pub use problem::{BoxDomain, Problem, ProblemFile, Tolerances};
pub use program::{EvalProgram, ProgramBuilder};
pub use verify::{Certificate, VerificationReport};
