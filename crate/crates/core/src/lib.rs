//! System-dynamics toolkit: a plain-text stock-and-flow language (SDL), a
//! unit checker, a fixed-step Euler integrator with counter-based seeded
//! noise, the built-in fashion-recommender bias model and its experiments.
//!
//! The integrator is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

pub mod ast;
pub mod experiments;
pub mod frs;
pub mod scalar;
pub mod sdl;
pub mod sim;
pub mod stats;
pub mod unitcheck;
pub mod units;

pub use ast::{BinOp, Expr, Func, ModelSpec, Range, SimControl, VarKind, VariableDef};
pub use scalar::Scalar;
pub use sdl::{parse_model, serialize, Diagnostic, ParsedModel, Severity, SourceEntry, Span};
pub use sim::{compile, simulate, NoiseMode, RngPolicy, RunMetadata, SimError, Simulation};
pub use unitcheck::{check_model, infer_units, UnitMismatch};
pub use units::{parse_units, UnitExpr};

pub type Model = sim::CompiledModel<f64>;
pub type Run = sim::RunResult<f64>;
pub type ModelF32 = sim::CompiledModel<f32>;
pub type RunF32 = sim::RunResult<f32>;
