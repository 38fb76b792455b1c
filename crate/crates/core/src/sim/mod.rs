//! Compilation and fixed-step Euler integration of stock-and-flow models.

mod compile;
mod rng;
mod run;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ast::{Expr, SimControl};
use crate::scalar::Scalar;

pub use compile::{compile, AuxSlot, CExpr, CompiledModel, ControlField, NoiseSite, StockSlot};
pub use rng::{
    bits_to_open_unit, draw_normal, hash_words, inverse_normal_cdf, mix64, name_hash, CounterRng, DrawError, NoiseMode,
    RngPolicy, StreamKey,
};
pub use run::{simulate, Simulation};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unresolved reference '{name}' in {in_variable}")]
    UnresolvedReference { name: String, in_variable: String },
    #[error("cyclic dependency: {}", .0.join(" -> "))]
    CyclicDependency(Vec<String>),
    #[error("INTEG must be the whole right-hand side of a stock definition (in {0})")]
    MalformedIntegral(String),
    #[error("{function} called with the wrong number of arguments in {variable}")]
    Arity { variable: String, function: &'static str },
    #[error("duplicate variable name '{0}'")]
    DuplicateName(String),
    #[error("initial value of stock {stock} may only reference constants, found {reference}")]
    InvalidInitial { stock: String, reference: String },
    #[error("invalid simulation control: {0}")]
    InvalidControl(String),
    #[error("unknown override '{0}': not a constant or stock of the model")]
    UnknownOverride(String),
    #[error("division by zero evaluating {variable} at t={t}")]
    DivisionByZero { variable: String, t: f64 },
    #[error("non-finite value for {variable} at t={t}")]
    NonFiniteResult { variable: String, t: f64 },
    #[error("RANDOM NORMAL in {variable} at t={t}: {source}")]
    InvalidDraw { variable: String, t: f64, source: DrawError },
}

/// Run metadata recorded alongside the series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: Option<u64>,
    pub noise: NoiseMode,
    pub overrides: BTreeMap<String, f64>,
    pub control: SimControl,
    /// Range-annotation violations observed during the run.
    pub warnings: Vec<String>,
}

/// Time-indexed values of every saved variable, in model-definition order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult<S> {
    pub times: Vec<S>,
    pub names: Vec<String>,
    pub series: Vec<Vec<S>>,
    pub metadata: RunMetadata,
}

impl<S: Scalar> RunResult<S> {
    pub fn series(&self, name: &str) -> Option<&[S]> {
        self.names.iter().position(|n| n == name).map(|i| self.series[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[S])> {
        self.names.iter().map(String::as_str).zip(self.series.iter().map(Vec::as_slice))
    }

    /// Drop every series not named in `keep` (order of the result is unchanged).
    pub fn retain(&mut self, keep: &[&str]) {
        let mut names = Vec::new();
        let mut series = Vec::new();
        for (n, s) in self.names.drain(..).zip(self.series.drain(..)) {
            if keep.contains(&n.as_str()) {
                names.push(n);
                series.push(s);
            }
        }
        self.names = names;
        self.series = series;
    }
}

/// Evaluate a source expression against named values at time `t`.
/// RANDOM NORMAL calls draw from `key_step` of the stream named `variable`.
pub fn eval_expr<S: Scalar>(
    e: &Expr,
    env: &BTreeMap<String, S>,
    t: S,
    policy: &RngPolicy,
    variable: &str,
    step: u64,
) -> Result<S, SimError> {
    let index: HashMap<String, usize> = env.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    let values: Vec<S> = env.values().copied().collect();
    let lowered = compile::lower_with::<S>(&index, e)?;
    let ctx = run::EvalCtx { values: &values, t, control: &SimControl::default(), policy, step, variable };
    let v = run::eval(&lowered, &ctx).map_err(|f| f.into_error(variable, t))?;
    if !v.is_finite() {
        return Err(SimError::NonFiniteResult { variable: variable.to_string(), t: t.as_f64() });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn max_clamps_at_zero() {
        let e = Expr::max(Expr::num(0.0), Expr::num(-3.0));
        assert_eq!(eval_expr(&e, &env(&[]), 0.0, &RngPolicy::default(), "x", 0).unwrap(), 0.0);
        let e = Expr::min(Expr::num(0.0), Expr::num(-3.0));
        assert_eq!(eval_expr(&e, &env(&[]), 0.0, &RngPolicy::default(), "x", 0).unwrap(), -3.0);
    }

    #[test]
    fn new_processing_rate_at_start() {
        let e = (Expr::var("IB") + Expr::var("PB")) * Expr::var("NU") / Expr::var("HCI") * Expr::var("LR");
        let v = eval_expr(
            &e,
            &env(&[("IB", 1.0), ("PB", 1.0), ("NU", 1.74), ("HCI", 10.0), ("LR", 1.0)]),
            0.0,
            &RngPolicy::default(),
            "New Processing Rate",
            0,
        )
        .unwrap();
        assert!((v - 0.348).abs() < 1e-15);
    }

    #[test]
    fn random_normal_noise_off() {
        let e = Expr::random_normal(Expr::num(1.0), Expr::num(5.0), Expr::num(0.2), Expr::num(4.0), Expr::num(1.0));
        let v = eval_expr(&e, &env(&[]), 0.0, &RngPolicy::noise_off(), "q", 0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = Expr::var("a") / Expr::var("b");
        let err = eval_expr(&e, &env(&[("a", 1.0), ("b", 0.0)]), 2.5, &RngPolicy::default(), "ratio", 0).unwrap_err();
        assert_eq!(err, SimError::DivisionByZero { variable: "ratio".into(), t: 2.5 });
    }

    #[test]
    fn time_reference() {
        let e = Expr::var("Time") * Expr::num(2.0);
        assert_eq!(
            eval_expr(&e, &BTreeMap::<String, f32>::new(), 3.0f32, &RngPolicy::default(), "x", 0).unwrap(),
            6.0f32
        );
    }
}
