//! Dimensional analysis of model equations against their declared units.
//!
//! Rules: `*` adds exponents, `/` subtracts them, `+`/`-`/MAX/MIN need equal
//! operand units. `INTEG(flow, init)` needs `flow = stock/Day` and
//! `init = stock`. `RANDOM NORMAL` needs min, max, mean and sd in one unit
//! (the result) and a dimensionless seed. A bare numeric literal is
//! dimensionless under `*` and `/` but takes the unit of its sibling in
//! additive, comparison and bound positions.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{BinOp, Expr, Func, ModelSpec, VarKind, TIME};
use crate::sdl::{format_expr, Span};
use crate::units::UnitExpr;

/// The single time base of every model.
pub const TIME_UNIT: &str = "Day";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitMismatch {
    pub variable: String,
    pub expected: UnitExpr,
    pub inferred: UnitExpr,
    /// Offending subexpression rendered as SDL.
    pub subexpr: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

impl fmt::Display for UnitMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, inferred {} at ", self.variable, self.expected, self.inferred)?;
        match self.span {
            Some(span) => write!(f, "{span} ({})", self.subexpr),
            None => write!(f, "{}", self.subexpr),
        }
    }
}

/// Inferred unit of a subexpression. `Free` marks a bare literal (or an
/// expression built only from literals) whose unit is not yet fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Inferred {
    Free,
    Known(UnitExpr),
}

impl Inferred {
    pub fn resolve(self) -> UnitExpr {
        match self {
            Inferred::Free => UnitExpr::dmnl(),
            Inferred::Known(u) => u,
        }
    }

    fn matches(&self, want: &UnitExpr) -> bool {
        match self {
            Inferred::Free => true,
            Inferred::Known(u) => u == want,
        }
    }
}

/// Mismatch found inside an expression, before it is attributed to a variable.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMismatch {
    pub expected: UnitExpr,
    pub inferred: UnitExpr,
    pub subexpr: String,
}

fn mismatch(expected: &UnitExpr, inferred: &UnitExpr, e: &Expr) -> LocalMismatch {
    LocalMismatch { expected: expected.clone(), inferred: inferred.clone(), subexpr: format_expr(e) }
}

/// Unify operands that must share one unit; literals adopt the first known unit.
fn unify(parts: &[(&Expr, Inferred)]) -> Result<Inferred, LocalMismatch> {
    let mut known: Option<&UnitExpr> = None;
    for (e, u) in parts {
        if let Inferred::Known(u) = u {
            match known {
                None => known = Some(u),
                Some(k) if k != u => return Err(mismatch(k, u, e)),
                Some(_) => {}
            }
        }
    }
    Ok(known.map_or(Inferred::Free, |u| Inferred::Known(u.clone())))
}

/// Infer the unit of `e`. `env` holds the declared unit of every variable;
/// INTEG calls are checked only at the root of a stock definition, so here
/// they infer to the unit of their initial value.
pub fn infer_units(e: &Expr, env: &HashMap<String, UnitExpr>) -> Result<Inferred, LocalMismatch> {
    match e {
        Expr::Number { .. } => Ok(Inferred::Free),
        Expr::Var { name } => match env.get(name) {
            Some(u) => Ok(Inferred::Known(u.clone())),
            None if name == TIME => Ok(Inferred::Known(UnitExpr::base(TIME_UNIT))),
            None => Err(LocalMismatch {
                expected: UnitExpr::dmnl(),
                inferred: UnitExpr::dmnl(),
                subexpr: format!("unresolved reference {}", crate::sdl::format_name(name)),
            }),
        },
        Expr::Binary { op, left, right } => {
            let l = infer_units(left, env)?;
            let r = infer_units(right, env)?;
            match op {
                BinOp::Add | BinOp::Sub => unify(&[(left, l), (right, r)]),
                BinOp::Mul | BinOp::Div => {
                    if l == Inferred::Free && r == Inferred::Free {
                        return Ok(Inferred::Free);
                    }
                    let (l, r) = (l.resolve(), r.resolve());
                    Ok(Inferred::Known(if *op == BinOp::Mul { l.mul(&r) } else { l.div(&r) }))
                }
            }
        }
        Expr::Call { function, args } => {
            let inferred: Vec<Inferred> = args.iter().map(|a| infer_units(a, env)).collect::<Result<_, _>>()?;
            match function {
                Func::Max | Func::Min => {
                    let parts: Vec<_> = args.iter().zip(inferred).collect();
                    unify(&parts)
                }
                Func::RandomNormal => {
                    let parts: Vec<_> = args.iter().zip(inferred.iter().cloned()).take(4).collect();
                    let u = unify(&parts)?;
                    if !inferred[4].matches(&UnitExpr::dmnl()) {
                        return Err(mismatch(&UnitExpr::dmnl(), &inferred[4].clone().resolve(), &args[4]));
                    }
                    Ok(u)
                }
                Func::Integ => Ok(inferred.into_iter().nth(1).unwrap_or(Inferred::Free)),
            }
        }
    }
}

/// Check one definition against its declared units.
pub fn check_definition(
    kind: VarKind,
    expr: &Expr,
    declared: &UnitExpr,
    env: &HashMap<String, UnitExpr>,
) -> Result<(), LocalMismatch> {
    if let (VarKind::Stock, Expr::Call { function: Func::Integ, args }) = (kind, expr) {
        let rate = declared.div(&UnitExpr::base(TIME_UNIT));
        let flow = infer_units(&args[0], env)?;
        if !flow.matches(&rate) {
            return Err(mismatch(&rate, &flow.resolve(), &args[0]));
        }
        let init = infer_units(&args[1], env)?;
        if !init.matches(declared) {
            return Err(mismatch(declared, &init.resolve(), &args[1]));
        }
        return Ok(());
    }
    let got = infer_units(expr, env)?;
    if got.matches(declared) {
        Ok(())
    } else {
        Err(mismatch(declared, &got.resolve(), expr))
    }
}

/// All unit mismatches in a model; at most one per variable. References
/// resolve to declared units, so a fault stays local to its equation.
pub fn check_model(spec: &ModelSpec) -> Vec<UnitMismatch> {
    check_model_with_spans(spec, |_| None)
}

pub fn check_model_with_spans(spec: &ModelSpec, span_of: impl Fn(&str) -> Option<Span>) -> Vec<UnitMismatch> {
    let env: HashMap<String, UnitExpr> = spec.variables.iter().map(|v| (v.name.clone(), v.units.clone())).collect();
    spec.variables
        .iter()
        .filter_map(|v| {
            check_definition(v.kind, &v.expr, &v.units, &env).err().map(|m| UnitMismatch {
                variable: v.name.clone(),
                expected: m.expected,
                inferred: m.inferred,
                subexpr: m.subexpr,
                span: span_of(&v.name),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::VariableDef;
    use crate::units::parse_units;

    fn env(pairs: &[(&str, &str)]) -> HashMap<String, UnitExpr> {
        pairs.iter().map(|(n, u)| (n.to_string(), parse_units(u).unwrap())).collect()
    }

    fn u(s: &str) -> UnitExpr {
        parse_units(s).unwrap()
    }

    #[test]
    fn new_processing_rate_units() {
        let env = env(&[("IB", "bias"), ("PB", "bias"), ("NU", "1/Day"), ("HCI", "interactions"), ("LR", "Dmnl")]);
        let e = (Expr::var("IB") + Expr::var("PB")) * Expr::var("NU") / Expr::var("HCI") * Expr::var("LR");
        assert_eq!(infer_units(&e, &env).unwrap(), Inferred::Known(u("bias/(interactions*Day)")));
    }

    #[test]
    fn dmnl_is_identity() {
        let env = env(&[("a", "Dmnl"), ("b", "bias")]);
        assert_eq!(infer_units(&(Expr::var("a") * Expr::var("b")), &env).unwrap(), Inferred::Known(u("bias")));
    }

    #[test]
    fn literal_coercion() {
        let env = env(&[("r", "interactions/Day")]);
        let e = Expr::max(Expr::num(0.0), Expr::var("r"));
        assert_eq!(infer_units(&e, &env).unwrap(), Inferred::Known(u("interactions/Day")));
        let e = Expr::num(1.0) / Expr::var("r");
        assert_eq!(infer_units(&e, &env).unwrap(), Inferred::Known(u("Day/interactions")));
        assert_eq!(infer_units(&(Expr::num(2.0) * Expr::num(3.0)), &env).unwrap(), Inferred::Free);
    }

    #[test]
    fn additive_mismatch() {
        let env = env(&[("a", "bias"), ("b", "quality")]);
        let err = infer_units(&(Expr::var("a") + Expr::var("b")), &env).unwrap_err();
        assert_eq!(err.expected, u("bias"));
        assert_eq!(err.inferred, u("quality"));
        assert_eq!(err.subexpr, "b");
    }

    #[test]
    fn mutated_avg_quality() {
        let spec = ModelSpec {
            variables: vec![
                VariableDef::new("Performance", Expr::num(1.0), u("quality")),
                VariableDef::new("FRE", Expr::num(5.0), u("recommendations")),
                VariableDef::new(
                    "Avg Quality",
                    Expr::var("Performance") * Expr::var("FRE"),
                    u("quality/recommendations"),
                ),
            ],
            control: Default::default(),
        };
        let m = check_model(&spec);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].variable, "Avg Quality");
        assert_eq!(m[0].expected, u("quality/recommendations"));
        assert_eq!(m[0].inferred, u("quality*recommendations"));
        assert_eq!(
            m[0].to_string(),
            "Avg Quality: expected quality/recommendations, inferred quality*recommendations at Performance * FRE"
        );
    }

    #[test]
    fn integ_rules() {
        let env = env(&[("inflow", "bias/Day"), ("wrong", "bias")]);
        let ok = Expr::integ(Expr::var("inflow"), Expr::num(1.0));
        assert!(check_definition(VarKind::Stock, &ok, &u("bias"), &env).is_ok());
        let bad = Expr::integ(Expr::var("wrong"), Expr::num(1.0));
        let err = check_definition(VarKind::Stock, &bad, &u("bias"), &env).unwrap_err();
        assert_eq!(err.expected, u("bias/Day"));
    }

    #[test]
    fn random_normal_rules() {
        let env = env(&[("m", "quality"), ("s", "quality"), ("seed", "Dmnl"), ("x", "bias")]);
        let e = Expr::random_normal(Expr::num(1.0), Expr::num(5.0), Expr::var("m"), Expr::var("s"), Expr::var("seed"));
        assert_eq!(infer_units(&e, &env).unwrap(), Inferred::Known(u("quality")));
        let e = Expr::random_normal(Expr::num(1.0), Expr::num(5.0), Expr::var("m"), Expr::var("x"), Expr::var("seed"));
        assert!(infer_units(&e, &env).is_err());
        let e = Expr::random_normal(Expr::num(1.0), Expr::num(5.0), Expr::var("m"), Expr::var("s"), Expr::var("x"));
        assert!(infer_units(&e, &env).is_err());
    }

    #[test]
    fn empty_model() {
        assert!(check_model(&ModelSpec::default()).is_empty());
    }

    #[test]
    fn time_reference() {
        let e = Expr::var("Time") / Expr::var("Time");
        assert_eq!(infer_units(&e, &HashMap::new()).unwrap(), Inferred::Known(UnitExpr::dmnl()));
    }
}
