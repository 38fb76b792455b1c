//! Source-level model representation shared by the parser, the unit checker
//! and the compiler.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::units::UnitExpr;

pub const INITIAL_TIME: &str = "INITIAL TIME";
pub const FINAL_TIME: &str = "FINAL TIME";
pub const TIME_STEP: &str = "TIME STEP";
pub const SAVEPER: &str = "SAVEPER";
pub const CONTROL_NAMES: [&str; 4] = [INITIAL_TIME, FINAL_TIME, TIME_STEP, SAVEPER];

/// Name of the implicit simulation clock.
pub const TIME: &str = "Time";

/// Collapse internal whitespace runs to a single space and trim the ends.
pub fn normalize_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_control_name(name: &str) -> bool {
    CONTROL_NAMES.contains(&name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Func {
    #[serde(rename = "INTEG")]
    Integ,
    #[serde(rename = "MAX")]
    Max,
    #[serde(rename = "MIN")]
    Min,
    #[serde(rename = "RANDOM NORMAL")]
    RandomNormal,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Integ => "INTEG",
            Func::Max => "MAX",
            Func::Min => "MIN",
            Func::RandomNormal => "RANDOM NORMAL",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Integ | Func::Max | Func::Min => 2,
            Func::RandomNormal => 5,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "INTEG" => Some(Func::Integ),
            "MAX" => Some(Func::Max),
            "MIN" => Some(Func::Min),
            "RANDOM NORMAL" => Some(Func::RandomNormal),
            _ => None,
        }
    }
}

/// Expression tree. Literals are kept as `f64` at the source level; the
/// compiler converts them into the scalar type of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    Number { value: f64 },
    Var { name: String },
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
    Call { function: Func, args: Vec<Expr> },
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Number { value }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var { name: normalize_name(name) }
    }

    pub fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn call(function: Func, args: Vec<Expr>) -> Expr {
        Expr::Call { function, args }
    }

    pub fn integ(flow: Expr, initial: Expr) -> Expr {
        Expr::call(Func::Integ, vec![flow, initial])
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::call(Func::Max, vec![a, b])
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::call(Func::Min, vec![a, b])
    }

    pub fn random_normal(min: Expr, max: Expr, mean: Expr, sd: Expr, seed: Expr) -> Expr {
        Expr::call(Func::RandomNormal, vec![min, max, mean, sd, seed])
    }

    pub fn is_integ(&self) -> bool {
        matches!(self, Expr::Call { function: Func::Integ, .. })
    }

    /// Every variable name referenced anywhere in the tree, in visit order.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var { name } = e {
                out.push(name.as_str());
            }
        });
        out
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Number { .. } | Expr::Var { .. } => {}
            Expr::Binary { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.visit(f)),
        }
    }

    pub fn contains_call(&self, func: Func) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Call { function, .. } if *function == func) {
                found = true;
            }
        });
        found
    }
}

macro_rules! impl_expr_op {
    ($tr:ident, $method:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
    };
}

impl_expr_op!(Add, add, BinOp::Add);
impl_expr_op!(Sub, sub, BinOp::Sub);
impl_expr_op!(Mul, mul, BinOp::Mul);
impl_expr_op!(Div, div, BinOp::Div);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Stock,
    Auxiliary,
    Constant,
    Control,
}

impl VarKind {
    /// Classify a definition from its name and right-hand side.
    pub fn classify(name: &str, expr: &Expr) -> VarKind {
        if is_control_name(name) {
            VarKind::Control
        } else if expr.is_integ() {
            VarKind::Stock
        } else if matches!(expr, Expr::Number { .. }) {
            VarKind::Constant
        } else {
            VarKind::Auxiliary
        }
    }
}

/// Optional `[lo,hi]` annotation on a Units line; `?` marks an open side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Range {
    pub fn contains(&self, v: f64) -> bool {
        self.lo.is_none_or(|lo| v >= lo) && self.hi.is_none_or(|hi| v <= hi)
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |v: Option<f64>| v.map_or_else(|| "?".to_string(), |v| v.to_string());
        write!(f, "[{},{}]", side(self.lo), side(self.hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableDef {
    pub name: String,
    pub kind: VarKind,
    pub expr: Expr,
    pub units: UnitExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
}

impl VariableDef {
    pub fn new(name: &str, expr: Expr, units: UnitExpr) -> VariableDef {
        let name = normalize_name(name);
        let kind = VarKind::classify(&name, &expr);
        VariableDef { name, kind, expr, units, range: None, doc: None }
    }

    pub fn with_range(mut self, range: Range) -> Self {
        self.range = Some(range);
        self
    }

    pub fn with_doc(mut self, doc: &str) -> Self {
        self.doc = Some(doc.to_string());
        self
    }

    /// For stocks: the net-flow and initial-value arguments of the INTEG root.
    pub fn integral_parts(&self) -> Option<(&Expr, &Expr)> {
        match &self.expr {
            Expr::Call { function: Func::Integ, args } if args.len() == 2 => Some((&args[0], &args[1])),
            _ => None,
        }
    }
}

/// Fixed-step simulation clock, all values in the model's time unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimControl {
    pub initial_time: f64,
    pub final_time: f64,
    pub dt: f64,
    pub saveper: f64,
}

impl Default for SimControl {
    fn default() -> Self {
        SimControl { initial_time: 0.0, final_time: 100.0, dt: 1.0, saveper: 1.0 }
    }
}

impl SimControl {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.initial_time, self.final_time, self.dt, self.saveper];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("control values must be finite".into());
        }
        if self.dt <= 0.0 {
            return Err(format!("TIME STEP must be > 0, got {}", self.dt));
        }
        if self.final_time < self.initial_time {
            return Err(format!("FINAL TIME ({}) precedes INITIAL TIME ({})", self.final_time, self.initial_time));
        }
        if self.saveper < self.dt {
            return Err(format!("SAVEPER ({}) is smaller than TIME STEP ({})", self.saveper, self.dt));
        }
        let ratio = self.saveper / self.dt;
        if (ratio - ratio.round()).abs() > 1e-12 * ratio {
            return Err(format!("SAVEPER ({}) is not an integer multiple of TIME STEP ({})", self.saveper, self.dt));
        }
        Ok(())
    }

    /// Number of Euler steps between the initial and final time.
    pub fn steps(&self) -> usize {
        ((self.final_time - self.initial_time) / self.dt + 1e-9).floor() as usize
    }

    /// Steps between consecutive save points.
    pub fn save_stride(&self) -> usize {
        ((self.saveper / self.dt).round() as usize).max(1)
    }

    pub fn save_points(&self) -> usize {
        ((self.final_time - self.initial_time) / self.saveper + 1e-9).floor() as usize + 1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variables: Vec<VariableDef>,
    pub control: SimControl,
}

impl ModelSpec {
    pub fn get(&self, name: &str) -> Option<&VariableDef> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut VariableDef> {
        self.variables.iter_mut().find(|v| v.name == name)
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.variables.iter().filter(|v| v.kind == kind).count()
    }

    /// Recompute the control block from the control entries, starting from
    /// `self.control` for anything not defined. Entries may be
    /// literals or references to other control entries (`SAVEPER = TIME STEP`).
    pub fn resolve_control(&self) -> Result<SimControl, String> {
        fn eval(spec: &ModelSpec, e: &Expr, depth: usize) -> Result<f64, String> {
            if depth > CONTROL_NAMES.len() {
                return Err("circular control definitions".into());
            }
            match e {
                Expr::Number { value } => Ok(*value),
                Expr::Var { name } if is_control_name(name) => match spec.get(name) {
                    Some(def) => eval(spec, &def.expr, depth + 1),
                    None => Err(format!("control entry {name} is referenced but not defined")),
                },
                Expr::Var { name } => Err(format!("control entries may only reference control entries, found {name}")),
                Expr::Binary { op, left, right } => {
                    let (a, b) = (eval(spec, left, depth)?, eval(spec, right, depth)?);
                    Ok(match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => a / b,
                    })
                }
                Expr::Call { function, .. } => Err(format!("{} is not allowed in a control entry", function.name())),
            }
        }

        let mut control = self.control;
        let mut saveper_set = false;
        let mut dt_set = false;
        for name in CONTROL_NAMES {
            if let Some(def) = self.get(name) {
                let v = eval(self, &def.expr, 0).map_err(|m| format!("{name}: {m}"))?;
                match name {
                    INITIAL_TIME => control.initial_time = v,
                    FINAL_TIME => control.final_time = v,
                    TIME_STEP => {
                        control.dt = v;
                        dt_set = true;
                    }
                    _ => {
                        control.saveper = v;
                        saveper_set = true;
                    }
                }
            }
        }
        if dt_set && !saveper_set {
            control.saveper = control.dt;
        }
        Ok(control)
    }
}
