use std::collections::BTreeMap;

use crate::ast::{BinOp, SimControl, VarKind};
use crate::scalar::Scalar;

use super::compile::{CExpr, CompiledModel, ControlField};
use super::rng::{draw_normal, DrawError, RngPolicy, StreamKey};
use super::{RunMetadata, RunResult, SimError};

pub(crate) struct EvalCtx<'a, S> {
    pub values: &'a [S],
    pub t: S,
    pub control: &'a SimControl,
    pub policy: &'a RngPolicy,
    pub step: u64,
    pub variable: &'a str,
}

pub(crate) enum EvalFault {
    DivisionByZero,
    Draw(DrawError),
}

impl EvalFault {
    pub(crate) fn into_error<S: Scalar>(self, variable: &str, t: S) -> SimError {
        let (variable, t) = (variable.to_string(), t.as_f64());
        match self {
            EvalFault::DivisionByZero => SimError::DivisionByZero { variable, t },
            EvalFault::Draw(source) => SimError::InvalidDraw { variable, t, source },
        }
    }
}

pub(crate) fn eval<S: Scalar>(e: &CExpr<S>, ctx: &EvalCtx<'_, S>) -> Result<S, EvalFault> {
    Ok(match e {
        CExpr::Lit(v) => *v,
        CExpr::Slot(s) => ctx.values[*s],
        CExpr::Time => ctx.t,
        CExpr::Control(f) => S::lit(match f {
            ControlField::InitialTime => ctx.control.initial_time,
            ControlField::FinalTime => ctx.control.final_time,
            ControlField::TimeStep => ctx.control.dt,
            ControlField::Saveper => ctx.control.saveper,
        }),
        CExpr::Bin(op, a, b) => {
            let (a, b) = (eval(a, ctx)?, eval(b, ctx)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == S::zero() {
                        return Err(EvalFault::DivisionByZero);
                    }
                    a / b
                }
            }
        }
        CExpr::Max(a, b) => eval(a, ctx)?.max(eval(b, ctx)?),
        CExpr::Min(a, b) => eval(a, ctx)?.min(eval(b, ctx)?),
        CExpr::Normal { args, ordinal } => {
            let min = eval(&args[0], ctx)?;
            let max = eval(&args[1], ctx)?;
            let mean = eval(&args[2], ctx)?;
            let sd = eval(&args[3], ctx)?;
            let seed = eval(&args[4], ctx)?;
            let key = StreamKey::for_site(ctx.policy, ctx.variable, *ordinal, seed.as_f64(), ctx.step);
            draw_normal(key, min, max, mean, sd, ctx.policy).map_err(EvalFault::Draw)?
        }
    })
}

/// Mutable state of one run: the flat value table plus the step counter.
/// Stocks hold their values at the current time; auxiliaries hold values
/// from the last [`Simulation::evaluate`].
pub struct Simulation<'m, S> {
    model: &'m CompiledModel<S>,
    policy: RngPolicy,
    values: Vec<S>,
    step: usize,
}

impl<'m, S: Scalar> Simulation<'m, S> {
    /// Set constants (with overrides) and initial stock values at the initial time.
    pub fn new(
        model: &'m CompiledModel<S>,
        policy: RngPolicy,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<Self, SimError> {
        let mut values = vec![S::zero(); model.names.len()];
        for &(slot, v) in &model.constants {
            values[slot] = v;
        }
        let mut stock_overrides = Vec::new();
        for (name, &v) in overrides {
            let slot = model.slot(name).ok_or_else(|| SimError::UnknownOverride(name.clone()))?;
            match model.kinds[slot] {
                VarKind::Constant => values[slot] = S::lit(v),
                VarKind::Stock => stock_overrides.push((slot, S::lit(v))),
                _ => return Err(SimError::UnknownOverride(name.clone())),
            }
        }
        let mut sim = Simulation { model, policy, values, step: 0 };
        let t = sim.time();
        for stock in &model.stocks {
            let name = &model.names[stock.slot];
            let v = match stock_overrides.iter().find(|(s, _)| *s == stock.slot) {
                Some(&(_, v)) => v,
                None => {
                    let ctx = sim.ctx(name);
                    eval(&stock.initial, &ctx).map_err(|f| f.into_error(name, t))?
                }
            };
            if !v.is_finite() {
                return Err(SimError::NonFiniteResult { variable: name.clone(), t: t.as_f64() });
            }
            sim.values[stock.slot] = v;
        }
        Ok(sim)
    }

    fn ctx<'a>(&'a self, variable: &'a str) -> EvalCtx<'a, S> {
        EvalCtx {
            values: &self.values,
            t: self.time(),
            control: &self.model.control,
            policy: &self.policy,
            step: self.step as u64,
            variable,
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Current time, computed from the step index so the grid never drifts.
    pub fn time(&self) -> S {
        let c = &self.model.control;
        S::lit(c.initial_time + self.step as f64 * c.dt)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn value(&self, name: &str) -> Option<S> {
        self.model.slot(name).map(|s| self.values[s])
    }

    /// Evaluate every auxiliary at the current time from current stocks.
    pub fn evaluate(&mut self) -> Result<(), SimError> {
        let t = self.time();
        for aux in &self.model.aux {
            let name = &self.model.names[aux.slot];
            let v = eval(&aux.expr, &self.ctx(name)).map_err(|f| f.into_error(name, t))?;
            if !v.is_finite() {
                return Err(SimError::NonFiniteResult { variable: name.clone(), t: t.as_f64() });
            }
            self.values[aux.slot] = v;
        }
        Ok(())
    }

    /// Euler update of every stock using the auxiliaries from the last
    /// [`Simulation::evaluate`]: `stock += dt * netflow`.
    pub fn advance(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let dt = S::lit(self.model.control.dt);
        let mut flows = Vec::with_capacity(self.model.stocks.len());
        for stock in &self.model.stocks {
            let name = &self.model.names[stock.slot];
            let f = eval(&stock.flow, &self.ctx(name)).map_err(|e| e.into_error(name, t))?;
            flows.push(f);
        }
        for (stock, f) in self.model.stocks.iter().zip(flows) {
            let next = self.values[stock.slot] + dt * f;
            if !next.is_finite() {
                let variable = self.model.names[stock.slot].clone();
                return Err(SimError::NonFiniteResult { variable, t: t.as_f64() });
            }
            self.values[stock.slot] = next;
        }
        self.step += 1;
        Ok(())
    }

    /// One full step: evaluate auxiliaries at `t`, then move stocks to `t + dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.evaluate()?;
        self.advance()
    }
}

/// Run from the initial to the final time, recording every SAVEPER.
pub fn simulate<S: Scalar>(
    model: &CompiledModel<S>,
    policy: &RngPolicy,
    overrides: &BTreeMap<String, f64>,
) -> Result<RunResult<S>, SimError> {
    let control = model.control;
    let steps = control.steps();
    let stride = control.save_stride();
    let capacity = control.save_points();
    let mut sim = Simulation::new(model, *policy, overrides)?;
    let n = model.names.len();
    let mut times = Vec::with_capacity(capacity);
    let mut series: Vec<Vec<S>> = (0..n).map(|_| Vec::with_capacity(capacity)).collect();

    let mut warnings = Vec::new();
    for (name, v, range) in &model.control_ranges {
        if !range.contains(*v) {
            warnings.push(format!("{name} = {v} outside {range}"));
        }
    }
    let mut warned = vec![false; n];

    for k in 0..=steps {
        sim.evaluate()?;
        if k % stride == 0 {
            let t = sim.time();
            times.push(t);
            for (col, v) in series.iter_mut().zip(sim.values()) {
                col.push(*v);
            }
            for &(slot, range) in &model.ranges {
                let v = sim.values()[slot].as_f64();
                if !warned[slot] && !range.contains(v) {
                    warned[slot] = true;
                    warnings.push(format!("{} = {v} outside {range} at t={}", model.names[slot], t));
                }
            }
        }
        if k < steps {
            sim.advance()?;
        }
    }

    Ok(RunResult {
        times,
        names: model.names.clone(),
        series,
        metadata: RunMetadata {
            seed: policy.seed,
            noise: policy.mode,
            overrides: overrides.clone(),
            control,
            warnings,
        },
    })
}
