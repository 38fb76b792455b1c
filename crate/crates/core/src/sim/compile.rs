use std::collections::{BTreeSet, HashMap};

use crate::ast::{
    BinOp, Expr, Func, ModelSpec, Range, SimControl, VarKind, FINAL_TIME, INITIAL_TIME, SAVEPER, TIME, TIME_STEP,
};
use crate::scalar::Scalar;

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlField {
    InitialTime,
    FinalTime,
    TimeStep,
    Saveper,
}

/// Expression with names resolved to slots of the flat value table.
#[derive(Clone, Debug, PartialEq)]
pub enum CExpr<S> {
    Lit(S),
    Slot(usize),
    Time,
    Control(ControlField),
    Bin(BinOp, Box<CExpr<S>>, Box<CExpr<S>>),
    Max(Box<CExpr<S>>, Box<CExpr<S>>),
    Min(Box<CExpr<S>>, Box<CExpr<S>>),
    /// RANDOM NORMAL(min, max, mean, sd, seed); `ordinal` numbers the call
    /// sites within one equation.
    Normal {
        args: Box<[CExpr<S>; 5]>,
        ordinal: u32,
    },
}

#[derive(Clone, Debug)]
pub struct StockSlot<S> {
    pub slot: usize,
    pub flow: CExpr<S>,
    pub initial: CExpr<S>,
}

#[derive(Clone, Debug)]
pub struct AuxSlot<S> {
    pub slot: usize,
    pub expr: CExpr<S>,
}

/// A RANDOM NORMAL call site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseSite {
    pub slot: usize,
    pub ordinal: u32,
}

/// Executable form of a [`ModelSpec`]. Immutable once built; share it freely
/// across concurrent runs.
#[derive(Clone, Debug)]
pub struct CompiledModel<S> {
    pub(crate) names: Vec<String>,
    pub(crate) kinds: Vec<VarKind>,
    pub(crate) index: HashMap<String, usize>,
    pub(crate) constants: Vec<(usize, S)>,
    pub(crate) stocks: Vec<StockSlot<S>>,
    pub(crate) aux: Vec<AuxSlot<S>>,
    pub(crate) control: SimControl,
    pub(crate) ranges: Vec<(usize, Range)>,
    pub(crate) control_ranges: Vec<(String, f64, Range)>,
    pub(crate) noise_sites: Vec<NoiseSite>,
    /// Direct dependencies of every slot (stocks depend on their flow refs).
    pub(crate) deps: Vec<Vec<usize>>,
}

struct Resolver<'a> {
    index: &'a HashMap<String, usize>,
}

impl Resolver<'_> {
    fn lower<S: Scalar>(&self, owner: &str, e: &Expr, ordinal: &mut u32) -> Result<CExpr<S>, SimError> {
        Ok(match e {
            Expr::Number { value } => CExpr::Lit(S::lit(*value)),
            Expr::Var { name } => {
                if let Some(&slot) = self.index.get(name) {
                    CExpr::Slot(slot)
                } else {
                    match name.as_str() {
                        TIME => CExpr::Time,
                        INITIAL_TIME => CExpr::Control(ControlField::InitialTime),
                        FINAL_TIME => CExpr::Control(ControlField::FinalTime),
                        TIME_STEP => CExpr::Control(ControlField::TimeStep),
                        SAVEPER => CExpr::Control(ControlField::Saveper),
                        _ => {
                            return Err(SimError::UnresolvedReference {
                                name: name.clone(),
                                in_variable: owner.to_string(),
                            })
                        }
                    }
                }
            }
            Expr::Binary { op, left, right } => CExpr::Bin(
                *op,
                Box::new(self.lower(owner, left, ordinal)?),
                Box::new(self.lower(owner, right, ordinal)?),
            ),
            Expr::Call { function, args } => {
                if args.len() != function.arity() {
                    return Err(SimError::Arity { variable: owner.to_string(), function: function.name() });
                }
                let mut lowered = Vec::with_capacity(args.len());
                for a in args {
                    lowered.push(self.lower(owner, a, ordinal)?);
                }
                let mut it = lowered.into_iter();
                let mut next = || Box::new(it.next().unwrap());
                match function {
                    Func::Integ => return Err(SimError::MalformedIntegral(owner.to_string())),
                    Func::Max => CExpr::Max(next(), next()),
                    Func::Min => CExpr::Min(next(), next()),
                    Func::RandomNormal => {
                        let args = Box::new([*next(), *next(), *next(), *next(), *next()]);
                        let site = CExpr::Normal { args, ordinal: *ordinal };
                        *ordinal += 1;
                        site
                    }
                }
            }
        })
    }
}

/// Lower a standalone expression against a name table (used by [`super::eval_expr`]).
pub(crate) fn lower_with<S: Scalar>(index: &HashMap<String, usize>, e: &Expr) -> Result<CExpr<S>, SimError> {
    let mut ordinal = 0;
    Resolver { index }.lower("<expr>", e, &mut ordinal)
}

impl<S> CExpr<S> {
    fn slots(&self, out: &mut Vec<usize>) {
        match self {
            CExpr::Slot(s) => out.push(*s),
            CExpr::Lit(_) | CExpr::Time | CExpr::Control(_) => {}
            CExpr::Bin(_, a, b) | CExpr::Max(a, b) | CExpr::Min(a, b) => {
                a.slots(out);
                b.slots(out);
            }
            CExpr::Normal { args, .. } => args.iter().for_each(|a| a.slots(out)),
        }
    }

    fn noise_ordinals(&self, out: &mut Vec<u32>) {
        match self {
            CExpr::Normal { args, ordinal } => {
                out.push(*ordinal);
                args.iter().for_each(|a| a.noise_ordinals(out));
            }
            CExpr::Bin(_, a, b) | CExpr::Max(a, b) | CExpr::Min(a, b) => {
                a.noise_ordinals(out);
                b.noise_ordinals(out);
            }
            _ => {}
        }
    }
}

/// Depth-first topological sort of auxiliaries; reports the first cycle
/// found, in dependency order starting from its earliest-defined member.
fn topo_order(aux: &[usize], deps: &[Vec<usize>], names: &[String]) -> Result<Vec<usize>, SimError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let is_aux: BTreeSet<usize> = aux.iter().copied().collect();
    let mut mark = vec![Mark::New; names.len()];
    let mut order = Vec::with_capacity(aux.len());
    let mut path: Vec<usize> = Vec::new();

    fn visit(
        n: usize,
        is_aux: &BTreeSet<usize>,
        deps: &[Vec<usize>],
        names: &[String],
        mark: &mut [Mark],
        path: &mut Vec<usize>,
        order: &mut Vec<usize>,
    ) -> Result<(), SimError> {
        match mark[n] {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let start = path.iter().position(|&p| p == n).unwrap();
                let cycle = path[start..].iter().map(|&i| names[i].clone()).collect();
                return Err(SimError::CyclicDependency(cycle));
            }
            Mark::New => {}
        }
        mark[n] = Mark::Active;
        path.push(n);
        for &d in &deps[n] {
            if is_aux.contains(&d) {
                visit(d, is_aux, deps, names, mark, path, order)?;
            }
        }
        path.pop();
        mark[n] = Mark::Done;
        order.push(n);
        Ok(())
    }

    for &a in aux {
        visit(a, &is_aux, deps, names, &mut mark, &mut path, &mut order)?;
    }
    Ok(order)
}

/// Compile a model into a dependency-ordered evaluation plan.
pub fn compile<S: Scalar>(spec: &ModelSpec) -> Result<CompiledModel<S>, SimError> {
    let control = spec.resolve_control().map_err(SimError::InvalidControl)?;
    control.validate().map_err(SimError::InvalidControl)?;

    let defs: Vec<_> = spec.variables.iter().filter(|v| v.kind != VarKind::Control).collect();
    let names: Vec<String> = defs.iter().map(|v| v.name.clone()).collect();
    let kinds: Vec<VarKind> = defs.iter().map(|v| v.kind).collect();
    let mut index = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.clone(), i).is_some() {
            return Err(SimError::DuplicateName(n.clone()));
        }
    }
    let resolver = Resolver { index: &index };

    let mut constants = Vec::new();
    let mut stocks = Vec::new();
    let mut lowered_aux: HashMap<usize, CExpr<S>> = HashMap::new();
    let mut aux_slots = Vec::new();
    let mut deps = vec![Vec::new(); names.len()];
    let mut noise_sites = Vec::new();

    for (slot, def) in defs.iter().enumerate() {
        let mut ordinal = 0;
        match def.kind {
            VarKind::Constant => {
                let Expr::Number { value } = def.expr else { unreachable!("constants are literals") };
                constants.push((slot, S::lit(value)));
            }
            VarKind::Stock => {
                let (flow, initial) =
                    def.integral_parts().ok_or_else(|| SimError::MalformedIntegral(def.name.clone()))?;
                let flow = resolver.lower::<S>(&def.name, flow, &mut ordinal)?;
                let mut init_ordinal = 0;
                let initial = resolver.lower::<S>(&def.name, initial, &mut init_ordinal)?;
                let mut init_refs = Vec::new();
                initial.slots(&mut init_refs);
                if let Some(&bad) = init_refs.iter().find(|&&r| kinds[r] != VarKind::Constant) {
                    return Err(SimError::InvalidInitial { stock: def.name.clone(), reference: names[bad].clone() });
                }
                if init_ordinal > 0 {
                    return Err(SimError::InvalidInitial {
                        stock: def.name.clone(),
                        reference: "RANDOM NORMAL".into(),
                    });
                }
                flow.slots(&mut deps[slot]);
                let mut ords = Vec::new();
                flow.noise_ordinals(&mut ords);
                noise_sites.extend(ords.into_iter().map(|ordinal| NoiseSite { slot, ordinal }));
                stocks.push(StockSlot { slot, flow, initial });
            }
            VarKind::Auxiliary => {
                let e = resolver.lower::<S>(&def.name, &def.expr, &mut ordinal)?;
                e.slots(&mut deps[slot]);
                let mut ords = Vec::new();
                e.noise_ordinals(&mut ords);
                noise_sites.extend(ords.into_iter().map(|ordinal| NoiseSite { slot, ordinal }));
                lowered_aux.insert(slot, e);
                aux_slots.push(slot);
            }
            VarKind::Control => unreachable!(),
        }
        deps[slot].sort_unstable();
        deps[slot].dedup();
    }

    let order = topo_order(&aux_slots, &deps, &names)?;
    let aux = order.into_iter().map(|slot| AuxSlot { slot, expr: lowered_aux.remove(&slot).unwrap() }).collect();

    let mut ranges = Vec::new();
    let mut control_ranges = Vec::new();
    for def in &spec.variables {
        let Some(range) = def.range else { continue };
        if let Some(&slot) = index.get(&def.name) {
            ranges.push((slot, range));
        } else {
            let v = match def.name.as_str() {
                INITIAL_TIME => control.initial_time,
                FINAL_TIME => control.final_time,
                TIME_STEP => control.dt,
                _ => control.saveper,
            };
            control_ranges.push((def.name.clone(), v, range));
        }
    }

    Ok(CompiledModel {
        names,
        kinds,
        index,
        constants,
        stocks,
        aux,
        control,
        ranges,
        control_ranges,
        noise_sites,
        deps,
    })
}

impl<S: Scalar> CompiledModel<S> {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn kind(&self, name: &str) -> Option<VarKind> {
        self.slot(name).map(|s| self.kinds[s])
    }

    pub fn control(&self) -> SimControl {
        self.control
    }

    /// Same plan with a different clock.
    pub fn with_control(&self, control: SimControl) -> Result<Self, SimError> {
        control.validate().map_err(SimError::InvalidControl)?;
        let mut out = self.clone();
        out.control = control;
        Ok(out)
    }

    pub fn stock_count(&self) -> usize {
        self.stocks.len()
    }

    pub fn auxiliary_count(&self) -> usize {
        self.aux.len()
    }

    pub fn constant_count(&self) -> usize {
        self.constants.len()
    }

    pub fn stock_names(&self) -> Vec<&str> {
        self.stocks.iter().map(|s| self.names[s.slot].as_str()).collect()
    }

    /// Auxiliary names in evaluation order.
    pub fn eval_order(&self) -> Vec<&str> {
        self.aux.iter().map(|a| self.names[a.slot].as_str()).collect()
    }

    pub fn noise_sites(&self) -> Vec<(&str, u32)> {
        self.noise_sites.iter().map(|s| (self.names[s.slot].as_str(), s.ordinal)).collect()
    }

    /// Default value of a constant or initial-value expression of a stock, if literal.
    pub fn constant_value(&self, name: &str) -> Option<S> {
        let slot = self.slot(name)?;
        self.constants.iter().find(|(s, _)| *s == slot).map(|(_, v)| *v)
    }

    /// Every variable `name` transitively depends on (through stock flows too),
    /// excluding itself unless it lies on a feedback loop.
    pub fn dependency_cone(&self, name: &str) -> BTreeSet<String> {
        let Some(start) = self.slot(name) else { return BTreeSet::new() };
        let mut seen = vec![false; self.names.len()];
        let mut stack: Vec<usize> = self.deps[start].clone();
        // Stock initial values are part of the cone too.
        for s in &self.stocks {
            if s.slot == start {
                s.initial.slots(&mut stack);
            }
        }
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.deps[n].iter().copied());
            if let Some(s) = self.stocks.iter().find(|s| s.slot == n) {
                s.initial.slots(&mut stack);
            }
        }
        seen.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| self.names[i].clone()).collect()
    }

    /// Whether any RANDOM NORMAL call can influence `name`.
    pub fn is_noise_dependent(&self, name: &str) -> bool {
        let noisy: BTreeSet<&str> = self.noise_sites.iter().map(|s| self.names[s.slot].as_str()).collect();
        noisy.contains(name) || self.dependency_cone(name).iter().any(|n| noisy.contains(n.as_str()))
    }
}
