use std::collections::BTreeMap;

use proptest::prelude::*;
use sdsim_core::frs::{self, build_frs_model, FRS_SDL};
use sdsim_core::{
    check_model, compile, parse_model, parse_units, serialize, simulate, BinOp, Expr, Func, Model, ModelSpec, Range,
    RngPolicy, VarKind, VariableDef,
};

const NAMES: [&str; 12] = [
    "Alpha",
    "Beta Rate",
    "x_1",
    "Avg. Flow",
    "A & B",
    "Cost (per day)",
    "2nd Stage",
    "MAX",
    "Ratio of In/Out",
    "q",
    "Stock Level",
    "Gain",
];

const UNITS: [&str; 6] = ["Dmnl", "Day", "1/Day", "interactions/Day", "bias/(Day*interactions)", "quality*quality"];

const DOCS: [&str; 3] = ["Level of the main accumulator.", "Per-day rate, measured weekly.", "A & B combined"];

fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![(-50i32..50).prop_map(f64::from), -1e6f64..1e6, 1e-9f64..1e-3]
}

fn expr(names: Vec<String>) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::num), prop::sample::select(names).prop_map(|n| Expr::var(&n))];
    leaf.prop_recursive(4, 24, 5, |inner| {
        prop_oneof![
            4 => (prop::sample::select(BinOp::ALL.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            1 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::max(a, b)),
            1 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::min(a, b)),
            1 => prop::collection::vec(inner, 5)
                .prop_map(|a| Expr::call(Func::RandomNormal, a)),
        ]
    })
}

fn range() -> impl Strategy<Value = Option<Range>> {
    let bound = prop::option::of(prop_oneof![Just(0.0), Just(0.5), Just(100.0), Just(-1.0)]);
    prop::option::of((bound.clone(), bound).prop_map(|(lo, hi)| Range { lo, hi }))
}

fn model() -> impl Strategy<Value = ModelSpec> {
    prop::sample::subsequence(NAMES.to_vec(), 1..=NAMES.len())
        .prop_flat_map(|names| {
            let names: Vec<String> = names.into_iter().map(String::from).collect();
            let n = names.len();
            let def = (
                expr(names.clone()),
                any::<bool>(),
                expr(names.clone()),
                prop::sample::select(UNITS.to_vec()),
                range(),
                prop::option::of(prop::sample::select(DOCS.to_vec())),
            );
            (Just(names), prop::collection::vec(def, n))
        })
        .prop_map(|(names, defs)| {
            let variables = names
                .iter()
                .zip(defs)
                .map(|(name, (e, stock, init, units, range, doc))| {
                    let e = if stock { Expr::integ(e, init) } else { e };
                    let mut v = VariableDef::new(name, e, parse_units(units).unwrap());
                    v.range = range;
                    v.doc = doc.map(String::from);
                    v
                })
                .collect();
            ModelSpec { variables, ..ModelSpec::default() }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_parse_round_trip(spec in model()) {
        let text = serialize(&spec);
        let parsed = parse_model(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&parsed.spec.variables, &spec.variables, "{}", text);
        prop_assert_eq!(serialize(&parsed.spec), text);
    }
}

#[test]
fn corpus_round_trip() {
    let parsed = parse_model(FRS_SDL).unwrap();
    let text = serialize(&parsed.spec);
    let again = parse_model(&text).unwrap();
    assert_eq!(again.spec, parsed.spec);
    assert_eq!(serialize(&again.spec), text);
}

/// Every copy of `e` with exactly one binary operator replaced by another.
fn operator_mutants(e: &Expr) -> Vec<Expr> {
    match e {
        Expr::Number { .. } | Expr::Var { .. } => vec![],
        Expr::Binary { op, left, right } => {
            let mut out: Vec<Expr> = BinOp::ALL
                .iter()
                .filter(|o| *o != op)
                .map(|o| Expr::binary(*o, (**left).clone(), (**right).clone()))
                .collect();
            out.extend(operator_mutants(left).into_iter().map(|l| Expr::binary(*op, l, (**right).clone())));
            out.extend(operator_mutants(right).into_iter().map(|r| Expr::binary(*op, (**left).clone(), r)));
            out
        }
        Expr::Call { function, args } => {
            let mut out = Vec::new();
            for (i, a) in args.iter().enumerate() {
                for m in operator_mutants(a) {
                    let mut args = args.clone();
                    args[i] = m;
                    out.push(Expr::call(*function, args));
                }
            }
            out
        }
    }
}

#[test]
fn operator_mutations_are_caught_and_local() {
    let spec = build_frs_model();
    assert!(check_model(&spec).is_empty());
    let mut with_ops = 0;
    for (i, v) in spec.variables.iter().enumerate() {
        let mutants = operator_mutants(&v.expr);
        if mutants.is_empty() {
            continue;
        }
        with_ops += 1;
        let mut caught = 0;
        for m in &mutants {
            let mut mutated = spec.clone();
            mutated.variables[i].expr = m.clone();
            let found = check_model(&mutated);
            assert!(found.iter().all(|x| x.variable == v.name), "{}: {found:?}", v.name);
            caught += usize::from(!found.is_empty());
        }
        assert!(caught > 0, "no mutation of {} changes its units", v.name);
    }
    // 17 auxiliaries and 4 stock flows.
    assert_eq!(with_ops, 21);
}

fn short_model() -> Model {
    let m = compile(&build_frs_model()).unwrap();
    let mut c = m.control();
    c.final_time = 5.0;
    m.with_control(c).unwrap()
}

#[test]
fn overrides_outside_the_cone_leave_series_unchanged() {
    let m = short_model();
    let policy = RngPolicy::seeded(7);
    let base = simulate(&m, &policy, &BTreeMap::new()).unwrap();
    let constants: Vec<String> = m.names().iter().filter(|n| m.kind(n) == Some(VarKind::Constant)).cloned().collect();
    for c in &constants {
        let v = m.constant_value(c).unwrap();
        let changed = simulate(&m, &policy, &BTreeMap::from([(c.clone(), v * 1.5 + 0.25)])).unwrap();
        for (name, series) in base.iter() {
            if name == c || m.kind(name) == Some(VarKind::Control) || m.dependency_cone(name).contains(c.as_str()) {
                continue;
            }
            let other = changed.series(name).unwrap();
            assert!(
                series.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{name} changed when {c} was overridden"
            );
        }
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let m = short_model();
    for seed in [0, 1, u64::MAX] {
        let a = simulate(&m, &RngPolicy::seeded(seed), &BTreeMap::new()).unwrap();
        let b = simulate(&m, &RngPolicy::seeded(seed), &BTreeMap::new()).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}

#[test]
fn seeds_change_only_noisy_variables() {
    let m = short_model();
    let a = simulate(&m, &RngPolicy::seeded(1), &BTreeMap::new()).unwrap();
    let b = simulate(&m, &RngPolicy::seeded(2), &BTreeMap::new()).unwrap();
    for (name, x) in a.iter() {
        let same = x == b.series(name).unwrap();
        assert_eq!(same, !m.is_noise_dependent(name), "{name}");
    }
    assert!(m.is_noise_dependent(frs::AVG_QUALITY));
    assert!(!m.is_noise_dependent(frs::HCI));
}

#[test]
fn noise_off_ignores_the_seed() {
    let m = short_model();
    let off = |seed| simulate(&m, &RngPolicy { seed: Some(seed), ..RngPolicy::noise_off() }, &BTreeMap::new()).unwrap();
    assert_eq!(off(1).series, off(2).series);
}

#[test]
fn seed_constant_keys_the_noise_without_a_runner_seed() {
    let m = short_model();
    let policy = RngPolicy { seed: None, ..RngPolicy::default() };
    let a = simulate(&m, &policy, &BTreeMap::new()).unwrap();
    let b = simulate(&m, &policy, &BTreeMap::from([(frs::SEED.to_string(), 2.0)])).unwrap();
    assert_ne!(a.series(frs::AVG_QUALITY), b.series(frs::AVG_QUALITY));
    assert_eq!(a.series(frs::HCI), b.series(frs::HCI));
}

#[test]
fn debiasing_never_raises_the_bias_stock() {
    let m = short_model();
    for preset in ["base", "all-bias-x5", "dist-lognormal"] {
        let mut ov = frs::preset(preset).unwrap().overrides;
        let without = simulate(&m, &RngPolicy::seeded(4), &ov).unwrap();
        for r in [0.01, 1.0, 5.0] {
            ov.insert(frs::REBALANCING.to_string(), r);
            let with = simulate(&m, &RngPolicy::seeded(4), &ov).unwrap();
            let (a, b) =
                (with.series(frs::DISTRIBUTION_OF_BIAS).unwrap(), without.series(frs::DISTRIBUTION_OF_BIAS).unwrap());
            assert!(a.iter().zip(b).all(|(x, y)| x <= y), "{preset} R&R={r}");
        }
    }
}
