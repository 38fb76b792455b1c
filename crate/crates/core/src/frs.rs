//! Built-in fashion-recommender bias model (45 definitions, four stocks) and
//! the named parameter presets used by the experiments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ast::{Expr, ModelSpec, Range, VariableDef};
use crate::units::UnitExpr;

/// Canonical SDL source of the model, shipped as `models/frs.sdl`.
pub const FRS_SDL: &str = include_str!("../../../models/frs.sdl");

pub const DISTRIBUTION_OF_BIAS: &str = "Distribution of Bias in Data & Design";
pub const FRE: &str = "FRE";
pub const HCI: &str = "HCI";
pub const PERFORMANCE: &str = "Performance";
pub const AVG_QUALITY: &str = "Avg Quality";
pub const NEW_PROCESSING_RATE: &str = "New Processing Rate";
pub const DEBIASING: &str = "Debiasing in Research & Model Training";
pub const COEFFICIENT: &str = "Coefficient of Bias Distribution & Skewness";
pub const SKEWED_PATTERNS: &str = "Skewed Patterns in Model";
pub const QUALITY_OF_NEW: &str = "Quality of each new Recommendations";
pub const INCREASED_QUALITY: &str = "Increased Quality";
pub const REMOVED_QUALITY: &str = "Removed Quality";
pub const AVG_INTERACTIONS: &str = "Avg Interactions with Recommendations";
pub const DESIRED_INTERACTIONS: &str = "Desired Interactions";

pub const INDUCTIVE_BIAS: &str = "Inductive Bias";
pub const POPULARITY_BIAS: &str = "Popularity Bias";
pub const USER_BIAS: &str = "User Bias";
pub const ATOP: &str = "ATOP";
pub const PROPENSITY_SCORE: &str = "Propensity Score";
pub const REBALANCING: &str = "Rebalancing & Regularization";
pub const NEW_MODELING: &str = "New Modeling";
pub const SKEWNESS: &str = "Skewness";
pub const RELATIVE_BIAS: &str = "Relative Bias";
pub const SEED: &str = "Seed";

/// The four stocks, in definition order.
pub const STOCKS: [&str; 4] = [DISTRIBUTION_OF_BIAS, FRE, HCI, PERFORMANCE];

/// Skewness and relative bias per data distribution scenario.
pub const DISTRIBUTION_TABLE: [(&str, &str, f64, f64); 4] = [
    ("dist-exponential", "Exponential", 4.57, 0.07),
    ("dist-lognormal", "Log Normal", 2.81, 0.14),
    ("dist-gamma2", "Gamma with alpha = 2", 2.81, 0.19),
    ("dist-gamma4", "Gamma with alpha = 4", 2.04, 0.21),
];

fn v(name: &str) -> Expr {
    Expr::var(name)
}

fn n(value: f64) -> Expr {
    Expr::num(value)
}

fn u(pairs: &[(&str, i32)]) -> UnitExpr {
    UnitExpr::from_pairs(pairs.iter().copied())
}

fn def(name: &str, expr: Expr, units: UnitExpr) -> VariableDef {
    VariableDef::new(name, expr, units)
}

/// The model constructed in code; equal to parsing [`FRS_SDL`].
pub fn build_frs_model() -> ModelSpec {
    let dmnl = UnitExpr::dmnl;
    let day = || u(&[("Day", 1)]);
    let bias = || u(&[("bias", 1)]);
    let per_day = || u(&[("Day", -1)]);
    let recs = || u(&[("recommendations", 1)]);
    let interactions = || u(&[("interactions", 1)]);
    let quality = || u(&[("quality", 1)]);
    let quality_per_rec = || u(&[("quality", 1), ("recommendations", -1)]);
    let bias_rate = || u(&[("bias", 1), ("interactions", -1), ("Day", -1)]);
    let open_nonneg = Range { lo: Some(0.0), hi: None };

    let variables = vec![
        def("Accuracy", n(1.0), dmnl()),
        def(ATOP, n(1.0), bias()),
        def("Avg Interaction Life", n(6760.0), day()),
        def(AVG_INTERACTIONS, v(FRE) / v(HCI), u(&[("recommendations", 1), ("interactions", -1)])),
        def(AVG_QUALITY, v(PERFORMANCE) / v(FRE), quality_per_rec()),
        def("Avg. new recommendations", n(26000.0), recs()),
        def("Avg. New Users per. Items", n(1.74), per_day()),
        def(COEFFICIENT, v(SKEWNESS) / v(RELATIVE_BIAS), u(&[("quality", 1), ("bias", -1)])),
        def(DEBIASING, v(REBALANCING) / (v(NEW_MODELING) * v("Time to Debias")), bias_rate()),
        def(DESIRED_INTERACTIONS, n(26000.0), interactions()),
        def(
            DISTRIBUTION_OF_BIAS,
            Expr::integ(v(NEW_PROCESSING_RATE) - v(DEBIASING), n(1.0)),
            u(&[("bias", 1), ("interactions", -1)]),
        ),
        def("Effect of Interaction on New Recommendations", v(HCI) * v("Median Conversion Rate"), per_day()),
        def(
            "Effect of Rating on Interactions with Recommendations",
            v("Effects of User Bias on Rating") / v(AVG_INTERACTIONS),
            u(&[("interactions", 1), ("recommendations", -1), ("bias", -1)]),
        ),
        def("Effects of Debiasing on Skeweness", v(ATOP) + v(PROPENSITY_SCORE), bias()),
        def("Effects of User Bias on Rating", n(1.0) / v(USER_BIAS), u(&[("bias", -1)])),
        def("FINAL TIME", n(100.0), day()).with_doc("The final time for the simulation."),
        def(FRE, Expr::integ(v("Increased Recommendations") - v("Removed Recommendations"), n(5.0)), recs()),
        def(
            HCI,
            Expr::integ(v("Interaction Increased Rate") - v("Interaction Decrease Rate"), n(10.0)),
            interactions(),
        ),
        def(INCREASED_QUALITY, v(QUALITY_OF_NEW) * v("Increased Recommendations"), u(&[("quality", 1), ("Day", -1)])),
        def(
            "Increased Recommendations",
            v("Effect of Interaction on New Recommendations") * v("Avg. new recommendations"),
            u(&[("recommendations", 1), ("Day", -1)]),
        ),
        def(INDUCTIVE_BIAS, n(1.0), bias()),
        def("INITIAL TIME", n(0.0), day()).with_doc("The initial time for the simulation."),
        def("Interaction Decrease Rate", v(HCI) / v("Avg Interaction Life"), u(&[("interactions", 1), ("Day", -1)])),
        def(
            "Interaction Increased Rate",
            Expr::max(
                n(0.0),
                (v(DESIRED_INTERACTIONS) - v(HCI)) / v("Time to Adjust Interactions") + v("Interaction Decrease Rate"),
            ),
            u(&[("interactions", 1), ("Day", -1)]),
        ),
        def("Label observation Randomness", n(1.0), dmnl()),
        def("Lifecycle", n(180.0), day()),
        def("Median Conversion Rate", n(2.4), u(&[("Day", -1), ("interactions", -1)])),
        def(NEW_MODELING, n(1.0), interactions()),
        def(
            NEW_PROCESSING_RATE,
            (v(INDUCTIVE_BIAS) + v(POPULARITY_BIAS)) * v("Avg. New Users per. Items") / v(HCI)
                * v("Label observation Randomness"),
            bias_rate(),
        ),
        def(PERFORMANCE, Expr::integ(v(INCREASED_QUALITY) - v(REMOVED_QUALITY), n(1.0)), quality()),
        def(POPULARITY_BIAS, n(1.0), bias()),
        def(PROPENSITY_SCORE, n(1.0), bias()),
        def(
            QUALITY_OF_NEW,
            Expr::random_normal(n(1.0), n(5.0), v("Accuracy") * v(AVG_QUALITY), v(SKEWED_PATTERNS), v(SEED)),
            quality_per_rec(),
        ),
        def(REBALANCING, n(0.0), bias()),
        def(RELATIVE_BIAS, n(1.0), bias()),
        def(REMOVED_QUALITY, v(AVG_QUALITY) * v("Removed Recommendations"), u(&[("quality", 1), ("Day", -1)])),
        def(
            "Removed Recommendations",
            v(FRE) / v("Lifecycle") + v(AVG_INTERACTIONS) * v("Interaction Decrease Rate"),
            u(&[("recommendations", 1), ("Day", -1)]),
        ),
        def("SAVEPER", v("TIME STEP"), day())
            .with_range(open_nonneg)
            .with_doc("The frequency with which output is stored."),
        def(SEED, n(1.0), dmnl()),
        def(
            SKEWED_PATTERNS,
            (v("Effects of Debiasing on Skeweness") * v("Effect of Rating on Interactions with Recommendations"))
                * (v(DISTRIBUTION_OF_BIAS) * v(COEFFICIENT)),
            quality_per_rec(),
        ),
        def(SKEWNESS, n(1.0), quality()),
        def("TIME STEP", n(0.0078125), day()).with_range(open_nonneg).with_doc("The time step for the simulation."),
        def("Time to Adjust Interactions", n(6760.0), day()),
        def("Time to Debias", n(1.0), day()),
        def(USER_BIAS, n(1.0), bias()),
    ];
    let mut spec = ModelSpec { variables, control: Default::default() };
    spec.control = spec.resolve_control().expect("built-in control entries are literal");
    spec
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown preset '{0}'")]
pub struct UnknownPreset(pub String);

/// A named set of constant overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub overrides: BTreeMap<String, f64>,
    pub description: String,
}

pub const PRESET_NAMES: [&str; 10] = [
    "base",
    "inductive-x2",
    "user-x2",
    "all-bias-x5",
    "intervention-research",
    "intervention-full",
    "dist-exponential",
    "dist-lognormal",
    "dist-gamma2",
    "dist-gamma4",
];

fn overrides(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn preset(name: &str) -> Result<Preset, UnknownPreset> {
    let all_x5 = [(INDUCTIVE_BIAS, 5.0), (POPULARITY_BIAS, 5.0), (USER_BIAS, 5.0)];
    let research = [all_x5.as_slice(), &[(REBALANCING, 5.0)]].concat();
    let full = [research.as_slice(), &[(ATOP, 5.0), (PROPENSITY_SCORE, 5.0)]].concat();
    let (ov, description) = match name {
        "base" => (overrides(&[]), "All bias constants at 1, no intervention".to_string()),
        "inductive-x2" => (overrides(&[(INDUCTIVE_BIAS, 2.0)]), "Inductive bias doubled".to_string()),
        "user-x2" => (overrides(&[(USER_BIAS, 2.0)]), "User bias doubled".to_string()),
        "all-bias-x5" => {
            (overrides(&all_x5), "Inductive, popularity and user bias at five times the base value".to_string())
        }
        "intervention-research" => (
            overrides(&research),
            "all-bias-x5 plus rebalancing & regularization at 5 (engineer-side debiasing)".to_string(),
        ),
        "intervention-full" => {
            (overrides(&full), "intervention-research plus ATOP and propensity scores at 5".to_string())
        }
        _ => {
            let (_, label, skew, rb) =
                DISTRIBUTION_TABLE.iter().find(|(n, ..)| *n == name).ok_or_else(|| UnknownPreset(name.to_string()))?;
            (
                overrides(&[(SKEWNESS, *skew), (RELATIVE_BIAS, *rb)]),
                format!("{label} data distribution: skewness {skew}, relative bias {rb}"),
            )
        }
    };
    Ok(Preset { name: name.to_string(), overrides: ov, description })
}

pub fn all_presets() -> Vec<Preset> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("listed presets exist")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::VarKind;
    use crate::sdl::parse_model;
    use crate::sim::{compile, RngPolicy, Simulation};
    use crate::unitcheck::check_model;

    const APPENDIX_CONSTANTS: [&str; 20] = [
        "Accuracy",
        "ATOP",
        "Avg Interaction Life",
        "Avg. new recommendations",
        "Avg. New Users per. Items",
        "Desired Interactions",
        "Inductive Bias",
        "Label observation Randomness",
        "Lifecycle",
        "Median Conversion Rate",
        "New Modeling",
        "Popularity Bias",
        "Propensity Score",
        "Rebalancing & Regularization",
        "Relative Bias",
        "Seed",
        "Skewness",
        "Time to Adjust Interactions",
        "Time to Debias",
        "User Bias",
    ];

    #[test]
    fn corpus_matches_builder() {
        let parsed = parse_model(FRS_SDL).unwrap();
        assert!(parsed.diagnostics.is_empty());
        assert_eq!(parsed.spec, build_frs_model());
        assert_eq!(parsed.entries.len(), 45);
        let idx: Vec<u32> = parsed.entries.iter().map(|e| e.index.unwrap()).collect();
        assert_eq!(idx, (1..=45).collect::<Vec<_>>());
    }

    #[test]
    fn kind_breakdown() {
        let spec = build_frs_model();
        assert_eq!(spec.variables.len(), 45);
        assert_eq!(spec.count(VarKind::Stock), 4);
        assert_eq!(spec.count(VarKind::Control), 4);
        let constants: Vec<&str> =
            spec.variables.iter().filter(|v| v.kind == VarKind::Constant).map(|v| v.name.as_str()).collect();
        assert_eq!(constants, APPENDIX_CONSTANTS);
        assert_eq!(spec.count(VarKind::Auxiliary), 17);
        assert_eq!(
            spec.control,
            crate::ast::SimControl { initial_time: 0.0, final_time: 100.0, dt: 0.0078125, saveper: 0.0078125 }
        );
    }

    #[test]
    fn compiles_with_four_stocks() {
        let m = compile::<f64>(&build_frs_model()).unwrap();
        assert_eq!(m.stock_names(), STOCKS.to_vec());
        assert_eq!((m.constant_count(), m.auxiliary_count()), (20, 17));
    }

    #[test]
    fn dimensionally_consistent() {
        assert_eq!(check_model(&build_frs_model()), vec![]);
    }

    #[test]
    fn initial_auxiliaries() {
        let m = compile::<f64>(&build_frs_model()).unwrap();
        let mut sim = Simulation::new(&m, RngPolicy::noise_off(), &BTreeMap::new()).unwrap();
        sim.evaluate().unwrap();
        assert_eq!(sim.value(AVG_INTERACTIONS), Some(0.5));
        assert_eq!(sim.value(AVG_QUALITY), Some(0.2));
        assert_eq!(sim.value(SKEWED_PATTERNS), Some(4.0));
        assert!((sim.value(NEW_PROCESSING_RATE).unwrap() - 0.348).abs() < 1e-15);
        assert_eq!(sim.value(DEBIASING), Some(0.0));
    }

    #[test]
    fn presets() {
        assert_eq!(preset("base").unwrap().overrides, BTreeMap::new());
        assert_eq!(
            preset("dist-exponential").unwrap().overrides,
            overrides(&[("Skewness", 4.57), ("Relative Bias", 0.07)])
        );
        assert_eq!(preset("dist-gamma4").unwrap().overrides, overrides(&[("Skewness", 2.04), ("Relative Bias", 0.21)]));
        assert_eq!(
            preset("intervention-full").unwrap().overrides,
            overrides(&[
                ("Inductive Bias", 5.0),
                ("Popularity Bias", 5.0),
                ("User Bias", 5.0),
                ("Rebalancing & Regularization", 5.0),
                ("ATOP", 5.0),
                ("Propensity Score", 5.0),
            ])
        );
        assert_eq!(preset("nope").unwrap_err(), UnknownPreset("nope".into()));
    }

    #[test]
    fn preset_overrides_exist() {
        let m = compile::<f64>(&build_frs_model()).unwrap();
        for p in all_presets() {
            for k in p.overrides.keys() {
                assert_eq!(m.kind(k), Some(VarKind::Constant), "{} in {}", k, p.name);
            }
        }
    }

    #[test]
    fn coefficient_per_distribution() {
        let expected = [65.286, 20.071, 14.789, 9.714];
        let m = compile::<f64>(&build_frs_model()).unwrap();
        for ((name, _, skew, rb), want) in DISTRIBUTION_TABLE.iter().zip(expected) {
            let mut sim = Simulation::new(&m, RngPolicy::noise_off(), &preset(name).unwrap().overrides).unwrap();
            sim.evaluate().unwrap();
            let c = sim.value(COEFFICIENT).unwrap();
            assert!((c - skew / rb).abs() < 1e-9, "{name}");
            assert!((c - want).abs() < 5e-4, "{name}: {c}");
        }
    }
}
