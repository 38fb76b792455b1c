//! Scenario ensembles over the FRS model: the four canned experiments and
//! one-parameter sweeps, with JSON and Markdown reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::ast::VarKind;
use crate::frs::{self, UnknownPreset};
use crate::sim::{compile, simulate, CompiledModel, NoiseMode, RngPolicy, RunResult, SimError};
use crate::stats::{self, Distribution, Reducer, SampleSummary, StatsError};

/// Sample size for the sampler-skewness section of the distributions report.
pub const SAMPLER_N: usize = 1_000_000;
/// Lognormal shape used by the sampler section.
pub const LOGNORMAL_SIGMA: f64 = 0.5;
/// Fraction of seeds a directional claim must hold in to count as supported.
pub const CLAIM_THRESHOLD: f64 = 0.75;

pub fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

/// Variables recorded by every experiment.
pub const BASE_TRACKED: [&str; 5] = [frs::DISTRIBUTION_OF_BIAS, frs::FRE, frs::HCI, frs::PERFORMANCE, frs::AVG_QUALITY];

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("experiment needs at least one seed")]
    NoSeeds,
    #[error("experiment needs at least one scenario")]
    NoScenarios,
    #[error("tracked variable '{0}' is not in the model")]
    UnknownVariable(String),
    #[error("unknown override '{0}': not a constant or stock of the model")]
    UnknownOverride(String),
    #[error(transparent)]
    Preset(#[from] UnknownPreset),
    #[error("scenario {scenario}, seed {seed}: {source}")]
    Run { scenario: String, seed: u64, source: SimError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub label: String,
    pub overrides: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn from_preset(name: &str) -> Result<Scenario, UnknownPreset> {
        let p = frs::preset(name)?;
        Ok(Scenario { label: p.name, overrides: p.overrides })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
    pub reducer: Reducer,
    /// Variable whose reduced value is compared across scenarios.
    pub metric: String,
    pub tracked: Vec<String>,
    pub noise: NoiseMode,
}

impl ExperimentSpec {
    pub fn new(name: &str, scenarios: Vec<Scenario>, seeds: &[u64]) -> ExperimentSpec {
        ExperimentSpec {
            name: name.to_string(),
            scenarios,
            seeds: seeds.to_vec(),
            reducer: Reducer::TimeMean,
            metric: frs::AVG_QUALITY.to_string(),
            tracked: BASE_TRACKED.iter().map(|s| s.to_string()).collect(),
            noise: NoiseMode::Stochastic,
        }
    }

    pub fn track(mut self, name: &str) -> Self {
        if !self.tracked.iter().any(|t| t == name) {
            self.tracked.push(name.to_string());
        }
        self
    }

    fn validate(&self, model: &CompiledModel<f64>) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::NoSeeds);
        }
        if self.scenarios.is_empty() {
            return Err(ExperimentError::NoScenarios);
        }
        for name in self.tracked.iter().chain(std::iter::once(&self.metric)) {
            if model.slot(name).is_none() {
                return Err(ExperimentError::UnknownVariable(name.clone()));
            }
        }
        for s in &self.scenarios {
            for name in s.overrides.keys() {
                if !matches!(model.kind(name), Some(VarKind::Constant | VarKind::Stock)) {
                    return Err(ExperimentError::UnknownOverride(name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// One scenario × seed run. The series are kept in memory for CSV and chart
/// output but are not part of the serialized report.
#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub time_mean: f64,
    pub final_value: f64,
    /// `time_mean` or `final_value`, per the spec's reducer.
    pub metric: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub result: RunResult<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub label: String,
    pub overrides: BTreeMap<String, f64>,
    pub runs: Vec<SeedRun>,
    pub summary: SampleSummary,
}

impl ScenarioReport {
    pub fn metrics(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.metric).collect()
    }

    pub fn run(&self, seed: u64) -> Option<&SeedRun> {
        self.runs.iter().find(|r| r.seed == seed)
    }
}

/// Per-seed comparison of scenario `b` against scenario `a` on the reduced metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// mean(b) - mean(a)
    pub mean_difference: f64,
    pub b_higher: usize,
    pub b_lower: usize,
    pub ties: usize,
    pub sign_consistent: bool,
}

/// A property the runner verifies mechanically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Seed-level support for a directional statement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Claim {
    pub statement: String,
    pub holds: usize,
    pub total: usize,
    pub threshold: f64,
    pub supported: bool,
}

impl Claim {
    fn new(statement: &str, holds: usize, total: usize) -> Claim {
        Claim {
            statement: statement.to_string(),
            holds,
            total,
            threshold: CLAIM_THRESHOLD,
            supported: total > 0 && holds as f64 >= CLAIM_THRESHOLD * total as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{}", fmt_num(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Cell {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Cell {
        Cell::Int(i as i64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(title: &str, columns: &[&str]) -> Table {
        Table { title: title.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub metric: String,
    pub reducer: Reducer,
    pub noise: NoiseMode,
    pub seeds: Vec<u64>,
    pub tracked: Vec<String>,
    pub scenarios: Vec<ScenarioReport>,
    pub comparisons: Vec<Comparison>,
    pub checks: Vec<Check>,
    pub claims: Vec<Claim>,
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn scenario(&self, label: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.label == label)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn claim(&self, statement: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.statement == statement)
    }

    pub fn table(&self, title: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.title == title)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Experiment: {}\n", self.name);
        let reducer = match self.reducer {
            Reducer::TimeMean => "time-mean",
            Reducer::FinalValue => "final value",
        };
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "Metric: {reducer} of {}. Seeds: {}.\n", self.metric, seeds.join(", "));

        let mut t = Table::new("Scenarios", &["scenario", "overrides", "n", "mean", "sd", "skewness"]);
        for sc in &self.scenarios {
            let ov: Vec<String> = sc.overrides.iter().map(|(k, v)| format!("{k}={}", fmt_num(*v))).collect();
            t.rows.push(vec![
                sc.label.as_str().into(),
                if ov.is_empty() { "-".into() } else { ov.join("; ").into() },
                sc.summary.n.into(),
                sc.summary.mean.into(),
                sc.summary.sd.into(),
                sc.summary.skewness.map_or(Cell::from("-"), Cell::from),
            ]);
        }
        render_table(&mut s, &t);

        if !self.comparisons.is_empty() {
            let mut t = Table::new(
                "Comparisons (b - a)",
                &["a", "b", "mean difference", "b higher", "b lower", "ties", "sign consistent"],
            );
            for c in &self.comparisons {
                t.rows.push(vec![
                    c.a.as_str().into(),
                    c.b.as_str().into(),
                    c.mean_difference.into(),
                    c.b_higher.into(),
                    c.b_lower.into(),
                    c.ties.into(),
                    if c.sign_consistent { "yes" } else { "no" }.into(),
                ]);
            }
            render_table(&mut s, &t);
        }

        if !self.checks.is_empty() {
            let _ = writeln!(s, "## Checks\n");
            for c in &self.checks {
                let _ = writeln!(s, "- [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            s.push('\n');
        }

        if !self.claims.is_empty() {
            let _ = writeln!(s, "## Directional claims\n");
            for c in &self.claims {
                let verdict = if c.supported { "supported" } else { "not supported" };
                let _ = writeln!(
                    s,
                    "- {}: holds in {}/{} seeds (threshold {}), {verdict}",
                    c.statement,
                    c.holds,
                    c.total,
                    fmt_num(c.threshold)
                );
            }
            s.push('\n');
        }

        for t in &self.tables {
            render_table(&mut s, t);
        }
        s
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() && x != 0.0 && (x.abs() >= 1e6 || x.abs() < 1e-4) {
        format!("{x:.6e}")
    } else if x.is_finite() {
        let r = format!("{x:.6}");
        let r = r.trim_end_matches('0').trim_end_matches('.');
        if r == "-0" {
            "0".to_string()
        } else {
            r.to_string()
        }
    } else {
        x.to_string()
    }
}

fn render_table(s: &mut String, t: &Table) {
    let _ = writeln!(s, "## {}\n", t.title);
    let _ = writeln!(s, "| {} |", t.columns.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(t.columns.len()));
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|c| c.to_string().replace('|', "\\|")).collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    s.push('\n');
}

fn frs_model() -> CompiledModel<f64> {
    compile(&frs::build_frs_model()).expect("built-in model compiles")
}

/// Run every scenario × seed pair, in parallel, and assemble the base report
/// (scenario summaries and pairwise comparisons). Results are merged by
/// (scenario index, seed index) so the output does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    run_on(&frs_model(), spec)
}

pub fn run_on(model: &CompiledModel<f64>, spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    spec.validate(model)?;
    let jobs: Vec<(usize, u64)> =
        (0..spec.scenarios.len()).flat_map(|i| spec.seeds.iter().map(move |&s| (i, s))).collect();
    let keep: Vec<&str> = spec.tracked.iter().map(String::as_str).collect();
    let runs: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let sc = &spec.scenarios[i];
            let policy = RngPolicy { seed: Some(seed), mode: spec.noise, ..RngPolicy::default() };
            let mut result = simulate(model, &policy, &sc.overrides).map_err(|source| ExperimentError::Run {
                scenario: sc.label.clone(),
                seed,
                source,
            })?;
            let series = result.series(&spec.metric).expect("validated");
            let time_mean = Reducer::TimeMean.reduce(series);
            let final_value = Reducer::FinalValue.reduce(series);
            let metric = spec.reducer.reduce(series);
            result.retain(&keep);
            Ok(SeedRun { seed, time_mean, final_value, metric, warnings: result.metadata.warnings.clone(), result })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut runs = runs.into_iter();
    let mut scenarios = Vec::with_capacity(spec.scenarios.len());
    for sc in &spec.scenarios {
        let mine: Vec<SeedRun> = runs.by_ref().take(spec.seeds.len()).collect();
        let metrics: Vec<f64> = mine.iter().map(|r| r.metric).collect();
        scenarios.push(ScenarioReport {
            label: sc.label.clone(),
            overrides: sc.overrides.clone(),
            summary: stats::summarize_values(&metrics)?,
            runs: mine,
        });
    }

    let mut comparisons = Vec::new();
    for i in 0..scenarios.len() {
        for j in i + 1..scenarios.len() {
            comparisons.push(compare(&scenarios[i], &scenarios[j]));
        }
    }

    Ok(ExperimentReport {
        name: spec.name.clone(),
        metric: spec.metric.clone(),
        reducer: spec.reducer,
        noise: spec.noise,
        seeds: spec.seeds.clone(),
        tracked: spec.tracked.clone(),
        scenarios,
        comparisons,
        checks: vec![],
        claims: vec![],
        tables: vec![],
    })
}

fn compare(a: &ScenarioReport, b: &ScenarioReport) -> Comparison {
    let (mut hi, mut lo, mut tie) = (0, 0, 0);
    for (ra, rb) in a.runs.iter().zip(&b.runs) {
        match rb.metric.partial_cmp(&ra.metric) {
            Some(std::cmp::Ordering::Greater) => hi += 1,
            Some(std::cmp::Ordering::Less) => lo += 1,
            _ => tie += 1,
        }
    }
    Comparison {
        a: a.label.clone(),
        b: b.label.clone(),
        mean_difference: b.summary.mean - a.summary.mean,
        b_higher: hi,
        b_lower: lo,
        ties: tie,
        sign_consistent: tie == 0 && (hi == 0 || lo == 0),
    }
}

fn preset_scenarios(names: &[&str]) -> Result<Vec<Scenario>, ExperimentError> {
    Ok(names.iter().map(|n| Scenario::from_preset(n)).collect::<Result<_, _>>()?)
}

fn series<'a>(run: &'a SeedRun, name: &str) -> &'a [f64] {
    run.result.series(name).unwrap_or(&[])
}

fn strictly_increasing(xs: &[f64]) -> Option<usize> {
    xs.windows(2).position(|w| w[1] <= w[0])
}

fn check(name: &str, failures: Vec<String>, ok_detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            ok_detail
        } else {
            let more = if failures.len() > 3 { format!(" (+{} more)", failures.len() - 3) } else { String::new() };
            format!("{}{more}", failures[..failures.len().min(3)].join("; "))
        },
    }
}

/// Stock trajectory checks shared by the base run and its replays.
fn base_checks(report: &ExperimentReport, label: &str) -> Vec<Check> {
    let Some(sc) = report.scenario(label) else { return vec![] };
    let model = frs_model();
    let mut dob = Vec::new();
    let mut dob_inc = Vec::new();
    let mut fre = Vec::new();
    let mut hci = Vec::new();
    let mut bound = Vec::new();
    for run in &sc.runs {
        let d = series(run, frs::DISTRIBUTION_OF_BIAS);
        if let Some(k) = strictly_increasing(d) {
            dob.push(format!("seed {}: not increasing at save point {}", run.seed, k + 1));
        }
        let inc: Vec<f64> = d.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(k) = inc.windows(2).position(|w| w[1] >= w[0]) {
            dob_inc.push(format!("seed {}: increment {} >= increment {}", run.seed, k + 2, k + 1));
        }
        if let Some(k) = strictly_increasing(series(run, frs::FRE)) {
            fre.push(format!("seed {}: not increasing at save point {}", run.seed, k + 1));
        }
        let h = series(run, frs::HCI);
        if let Some(k) = strictly_increasing(h) {
            hci.push(format!("seed {}: not increasing at save point {}", run.seed, k + 1));
        }
        if let Some(v) = h.iter().find(|&&v| v >= 26000.0) {
            bound.push(format!("seed {}: HCI reached {v}", run.seed));
        }
    }
    let n = sc.runs.len();
    let mut out = vec![
        check("bias stock strictly increasing", dob, format!("{n} seeds")),
        check("bias stock increments strictly decreasing after step 1", dob_inc, format!("{n} seeds")),
        check("FRE strictly increasing", fre, format!("{n} seeds")),
        check("HCI strictly increasing", hci, format!("{n} seeds")),
        check("HCI below 26000", bound, format!("{n} seeds")),
    ];

    let mut same = Vec::new();
    let mut names = Vec::new();
    for stock in frs::STOCKS {
        if model.is_noise_dependent(stock) || !report.tracked.iter().any(|t| t == stock) {
            continue;
        }
        names.push(stock);
        let first = series(&sc.runs[0], stock);
        for run in &sc.runs[1..] {
            if !bitwise_eq(series(run, stock), first) {
                same.push(format!("{stock} differs between seed {} and seed {}", sc.runs[0].seed, run.seed));
            }
        }
    }
    out.push(check(
        "noise-free stocks identical across seeds",
        same,
        format!("{} identical over {n} seeds", names.join(", ")),
    ));
    out
}

pub fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// All bias constants at 1, no intervention.
pub fn run_base(seeds: &[u64]) -> Result<ExperimentReport, ExperimentError> {
    let spec = ExperimentSpec::new("base", preset_scenarios(&["base"])?, seeds);
    let mut report = run_experiment(&spec)?;
    report.checks = base_checks(&report, "base");
    Ok(report)
}

/// Fraction-of-seeds statistic: how often scenario `a` has a lower metric than `b`.
fn lower_count(report: &ExperimentReport, a: &str, b: &str) -> (usize, usize) {
    let (Some(sa), Some(sb)) = (report.scenario(a), report.scenario(b)) else { return (0, 0) };
    let holds = sa.runs.iter().zip(&sb.runs).filter(|(x, y)| x.metric < y.metric).count();
    (holds, sa.runs.len())
}

fn per_seed_table(report: &ExperimentReport, title: &str, labels: &[&str]) -> Table {
    let mut cols = vec!["seed"];
    cols.extend_from_slice(labels);
    let mut t = Table::new(title, &cols);
    for (i, seed) in report.seeds.iter().enumerate() {
        let mut row: Vec<Cell> = vec![Cell::Int(*seed as i64)];
        for l in labels {
            row.push(report.scenario(l).map_or(Cell::from("-"), |s| s.runs[i].metric.into()));
        }
        t.rows.push(row);
    }
    t
}

pub const CLAIM_INDUCTIVE: &str = "inductive-x2 yields lower average quality than user-x2";

/// Base, each of inductive and user bias doubled, and all three biases at five times.
pub fn run_activation(seeds: &[u64]) -> Result<ExperimentReport, ExperimentError> {
    let labels = ["base", "inductive-x2", "user-x2", "all-bias-x5"];
    let spec = ExperimentSpec::new("activation", preset_scenarios(&labels)?, seeds).track(frs::NEW_PROCESSING_RATE);
    let mut report = run_experiment(&spec)?;

    let base = report.scenario("base").expect("present");
    let x5 = report.scenario("all-bias-x5").expect("present");
    let mut inflow = Vec::new();
    let mut dominance = Vec::new();
    let mut strict = Vec::new();
    for (rb, rx) in base.runs.iter().zip(&x5.runs) {
        let b0 = series(rb, frs::NEW_PROCESSING_RATE)[0];
        let x0 = series(rx, frs::NEW_PROCESSING_RATE)[0];
        if (x0 - 5.0 * b0).abs() > 1e-12 * x0.abs() {
            inflow.push(format!("seed {}: {x0} vs 5 x {b0}", rb.seed));
        }
        let (db, dx) = (series(rb, frs::DISTRIBUTION_OF_BIAS), series(rx, frs::DISTRIBUTION_OF_BIAS));
        if let Some(k) = db.iter().zip(dx).position(|(b, x)| x < b) {
            dominance.push(format!("seed {}: below base at save point {k}", rb.seed));
        }
        if let Some(k) = db.iter().zip(dx).skip(1).position(|(b, x)| x <= b) {
            strict.push(format!("seed {}: not above base at save point {}", rb.seed, k + 1));
        }
    }
    let b0 = series(&base.runs[0], frs::NEW_PROCESSING_RATE)[0];
    let x0 = series(&x5.runs[0], frs::NEW_PROCESSING_RATE)[0];
    report.checks = vec![
        check("all-bias-x5 bias inflow is 5x base at t=0", inflow, format!("{} = 5 x {}", fmt_num(x0), fmt_num(b0))),
        check("all-bias-x5 bias stock >= base at every saved time", dominance, "all seeds".into()),
        check("all-bias-x5 bias stock > base after t=0", strict, "all seeds".into()),
    ];

    let (holds, total) = lower_count(&report, "inductive-x2", "user-x2");
    report.claims.push(Claim::new(CLAIM_INDUCTIVE, holds, total));
    let mut t = per_seed_table(&report, "Per-seed metric", &labels);
    t.columns.push("inductive-x2 < user-x2".into());
    for (row, i) in t.rows.iter_mut().zip(0..) {
        let a = report.scenario("inductive-x2").expect("present").runs[i].metric;
        let b = report.scenario("user-x2").expect("present").runs[i].metric;
        row.push(if a < b { "yes" } else { "no" }.into());
    }
    report.tables.push(t);
    Ok(report)
}

pub const CLAIM_LOGNORMAL: &str = "dist-lognormal has the highest average quality";
pub const CLAIM_GAMMA: &str = "dist-gamma2 yields lower average quality than dist-gamma4";

/// The four data-distribution presets, plus a sampler section comparing the
/// presets' skewness parameters with empirical skewness of the named families.
pub fn run_distributions(seeds: &[u64]) -> Result<ExperimentReport, ExperimentError> {
    let labels: Vec<&str> = frs::DISTRIBUTION_TABLE.iter().map(|r| r.0).collect();
    let spec = ExperimentSpec::new("distributions", preset_scenarios(&labels)?, seeds).track(frs::COEFFICIENT);
    let mut report = run_experiment(&spec)?;

    let mut coeff = Table::new(
        "Bias distribution parameters",
        &["scenario", "distribution", "skewness", "relative bias", "coefficient"],
    );
    let mut bad = Vec::new();
    for (name, label, skew, rb) in frs::DISTRIBUTION_TABLE {
        let sc = report.scenario(name).expect("present");
        let c = series(&sc.runs[0], frs::COEFFICIENT)[0];
        let q = skew / rb;
        if (c - q).abs() > 1e-9 {
            bad.push(format!("{name}: {c} vs {q}"));
        }
        coeff.rows.push(vec![name.into(), label.into(), skew.into(), rb.into(), c.into()]);
    }
    report.checks.push(check(
        "coefficient equals skewness / relative bias",
        bad,
        "all four presets within 1e-9".into(),
    ));
    report.tables.push(coeff);

    let metric_table = per_seed_table(&report, "Per-seed metric", &labels);
    let mut ranks = Table::new("Per-seed ranking (1 = highest)", &[&["seed"], labels.as_slice()].concat());
    let (mut lognormal_top, mut gamma_order) = (0, 0);
    for (i, seed) in report.seeds.iter().enumerate() {
        let vals: Vec<f64> = labels.iter().map(|l| report.scenario(l).expect("present").runs[i].metric).collect();
        let mut row = vec![Cell::Int(*seed as i64)];
        for v in &vals {
            row.push((1 + vals.iter().filter(|w| *w > v).count()).into());
        }
        ranks.rows.push(row);
        if vals.iter().all(|w| *w <= vals[1]) && vals.iter().filter(|w| **w == vals[1]).count() == 1 {
            lognormal_top += 1;
        }
        if vals[2] < vals[3] {
            gamma_order += 1;
        }
    }
    let n = report.seeds.len();
    report.claims.push(Claim::new(CLAIM_LOGNORMAL, lognormal_top, n));
    report.claims.push(Claim::new(CLAIM_GAMMA, gamma_order, n));
    report.tables.push(metric_table);
    report.tables.push(ranks);
    report.tables.push(sampler_table(SAMPLER_N, 1)?);
    Ok(report)
}

/// Empirical skewness of each sampler family against its analytic value and
/// the preset's skewness parameter.
pub fn sampler_table(n: usize, seed: u64) -> Result<Table, ExperimentError> {
    let families = [
        (frs::DISTRIBUTION_TABLE[0], Distribution::Exponential { rate: 1.0 }),
        (frs::DISTRIBUTION_TABLE[1], Distribution::LogNormal { mu: 0.0, sigma: LOGNORMAL_SIGMA }),
        (frs::DISTRIBUTION_TABLE[2], Distribution::Gamma { alpha: 2.0, theta: 1.0 }),
        (frs::DISTRIBUTION_TABLE[3], Distribution::Gamma { alpha: 4.0, theta: 1.0 }),
    ];
    let rows = families
        .par_iter()
        .map(|&((name, _, skew, _), dist)| {
            let g = stats::skewness(&stats::sample(dist, n, seed)?)?;
            Ok(vec![name.into(), dist.label().into(), n.into(), g.into(), dist.analytic_skewness().into(), skew.into()])
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    let mut t = Table::new(
        "Sampler skewness",
        &["preset", "sampler", "n", "empirical skewness", "analytic skewness", "preset skewness"],
    );
    t.rows = rows;
    Ok(t)
}

pub const CLAIM_RESEARCH: &str = "intervention-research improves average quality over all-bias-x5";
pub const CLAIM_FULL: &str = "intervention-full improves average quality over all-bias-x5";

/// The all-bias-x5 scenario with and without debiasing interventions.
pub fn run_interventions(seeds: &[u64]) -> Result<ExperimentReport, ExperimentError> {
    let labels = ["all-bias-x5", "intervention-research", "intervention-full"];
    let spec = ExperimentSpec::new("interventions", preset_scenarios(&labels)?, seeds).track(frs::DEBIASING);
    let mut report = run_experiment(&spec)?;

    let baseline = report.scenario("all-bias-x5").expect("present");
    let research = report.scenario("intervention-research").expect("present");
    let mut outflow = Vec::new();
    let mut below = Vec::new();
    let mut strict = Vec::new();
    for (b, r) in baseline.runs.iter().zip(&research.runs) {
        let (ob, or) = (series(b, frs::DEBIASING)[0], series(r, frs::DEBIASING)[0]);
        if ob != 0.0 || or != 5.0 {
            outflow.push(format!("seed {}: baseline {ob}, research {or}", b.seed));
        }
        let (db, dr) = (series(b, frs::DISTRIBUTION_OF_BIAS), series(r, frs::DISTRIBUTION_OF_BIAS));
        if let Some(k) = db.iter().zip(dr).position(|(b, r)| r > b) {
            below.push(format!("seed {}: above baseline at save point {k}", b.seed));
        }
        if let Some(k) = db.iter().zip(dr).skip(1).position(|(b, r)| r >= b) {
            strict.push(format!("seed {}: not below baseline at save point {}", b.seed, k + 1));
        }
    }
    let checks = vec![
        check("debias outflow at t=0 is 5 with intervention, 0 without", outflow, "all seeds".into()),
        check("intervention-research bias stock <= baseline at every saved time", below, "all seeds".into()),
        check("intervention-research bias stock < baseline after t=0", strict, "all seeds".into()),
    ];

    let mut deltas = Table::new(
        "Per-seed improvement over all-bias-x5",
        &["seed", "all-bias-x5", "intervention-research", "delta research", "intervention-full", "delta full"],
    );
    let full = report.scenario("intervention-full").expect("present");
    let (mut up_r, mut up_f) = (0, 0);
    for i in 0..report.seeds.len() {
        let b = baseline.runs[i].metric;
        let (r, f) = (research.runs[i].metric, full.runs[i].metric);
        up_r += usize::from(r > b);
        up_f += usize::from(f > b);
        deltas.rows.push(vec![
            Cell::Int(report.seeds[i] as i64),
            b.into(),
            r.into(),
            (r - b).into(),
            f.into(),
            (f - b).into(),
        ]);
    }
    let n = report.seeds.len();
    report.checks = checks;
    report.claims.push(Claim::new(CLAIM_RESEARCH, up_r, n));
    report.claims.push(Claim::new(CLAIM_FULL, up_f, n));
    report.tables.push(deltas);
    Ok(report)
}

/// One scenario per value of `param` on the base model.
pub fn sweep(param: &str, values: &[f64], seeds: &[u64]) -> Result<ExperimentReport, ExperimentError> {
    let model = frs_model();
    if !matches!(model.kind(param), Some(VarKind::Constant | VarKind::Stock)) {
        return Err(ExperimentError::UnknownOverride(param.to_string()));
    }
    let scenarios = values
        .iter()
        .map(|&v| Scenario { label: format!("{param}={}", v), overrides: BTreeMap::from([(param.to_string(), v)]) })
        .collect();
    let spec = ExperimentSpec::new(&format!("sweep {param}"), scenarios, seeds);
    let mut report = run_on(&model, &spec)?;

    let means: Vec<f64> = report.scenarios.iter().map(|s| s.summary.mean).collect();
    let shape = monotonicity(&means);
    report.checks.push(Check {
        name: "monotonicity of mean metric across values".into(),
        passed: true,
        detail: shape.to_string(),
    });

    // Tracked variables whose dependency cone excludes the swept parameter
    // must be unaffected by it.
    let mut isolated = Vec::new();
    let mut failures = Vec::new();
    for var in &report.tracked {
        if model.dependency_cone(var).contains(param) {
            continue;
        }
        isolated.push(var.clone());
        for i in 0..report.seeds.len() {
            let first = series(&report.scenarios[0].runs[i], var);
            for sc in &report.scenarios[1..] {
                if !bitwise_eq(series(&sc.runs[i], var), first) {
                    failures.push(format!("{var} differs in {} (seed {})", sc.label, report.seeds[i]));
                }
            }
        }
    }
    report.checks.push(check(
        "variables outside the parameter's dependency cone are unchanged",
        failures,
        if isolated.is_empty() { "none tracked".into() } else { isolated.join(", ") },
    ));

    let mut t = Table::new("Sweep", &["value", "mean", "sd"]);
    for (v, sc) in values.iter().zip(&report.scenarios) {
        t.rows.push(vec![(*v).into(), sc.summary.mean.into(), sc.summary.sd.into()]);
    }
    report.tables.push(t);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    Constant,
    Increasing,
    Decreasing,
    NonIncreasing,
    NonDecreasing,
    NonMonotone,
}

impl std::fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Monotonicity::Constant => "constant",
            Monotonicity::Increasing => "strictly increasing",
            Monotonicity::Decreasing => "strictly decreasing",
            Monotonicity::NonIncreasing => "non-increasing",
            Monotonicity::NonDecreasing => "non-decreasing",
            Monotonicity::NonMonotone => "non-monotone",
        })
    }
}

pub fn monotonicity(xs: &[f64]) -> Monotonicity {
    let (mut up, mut down, mut flat) = (false, false, false);
    for w in xs.windows(2) {
        if w[1] > w[0] {
            up = true;
        } else if w[1] < w[0] {
            down = true;
        } else {
            flat = true;
        }
    }
    match (up, down, flat) {
        (true, true, _) => Monotonicity::NonMonotone,
        (true, false, false) => Monotonicity::Increasing,
        (true, false, true) => Monotonicity::NonDecreasing,
        (false, true, false) => Monotonicity::Decreasing,
        (false, true, true) => Monotonicity::NonIncreasing,
        (false, false, _) => Monotonicity::Constant,
    }
}

/// Every experiment by its CLI name.
pub const EXPERIMENTS: [&str; 4] = ["base", "activation", "distributions", "interventions"];

pub fn run_named(name: &str, seeds: &[u64]) -> Result<Option<ExperimentReport>, ExperimentError> {
    Ok(Some(match name {
        "base" => run_base(seeds)?,
        "activation" => run_activation(seeds)?,
        "distributions" => run_distributions(seeds)?,
        "interventions" => run_interventions(seeds)?,
        _ => return Ok(None),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seed_list() {
        assert!(matches!(run_base(&[]), Err(ExperimentError::NoSeeds)));
    }

    #[test]
    fn base_single_seed() {
        let r = run_base(&[1]).unwrap();
        assert!(r.all_checks_pass(), "{:#?}", r.checks);
        let run = &r.scenarios[0].runs[0];
        assert_eq!(run.result.len(), 12801);
        let d = series(run, frs::DISTRIBUTION_OF_BIAS);
        assert!((d[1] - 1.00271875).abs() < 1e-12);
        assert_eq!(run.result.names.len(), BASE_TRACKED.len());
    }

    #[test]
    fn unknown_tracked_variable() {
        let spec = ExperimentSpec::new("x", preset_scenarios(&["base"]).unwrap(), &[1]).track("Nope");
        assert!(matches!(run_experiment(&spec), Err(ExperimentError::UnknownVariable(n)) if n == "Nope"));
    }

    #[test]
    fn sweep_rejects_auxiliary() {
        assert!(matches!(sweep(frs::AVG_QUALITY, &[1.0], &[1]), Err(ExperimentError::UnknownOverride(_))));
        assert!(matches!(sweep("No Var", &[1.0], &[1]), Err(ExperimentError::UnknownOverride(_))));
    }

    #[test]
    fn monotonicity_shapes() {
        assert_eq!(monotonicity(&[1.0, 2.0, 3.0]), Monotonicity::Increasing);
        assert_eq!(monotonicity(&[3.0, 2.0, 2.0]), Monotonicity::NonIncreasing);
        assert_eq!(monotonicity(&[1.0, 3.0, 2.0]), Monotonicity::NonMonotone);
        assert_eq!(monotonicity(&[1.0]), Monotonicity::Constant);
    }

    #[test]
    fn fmt_num_trims() {
        assert_eq!(fmt_num(65.28571428571429), "65.285714");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(26000.0), "26000");
        assert_eq!(fmt_num(1.5e-7), "1.500000e-7");
    }

    #[test]
    fn claim_threshold() {
        assert!(Claim::new("x", 15, 20).supported);
        assert!(!Claim::new("x", 14, 20).supported);
        assert!(!Claim::new("x", 0, 0).supported);
    }
}
