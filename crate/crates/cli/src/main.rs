use std::collections::BTreeMap;
use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sdsim_cli::{csv_string, experiment_files, final_values, render_svg, run_chart, slug, write_files, FRS_CHART};
use sdsim_core::ast::normalize_name;
use sdsim_core::experiments::{self, ExperimentReport, EXPERIMENTS};
use sdsim_core::unitcheck::check_model_with_spans;
use sdsim_core::{compile, frs, parse_model, simulate, Model, ParsedModel, RngPolicy, VarKind};

type Failure = Box<dyn Error>;

#[derive(Parser)]
#[command(name = "sdsim", version, about = "Stock-and-flow simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model file and print a summary (or the AST as JSON).
    Parse {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check dimensional consistency of every equation.
    CheckUnits {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Simulate a model file or the built-in model.
    Run(RunArgs),
    /// Run one of the canned experiments over a seed ensemble.
    Experiment {
        #[arg(value_parser = EXPERIMENTS)]
        name: String,
        /// Number of seeds; seeds 1..=N are used.
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Output directory (default: results/<name>).
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Sweep one constant of the built-in model over a list of values.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Output directory (default: results/sweep-<param>).
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// List the built-in scenario presets.
    Presets,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Noise {
    On,
    Off,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    file: Option<PathBuf>,
    #[arg(long, value_parser = ["frs"])]
    builtin: Option<String>,
    /// Runner seed; without it the model's RANDOM NORMAL seed argument is used.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a constant or a stock's initial value.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, f64)>,
    #[arg(long)]
    final_time: Option<f64>,
    /// Time step; the save period follows it.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value = "on")]
    noise: Noise,
    /// CSV output file (default: standard output, unless --svg is given).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.rsplit_once('=').ok_or_else(|| format!("expected NAME=VALUE, got '{s}'"))?;
    let name = name.trim();
    let name = name.strip_prefix('"').and_then(|n| n.strip_suffix('"')).unwrap_or(name);
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value in '{s}': {e}"))?;
    if name.is_empty() {
        return Err(format!("empty name in '{s}'"));
    }
    Ok((normalize_name(name), value))
}

fn load(path: &Path) -> Result<ParsedModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_model(&text).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
        lines.join("\n").into()
    })
}

fn print_warnings(path: &Path, parsed: &ParsedModel) {
    for d in &parsed.diagnostics {
        eprintln!("{}: {d}", path.display());
    }
}

fn cmd_parse(file: &Path, json: bool) -> Result<ExitCode, Failure> {
    let parsed = load(file)?;
    print_warnings(file, &parsed);
    if json {
        println!("{}", serde_json::to_string_pretty(&parsed.spec)?);
    } else {
        let spec = &parsed.spec;
        println!(
            "{} definitions: {} stocks, {} constants, {} auxiliaries, {} control",
            spec.variables.len(),
            spec.count(VarKind::Stock),
            spec.count(VarKind::Constant),
            spec.count(VarKind::Auxiliary),
            spec.count(VarKind::Control)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_units(file: &Path, json: bool) -> Result<ExitCode, Failure> {
    let parsed = load(file)?;
    print_warnings(file, &parsed);
    let mismatches = check_model_with_spans(&parsed.spec, |n| parsed.span_of(n));
    if json {
        println!("{}", serde_json::to_string_pretty(&mismatches)?);
    } else {
        for m in &mismatches {
            println!("{}: {m}", file.display());
        }
        println!("{} mismatches", mismatches.len());
    }
    Ok(if mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Failure> {
    let (parsed, chart_vars): (ParsedModel, &[&str]) = match &args.file {
        Some(path) => {
            let p = load(path)?;
            print_warnings(path, &p);
            (p, &[])
        }
        None => (parse_model(frs::FRS_SDL).map_err(|_| "built-in model failed to parse")?, &FRS_CHART),
    };
    let mut model: Model = compile(&parsed.spec)?;
    if args.final_time.is_some() || args.dt.is_some() {
        let mut control = model.control();
        if let Some(t) = args.final_time {
            control.final_time = t;
        }
        if let Some(dt) = args.dt {
            control.dt = dt;
            control.saveper = dt;
        }
        model = model.with_control(control)?;
    }
    let policy = match args.noise {
        Noise::On => RngPolicy { seed: args.seed, ..RngPolicy::default() },
        Noise::Off => RngPolicy { seed: args.seed, ..RngPolicy::noise_off() },
    };
    let overrides: BTreeMap<String, f64> = args.set.into_iter().collect();
    let result = simulate(&model, &policy, &overrides)?;
    for w in &result.metadata.warnings {
        eprintln!("warning: {w}");
    }

    // Render everything before touching the file system.
    let csv = csv_string(&result);
    let svg = match &args.svg {
        Some(_) => Some(render_svg(&run_chart("Simulation", &result, stock_names(&model, chart_vars).as_slice()))?),
        None => None,
    };
    if let Some(path) = &args.out {
        fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?;
        eprintln!("wrote {} rows to {}", result.len(), path.display());
    } else if svg.is_none() {
        emit(&csv)?;
    }
    if let (Some(path), Some(svg)) = (&args.svg, svg) {
        fs::write(path, svg).map_err(|e| format!("{}: {e}", path.display()))?;
        eprintln!("wrote chart to {}", path.display());
    }
    if args.out.is_some() || args.svg.is_some() {
        print!("{}", final_values(&result, &model.stock_names()));
    }
    Ok(ExitCode::SUCCESS)
}

/// Writes to stdout, treating a closed pipe (`| head`) as success.
fn emit(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn stock_names<'a>(model: &'a Model, preferred: &[&'a str]) -> Vec<&'a str> {
    if preferred.is_empty() {
        model.stock_names()
    } else {
        preferred.to_vec()
    }
}

fn finish_experiment(report: &ExperimentReport, outdir: &Path) -> Result<ExitCode, Failure> {
    let files = experiment_files(report)?;
    write_files(outdir, &files)?;
    for sc in &report.scenarios {
        println!(
            "{}: mean {} = {} (sd {}, n {})",
            sc.label, report.metric, sc.summary.mean, sc.summary.sd, sc.summary.n
        );
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for c in &report.claims {
        let verdict = if c.supported { "supported" } else { "not supported" };
        println!("claim: {} ({}/{} seeds, {verdict})", c.statement, c.holds, c.total);
    }
    println!("wrote {} files to {}", files.len(), outdir.display());
    Ok(if report.all_checks_pass() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_presets() -> ExitCode {
    for p in frs::all_presets() {
        let ov: Vec<String> = p.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<22} {}", p.name, p.description);
        if !ov.is_empty() {
            println!("{:<22} set {}", "", ov.join(", "));
        }
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SDSIM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SDSIM_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Parse { file, json } => cmd_parse(&file, json),
        Command::CheckUnits { file, json } => cmd_check_units(&file, json),
        Command::Run(args) => cmd_run(args),
        Command::Experiment { name, seeds, outdir } => {
            let seeds: Vec<u64> = (1..=seeds).collect();
            let outdir = outdir.unwrap_or_else(|| Path::new("results").join(&name));
            experiments::run_named(&name, &seeds)
                .map_err(Failure::from)
                .and_then(|r| finish_experiment(&r.expect("name validated by clap"), &outdir))
        }
        Command::Sweep { param, values, seeds, outdir } => {
            let param = normalize_name(&param);
            let seeds: Vec<u64> = (1..=seeds).collect();
            let outdir = outdir.unwrap_or_else(|| Path::new("results").join(format!("sweep-{}", slug(&param))));
            experiments::sweep(&param, &values, &seeds)
                .map_err(Failure::from)
                .and_then(|r| finish_experiment(&r, &outdir))
        }
        Command::Presets => Ok(cmd_presets()),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
