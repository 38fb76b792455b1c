//! File output for the `sdsim` binary: run CSVs and SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sdsim_core::experiments::ExperimentReport;
use sdsim_core::frs;
use sdsim_core::{NoiseMode, Run, RunMetadata};

pub mod chart;

pub use chart::{render_chart, render_svg, Chart, ChartError, Series};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Chart(#[from] ChartError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

/// Shortest decimal that parses back to the same `f64` (exponent form for
/// very large or small magnitudes, no trailing `.0`).
pub fn fmt_f64(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(int) => int.to_string(),
        None => s,
    }
}

/// Render a run as CSV: `time,<names...>` in model order, one row per save point.
pub fn csv_string(result: &Run) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let header = std::iter::once("time").chain(result.names.iter().map(String::as_str));
    w.write_record(header).expect("write to memory");
    for (i, t) in result.times.iter().enumerate() {
        let row = std::iter::once(fmt_f64(*t)).chain(result.series.iter().map(|s| fmt_f64(s[i])));
        w.write_record(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
}

pub fn write_csv(result: &Run, path: &Path) -> Result<(), OutputError> {
    fs::write(path, csv_string(result)).map_err(io_err(path))
}

/// Read a CSV written by [`write_csv`] back into a run (metadata is not stored).
pub fn read_csv(path: &Path) -> Result<Run, OutputError> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })?;
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("time") {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "first column must be time".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut series = vec![Vec::new(); names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| OutputError::Csv { path: path.to_path_buf(), source })?;
        let mut vals = rec.iter().map(|f| f.parse::<f64>());
        let bad = |message: String| OutputError::Malformed { path: path.to_path_buf(), line: i + 2, message };
        times.push(vals.next().ok_or_else(|| bad("empty row".into()))?.map_err(|e| bad(e.to_string()))?);
        for col in series.iter_mut() {
            col.push(vals.next().ok_or_else(|| bad("short row".into()))?.map_err(|e| bad(e.to_string()))?);
        }
    }
    Ok(Run {
        times,
        names,
        series,
        metadata: RunMetadata {
            seed: None,
            noise: NoiseMode::Stochastic,
            overrides: Default::default(),
            control: Default::default(),
            warnings: vec![],
        },
    })
}

/// File-name-safe form of a variable or scenario label.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push('x');
    }
    out
}

/// Plain-text listing of final values, one `name = value` per line.
pub fn final_values(result: &Run, names: &[&str]) -> String {
    let mut s = String::new();
    for (n, series) in result.iter() {
        if names.is_empty() || names.contains(&n) {
            if let Some(v) = series.last() {
                let _ = writeln!(s, "{n} = {}", fmt_f64(*v));
            }
        }
    }
    s
}

/// The variables plotted for a run of the built-in model.
pub const FRS_CHART: [&str; 3] = [frs::DISTRIBUTION_OF_BIAS, frs::FRE, frs::HCI];

/// Chart of the named series of a run (all series if `names` is empty).
pub fn run_chart(title: &str, result: &Run, names: &[&str]) -> Chart {
    let mut c = Chart::new(title, result.times.clone());
    for (n, s) in result.iter() {
        if names.is_empty() || names.contains(&n) {
            c = c.with_series(n, s.to_vec());
        }
    }
    c
}

/// Every file an experiment directory holds, as (relative path, contents):
/// `report.json`, `summary.md`, `runs/<scenario>-seed<k>.csv`, and one SVG
/// per tracked variable overlaying the scenarios for the first seed.
pub fn experiment_files(report: &ExperimentReport) -> Result<Vec<(PathBuf, String)>, OutputError> {
    let mut files =
        vec![(PathBuf::from("report.json"), report.to_json()), (PathBuf::from("summary.md"), report.to_markdown())];
    for sc in &report.scenarios {
        for run in &sc.runs {
            let name = format!("{}-seed{}.csv", slug(&sc.label), run.seed);
            files.push((Path::new("runs").join(name), csv_string(&run.result)));
        }
    }
    let first = report.seeds[0];
    if let [sc] = report.scenarios.as_slice() {
        let title = format!("{}: stocks (seed {first})", report.name);
        files.push((PathBuf::from("stocks.svg"), render_svg(&run_chart(&title, &sc.runs[0].result, &FRS_CHART))?));
    }
    for var in &report.tracked {
        let x = report.scenarios[0].runs[0].result.times.clone();
        let mut c = Chart::new(&format!("{var} ({}, seed {first})", report.name), x);
        c.y_label = var.clone();
        for sc in &report.scenarios {
            if let Some(s) = sc.runs[0].result.series(var) {
                c = c.with_series(&sc.label, s.to_vec());
            }
        }
        files.push((PathBuf::from(format!("{}.svg", slug(var))), render_svg(&c)?));
    }
    Ok(files)
}

/// Write `(relative path, contents)` pairs under `dir`, creating directories.
pub fn write_files(dir: &Path, files: &[(PathBuf, String)]) -> Result<(), OutputError> {
    for (rel, contents) in files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn run(names: &[&str], times: Vec<f64>, series: Vec<Vec<f64>>) -> Run {
        Run {
            times,
            names: names.iter().map(|s| s.to_string()).collect(),
            series,
            metadata: RunMetadata {
                seed: Some(1),
                noise: NoiseMode::Stochastic,
                overrides: BTreeMap::new(),
                control: Default::default(),
                warnings: vec![],
            },
        }
    }

    #[test]
    fn header_quotes_commas() {
        let r = run(&["a,b", "Distribution of Bias in Data & Design"], vec![0.0], vec![vec![1.0], vec![0.1]]);
        assert_eq!(csv_string(&r), "time,\"a,b\",Distribution of Bias in Data & Design\n0,1,0.1\n");
    }

    #[test]
    fn round_trip_is_exact() {
        let xs = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
        let r = run(&["x"], (0..xs.len()).map(|i| i as f64 * 0.0078125).collect(), vec![xs.clone()]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&r, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.names, r.names);
        assert!(back.series[0].iter().zip(&xs).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.times, r.times);
    }

    #[test]
    fn missing_directory_names_path() {
        let r = run(&["x"], vec![0.0], vec![vec![1.0]]);
        let err = write_csv(&r, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().starts_with("/nonexistent/dir/out.csv: "));
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(10.0), "10");
        assert_eq!(fmt_f64(0.0078125), "0.0078125");
        assert_eq!(fmt_f64(1.00271875), "1.00271875");
        assert_eq!(fmt_f64(-2.5e-300), "-2.5e-300");
        assert_eq!(fmt_f64(0.1 + 0.2), "0.30000000000000004");
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Distribution of Bias in Data & Design"), "distribution-of-bias-in-data-design");
        assert_eq!(slug("Inductive Bias=2"), "inductive-bias-2");
        assert_eq!(slug("&&"), "x");
    }
}
