//! SDL: a plain-text stock-and-flow model language. Each entry is
//!
//! ```text
//! (11) "Distribution of Bias in Data & Design"= INTEG (New Processing Rate-"Debiasing",1)
//! Units: bias/interactions [0,?]
//! optional free comment lines
//! ```
//!
//! terminated by a blank line or the next numbered entry. The equation may
//! continue over several lines until the `Units:` line.

mod expr;
mod lexer;
mod serialize;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{ModelSpec, Range, VarKind, VariableDef};
use crate::units::parse_units;

pub use serialize::{format_expr, format_name, serialize};

/// Inclusive 1-based line range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn line(line: usize) -> Span {
        Span { start: line, end: line }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "line {}", self.start)
        } else {
            write!(f, "lines {}-{}", self.start, self.end)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    fn error(message: impl Into<String>, span: Span) -> Diagnostic {
        Diagnostic { severity: Severity::Error, message: message.into(), span }
    }

    fn warning(message: impl Into<String>, span: Span) -> Diagnostic {
        Diagnostic { severity: Severity::Warning, message: message.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {}: {}", self.span, sev, self.message)
    }
}

/// One entry as it appears in the source, before semantic interpretation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub index: Option<u32>,
    pub name: String,
    pub raw_expr: String,
    pub raw_units: String,
    pub raw_range: Option<String>,
    pub comment: Option<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedModel {
    pub spec: ModelSpec,
    pub entries: Vec<SourceEntry>,
    /// Warnings only; any error fails the parse.
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedModel {
    pub fn span_of(&self, name: &str) -> Option<Span> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.span)
    }
}

/// Split `(NN) rest` into the entry number and the remainder.
fn split_index(line: &str) -> Option<(u32, &str)> {
    let t = line.trim_start();
    let inner = t.strip_prefix('(')?;
    let close = inner.find(')')?;
    let digits = &inner[..close];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((digits.parse().ok()?, &inner[close + 1..]))
}

fn units_payload(line: &str) -> Option<&str> {
    line.trim_start().strip_prefix("Units:")
}

/// Find the first `=` outside double quotes.
fn split_equation(text: &str) -> Result<(usize, usize), String> {
    let mut in_quote = false;
    for (i, c) in text.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '=' if !in_quote => return Ok((i, i + 1)),
            _ => {}
        }
    }
    if in_quote {
        Err("unterminated quote".into())
    } else {
        Err("expected '=' in equation".into())
    }
}

fn parse_range(raw: &str) -> Result<Range, String> {
    let inner = raw.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("range '{raw}' must have the form [lo,hi]"));
    }
    let side = |s: &str| -> Result<Option<f64>, String> {
        if s == "?" {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|_| format!("invalid range bound '{s}'"))
        }
    };
    Ok(Range { lo: side(parts[0])?, hi: side(parts[1])? })
}

struct RawEntry {
    index: Option<u32>,
    /// (line number, text) of every equation line.
    eq_lines: Vec<(usize, String)>,
    units: Option<(usize, String)>,
    comments: Vec<String>,
    last_line: usize,
}

fn split_entries(source: &str, diags: &mut Vec<Diagnostic>) -> Vec<RawEntry> {
    #[derive(PartialEq)]
    enum State {
        Idle,
        Equation,
        Comments,
    }
    let mut out: Vec<RawEntry> = Vec::new();
    let mut state = State::Idle;
    let missing_units = |e: &RawEntry, diags: &mut Vec<Diagnostic>| {
        let span = Span { start: e.eq_lines[0].0, end: e.last_line };
        diags.push(Diagnostic::error("missing Units line", span));
    };
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let blank = line.trim().is_empty();
        let numbered = split_index(line);
        match state {
            State::Equation if blank => {
                missing_units(out.last().unwrap(), diags);
                state = State::Idle;
                continue;
            }
            State::Equation if numbered.is_some() => {
                missing_units(out.last().unwrap(), diags);
            }
            State::Equation => {
                let e = out.last_mut().unwrap();
                e.last_line = lineno;
                if let Some(u) = units_payload(line) {
                    e.units = Some((lineno, u.trim().to_string()));
                    state = State::Comments;
                } else {
                    e.eq_lines.push((lineno, line.to_string()));
                }
                continue;
            }
            State::Comments if blank => {
                state = State::Idle;
                continue;
            }
            State::Comments if numbered.is_none() => {
                let e = out.last_mut().unwrap();
                e.comments.push(line.trim().to_string());
                e.last_line = lineno;
                continue;
            }
            _ => {}
        }
        if blank {
            continue;
        }
        // Start of a new entry.
        let (index, text) = match numbered {
            Some((n, rest)) => (Some(n), rest.to_string()),
            None => (None, line.to_string()),
        };
        if units_payload(line).is_some() {
            diags.push(Diagnostic::error("Units line without a preceding equation", Span::line(lineno)));
            state = State::Comments;
            continue;
        }
        out.push(RawEntry {
            index,
            eq_lines: vec![(lineno, text)],
            units: None,
            comments: Vec::new(),
            last_line: lineno,
        });
        state = State::Equation;
    }
    if state == State::Equation {
        missing_units(out.last().unwrap(), diags);
    }
    out.retain(|e| e.units.is_some());
    out
}

/// Map a byte offset in the newline-joined equation text back to a source line.
fn line_at(raw: &RawEntry, offset: usize) -> usize {
    let mut acc = 0;
    for (lineno, text) in &raw.eq_lines {
        acc += text.len() + 1;
        if offset < acc {
            return *lineno;
        }
    }
    raw.eq_lines.last().map_or(raw.last_line, |(l, _)| *l)
}

/// Parse SDL source into a model. Fails with every diagnostic (errors and
/// warnings) if any error is found.
pub fn parse_model(source: &str) -> Result<ParsedModel, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let raws = split_entries(source, &mut diags);
    let mut entries = Vec::new();
    let mut variables = Vec::new();
    let mut seen: HashMap<String, Span> = HashMap::new();

    for raw in &raws {
        let span = Span { start: raw.eq_lines[0].0, end: raw.last_line };
        let text = raw.eq_lines.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n");
        let (eq_at, rhs_at) = match split_equation(&text) {
            Ok(p) => p,
            Err(m) => {
                diags.push(Diagnostic::error(m, span));
                continue;
            }
        };
        let name = match expr::parse_name(&text[..eq_at]) {
            Ok(n) => n,
            Err(e) => {
                diags.push(Diagnostic::error(e.message, Span::line(line_at(raw, e.offset))));
                continue;
            }
        };
        let rhs = &text[rhs_at..];
        let parsed_expr = expr::parse_expr(rhs);
        let (units_line, units_text) = raw.units.clone().expect("entries without units are dropped");
        let (raw_units, raw_range) = match units_text.rfind('[') {
            Some(i) if units_text.trim_end().ends_with(']') => {
                (units_text[..i].trim().to_string(), Some(units_text[i..].trim().to_string()))
            }
            _ => (units_text.trim().to_string(), None),
        };
        let comment = (!raw.comments.is_empty()).then(|| raw.comments.join("\n"));
        entries.push(SourceEntry {
            index: raw.index,
            name: name.clone(),
            raw_expr: rhs.split_whitespace().collect::<Vec<_>>().join(" "),
            raw_units: raw_units.clone(),
            raw_range: raw_range.clone(),
            comment: comment.clone(),
            span,
        });

        if let Some(prev) = seen.get(&name) {
            diags.push(Diagnostic::error(format!("duplicate name '{name}' (first defined at {prev})"), span));
            continue;
        }
        seen.insert(name.clone(), span);

        let e = match parsed_expr {
            Ok(e) => e,
            Err(err) => {
                let line = line_at(raw, rhs_at + err.offset);
                diags.push(Diagnostic::error(err.message, Span::line(line)));
                continue;
            }
        };
        if raw_units.is_empty() {
            diags.push(Diagnostic::error("empty Units line", Span::line(units_line)));
            continue;
        }
        let units = match parse_units(&raw_units) {
            Ok(u) => u,
            Err(err) => {
                diags.push(Diagnostic::error(format!("units: {err}"), Span::line(units_line)));
                continue;
            }
        };
        let range = match raw_range.as_deref().map(parse_range).transpose() {
            Ok(r) => r,
            Err(m) => {
                diags.push(Diagnostic::error(m, Span::line(units_line)));
                continue;
            }
        };
        let mut def = VariableDef::new(&name, e, units);
        def.range = range;
        def.doc = comment;
        variables.push(def);
    }

    let mut spec = ModelSpec { variables, control: Default::default() };
    match spec.resolve_control() {
        Ok(c) => spec.control = c,
        Err(m) => {
            let span = spec
                .variables
                .iter()
                .filter(|v| v.kind == VarKind::Control && m.starts_with(v.name.as_str()))
                .find_map(|v| seen.get(&v.name).copied())
                .unwrap_or(Span::line(1));
            diags.push(Diagnostic::error(m, span));
        }
    }
    if raws.is_empty() && !diags.iter().any(Diagnostic::is_error) {
        diags.push(Diagnostic::warning("no entries", Span::line(1)));
    }
    if diags.iter().any(Diagnostic::is_error) {
        return Err(diags);
    }
    Ok(ParsedModel { spec, entries, diagnostics: diags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Expr;
    use crate::units::UnitExpr;

    fn errors(src: &str) -> Vec<Diagnostic> {
        parse_model(src).unwrap_err().into_iter().filter(Diagnostic::is_error).collect()
    }

    #[test]
    fn constant_entry() {
        let p = parse_model("(21) Inductive Bias= 1\nUnits: bias\n").unwrap();
        let v = &p.spec.variables[0];
        assert_eq!(v.name, "Inductive Bias");
        assert_eq!(v.kind, VarKind::Constant);
        assert_eq!(v.expr, Expr::num(1.0));
        assert_eq!(v.units, UnitExpr::base("bias"));
        assert_eq!(p.entries[0].index, Some(21));
        assert_eq!(p.entries[0].span, Span { start: 1, end: 2 });
    }

    #[test]
    fn stock_entry() {
        let src = "(11) Distribution of Bias in Data & Design= INTEG (New Processing Rate-\"Debiasing in Research & Model Training\",1)\nUnits: bias/interactions\n";
        // Unquoted '&' in the name is not allowed.
        assert!(parse_model(src).is_err());
        let src = src.replacen("Distribution of Bias in Data & Design", "\"Distribution of Bias in Data & Design\"", 1);
        let p = parse_model(&src).unwrap();
        let v = &p.spec.variables[0];
        assert_eq!(v.kind, VarKind::Stock);
        let (flow, init) = v.integral_parts().unwrap();
        assert_eq!(*flow, Expr::var("New Processing Rate") - Expr::var("Debiasing in Research & Model Training"));
        assert_eq!(*init, Expr::num(1.0));
    }

    #[test]
    fn empty_source_warns() {
        let p = parse_model("").unwrap();
        assert!(p.spec.variables.is_empty());
        assert_eq!(p.spec.control, Default::default());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].severity, Severity::Warning);
        assert_eq!(p.diagnostics[0].message, "no entries");
    }

    #[test]
    fn control_entries_and_comments() {
        let src = "(1) FINAL TIME = 10\nUnits: Day\nThe final time.\n\n(2) TIME STEP = 0.5\nUnits: Day [0,?]\n(3) SAVEPER = TIME STEP\nUnits: Day\n";
        let p = parse_model(src).unwrap();
        assert_eq!(p.spec.control.final_time, 10.0);
        assert_eq!(p.spec.control.dt, 0.5);
        assert_eq!(p.spec.control.saveper, 0.5);
        let ft = p.spec.get("FINAL TIME").unwrap();
        assert_eq!(ft.kind, VarKind::Control);
        assert_eq!(ft.doc.as_deref(), Some("The final time."));
        let ts = p.spec.get("TIME STEP").unwrap();
        assert_eq!(ts.range, Some(Range { lo: Some(0.0), hi: None }));
    }

    #[test]
    fn multiline_equation() {
        let src = "x = MAX(0,\n a -\n b)\nUnits: Dmnl\n";
        let p = parse_model(src).unwrap();
        assert_eq!(p.spec.variables[0].expr, Expr::max(Expr::num(0.0), Expr::var("a") - Expr::var("b")));
        assert_eq!(p.entries[0].span, Span { start: 1, end: 4 });
    }

    #[test]
    fn diagnostics_carry_entry_spans() {
        let src = "(1) a = 1\nUnits: Dmnl\n\n(2) b = \"oops\nUnits: Dmnl\n\n(3) c = FOO(1)\nUnits: Dmnl\n\n(4) d = MIN(1)\nUnits: Dmnl\n\n(5) e = 2\n\n(6) a = 3\nUnits: Dmnl\n";
        let errs = errors(src);
        let msgs: Vec<_> = errs.iter().map(|d| (d.span, d.message.as_str())).collect();
        assert!(msgs.iter().any(|(s, m)| m.contains("unterminated quote") && s.start == 4), "{msgs:?}");
        assert!(msgs.iter().any(|(s, m)| m.contains("unknown function") && *s == Span::line(7)), "{msgs:?}");
        assert!(msgs.iter().any(|(s, m)| m.contains("arity") && *s == Span::line(10)), "{msgs:?}");
        assert!(msgs.iter().any(|(s, m)| m.contains("missing Units") && *s == Span::line(13)), "{msgs:?}");
        assert!(msgs.iter().any(|(s, m)| m.contains("duplicate") && *s == (Span { start: 15, end: 16 })), "{msgs:?}");
    }

    #[test]
    fn missing_units_before_next_entry() {
        let errs = errors("(1) a = 1\n(2) b = 2\nUnits: Dmnl\n");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].span, Span::line(1));
    }

    #[test]
    fn bad_units_reported_on_units_line() {
        let errs = errors("a = 1\nUnits: bias]\n");
        assert_eq!(errs[0].span, Span::line(2));
    }

    #[test]
    fn control_with_non_control_reference() {
        let errs = errors("x = 1\nUnits: Day\n\nTIME STEP = x\nUnits: Day\n");
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].span, Span { start: 4, end: 5 });
    }
}
