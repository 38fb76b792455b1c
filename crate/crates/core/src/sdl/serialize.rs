use std::fmt::Write;

use crate::ast::{Expr, Func, ModelSpec};

fn needs_quotes(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else { return true };
    if !(first.is_alphabetic() || first == '_') {
        return true;
    }
    if name.chars().any(|c| !(c.is_alphanumeric() || c == '_' || c == '.' || c == ' ')) {
        return true;
    }
    Func::from_name(name).is_some()
}

/// A variable name as it must appear in SDL source.
pub fn format_name(name: &str) -> String {
    if needs_quotes(name) {
        format!("\"{name}\"")
    } else {
        name.to_string()
    }
}

/// Render an expression with the minimal parentheses that preserve the tree.
pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0, false);
    out
}

fn write_expr(out: &mut String, e: &Expr, parent_prec: u8, right_operand: bool) {
    match e {
        Expr::Number { value } => {
            write!(out, "{value}").unwrap();
        }
        Expr::Var { name } => out.push_str(&format_name(name)),
        Expr::Binary { op, left, right } => {
            let prec = op.precedence();
            let wrap = prec < parent_prec || (prec == parent_prec && right_operand);
            if wrap {
                out.push('(');
            }
            write_expr(out, left, prec, false);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, right, prec, true);
            if wrap {
                out.push(')');
            }
        }
        Expr::Call { function, args } => {
            out.push_str(function.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0, false);
            }
            out.push(')');
        }
    }
}

/// Emit canonical SDL for a model. Entries are numbered sequentially in
/// definition order.
pub fn serialize(spec: &ModelSpec) -> String {
    let width = spec.variables.len().to_string().len().max(2);
    let mut out = String::new();
    for (i, v) in spec.variables.iter().enumerate() {
        writeln!(out, "({:0width$}) {} = {}", i + 1, format_name(&v.name), format_expr(&v.expr)).unwrap();
        match &v.range {
            Some(r) => writeln!(out, "Units: {} {}", v.units, r).unwrap(),
            None => writeln!(out, "Units: {}", v.units).unwrap(),
        }
        if let Some(doc) = &v.doc {
            for line in doc.lines().map(str::trim).filter(|l| !l.is_empty()) {
                writeln!(out, "{line}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::VariableDef;
    use crate::sdl::parse_model;
    use crate::units::UnitExpr;

    #[test]
    fn single_constant() {
        let spec = ModelSpec {
            variables: vec![VariableDef::new("X", Expr::num(1.0), UnitExpr::dmnl())],
            control: Default::default(),
        };
        assert_eq!(serialize(&spec), "(01) X = 1\nUnits: Dmnl\n\n");
    }

    #[test]
    fn quoting() {
        assert_eq!(format_name("Rebalancing & Regularization"), "\"Rebalancing & Regularization\"");
        assert_eq!(format_name("Avg. new recommendations"), "Avg. new recommendations");
        assert_eq!(format_name("2nd"), "\"2nd\"");
        assert_eq!(format_name("MAX"), "\"MAX\"");
    }

    #[test]
    fn parenthesization_preserves_tree() {
        let a = || Expr::var("a");
        let b = || Expr::var("b");
        let c = || Expr::var("c");
        let cases = vec![
            a() - (b() - c()),
            (a() - b()) - c(),
            a() / (b() * c()),
            (a() + b()) * c(),
            a() + (b() + c()),
            a() * Expr::num(-2.0),
            Expr::num(-2.0) - a(),
            Expr::max(Expr::num(0.0), a() / b() + c()),
        ];
        for e in cases {
            let text = format!("x = {}\nUnits: Dmnl\n", format_expr(&e));
            let p = parse_model(&text).unwrap();
            assert_eq!(p.spec.variables[0].expr, e, "{text}");
        }
        assert_eq!(format_expr(&((a() - b()) - c())), "a - b - c");
        assert_eq!(format_expr(&(a() / (b() * c()))), "a / (b * c)");
    }
}
