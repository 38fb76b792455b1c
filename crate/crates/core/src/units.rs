//! Unit algebra: products of named base units with signed integer exponents.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Product of base units. `Dmnl` is the empty product. Zero exponents are
/// never stored, so structural equality is dimensional equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitExpr {
    exponents: BTreeMap<String, i32>,
}

impl UnitExpr {
    pub fn dmnl() -> UnitExpr {
        UnitExpr::default()
    }

    pub fn base(name: &str) -> UnitExpr {
        let mut exponents = BTreeMap::new();
        exponents.insert(name.to_string(), 1);
        UnitExpr { exponents }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, i32)>) -> UnitExpr {
        let mut u = UnitExpr::dmnl();
        for (name, exp) in pairs {
            u.add_exponent(name, exp);
        }
        u
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, name: &str) -> i32 {
        self.exponents.get(name).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> &BTreeMap<String, i32> {
        &self.exponents
    }

    fn add_exponent(&mut self, name: &str, exp: i32) {
        let e = self.exponents.entry(name.to_string()).or_insert(0);
        *e += exp;
        if *e == 0 {
            self.exponents.remove(name);
        }
    }

    pub fn mul(&self, other: &UnitExpr) -> UnitExpr {
        let mut out = self.clone();
        for (k, v) in &other.exponents {
            out.add_exponent(k, *v);
        }
        out
    }

    pub fn div(&self, other: &UnitExpr) -> UnitExpr {
        self.mul(&other.recip())
    }

    pub fn recip(&self) -> UnitExpr {
        UnitExpr { exponents: self.exponents.iter().map(|(k, v)| (k.clone(), -v)).collect() }
    }
}

impl std::ops::Mul for UnitExpr {
    type Output = UnitExpr;
    fn mul(self, rhs: UnitExpr) -> UnitExpr {
        UnitExpr::mul(&self, &rhs)
    }
}

impl std::ops::Div for UnitExpr {
    type Output = UnitExpr;
    fn div(self, rhs: UnitExpr) -> UnitExpr {
        UnitExpr::div(&self, &rhs)
    }
}

/// Canonical rendering: `Dmnl`, `bias`, `1/Day`, `bias/(Day*interactions)`.
/// Exponents above one repeat the factor so the output reparses.
impl fmt::Display for UnitExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return f.write_str("Dmnl");
        }
        let expand = |positive: bool| -> Vec<&str> {
            self.exponents
                .iter()
                .filter(|(_, e)| (**e > 0) == positive)
                .flat_map(|(k, e)| std::iter::repeat_n(k.as_str(), e.unsigned_abs() as usize))
                .collect()
        };
        let num = expand(true);
        let den = expand(false);
        if num.is_empty() {
            f.write_str("1")?;
        } else {
            f.write_str(&num.join("*"))?;
        }
        match den.len() {
            0 => Ok(()),
            1 => write!(f, "/{}", den[0]),
            _ => write!(f, "/({})", den.join("*")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message} at column {column}")]
pub struct UnitParseError {
    pub message: String,
    /// 1-based column within the units text.
    pub column: usize,
}

/// Parse a units string: `u := term (('*'|'/') term)*`,
/// `term := ident | '1' | '(' u ')'`. Left-associative.
pub fn parse_units(raw: &str) -> Result<UnitExpr, UnitParseError> {
    let mut p = UnitParser { chars: raw.char_indices().collect(), pos: 0 };
    let u = p.product()?;
    p.skip_ws();
    if let Some(&(i, c)) = p.chars.get(p.pos) {
        return Err(UnitParseError { message: format!("unexpected '{c}'"), column: i + 1 });
    }
    Ok(u)
}

struct UnitParser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl UnitParser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn column(&self) -> usize {
        self.chars
            .get(self.pos)
            .map_or_else(|| self.chars.last().map_or(1, |&(i, c)| i + c.len_utf8() + 1), |&(i, _)| i + 1)
    }

    fn err(&self, message: impl Into<String>) -> UnitParseError {
        UnitParseError { message: message.into(), column: self.column() }
    }

    fn product(&mut self) -> Result<UnitExpr, UnitParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.term()?);
                }
                Some('/') => {
                    self.pos += 1;
                    acc = acc.div(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<UnitExpr, UnitParseError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.product()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some('1') => {
                self.pos += 1;
                if self.chars.get(self.pos).is_some_and(|(_, c)| c.is_ascii_alphanumeric()) {
                    return Err(self.err("unknown token after '1'"));
                }
                Ok(UnitExpr::dmnl())
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|&(_, c)| c.is_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                if name == "Dmnl" {
                    Ok(UnitExpr::dmnl())
                } else {
                    Ok(UnitExpr::base(&name))
                }
            }
            Some(c) => Err(self.err(format!("unknown token '{c}'"))),
            None => Err(self.err("expected a unit")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_denominator() {
        let u = parse_units("bias/(interactions*Day)").unwrap();
        assert_eq!(u, UnitExpr::from_pairs([("bias", 1), ("interactions", -1), ("Day", -1)]));
        assert_eq!(u.to_string(), "bias/(Day*interactions)");
    }

    #[test]
    fn dmnl_is_empty() {
        let u = parse_units("Dmnl").unwrap();
        assert!(u.is_dimensionless());
        assert!(u.exponents().is_empty());
    }

    #[test]
    fn simple_ratio() {
        let u = parse_units("quality/recommendations").unwrap();
        assert_eq!(u, UnitExpr::from_pairs([("quality", 1), ("recommendations", -1)]));
    }

    #[test]
    fn reciprocal_and_left_assoc() {
        assert_eq!(parse_units("1/Day").unwrap(), UnitExpr::from_pairs([("Day", -1)]));
        // a/b*c is (a/b)*c
        assert_eq!(parse_units("a/b*c").unwrap(), UnitExpr::from_pairs([("a", 1), ("b", -1), ("c", 1)]));
        assert_eq!(parse_units("1/(Day*interactions)").unwrap().to_string(), "1/(Day*interactions)");
    }

    #[test]
    fn cancellation_drops_zero_exponents() {
        let u = parse_units("bias/bias").unwrap();
        assert!(u.is_dimensionless());
        assert_eq!(u, UnitExpr::dmnl());
    }

    #[test]
    fn repeated_factors_render_and_reparse() {
        let u = parse_units("m*m/s").unwrap();
        assert_eq!(u.exponent("m"), 2);
        assert_eq!(parse_units(&u.to_string()).unwrap(), u);
    }

    #[test]
    fn unknown_tokens_are_rejected() {
        assert!(parse_units("bias$").is_err());
        assert!(parse_units("2/Day").is_err());
        assert!(parse_units("(bias").is_err());
        assert!(parse_units("").is_err());
    }
}
