//! Recursive-descent expression parser over the SDL token stream.

use super::lexer::{lex, Tok, Token};
use crate::ast::{BinOp, Expr, Func};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ExprError {
    pub message: String,
    pub offset: usize,
}

pub(crate) fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    let tokens = lex(src).map_err(|e| ExprError { message: e.message, offset: e.offset })?;
    let mut p = Parser { tokens, pos: 0, end: src.len() };
    if p.tokens.is_empty() {
        return Err(ExprError { message: "missing expression".into(), offset: 0 });
    }
    let e = p.sum()?;
    if let Some(t) = p.tokens.get(p.pos) {
        return Err(ExprError { message: format!("unexpected {}", describe(&t.tok)), offset: t.offset });
    }
    Ok(e)
}

/// Parse a single (possibly quoted) variable name, as found left of `=`.
pub(crate) fn parse_name(src: &str) -> Result<String, ExprError> {
    let tokens = lex(src).map_err(|e| ExprError { message: e.message, offset: e.offset })?;
    match tokens.as_slice() {
        [Token { tok: Tok::Ident { name, .. }, .. }] => Ok(name.clone()),
        [] => Err(ExprError { message: "missing variable name".into(), offset: 0 }),
        [t, ..] => Err(ExprError {
            message: "invalid variable name; names containing & , ( ) / or starting with a digit must be double-quoted"
                .into(),
            offset: t.offset,
        }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident { name, .. } => format!("name '{name}'"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { message: message.into(), offset: self.offset() })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.err(format!("expected {}, found {}", describe(&want), describe(t))),
            None => self.err(format!("expected {}, found end of expression", describe(&want))),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                match self.unary()? {
                    Expr::Number { value } => Ok(Expr::num(-value)),
                    other => Ok(Expr::binary(BinOp::Sub, Expr::num(0.0), other)),
                }
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let start = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident { name, quoted }) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return Ok(Expr::Var { name });
                }
                if quoted {
                    return self.err("unexpected '(' after quoted name");
                }
                let Some(function) = Func::from_name(&name) else {
                    return Err(ExprError { message: format!("unknown function '{name}'"), offset: start });
                };
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        args.push(self.sum()?);
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                if args.len() != function.arity() {
                    return Err(ExprError {
                        message: format!(
                            "arity mismatch: {} expects {} arguments, found {}",
                            function.name(),
                            function.arity(),
                            args.len()
                        ),
                        offset: start,
                    });
                }
                Ok(Expr::call(function, args))
            }
            Some(t) => self.err(format!("unexpected {}", describe(&t))),
            None => self.err("unexpected end of expression"),
        }
    }
}
