use crate::ast::normalize_name;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    /// Identifier; `quoted` identifiers can never name a function.
    Ident {
        name: String,
        quoted: bool,
    },
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// Byte offset of the first character.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LexError {
    pub message: String,
    pub offset: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

/// Tokenize an expression. Unquoted identifiers may contain spaces, so
/// `Avg Interaction Life` is a single token, as is `RANDOM NORMAL`.
pub(crate) fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (offset, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, offset });
            i += 1;
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j].1 != '"' {
                j += 1;
            }
            if j == bytes.len() {
                return Err(LexError { message: "unterminated quote".into(), offset });
            }
            let raw: String = bytes[start..j].iter().map(|&(_, c)| c).collect();
            let name = normalize_name(&raw);
            if name.is_empty() {
                return Err(LexError { message: "empty quoted name".into(), offset });
            }
            out.push(Token { tok: Tok::Ident { name, quoted: true }, offset });
            i = j + 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|(_, d)| d.is_ascii_digit())) {
            let mut j = i;
            while j < bytes.len() && (bytes[j].1.is_ascii_digit() || bytes[j].1 == '.') {
                j += 1;
            }
            if j < bytes.len() && matches!(bytes[j].1, 'e' | 'E') {
                let mut k = j + 1;
                if k < bytes.len() && matches!(bytes[k].1, '+' | '-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].1.is_ascii_digit() {
                    while k < bytes.len() && bytes[k].1.is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let end = bytes.get(j).map_or(src.len(), |&(o, _)| o);
            let text = &src[offset..end];
            let value: f64 =
                text.parse().map_err(|_| LexError { message: format!("malformed number '{text}'"), offset })?;
            if bytes.get(j).is_some_and(|&(_, c)| is_ident_start(c)) {
                return Err(LexError { message: "names beginning with a digit must be double-quoted".into(), offset });
            }
            out.push(Token { tok: Tok::Num(value), offset });
            i = j;
            continue;
        }
        if is_ident_start(c) {
            let mut j = i;
            let mut last_non_ws = i;
            while j < bytes.len() && (is_ident_char(bytes[j].1) || bytes[j].1.is_whitespace()) {
                if !bytes[j].1.is_whitespace() {
                    last_non_ws = j;
                }
                j += 1;
            }
            let end = bytes.get(last_non_ws + 1).map_or(src.len(), |&(o, _)| o);
            let name = normalize_name(&src[offset..end]);
            out.push(Token { tok: Tok::Ident { name, quoted: false }, offset });
            i = last_non_ws + 1;
            continue;
        }
        let message = if matches!(c, '&' | '/' | ',' | '(' | ')') {
            format!("unexpected '{c}'; names containing it must be double-quoted")
        } else {
            format!("unexpected character '{c}'")
        };
        return Err(LexError { message, offset });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    fn ident(name: &str, quoted: bool) -> Tok {
        Tok::Ident { name: name.into(), quoted }
    }

    #[test]
    fn multiword_identifiers() {
        assert_eq!(
            kinds("Avg Interaction Life+ HCI"),
            vec![ident("Avg Interaction Life", false), Tok::Plus, ident("HCI", false)]
        );
        assert_eq!(
            kinds("RANDOM NORMAL( 1 , 5 )"),
            vec![ident("RANDOM NORMAL", false), Tok::LParen, Tok::Num(1.0), Tok::Comma, Tok::Num(5.0), Tok::RParen]
        );
    }

    #[test]
    fn quoted_names_with_specials() {
        assert_eq!(
            kinds("\"Rebalancing  & Regularization\"/x"),
            vec![ident("Rebalancing & Regularization", true), Tok::Slash, ident("x", false)]
        );
        assert_eq!(kinds("\"Avg. new recommendations\""), vec![ident("Avg. new recommendations", true)]);
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("0.0078125"), vec![Tok::Num(0.0078125)]);
        assert_eq!(kinds("1.5e3 .5"), vec![Tok::Num(1500.0), Tok::Num(0.5)]);
    }

    #[test]
    fn errors() {
        assert_eq!(lex("\"abc").unwrap_err().message, "unterminated quote");
        assert!(lex("a & b").is_err());
        assert!(lex("3abc").is_err());
        assert!(lex("a $ b").is_err());
    }
}
