//! Text form of formulas: `true`, `false`, names, `!x`, `(a && b)`, `(a || b)`.
//!
//! n-ary nodes render as left-associated binary chains with full
//! parenthesization, so `And[a, b, c]` becomes `((a && b) && c)`. The parser
//! accepts that form (and the unparenthesized precedence form) and folds a
//! left operand of the same kind back into one n-ary node. Every simplified
//! formula therefore round-trips exactly.

use std::fmt;

use super::Formula;

pub(super) fn render(formula: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    match formula {
        Formula::True => out.write_str("true"),
        Formula::False => out.write_str("false"),
        Formula::Var(name) => out.write_str(name),
        Formula::Not(inner) => {
            out.write_str("!")?;
            render(inner, out)
        }
        Formula::And(ops) => render_chain(ops, " && ", out),
        Formula::Or(ops) => render_chain(ops, " || ", out),
    }
}

fn render_chain(ops: &[Formula], op: &str, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    for _ in 1..ops.len() {
        out.write_str("(")?;
    }
    for (i, operand) in ops.iter().enumerate() {
        if i > 0 {
            out.write_str(op)?;
        }
        render(operand, out)?;
        if i > 0 {
            out.write_str(")")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("formula syntax error at offset {position}: {message}")]
pub struct ParseFormulaError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Not,
    And,
    Or,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseFormulaError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'!' => {
                tokens.push((i, Token::Not));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Token::Open));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::Close));
                i += 1;
            }
            b'&' | b'|' => {
                if bytes.get(i + 1) != Some(&c) {
                    return Err(ParseFormulaError {
                        position: i,
                        message: format!("expected `{0}{0}`", c as char),
                    });
                }
                tokens.push((i, if c == b'&' { Token::And } else { Token::Or }));
                i += 2;
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_owned())));
            }
            _ => {
                return Err(ParseFormulaError {
                    position: i,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn error(&self, message: impl Into<String>) -> ParseFormulaError {
        ParseFormulaError { position: self.offset(), message: message.into() }
    }

    fn disjunction(&mut self) -> Result<Formula, ParseFormulaError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let rhs = self.conjunction()?;
            lhs = match lhs {
                Formula::Or(mut ops) => {
                    ops.push(rhs);
                    Formula::Or(ops)
                }
                other => Formula::Or(vec![other, rhs]),
            };
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseFormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = match lhs {
                Formula::And(mut ops) => {
                    ops.push(rhs);
                    Formula::And(ops)
                }
                other => Formula::And(vec![other, rhs]),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseFormulaError> {
        match self.peek().cloned() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.disjunction()?;
                if self.peek() != Some(&Token::Close) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                Ok(match name.as_str() {
                    "true" => Formula::True,
                    "false" => Formula::False,
                    _ => Formula::Var(name),
                })
            }
            Some(_) => Err(self.error("expected operand")),
            None => Err(self.error("unexpected end of formula")),
        }
    }
}

/// Parse the text form produced by `Display`.
pub fn parse_formula(text: &str) -> Result<Formula, ParseFormulaError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, end: text.len() };
    let formula = parser.disjunction()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("trailing input"));
    }
    Ok(formula)
}
