//! `#if` expression parsing.
//!
//! The supported subset is `defined(X)`, `defined X`, identifiers, integer
//! literals, `!`, `&&`, `||` and parentheses. Any maximal operand of `&&`/`||`
//! outside that subset becomes an opaque atom `U_<fnv1a64 of its trimmed text>`.

use std::collections::BTreeSet;

use crate::formula::Formula;

use super::ExtractOptions;

/// Prefix of opaque-atom variable names.
pub const OPAQUE_PREFIX: &str = "U_";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ExpressionError(pub String);

/// `true` for names of the form `U_` + 16 lowercase hex digits.
pub fn is_opaque_atom(name: &str) -> bool {
    name.strip_prefix(OPAQUE_PREFIX).is_some_and(|hex| {
        hex.len() == 16 && hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    })
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn opaque_atom_name(source_text: &str) -> String {
    format!("{OPAQUE_PREFIX}{:016x}", fnv1a64(source_text.trim().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ident,
    Number,
    Literal,
    Open,
    Close,
    Not,
    AndAnd,
    OrOr,
    /// `?`, `:` or `,`: operators binding weaker than `||`.
    Weak,
    Other,
}

#[derive(Debug, Clone, Copy)]
struct Tok {
    kind: Kind,
    start: usize,
    end: usize,
}

fn lex(text: &str) -> Vec<Tok> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' | b'\x0b' | b'\x0c' => {
                i += 1;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] >= 0x80) {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'\'' || b[i] == b'"') && is_literal_prefix(&text[start..i]) {
                    i = skip_quoted(b, i);
                    Kind::Literal
                } else {
                    Kind::Ident
                }
            }
            c if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                i += 1;
                while i < b.len() {
                    let d = b[i];
                    let exponent_sign = (d == b'+' || d == b'-') && matches!(b[i - 1], b'e' | b'E' | b'p' | b'P');
                    if !(exponent_sign || d.is_ascii_alphanumeric() || d == b'_' || d == b'.' || d == b'\'') {
                        break;
                    }
                    i += 1;
                }
                Kind::Number
            }
            b'\'' | b'"' => {
                i = skip_quoted(b, i);
                Kind::Literal
            }
            b'(' => {
                i += 1;
                Kind::Open
            }
            b')' => {
                i += 1;
                Kind::Close
            }
            b'&' if b.get(i + 1) == Some(&b'&') => {
                i += 2;
                Kind::AndAnd
            }
            b'|' if b.get(i + 1) == Some(&b'|') => {
                i += 2;
                Kind::OrOr
            }
            b'!' if b.get(i + 1) != Some(&b'=') => {
                i += 1;
                Kind::Not
            }
            b'?' | b':' | b',' => {
                i += 1;
                Kind::Weak
            }
            _ => {
                // Multi-character operators other than && and || never matter
                // for splitting; one token per character is enough.
                i += text[i..].chars().next().map_or(1, char::len_utf8);
                Kind::Other
            }
        };
        out.push(Tok { kind, start, end: i });
    }
    out
}

fn is_literal_prefix(s: &str) -> bool {
    matches!(s, "L" | "u" | "U" | "u8")
}

fn skip_quoted(b: &[u8], open: usize) -> usize {
    let quote = b[open];
    let mut i = open + 1;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 2,
            c if c == quote => return i + 1,
            _ => i += 1,
        }
    }
    b.len()
}

struct ConditionParser<'a> {
    text: &'a str,
    opts: &'a ExtractOptions,
    atoms: BTreeSet<String>,
}

impl<'a> ConditionParser<'a> {
    fn slice(&self, toks: &[Tok]) -> &'a str {
        match (toks.first(), toks.last()) {
            (Some(first), Some(last)) => self.text[first.start..last.end].trim(),
            _ => "",
        }
    }

    fn opaque(&mut self, toks: &[Tok]) -> Formula {
        let name = opaque_atom_name(self.slice(toks));
        self.atoms.insert(name.clone());
        Formula::Var(name)
    }

    /// Index of the `)` matching the `(` at `open`.
    fn matching_close(toks: &[Tok], open: usize) -> usize {
        let mut depth = 0usize;
        for (i, t) in toks.iter().enumerate().skip(open) {
            match t.kind {
                Kind::Open => depth += 1,
                Kind::Close => {
                    depth -= 1;
                    if depth == 0 {
                        return i;
                    }
                }
                _ => {}
            }
        }
        unreachable!("parentheses are checked before parsing")
    }

    /// Split `toks` on top-level tokens of `sep`.
    fn split(toks: &[Tok], sep: Kind) -> Vec<&[Tok]> {
        let mut parts = Vec::new();
        let mut depth = 0usize;
        let mut last = 0;
        for (i, t) in toks.iter().enumerate() {
            match t.kind {
                Kind::Open => depth += 1,
                Kind::Close => depth -= 1,
                k if k == sep && depth == 0 => {
                    parts.push(&toks[last..i]);
                    last = i + 1;
                }
                _ => {}
            }
        }
        parts.push(&toks[last..]);
        parts
    }

    fn expression(&mut self, toks: &[Tok]) -> Result<Formula, ExpressionError> {
        if toks.is_empty() {
            return Err(ExpressionError("empty expression".into()));
        }
        let mut depth = 0usize;
        for t in toks {
            match t.kind {
                Kind::Open => depth += 1,
                Kind::Close => depth -= 1,
                Kind::Weak if depth == 0 => return Ok(self.opaque(toks)),
                _ => {}
            }
        }
        let mut disjuncts = Vec::new();
        for part in Self::split(toks, Kind::OrOr) {
            let mut conjuncts = Vec::new();
            for operand in Self::split(part, Kind::AndAnd) {
                if operand.is_empty() {
                    return Err(ExpressionError("missing operand".into()));
                }
                let f = match self.supported(operand)? {
                    Some(f) => f,
                    None => self.opaque(operand),
                };
                conjuncts.push(f);
            }
            disjuncts.push(Formula::and(conjuncts));
        }
        Ok(Formula::or(disjuncts))
    }

    /// Parse `toks` under the supported subset, `None` when it falls outside.
    fn supported(&mut self, toks: &[Tok]) -> Result<Option<Formula>, ExpressionError> {
        let Some(first) = toks.first() else {
            return Err(ExpressionError("missing operand".into()));
        };
        match first.kind {
            Kind::Not => Ok(self.supported(&toks[1..])?.map(Formula::not)),
            Kind::Open => {
                let close = Self::matching_close(toks, 0);
                if close + 1 != toks.len() {
                    return Ok(None);
                }
                self.expression(&toks[1..close]).map(Some)
            }
            Kind::Ident if &self.text[first.start..first.end] == "defined" => self.defined(toks),
            Kind::Ident if toks.len() == 1 => Ok(self.identifier(toks)),
            Kind::Number if toks.len() == 1 => Ok(integer_value(&self.text[first.start..first.end])
                .map(|v| Formula::constant(v != 0))),
            _ => Ok(None),
        }
    }

    fn defined(&mut self, toks: &[Tok]) -> Result<Option<Formula>, ExpressionError> {
        let malformed = || ExpressionError("malformed `defined` operator".into());
        let name_tok = match toks.get(1).map(|t| t.kind) {
            Some(Kind::Ident) => {
                if toks.len() != 2 {
                    return Ok(None);
                }
                &toks[1..2]
            }
            Some(Kind::Open) => {
                if toks.len() < 4 || toks[2].kind != Kind::Ident || toks[3].kind != Kind::Close {
                    return Err(malformed());
                }
                if toks.len() != 4 {
                    return Ok(None);
                }
                &toks[2..3]
            }
            _ => return Err(malformed()),
        };
        Ok(Some(match self.canonical(&self.text[name_tok[0].start..name_tok[0].end]) {
            Some(name) => Formula::Var(name),
            None => self.opaque(toks),
        }))
    }

    fn identifier(&mut self, toks: &[Tok]) -> Option<Formula> {
        let raw = &self.text[toks[0].start..toks[0].end];
        Some(match self.canonical(raw) {
            Some(name) => Formula::Var(name),
            None => self.opaque(toks),
        })
    }

    /// Strip the configured prefix; names in the reserved `__` namespace have no canonical form.
    fn canonical(&self, raw: &str) -> Option<String> {
        let name = match raw.strip_prefix(self.opts.prefix.as_str()) {
            Some(rest) if !rest.is_empty() && !self.opts.prefix.is_empty() => rest,
            _ => raw,
        };
        if name.starts_with("__") {
            None
        } else {
            Some(name.to_owned())
        }
    }
}

fn integer_value(text: &str) -> Option<u64> {
    let digits = text.trim_end_matches(['u', 'U', 'l', 'L']).replace('\'', "");
    if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = digits.strip_prefix("0b").or_else(|| digits.strip_prefix("0B")) {
        u64::from_str_radix(bin, 2).ok()
    } else if digits.len() > 1 && digits.starts_with('0') {
        u64::from_str_radix(&digits[1..], 8).ok()
    } else {
        digits.parse().ok()
    }
}

/// Parse an `#if` expression, also returning the opaque atoms it introduced.
pub(crate) fn parse_condition(
    text: &str,
    opts: &ExtractOptions,
) -> Result<(Formula, BTreeSet<String>), ExpressionError> {
    let toks = lex(text);
    let mut depth: isize = 0;
    for t in &toks {
        match t.kind {
            Kind::Open => depth += 1,
            Kind::Close => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return Err(ExpressionError("unbalanced parentheses".into()));
        }
    }
    if depth != 0 {
        return Err(ExpressionError("unbalanced parentheses".into()));
    }
    let mut parser = ConditionParser { text, opts, atoms: BTreeSet::new() };
    let formula = parser.expression(&toks)?.simplify();
    let mut atoms = parser.atoms;
    atoms.retain(|a| formula.contains_var(a));
    Ok((formula, atoms))
}

/// Translate the expression of an `#if`/`#elif` directive into a formula.
pub fn parse_cpp_condition(text: &str, opts: &ExtractOptions) -> Result<Formula, ExpressionError> {
    parse_condition(text, opts).map(|(f, _)| f)
}
