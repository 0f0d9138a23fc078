//! Line splicing and comment/string scanning to locate preprocessor directives.

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Directive {
    pub keyword: String,
    /// Directive text after the keyword with comments replaced by spaces, trimmed.
    pub body: String,
    pub first_line: usize,
    pub last_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum State {
    Code,
    BlockComment,
    RawString(String),
}

pub(crate) struct Scan {
    pub directives: Vec<Directive>,
    pub line_count: usize,
}

struct LogicalLine {
    text: String,
    first_line: usize,
    last_line: usize,
}

fn logical_lines(source: &str) -> (Vec<LogicalLine>, usize) {
    let mut physical: Vec<&str> = source.split('\n').collect();
    if source.ends_with('\n') || source.is_empty() {
        physical.pop();
    }
    let count = physical.len();
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut start = 1;
    for (i, raw) in physical.iter().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if buf.is_empty() {
            start = i + 1;
        }
        if let Some(spliced) = line.strip_suffix('\\') {
            buf.push_str(spliced);
            if i + 1 < count {
                continue;
            }
        } else {
            buf.push_str(line);
        }
        out.push(LogicalLine { text: std::mem::take(&mut buf), first_line: start, last_line: i + 1 });
    }
    (out, count)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Remove comments from one logical line, tracking multi-line comment and raw-string state.
fn clean_line(text: &str, state: &mut State) -> String {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut copied_to = 0;
    // Flush text[copied_to..upto] into out.
    macro_rules! flush {
        ($upto:expr) => {
            out.push_str(&text[copied_to..$upto]);
        };
    }
    while i < b.len() {
        match state {
            State::BlockComment => match find(b, i, b"*/") {
                Some(end) => {
                    i = end + 2;
                    copied_to = i;
                    out.push(' ');
                    *state = State::Code;
                }
                None => return out,
            },
            State::RawString(delim) => {
                let terminator = format!("){delim}\"");
                match find(b, i, terminator.as_bytes()) {
                    Some(end) => {
                        i = end + terminator.len();
                        copied_to = i;
                        out.push_str("\"\"");
                        *state = State::Code;
                    }
                    None => return out,
                }
            }
            State::Code => match b[i] {
                b'/' if b.get(i + 1) == Some(&b'*') => {
                    flush!(i);
                    out.push(' ');
                    i += 2;
                    copied_to = i;
                    *state = State::BlockComment;
                }
                b'/' if b.get(i + 1) == Some(&b'/') => {
                    flush!(i);
                    return out;
                }
                b'"' if i > 0 && b[i - 1] == b'R' && raw_prefix_ok(b, i - 1) => {
                    let open = b[i + 1..].iter().position(|&c| c == b'(').map(|p| i + 1 + p);
                    match open {
                        Some(open) if open - (i + 1) <= 16 => {
                            flush!(i - 1);
                            let delim = text[i + 1..open].to_owned();
                            i = open + 1;
                            copied_to = i;
                            *state = State::RawString(delim);
                        }
                        _ => i = skip_quoted(b, i),
                    }
                }
                b'"' => i = skip_quoted(b, i),
                b'\'' if i > 0 && b[i - 1].is_ascii_hexdigit() && !prefix_is_char_prefix(b, i) => i += 1,
                b'\'' => i = skip_quoted(b, i),
                _ => i += 1,
            },
        }
    }
    if *state == State::Code {
        flush!(b.len());
    }
    out
}

/// `R` at `r` starts a raw string literal prefix (`R`, `LR`, `uR`, `UR`, `u8R`).
fn raw_prefix_ok(b: &[u8], r: usize) -> bool {
    let mut start = r;
    while start > 0 && is_ident_byte(b[start - 1]) {
        start -= 1;
    }
    matches!(&b[start..r], b"" | b"L" | b"u" | b"U" | b"u8")
}

/// `'` at `q` preceded by a character-literal prefix such as `u8'`.
fn prefix_is_char_prefix(b: &[u8], q: usize) -> bool {
    let mut start = q;
    while start > 0 && is_ident_byte(b[start - 1]) {
        start -= 1;
    }
    matches!(&b[start..q], b"u8")
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

fn find(haystack: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    haystack[from..].windows(needle.len()).position(|w| w == needle).map(|p| from + p)
}

pub(crate) fn scan(source: &str) -> Scan {
    let (lines, line_count) = logical_lines(source);
    let mut state = State::Code;
    let mut directives = Vec::new();
    for line in lines {
        let starts_in_code = state == State::Code;
        let cleaned = clean_line(&line.text, &mut state);
        if !starts_in_code {
            continue;
        }
        let trimmed = cleaned.trim_start();
        let Some(rest) = trimmed.strip_prefix('#') else {
            continue;
        };
        let rest = rest.trim_start();
        let kw_len = rest.bytes().take_while(|&c| is_ident_byte(c)).count();
        if kw_len == 0 {
            continue;
        }
        directives.push(Directive {
            keyword: rest[..kw_len].to_owned(),
            body: rest[kw_len..].trim().to_owned(),
            first_line: line.first_line,
            last_line: line.last_line,
        });
    }
    Scan { directives, line_count }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keywords(src: &str) -> Vec<(String, String, usize, usize)> {
        scan(src)
            .directives
            .into_iter()
            .map(|d| (d.keyword, d.body, d.first_line, d.last_line))
            .collect()
    }

    #[test]
    fn splices_continuations() {
        let d = keywords("#if defined(A) && \\\n    defined(B)\nx\n#endif\n");
        assert_eq!(d[0], ("if".into(), "defined(A) &&     defined(B)".into(), 1, 2));
        assert_eq!(d[1], ("endif".into(), "".into(), 4, 4));
    }

    #[test]
    fn ignores_block_and_line_comments() {
        let src = "/*\n#ifdef A\n*/\n// #ifdef B\nint x; /* #if C */\n#ifdef D /* trailing\n comment */\n#endif\n";
        let d = keywords(src);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, "ifdef");
        assert_eq!(d[0].1, "D");
        assert_eq!(d[1].2, 8);
    }

    #[test]
    fn ignores_strings() {
        let src = "const char *s = \"/* not a comment\";\n#ifdef A\nchar c = '\"';\n#endif\nconst char *t = \"x\\\n#ifdef B\";\n";
        let d = keywords(src);
        assert_eq!(d.iter().map(|d| d.0.as_str()).collect::<Vec<_>>(), vec!["ifdef", "endif"]);
    }

    #[test]
    fn raw_strings_span_lines() {
        let src = "auto s = R\"x(\n#ifdef A\n)x\";\n#ifdef B\n#endif\n";
        let d = keywords(src);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].1, "B");
    }

    #[test]
    fn digit_separators_are_not_char_literals() {
        let d = keywords("int x = 1'000; /* c */\n#ifdef A\n#endif\n");
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn hash_with_spacing_and_crlf() {
        let d = keywords("  #  ifdef  A\r\n# endif\r\n");
        assert_eq!(d[0], ("ifdef".into(), "A".into(), 1, 1));
        assert_eq!(scan("a\r\nb").line_count, 2);
        assert_eq!(scan("").line_count, 0);
    }
}
