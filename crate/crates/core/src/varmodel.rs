//! Kconfig-subset variability model extraction.
//!
//! Accepted per file: `config NAME` entries with `bool`/`tristate` (optional
//! prompt), `prompt`, `depends on`, `select NAME [if e]`, `default y|n|m [if e]`
//! and `help` text; `source "path"` includes (relative to the including
//! file) and `#` comments. Expressions use `!`, `&&`, `||`, parentheses,
//! feature names and the constants `y`/`n`.
//!
//! Translation: a tristate `X` adds `!(X && X_MODULE)`; `depends on e` adds
//! `T(X) -> T(e)`; `select Y if e` adds `(T(X) && T(e)) -> T(Y)`, where `T(N)`
//! is `N || N_MODULE` for tristate `N` and `N` otherwise. Defaults are parsed
//! and dropped. `select` is read as a plain implication, not Kconfig's forcing
//! semantics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::build::normalize_path;
use crate::formula::{parse_formula, Assignment, Formula};

pub const MODULE_SUFFIX: &str = "_MODULE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Bool,
    Tristate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePosition {
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariabilityModel {
    pub features: BTreeMap<String, FeatureKind>,
    /// Simplified conjunction of all translated constraints.
    pub constraint: Formula,
    /// Origin of each translated constraint, in translation order.
    pub source_positions: Vec<SourcePosition>,
}

impl Default for VariabilityModel {
    fn default() -> Self {
        VariabilityModel { features: BTreeMap::new(), constraint: Formula::True, source_positions: Vec::new() }
    }
}

impl VariabilityModel {
    /// Feature variables plus the `_MODULE` companion of each tristate, sorted by name.
    pub fn variables(&self) -> Vec<String> {
        let mut vars: Vec<String> = self
            .features
            .iter()
            .flat_map(|(name, kind)| {
                let companion = (*kind == FeatureKind::Tristate).then(|| format!("{name}{MODULE_SUFFIX}"));
                std::iter::once(name.clone()).chain(companion)
            })
            .collect();
        vars.sort();
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VmOptions {
    /// Auto-declare referenced but never-declared names as Bool instead of failing.
    pub allow_undeclared: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum VmError {
    #[error("{file}:{line}: {message}")]
    ParseError { file: String, line: usize, message: String },
    #[error("{file}:{line}: undeclared feature `{name}`")]
    UndeclaredFeature { name: String, file: String, line: usize },
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{variables} variables exceed the enumeration limit of {limit}")]
    TooLarge { variables: usize, limit: usize },
}

/// Pluggable variability-model extractor.
pub trait VarModelExtractor: Send + Sync {
    fn name(&self) -> &str;

    /// `files` are paths relative to `root`, read in order.
    fn extract(&self, root: &Path, files: &[String]) -> Result<VariabilityModel, VmError>;
}

#[derive(Debug, Clone, Default)]
pub struct KconfigExtractor {
    pub options: VmOptions,
}

impl VarModelExtractor for KconfigExtractor {
    fn name(&self) -> &str {
        "kconfig"
    }

    fn extract(&self, root: &Path, files: &[String]) -> Result<VariabilityModel, VmError> {
        extract_varmodel(root, files, &self.options)
    }
}

#[derive(Debug)]
enum Rule {
    Depends(Formula),
    Select { target: String, condition: Formula },
}

#[derive(Debug)]
struct Entry {
    name: String,
    kind: Option<FeatureKind>,
    pos: SourcePosition,
    rules: Vec<(Rule, SourcePosition)>,
    /// Every name referenced by this entry, with where it was referenced.
    references: Vec<(String, SourcePosition)>,
}

const UNSUPPORTED: [&str; 12] = [
    "menu", "endmenu", "choice", "endchoice", "menuconfig", "if", "endif", "comment", "mainmenu", "string", "int",
    "hex",
];

struct Reader<'a> {
    root: &'a Path,
    entries: Vec<Entry>,
    including: Vec<String>,
}

fn parse_error(pos: &SourcePosition, message: impl Into<String>) -> VmError {
    VmError::ParseError { file: pos.file.clone(), line: pos.line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Parse a Kconfig expression, mapping `y`/`n` to constants and recording name references.
fn expression(text: &str, pos: &SourcePosition, refs: &mut Vec<(String, SourcePosition)>) -> Result<Formula, VmError> {
    if text.contains('=') || text.contains('"') {
        return Err(parse_error(pos, format!("unsupported expression `{text}` (comparisons are outside the subset)")));
    }
    let raw = parse_formula(text).map_err(|e| parse_error(pos, format!("expression `{text}`: {e}")))?;
    let mut result = Ok(());
    let f = map_vars(&raw, &mut |name| match name {
        "y" => Formula::True,
        "n" => Formula::False,
        "true" | "false" => unreachable!("parsed as constants"),
        other => {
            if other == "m" {
                result = Err(parse_error(pos, "tristate constant `m` is outside the expression subset"));
            } else if other.starts_with("__") {
                result = Err(parse_error(pos, format!("reserved name `{other}`")));
            }
            refs.push((other.to_owned(), pos.clone()));
            Formula::var(other)
        }
    });
    result.map(|_| f)
}

fn map_vars(f: &Formula, map: &mut impl FnMut(&str) -> Formula) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Var(name) => map(name),
        Formula::Not(inner) => Formula::not(map_vars(inner, map)),
        Formula::And(ops) => Formula::and(ops.iter().map(|o| map_vars(o, map)).collect::<Vec<_>>()),
        Formula::Or(ops) => Formula::or(ops.iter().map(|o| map_vars(o, map)).collect::<Vec<_>>()),
    }
}

/// Split `body [if cond]` at a standalone `if` keyword.
fn split_if(text: &str) -> (&str, Option<&str>) {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(off) = text[search..].find("if") {
        let i = search + off;
        let before = i == 0 || bytes[i - 1].is_ascii_whitespace() || bytes[i - 1] == b')';
        let after = bytes.get(i + 2).is_none_or(|b| b.is_ascii_whitespace() || *b == b'(' || *b == b'!');
        if before && after {
            return (text[..i].trim(), Some(text[i + 2..].trim()));
        }
        search = i + 2;
    }
    (text.trim(), None)
}

fn indentation(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).map(|c| if c == '\t' { 8 } else { 1 }).sum()
}

impl<'a> Reader<'a> {
    fn file(&mut self, rel: &str, included_from: Option<&SourcePosition>) -> Result<(), VmError> {
        if self.including.iter().any(|f| f == rel) {
            let pos = included_from.cloned().unwrap_or(SourcePosition { file: rel.to_owned(), line: 0 });
            return Err(parse_error(&pos, format!("recursive source of `{rel}`")));
        }
        let path = self.root.join(rel);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(source) => match included_from {
                Some(pos) => return Err(parse_error(pos, format!("cannot read sourced file `{rel}`: {source}"))),
                None => return Err(VmError::Io { path, source }),
            },
        };
        self.including.push(rel.to_owned());
        let dir = rel.rsplit_once('/').map_or("", |(d, _)| d).to_owned();

        let mut help_indent: Option<usize> = None;
        let mut current: Option<Entry> = None;
        for (i, raw) in text.lines().enumerate() {
            let pos = SourcePosition { file: rel.to_owned(), line: i + 1 };
            if let Some(min) = help_indent {
                if raw.trim().is_empty() || indentation(raw) > min {
                    continue;
                }
                help_indent = None;
            }
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match keyword {
                "config" => {
                    if !valid_name(rest) || rest.starts_with("__") {
                        return Err(parse_error(&pos, format!("invalid feature name `{rest}`")));
                    }
                    self.finish(current.take())?;
                    current = Some(Entry {
                        name: rest.to_owned(),
                        kind: None,
                        pos: pos.clone(),
                        rules: Vec::new(),
                        references: Vec::new(),
                    });
                }
                "source" => {
                    self.finish(current.take())?;
                    let target = rest
                        .strip_prefix('"')
                        .and_then(|r| r.strip_suffix('"'))
                        .ok_or_else(|| parse_error(&pos, "source expects a quoted path"))?;
                    let resolved = normalize_path(&dir, target)
                        .ok_or_else(|| parse_error(&pos, format!("`{target}` leaves the source tree")))?;
                    self.file(&resolved, Some(&pos))?;
                }
                "help" | "---help---" => {
                    if current.is_none() {
                        return Err(parse_error(&pos, "help outside a config entry"));
                    }
                    help_indent = Some(indentation(raw));
                }
                k if UNSUPPORTED.contains(&k) => {
                    return Err(parse_error(
                        &pos,
                        format!("`{k}` is outside the supported Kconfig subset (see README, variability models)"),
                    ));
                }
                _ => {
                    let Some(entry) = current.as_mut() else {
                        return Err(parse_error(&pos, format!("`{keyword}` outside a config entry")));
                    };
                    Self::attribute(entry, keyword, rest, &pos)?;
                }
            }
        }
        self.finish(current.take())?;
        self.including.pop();
        Ok(())
    }

    fn attribute(entry: &mut Entry, keyword: &str, rest: &str, pos: &SourcePosition) -> Result<(), VmError> {
        let quoted_prompt = |text: &str| text.is_empty() || (text.starts_with('"') && text.ends_with('"') && text.len() >= 2);
        match keyword {
            "bool" | "tristate" => {
                let kind = if keyword == "bool" { FeatureKind::Bool } else { FeatureKind::Tristate };
                if entry.kind.is_some_and(|k| k != kind) {
                    return Err(parse_error(pos, format!("conflicting types for `{}`", entry.name)));
                }
                let (prompt, cond) = split_if(rest);
                if !quoted_prompt(prompt) {
                    return Err(parse_error(pos, "prompt must be a quoted string"));
                }
                if let Some(c) = cond {
                    expression(c, pos, &mut entry.references)?;
                }
                entry.kind = Some(kind);
            }
            "prompt" => {
                let (prompt, cond) = split_if(rest);
                if !quoted_prompt(prompt) || prompt.is_empty() {
                    return Err(parse_error(pos, "prompt must be a quoted string"));
                }
                if let Some(c) = cond {
                    expression(c, pos, &mut entry.references)?;
                }
            }
            "depends" => {
                let Some(expr) = rest.strip_prefix("on").filter(|e| e.starts_with(char::is_whitespace)) else {
                    return Err(parse_error(pos, "expected `depends on <expr>`"));
                };
                let f = expression(expr.trim(), pos, &mut entry.references)?;
                entry.rules.push((Rule::Depends(f), pos.clone()));
            }
            "select" => {
                let (target, cond) = split_if(rest);
                if !valid_name(target) || target.starts_with("__") || matches!(target, "y" | "n" | "m") {
                    return Err(parse_error(pos, format!("invalid select target `{target}`")));
                }
                let condition = match cond {
                    Some(c) => expression(c, pos, &mut entry.references)?,
                    None => Formula::True,
                };
                entry.references.push((target.to_owned(), pos.clone()));
                entry.rules.push((Rule::Select { target: target.to_owned(), condition }, pos.clone()));
            }
            "default" => {
                let (value, cond) = split_if(rest);
                if !matches!(value, "y" | "n" | "m") {
                    return Err(parse_error(pos, format!("unsupported default value `{value}`")));
                }
                if let Some(c) = cond {
                    expression(c, pos, &mut entry.references)?;
                }
            }
            other => return Err(parse_error(pos, format!("unknown attribute `{other}`"))),
        }
        Ok(())
    }

    fn finish(&mut self, entry: Option<Entry>) -> Result<(), VmError> {
        if let Some(entry) = entry {
            if entry.kind.is_none() && !self.entries.iter().any(|e| e.name == entry.name && e.kind.is_some()) {
                return Err(parse_error(&entry.pos, format!("config `{}` has no bool/tristate type", entry.name)));
            }
            self.entries.push(entry);
        }
        Ok(())
    }
}

/// Parse and translate `files` (relative to `root`, in order) into one model.
pub fn extract_varmodel(root: &Path, files: &[String], opts: &VmOptions) -> Result<VariabilityModel, VmError> {
    let mut reader = Reader { root, entries: Vec::new(), including: Vec::new() };
    for file in files {
        reader.file(file, None)?;
    }
    let entries = reader.entries;

    let mut features: BTreeMap<String, FeatureKind> = BTreeMap::new();
    for e in &entries {
        if let Some(kind) = e.kind {
            if features.insert(e.name.clone(), kind).is_some_and(|k| k != kind) {
                return Err(parse_error(&e.pos, format!("conflicting types for `{}`", e.name)));
            }
        }
    }
    for e in &entries {
        for (name, pos) in &e.references {
            if features.contains_key(name) {
                continue;
            }
            if !opts.allow_undeclared {
                return Err(VmError::UndeclaredFeature { name: name.clone(), file: pos.file.clone(), line: pos.line });
            }
            log::warn!("{}:{}: undeclared feature `{}` declared as bool", pos.file, pos.line, name);
            features.insert(name.clone(), FeatureKind::Bool);
        }
    }

    let t = |name: &str| translate_name(&features, name);
    let mut conjuncts = Vec::new();
    let mut source_positions = Vec::new();
    let mut excluded: Vec<&str> = Vec::new();
    for e in &entries {
        if e.kind == Some(FeatureKind::Tristate) && !excluded.contains(&e.name.as_str()) {
            excluded.push(&e.name);
            conjuncts.push(Formula::not(Formula::and([
                Formula::var(&e.name),
                Formula::var(format!("{}{MODULE_SUFFIX}", e.name)),
            ])));
            source_positions.push(e.pos.clone());
        }
        for (rule, pos) in &e.rules {
            let f = match rule {
                Rule::Depends(expr) => Formula::implies(t(&e.name), map_vars(expr, &mut |n| t(n))),
                Rule::Select { target, condition } => Formula::implies(
                    Formula::and([t(&e.name), map_vars(condition, &mut |n| t(n))]),
                    t(target),
                ),
            };
            conjuncts.push(f);
            source_positions.push(pos.clone());
        }
    }
    let constraint = Formula::and(conjuncts).simplify();
    Ok(VariabilityModel { features, constraint, source_positions })
}

fn translate_name(features: &BTreeMap<String, FeatureKind>, name: &str) -> Formula {
    match features.get(name) {
        Some(FeatureKind::Tristate) => {
            Formula::or([Formula::var(name), Formula::var(format!("{name}{MODULE_SUFFIX}"))])
        }
        _ => Formula::var(name),
    }
}

/// All assignments over [`VariabilityModel::variables`] satisfying the constraint,
/// enumerated with the first variable most significant and `false` before `true`.
pub fn valid_configurations(vm: &VariabilityModel, bound: usize) -> Result<Vec<Assignment>, VmError> {
    let vars = vm.variables();
    let limit = 2 * bound;
    if vars.len() > limit || vars.len() >= usize::BITS as usize {
        return Err(VmError::TooLarge { variables: vars.len(), limit });
    }
    let n = vars.len();
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << n) {
        let a: Assignment = vars.iter().enumerate().map(|(i, v)| (v.clone(), bits >> (n - 1 - i) & 1 == 1)).collect();
        if vm.constraint.eval(&a).expect("constraint ranges over model variables") {
            out.push(a);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(files: &[(&str, &str)]) -> Result<VariabilityModel, VmError> {
        model_with(files, &VmOptions::default())
    }

    fn model_with(files: &[(&str, &str)], opts: &VmOptions) -> Result<VariabilityModel, VmError> {
        let dir = tempfile::tempdir().unwrap();
        for (path, text) in files {
            let p = dir.path().join(path);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, text).unwrap();
        }
        extract_varmodel(dir.path(), &[files[0].0.to_owned()], opts)
    }

    fn v(n: &str) -> Formula {
        Formula::var(n)
    }

    #[test]
    fn depends_becomes_implication() {
        let m = model(&[("Kconfig", "config A\n\tbool\nconfig B\n\tbool \"B\"\n\tdepends on A\n")]).unwrap();
        assert_eq!(m.constraint, Formula::implies(v("B"), v("A")).simplify());
        assert_eq!(m.source_positions, vec![SourcePosition { file: "Kconfig".into(), line: 5 }]);
    }

    #[test]
    fn tristate_exclusion() {
        let m = model(&[("Kconfig", "config X\n\ttristate\n")]).unwrap();
        assert_eq!(m.constraint, Formula::not(Formula::and([v("X"), v("X_MODULE")])));
        assert_eq!(m.variables(), vec!["X", "X_MODULE"]);
    }

    #[test]
    fn select_with_condition_and_tristates() {
        let text = "config A\n\ttristate\n\tselect B if C\nconfig B\n\ttristate\nconfig C\n\tbool\n";
        let m = model(&[("Kconfig", text)]).unwrap();
        let ta = Formula::or([v("A"), v("A_MODULE")]);
        let tb = Formula::or([v("B"), v("B_MODULE")]);
        let expected = Formula::and([
            Formula::not(Formula::and([v("A"), v("A_MODULE")])),
            Formula::implies(Formula::and([ta, v("C")]), tb),
            Formula::not(Formula::and([v("B"), v("B_MODULE")])),
        ])
        .simplify();
        assert_eq!(m.constraint, expected);
        assert_eq!(m.source_positions.len(), 3);
    }

    #[test]
    fn defaults_and_help_add_nothing() {
        let text = "config A\n\tbool \"a\"\n\tdefault y if B\n\thelp\n\t  depends on B\n\t  menu\n\nconfig B\n\tbool\n";
        let m = model(&[("Kconfig", text)]).unwrap();
        assert_eq!(m.constraint, Formula::True);
        assert_eq!(m.features.len(), 2);
    }

    #[test]
    fn source_resolves_relative_to_including_file() {
        let m = model(&[
            ("Kconfig", "source \"sub/Kconfig\"\nconfig A\n\tbool\n\tdepends on B\n"),
            ("sub/Kconfig", "source \"more/Kconfig\"\n"),
            ("sub/more/Kconfig", "config B\n\tbool\n"),
        ])
        .unwrap();
        assert_eq!(m.features.keys().collect::<Vec<_>>(), vec!["A", "B"]);
    }

    #[test]
    fn undeclared_references() {
        let files = [("Kconfig", "config A\n\tbool\n\tdepends on GHOST\n")];
        match model(&files) {
            Err(VmError::UndeclaredFeature { name, line, .. }) => assert_eq!((name.as_str(), line), ("GHOST", 3)),
            other => panic!("{other:?}"),
        }
        let m = model_with(&files, &VmOptions { allow_undeclared: true }).unwrap();
        assert_eq!(m.features["GHOST"], FeatureKind::Bool);
    }

    #[test]
    fn unsupported_constructs_are_parse_errors() {
        for text in ["menu \"x\"\n", "choice\n", "config A\n\tstring\n", "config A\n\tbool\n\tdepends on B = y\n", "\tbool\n"] {
            assert!(matches!(model(&[("Kconfig", text)]), Err(VmError::ParseError { .. })), "{text:?}");
        }
        assert!(matches!(model(&[("Kconfig", "config __X\n\tbool\n")]), Err(VmError::ParseError { line: 1, .. })));
        assert!(matches!(model(&[("Kconfig", "source \"Kconfig\"\n")]), Err(VmError::ParseError { .. })));
    }

    #[test]
    fn y_and_n_are_constants() {
        let m = model(&[("Kconfig", "config A\n\tbool\n\tdepends on (n || B) && y\nconfig B\n\tbool\n")]).unwrap();
        assert_eq!(m.constraint, Formula::implies(v("A"), v("B")).simplify());
    }

    #[test]
    fn split_if_keyword() {
        assert_eq!(split_if("B if C && D"), ("B", Some("C && D")));
        assert_eq!(split_if("IFACE"), ("IFACE", None));
        assert_eq!(split_if("\"diff\" if(X)"), ("\"diff\"", Some("(X)")));
    }

    #[test]
    fn enumeration() {
        assert_eq!(valid_configurations(&VariabilityModel::default(), 4).unwrap(), vec![Assignment::new()]);
        let mut vm = VariabilityModel::default();
        vm.features.insert("A".into(), FeatureKind::Bool);
        vm.features.insert("B".into(), FeatureKind::Bool);
        vm.constraint = Formula::implies(v("A"), v("B"));
        let got: Vec<(bool, bool)> = valid_configurations(&vm, 4)
            .unwrap()
            .iter()
            .map(|a| (a.get("A").unwrap(), a.get("B").unwrap()))
            .collect();
        assert_eq!(got, vec![(false, false), (false, true), (true, true)]);
        assert!(matches!(valid_configurations(&vm, 0), Err(VmError::TooLarge { .. })));
    }
}
