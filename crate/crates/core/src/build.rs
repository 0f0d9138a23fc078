//! Kbuild-subset build model extraction.
//!
//! Supported per line: `obj-y`, `obj-m` and `obj-$(CONFIG_X)` lists (with
//! `+=`, `:=` or `=`), whose items are objects (`foo.o`, mapped to `foo.c`) or
//! subdirectories (`net/`, recursed into); and the conditionals `ifeq`/`ifneq`
//! on `$(CONFIG_X)` against `y`, `m` or the empty string, `ifdef`/`ifndef
//! CONFIG_X`, `else` (optionally followed by another conditional) and `endif`.
//! Anything else is recorded as unresolved and skipped. Make itself is never
//! evaluated.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::formula::Formula;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    pub prefix: String,
    /// Encode `$(CONFIG_X)` as `X || X_MODULE` instead of `X`.
    pub tristate: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { prefix: "CONFIG_".into(), tristate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unresolved {
    pub file: String,
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildModel {
    pub entries: BTreeMap<String, Formula>,
    pub unresolved: Vec<Unresolved>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcLookup {
    pub pc: Formula,
    /// `false` when the file had no entry and the default was used.
    pub found: bool,
}

impl BuildModel {
    pub fn lookup_pc(&self, file: &str, missing_default: bool) -> PcLookup {
        match self.entries.get(file) {
            Some(pc) => PcLookup { pc: pc.clone(), found: true },
            None => PcLookup { pc: Formula::constant(missing_default), found: false },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("no Makefile or Kbuild in {}", .0.display())]
    MissingMakefile(PathBuf),
    #[error("{file}:{line}: unbalanced conditional: {reason}")]
    UnbalancedConditional { file: String, line: usize, reason: String },
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Pluggable build-model extractor. Alternative implementations must produce the same model shape.
pub trait BuildExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn extract(&self, root: &Path) -> Result<BuildModel, BuildError>;
}

#[derive(Debug, Clone, Default)]
pub struct KbuildExtractor {
    pub options: BuildOptions,
}

impl BuildExtractor for KbuildExtractor {
    fn name(&self) -> &str {
        "kbuild"
    }

    fn extract(&self, root: &Path) -> Result<BuildModel, BuildError> {
        extract_build(root, &self.options)
    }
}

/// Names of files the Kbuild extractor may read, in lookup priority order.
pub const BUILD_FILE_NAMES: [&str; 2] = ["Kbuild", "Makefile"];

pub fn extract_build(root: &Path, opts: &BuildOptions) -> Result<BuildModel, BuildError> {
    let mut miner = Miner { root, opts, entries: BTreeMap::new(), unresolved: Vec::new(), visiting: Vec::new() };
    let Some(makefile) = miner.build_file("") else {
        return Err(BuildError::MissingMakefile(root.to_path_buf()));
    };
    miner.directory("", &makefile, &Formula::True)?;
    let entries = miner
        .entries
        .into_iter()
        .map(|(path, conds)| (path, Formula::or(conds).simplify()))
        .collect();
    let mut unresolved = miner.unresolved;
    unresolved.sort();
    Ok(BuildModel { entries, unresolved })
}

/// Join relative path segments, resolving `.` and `..`; `None` when escaping the root.
pub fn normalize_path(base: &str, rel: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for seg in base.split('/').chain(rel.split('/')) {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

struct Miner<'a> {
    root: &'a Path,
    opts: &'a BuildOptions,
    entries: BTreeMap<String, Vec<Formula>>,
    unresolved: Vec<Unresolved>,
    visiting: Vec<String>,
}

struct OpenConditional {
    line: usize,
    /// Conditions of the branches seen so far.
    branches: Vec<Formula>,
    current: Formula,
    seen_else: bool,
}

enum Conditional {
    Open(Formula),
    Unsupported,
}

impl<'a> Miner<'a> {
    fn build_file(&self, dir: &str) -> Option<String> {
        BUILD_FILE_NAMES.iter().find_map(|name| {
            let rel = if dir.is_empty() { (*name).to_owned() } else { format!("{dir}/{name}") };
            self.root.join(&rel).is_file().then_some(rel)
        })
    }

    fn unresolved(&mut self, file: &str, line: usize, text: impl Into<String>) {
        self.unresolved.push(Unresolved { file: file.to_owned(), line, text: text.into() });
    }

    fn feature(&self, name: &str) -> Option<String> {
        let rest = name.strip_prefix(self.opts.prefix.as_str())?;
        (!rest.is_empty() && !rest.starts_with("__") && rest.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'))
            .then(|| rest.to_owned())
    }

    /// `X || X_MODULE` in tristate mode, `X` otherwise.
    fn selected(&self, feature: &str) -> Formula {
        if self.opts.tristate {
            Formula::or([Formula::var(feature), Formula::var(format!("{feature}_MODULE"))])
        } else {
            Formula::var(feature)
        }
    }

    fn config_reference(&self, text: &str) -> Option<String> {
        let inner = text.trim().strip_prefix("$(")?.strip_suffix(')')?;
        self.feature(inner)
    }

    fn parse_conditional(&self, keyword: &str, args: &str) -> Conditional {
        let args = args.trim();
        match keyword {
            "ifdef" | "ifndef" => match self.feature(args) {
                Some(x) => {
                    let f = self.selected(&x);
                    Conditional::Open(if keyword == "ifdef" { f } else { Formula::not(f) })
                }
                None => Conditional::Unsupported,
            },
            "ifeq" | "ifneq" => {
                let Some(inner) = args.strip_prefix('(').and_then(|a| a.strip_suffix(')')) else {
                    return Conditional::Unsupported;
                };
                let Some((lhs, rhs)) = inner.split_once(',') else {
                    return Conditional::Unsupported;
                };
                let (var, value) = match (self.config_reference(lhs), self.config_reference(rhs)) {
                    (Some(x), None) => (x, rhs.trim()),
                    (None, Some(x)) => (x, lhs.trim()),
                    _ => return Conditional::Unsupported,
                };
                let f = match value {
                    "y" => Formula::var(&var),
                    "m" if self.opts.tristate => Formula::var(format!("{var}_MODULE")),
                    "m" => Formula::False,
                    "" => Formula::not(self.selected(&var)),
                    _ => return Conditional::Unsupported,
                };
                Conditional::Open(if keyword == "ifeq" { f } else { Formula::not(f) })
            }
            _ => Conditional::Unsupported,
        }
    }

    fn directory(&mut self, dir: &str, makefile: &str, dir_condition: &Formula) -> Result<(), BuildError> {
        let path = self.root.join(makefile);
        let text = fs::read_to_string(&path).map_err(|source| BuildError::Io { path, source })?;
        self.visiting.push(dir.to_owned());
        let mut stack: Vec<OpenConditional> = Vec::new();

        for (line_no, line) in logical_lines(&text) {
            let line = strip_comment(&line);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (keyword, rest) = split_keyword(line);
            match keyword {
                "ifeq" | "ifneq" | "ifdef" | "ifndef" => {
                    let current = match self.parse_conditional(keyword, rest) {
                        Conditional::Open(f) => f,
                        Conditional::Unsupported => {
                            self.unresolved(makefile, line_no, line);
                            Formula::True
                        }
                    };
                    stack.push(OpenConditional { line: line_no, branches: vec![current.clone()], current, seen_else: false });
                }
                "else" => {
                    let unbalanced = |reason: &str| BuildError::UnbalancedConditional {
                        file: makefile.to_owned(),
                        line: line_no,
                        reason: reason.to_owned(),
                    };
                    let Some(open) = stack.last() else {
                        return Err(unbalanced("else without conditional"));
                    };
                    if open.seen_else {
                        return Err(unbalanced("else after final else"));
                    }
                    let (inner_kw, inner_rest) = split_keyword(rest.trim());
                    let prior = Formula::not(Formula::or(open.branches.clone()));
                    let (current, extra, is_final) = if rest.trim().is_empty() {
                        (prior, None, true)
                    } else {
                        match self.parse_conditional(inner_kw, inner_rest) {
                            Conditional::Open(f) => (Formula::and([f.clone(), prior]), Some(f), false),
                            Conditional::Unsupported => {
                                self.unresolved(makefile, line_no, line);
                                (prior, Some(Formula::True), false)
                            }
                        }
                    };
                    let open = stack.last_mut().expect("checked above");
                    open.current = current;
                    open.seen_else = is_final;
                    if let Some(f) = extra {
                        open.branches.push(f);
                    }
                }
                "endif" => {
                    if stack.pop().is_none() {
                        return Err(BuildError::UnbalancedConditional {
                            file: makefile.to_owned(),
                            line: line_no,
                            reason: "endif without conditional".into(),
                        });
                    }
                }
                _ => {
                    let guard = Formula::and(
                        std::iter::once(dir_condition.clone()).chain(stack.iter().map(|c| c.current.clone())),
                    );
                    match self.object_list(line) {
                        Some((list_cond, items)) => {
                            let cond = Formula::and([guard, list_cond]).simplify();
                            for item in items {
                                self.item(dir, makefile, line_no, item, &cond)?;
                            }
                        }
                        None => self.unresolved(makefile, line_no, line),
                    }
                }
            }
        }

        self.visiting.pop();
        if let Some(open) = stack.first() {
            return Err(BuildError::UnbalancedConditional {
                file: makefile.to_owned(),
                line: open.line,
                reason: "conditional not closed by endif".into(),
            });
        }
        Ok(())
    }

    /// `obj-<sel> <op> items` with its selection condition.
    fn object_list<'l>(&self, line: &'l str) -> Option<(Formula, Vec<&'l str>)> {
        let rest = line.strip_prefix("obj-")?;
        let (selector, items) = ["+=", ":=", "="].iter().find_map(|op| {
            let (lhs, rhs) = rest.split_once(op)?;
            Some((lhs.trim(), rhs))
        })?;
        let cond = match selector {
            "y" | "m" => Formula::True,
            s => self.selected(&self.config_reference(s)?),
        };
        Some((cond, items.split_whitespace().collect()))
    }

    fn item(&mut self, dir: &str, makefile: &str, line: usize, item: &str, cond: &Formula) -> Result<(), BuildError> {
        if let Some(sub) = item.strip_suffix('/') {
            let Some(sub_dir) = normalize_path(dir, sub) else {
                self.unresolved(makefile, line, item);
                return Ok(());
            };
            if self.visiting.contains(&sub_dir) {
                self.unresolved(makefile, line, format!("{item} (recursive directory reference)"));
                return Ok(());
            }
            match self.build_file(&sub_dir) {
                Some(sub_makefile) => self.directory(&sub_dir, &sub_makefile, cond)?,
                None => self.unresolved(makefile, line, format!("{item} (no Makefile or Kbuild)")),
            }
        } else if let Some(stem) = item.strip_suffix(".o").filter(|s| !s.is_empty() && !s.contains('$')) {
            match normalize_path(dir, &format!("{stem}.c")) {
                Some(path) => self.entries.entry(path).or_default().push(cond.clone()),
                None => self.unresolved(makefile, line, item),
            }
        } else {
            self.unresolved(makefile, line, item);
        }
        Ok(())
    }
}

fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut start = 0;
    for (i, raw) in text.lines().enumerate() {
        if buf.is_empty() {
            start = i + 1;
        }
        match raw.strip_suffix('\\') {
            Some(head) => {
                buf.push_str(head);
                buf.push(' ');
            }
            None => {
                buf.push_str(raw);
                out.push((start, std::mem::take(&mut buf)));
            }
        }
    }
    if !buf.is_empty() {
        out.push((start, buf));
    }
    out
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_keyword(line: &str) -> (&str, &str) {
    match line.find(|c: char| c.is_whitespace() || c == '(') {
        Some(i) => (&line[..i], &line[i..]),
        None => (line, ""),
    }
}
