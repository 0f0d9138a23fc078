//! Conditional-block extraction from C sources.
//!
//! Each file becomes a tree of [`CodeElement`]s: the root stands for the whole
//! file, every `#if`/`#ifdef`/`#ifndef`/`#elif`/`#else` branch is a block
//! child of the element it is nested in. Extraction is shallow: macros are not
//! expanded and `#define`/`#undef`/`#include` are ignored.
//!
//! A branch spans from its own directive line to the line before the next
//! directive of its chain; the last branch of a chain ends on the `#endif` line.

mod condition;
mod scan;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::formula::Formula;

pub use condition::{fnv1a64, is_opaque_atom, opaque_atom_name, parse_cpp_condition, ExpressionError, OPAQUE_PREFIX};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractOptions {
    /// Stripped from identifiers inside conditions (`CONFIG_FOO` becomes `FOO`).
    pub prefix: String,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { prefix: "CONFIG_".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    File,
    If,
    Elif,
    Else,
    Ifdef,
    Ifndef,
}

impl ElementKind {
    pub fn is_block(self) -> bool {
        self != ElementKind::File
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeElement {
    pub file: String,
    pub kind: ElementKind,
    pub line_start: usize,
    pub line_end: usize,
    pub condition: Formula,
    pub presence_condition: Formula,
    pub children: Vec<CodeElement>,
}

impl CodeElement {
    /// Pre-order walk over this element's descendants (not including itself).
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: self.children.iter().rev().map(|c| (c, 1)).collect() }
    }
}

/// Pre-order iterator yielding `(element, nesting depth)`; direct children have depth 1.
pub struct Descendants<'a> {
    stack: Vec<(&'a CodeElement, usize)>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = (&'a CodeElement, usize);

    fn next(&mut self) -> Option<Self::Item> {
        let (el, depth) = self.stack.pop()?;
        self.stack.extend(el.children.iter().rev().map(|c| (c, depth + 1)));
        Some((el, depth))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeModel {
    pub file: String,
    pub root: CodeElement,
    pub unknown_atoms: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub file: String,
    pub line_start: usize,
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line_start)
    }
}

impl CodeModel {
    pub fn blocks(&self) -> impl Iterator<Item = &CodeElement> {
        self.root.descendants().map(|(el, _)| el)
    }

    pub fn block_count(&self) -> usize {
        self.root.descendants().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeError {
    #[error("{file}:{line}: malformed expression: {reason}")]
    MalformedExpression { file: String, line: usize, reason: String },
    #[error("{file}:{line}: unbalanced directives: {reason}")]
    UnbalancedDirectives { file: String, line: usize, reason: String },
}

/// Pluggable code extractor: one source file in, one element tree out.
pub trait CodeExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn extract(&self, source: &str, file: &str) -> Result<CodeModel, CodeError>;
}

/// Block-level `#if` extractor.
#[derive(Debug, Clone, Default)]
pub struct CppExtractor {
    pub options: ExtractOptions,
}

impl CodeExtractor for CppExtractor {
    fn name(&self) -> &str {
        "cpp"
    }

    fn extract(&self, source: &str, file: &str) -> Result<CodeModel, CodeError> {
        extract_file(source, file, &self.options)
    }
}

struct Branch {
    kind: ElementKind,
    line_start: usize,
    condition: Formula,
    presence_condition: Formula,
    children: Vec<CodeElement>,
}

struct Chain {
    opened_at: usize,
    raw_conditions: Vec<Formula>,
    parent_pc: Formula,
    seen_else: bool,
    current: Branch,
}

struct TreeBuilder<'a> {
    file: &'a str,
    opts: &'a ExtractOptions,
    stack: Vec<Chain>,
    top: Vec<CodeElement>,
    atoms: BTreeSet<String>,
}

impl<'a> TreeBuilder<'a> {
    fn condition(&mut self, text: &str, line: usize) -> Result<Formula, CodeError> {
        let (f, atoms) = condition::parse_condition(text, self.opts).map_err(|e| CodeError::MalformedExpression {
            file: self.file.to_owned(),
            line,
            reason: e.0,
        })?;
        self.atoms.extend(atoms);
        Ok(f)
    }

    /// The identifier argument of `#ifdef`-style directives, as `defined(X)` text.
    fn defined_argument(&self, body: &str, line: usize) -> Result<String, CodeError> {
        let ident: String = body.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
        if ident.is_empty() || ident.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(CodeError::MalformedExpression {
                file: self.file.to_owned(),
                line,
                reason: "expected a macro name".into(),
            });
        }
        Ok(format!("defined({ident})"))
    }

    fn unbalanced(&self, line: usize, reason: &str) -> CodeError {
        CodeError::UnbalancedDirectives { file: self.file.to_owned(), line, reason: reason.to_owned() }
    }

    fn current_pc(&self) -> Formula {
        self.stack.last().map_or(Formula::True, |c| c.current.presence_condition.clone())
    }

    fn attach(&mut self, element: CodeElement) {
        match self.stack.last_mut() {
            Some(chain) => chain.current.children.push(element),
            None => self.top.push(element),
        }
    }

    fn open(&mut self, kind: ElementKind, condition: Formula, line: usize) {
        let parent_pc = self.current_pc();
        let pc = Formula::and([parent_pc.clone(), condition.clone()]).simplify();
        self.stack.push(Chain {
            opened_at: line,
            raw_conditions: vec![condition.clone()],
            parent_pc,
            seen_else: false,
            current: Branch { kind, line_start: line, condition, presence_condition: pc, children: Vec::new() },
        });
    }

    fn finish_branch(&self, branch: Branch, line_end: usize) -> CodeElement {
        CodeElement {
            file: self.file.to_owned(),
            kind: branch.kind,
            line_start: branch.line_start,
            line_end,
            condition: branch.condition,
            presence_condition: branch.presence_condition,
            children: branch.children,
        }
    }

    /// Close the current branch of the innermost chain and start a new one.
    fn next_branch(&mut self, kind: ElementKind, raw: Option<Formula>, line: usize) -> Result<(), CodeError> {
        let keyword = if kind == ElementKind::Else { "#else" } else { "#elif" };
        let Some(chain) = self.stack.last() else {
            return Err(self.unbalanced(line, &format!("{keyword} without #if")));
        };
        if chain.seen_else {
            return Err(self.unbalanced(line, &format!("{keyword} after #else")));
        }
        let condition = match &raw {
            Some(c) => Self::elif_condition(c.clone(), &chain.raw_conditions),
            None => Formula::not(Formula::or(chain.raw_conditions.iter().cloned())).simplify(),
        };
        let pc = Formula::and([chain.parent_pc.clone(), condition.clone()]).simplify();
        let fresh = Branch { kind, line_start: line, condition, presence_condition: pc, children: Vec::new() };

        let mut chain = self.stack.pop().expect("checked above");
        let done = std::mem::replace(&mut chain.current, fresh);
        let element = self.finish_branch(done, line - 1);
        match raw {
            Some(c) => chain.raw_conditions.push(c),
            None => chain.seen_else = true,
        }
        self.attach(element);
        self.stack.push(chain);
        Ok(())
    }

    /// `c_i ∧ ¬c_1 ∧ … ∧ ¬c_{i−1}` over the chain's raw conditions.
    fn elif_condition(raw: Formula, prior: &[Formula]) -> Formula {
        let mut ops = vec![raw];
        ops.extend(prior.iter().cloned().map(Formula::not));
        Formula::and(ops).simplify()
    }

    fn close(&mut self, line_end: usize, line: usize) -> Result<(), CodeError> {
        let Some(chain) = self.stack.pop() else {
            return Err(self.unbalanced(line, "#endif without #if"));
        };
        let element = self.finish_branch(chain.current, line_end);
        self.attach(element);
        Ok(())
    }
}

/// Build the element tree of one source file.
pub fn extract_file(source: &str, file: &str, opts: &ExtractOptions) -> Result<CodeModel, CodeError> {
    let scanned = scan::scan(source);
    let mut b = TreeBuilder { file, opts, stack: Vec::new(), top: Vec::new(), atoms: BTreeSet::new() };
    for d in &scanned.directives {
        let line = d.first_line;
        match d.keyword.as_str() {
            "if" => {
                let c = b.condition(&d.body, line)?;
                b.open(ElementKind::If, c, line);
            }
            "ifdef" | "ifndef" => {
                let text = b.defined_argument(&d.body, line)?;
                let mut c = b.condition(&text, line)?;
                let kind = if d.keyword == "ifdef" {
                    ElementKind::Ifdef
                } else {
                    c = Formula::not(c).simplify();
                    ElementKind::Ifndef
                };
                b.open(kind, c, line);
            }
            "elif" | "elifdef" | "elifndef" => {
                let raw = if d.keyword == "elif" {
                    b.condition(&d.body, line)?
                } else {
                    let text = b.defined_argument(&d.body, line)?;
                    let c = b.condition(&text, line)?;
                    if d.keyword == "elifndef" {
                        Formula::not(c).simplify()
                    } else {
                        c
                    }
                };
                b.next_branch(ElementKind::Elif, Some(raw), line)?;
            }
            "else" => b.next_branch(ElementKind::Else, None, line)?,
            "endif" => b.close(d.last_line, line)?,
            _ => {}
        }
    }
    if let Some(open) = b.stack.last() {
        return Err(b.unbalanced(open.opened_at, "unterminated conditional at end of file"));
    }
    let root = CodeElement {
        file: file.to_owned(),
        kind: ElementKind::File,
        line_start: 1,
        line_end: scanned.line_count.max(1),
        condition: Formula::True,
        presence_condition: Formula::True,
        children: b.top,
    };
    Ok(CodeModel { file: file.to_owned(), root, unknown_atoms: b.atoms })
}

/// `(block id, presence condition)` for every block, depth-first pre-order.
pub fn presence_conditions(model: &CodeModel) -> Vec<(BlockId, Formula)> {
    model
        .blocks()
        .map(|el| {
            (BlockId { file: el.file.clone(), line_start: el.line_start }, el.presence_condition.clone())
        })
        .collect()
}
