//! Propositional formulas over named feature variables.
//!
//! Formulas are immutable values. Conjunctions and disjunctions are n-ary and
//! keep their operands in construction order; the smart constructors
//! [`Formula::and`] and [`Formula::or`] collapse empty and singleton operand
//! lists so that every stored n-ary node has at least two operands.

mod cnf;
mod dimacs;
mod solver;
mod text;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

pub use cnf::{to_cnf, CnfProblem, Literal, VarId, VarMap, AUX_PREFIX};
pub use dimacs::to_dimacs;
pub use solver::{is_satisfiable, is_tautology, solve, SolveResult};
pub use text::{parse_formula, ParseFormulaError};

/// A propositional formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Var(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulaError {
    #[error("variable `{0}` is not mapped by the assignment")]
    UnmappedVariable(String),
}

/// Map from variable name to truth value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(BTreeMap<String, bool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: bool) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: bool) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl Formula {
    pub fn var(name: impl Into<String>) -> Formula {
        Formula::Var(name.into())
    }

    pub fn not(operand: Formula) -> Formula {
        Formula::Not(Box::new(operand))
    }

    /// Conjunction of `operands`; no operands yields `True`, one yields the operand itself.
    pub fn and<I: IntoIterator<Item = Formula>>(operands: I) -> Formula {
        let mut ops: Vec<Formula> = operands.into_iter().collect();
        match ops.len() {
            0 => Formula::True,
            1 => ops.pop().unwrap(),
            _ => Formula::And(ops),
        }
    }

    /// Disjunction of `operands`; no operands yields `False`, one yields the operand itself.
    pub fn or<I: IntoIterator<Item = Formula>>(operands: I) -> Formula {
        let mut ops: Vec<Formula> = operands.into_iter().collect();
        match ops.len() {
            0 => Formula::False,
            1 => ops.pop().unwrap(),
            _ => Formula::Or(ops),
        }
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
        Formula::or([Formula::not(lhs), rhs])
    }

    pub fn iff(lhs: Formula, rhs: Formula) -> Formula {
        Formula::and([
            Formula::implies(lhs.clone(), rhs.clone()),
            Formula::implies(rhs, lhs),
        ])
    }

    pub fn constant(value: bool) -> Formula {
        if value {
            Formula::True
        } else {
            Formula::False
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::False)
    }

    /// Distinct variable names in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        self.visit_vars(&mut |name| {
            if seen.insert(name) {
                out.push(name.to_owned());
            }
        });
        out
    }

    pub fn variable_set(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |name| {
            out.insert(name.to_owned());
        });
        out
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Formula::True | Formula::False => false,
            Formula::Var(v) => v == name,
            Formula::Not(inner) => inner.contains_var(name),
            Formula::And(ops) | Formula::Or(ops) => ops.iter().any(|op| op.contains_var(name)),
        }
    }

    fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Var(v) => f(v),
            Formula::Not(inner) => inner.visit_vars(f),
            Formula::And(ops) | Formula::Or(ops) => {
                for op in ops {
                    op.visit_vars(f);
                }
            }
        }
    }

    /// Number of nodes in the formula tree.
    pub fn node_count(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Var(_) => 1,
            Formula::Not(inner) => 1 + inner.node_count(),
            Formula::And(ops) | Formula::Or(ops) => {
                1 + ops.iter().map(Formula::node_count).sum::<usize>()
            }
        }
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<bool, FormulaError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Var(v) => assignment
                .get(v)
                .ok_or_else(|| FormulaError::UnmappedVariable(v.clone()))?,
            Formula::Not(inner) => !inner.eval(assignment)?,
            Formula::And(ops) => {
                // Evaluate every operand so unmapped variables are always reported.
                let mut acc = true;
                for op in ops {
                    acc &= op.eval(assignment)?;
                }
                acc
            }
            Formula::Or(ops) => {
                let mut acc = false;
                for op in ops {
                    acc |= op.eval(assignment)?;
                }
                acc
            }
        })
    }

    /// Replace `name` by `value` and simplify the result.
    pub fn substitute(&self, name: &str, value: bool) -> Formula {
        self.replace_var(name, value).simplify()
    }

    fn replace_var(&self, name: &str, value: bool) -> Formula {
        match self {
            Formula::Var(v) if v == name => Formula::constant(value),
            Formula::True | Formula::False | Formula::Var(_) => self.clone(),
            Formula::Not(inner) => Formula::not(inner.replace_var(name, value)),
            Formula::And(ops) => Formula::And(ops.iter().map(|o| o.replace_var(name, value)).collect()),
            Formula::Or(ops) => Formula::Or(ops.iter().map(|o| o.replace_var(name, value)).collect()),
        }
    }

    /// Constant folding, double-negation elimination, flattening of nested
    /// same-kind n-ary nodes, duplicate removal (first occurrence wins) and
    /// singleton collapse. Not a minimizer.
    pub fn simplify(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Var(_) => self.clone(),
            Formula::Not(inner) => match inner.simplify() {
                Formula::True => Formula::False,
                Formula::False => Formula::True,
                Formula::Not(x) => *x,
                other => Formula::not(other),
            },
            Formula::And(ops) => simplify_nary(ops, true),
            Formula::Or(ops) => simplify_nary(ops, false),
        }
    }
}

/// `conjunction == true` simplifies an And node, otherwise an Or node.
fn simplify_nary(ops: &[Formula], conjunction: bool) -> Formula {
    let mut out: Vec<Formula> = Vec::with_capacity(ops.len());
    let mut seen: HashSet<Formula> = HashSet::new();
    let mut push = |f: Formula, out: &mut Vec<Formula>| {
        if !seen.contains(&f) {
            seen.insert(f.clone());
            out.push(f);
        }
    };
    for op in ops {
        match (op.simplify(), conjunction) {
            (Formula::True, true) | (Formula::False, false) => {}
            (Formula::False, true) => return Formula::False,
            (Formula::True, false) => return Formula::True,
            (Formula::And(inner), true) | (Formula::Or(inner), false) => {
                for f in inner {
                    push(f, &mut out);
                }
            }
            (other, _) => push(other, &mut out),
        }
    }
    if conjunction {
        Formula::and(out)
    } else {
        Formula::or(out)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        text::render(self, f)
    }
}

impl std::str::FromStr for Formula {
    type Err = ParseFormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl serde::Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}
