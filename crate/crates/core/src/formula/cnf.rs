//! Clause form and the Tseitin transformation.

use std::collections::HashMap;
use std::fmt;

use super::Formula;

/// Reserved name prefix for auxiliary Tseitin variables.
pub const AUX_PREFIX: &str = "__t";

/// 1-based variable index, as used in DIMACS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub(crate) fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub var: VarId,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: VarId) -> Self {
        Literal { var, positive: true }
    }

    pub fn neg(var: VarId) -> Self {
        Literal { var, positive: false }
    }

    pub fn negated(self) -> Self {
        Literal { var: self.var, positive: !self.positive }
    }

    /// Signed DIMACS integer.
    pub fn to_dimacs(self) -> i64 {
        let v = i64::from(self.var.0);
        if self.positive {
            v
        } else {
            -v
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// Bijection between variable names and indices `1..=len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarMap {
    names: Vec<String>,
    internal: Vec<bool>,
    index: HashMap<String, VarId>,
}

impl VarMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    /// Index of `name`, allocating the next one when it is new.
    pub fn intern(&mut self, name: &str) -> VarId {
        if let Some(id) = self.index.get(name) {
            return *id;
        }
        self.push(name.to_owned(), false)
    }

    fn push(&mut self, name: String, internal: bool) -> VarId {
        let id = VarId(u32::try_from(self.names.len() + 1).expect("variable count exceeds u32"));
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.internal.push(internal);
        id
    }

    pub(crate) fn fresh_internal(&mut self) -> VarId {
        let mut n = self.internal.iter().filter(|i| **i).count() + 1;
        loop {
            let name = format!("{AUX_PREFIX}{n}");
            if !self.index.contains_key(&name) {
                return self.push(name, true);
            }
            n += 1;
        }
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.slot()]
    }

    pub fn is_internal(&self, id: VarId) -> bool {
        self.internal[id.slot()]
    }

    /// `(id, name)` pairs in index order.
    pub fn iter(&self) -> impl Iterator<Item = (VarId, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (VarId(i as u32 + 1), n.as_str()))
    }
}

/// A clause set plus the variable naming used by its literals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfProblem {
    pub clauses: Vec<Vec<Literal>>,
    pub var_map: VarMap,
}

impl CnfProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a clause given as `(name, polarity)` pairs, interning new names.
    pub fn add_clause<'a, I>(&mut self, literals: I)
    where
        I: IntoIterator<Item = (&'a str, bool)>,
    {
        let clause = literals
            .into_iter()
            .map(|(name, positive)| Literal { var: self.var_map.intern(name), positive })
            .collect();
        self.clauses.push(clause);
    }

    pub fn literal_name(&self, lit: Literal) -> (&str, bool) {
        (self.var_map.name(lit.var), lit.positive)
    }
}

/// Tseitin transformation of `formula` (after [`Formula::simplify`]).
///
/// The result is equisatisfiable with `formula`. Every compound node gets an
/// auxiliary variable named with [`AUX_PREFIX`]; structurally equal subformulas
/// share one auxiliary. Gate clauses are emitted in post-order, the unit
/// clause asserting the root comes last. `False` becomes a single empty clause,
/// `True` an empty clause set.
pub fn to_cnf(formula: &Formula) -> CnfProblem {
    let simplified = formula.simplify();
    let mut encoder = Encoder { problem: CnfProblem::new(), memo: HashMap::new() };
    // Formula variables take indices 1..=n before any auxiliary is allocated.
    for name in simplified.variables() {
        encoder.problem.var_map.intern(&name);
    }
    match &simplified {
        Formula::True => {}
        Formula::False => encoder.problem.clauses.push(Vec::new()),
        other => {
            let root = encoder.encode(other);
            encoder.problem.clauses.push(vec![root]);
        }
    }
    encoder.problem
}

struct Encoder<'f> {
    problem: CnfProblem,
    memo: HashMap<&'f Formula, Literal>,
}

impl<'f> Encoder<'f> {
    fn encode(&mut self, node: &'f Formula) -> Literal {
        match node {
            Formula::Var(name) => Literal::pos(self.problem.var_map.intern(name)),
            Formula::Not(inner) => self.encode(inner).negated(),
            _ => {
                if let Some(lit) = self.memo.get(node) {
                    return *lit;
                }
                let lit = self.encode_gate(node);
                self.memo.insert(node, lit);
                lit
            }
        }
    }

    fn encode_gate(&mut self, node: &'f Formula) -> Literal {
        match node {
            Formula::And(ops) => {
                let lits: Vec<Literal> = ops.iter().map(|op| self.encode(op)).collect();
                let t = Literal::pos(self.problem.var_map.fresh_internal());
                for &l in &lits {
                    self.problem.clauses.push(vec![t.negated(), l]);
                }
                let mut back = vec![t];
                back.extend(lits.iter().map(|l| l.negated()));
                self.problem.clauses.push(back);
                t
            }
            Formula::Or(ops) => {
                let lits: Vec<Literal> = ops.iter().map(|op| self.encode(op)).collect();
                let t = Literal::pos(self.problem.var_map.fresh_internal());
                let mut fwd = vec![t.negated()];
                fwd.extend(lits.iter().copied());
                self.problem.clauses.push(fwd);
                for &l in &lits {
                    self.problem.clauses.push(vec![l.negated(), t]);
                }
                t
            }
            // Constants only survive simplification at the root, which `to_cnf`
            // handles; keep the encoder total anyway.
            Formula::True | Formula::False => {
                let t = Literal::pos(self.problem.var_map.fresh_internal());
                self.problem.clauses.push(vec![if node.is_true() { t } else { t.negated() }]);
                t
            }
            Formula::Var(_) | Formula::Not(_) => unreachable!("handled in encode"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(p: &CnfProblem) -> Vec<Vec<(String, bool)>> {
        p.clauses
            .iter()
            .map(|c| c.iter().map(|l| (p.var_map.name(l.var).to_owned(), l.positive)).collect())
            .collect()
    }

    fn lits(spec: &[(&str, bool)]) -> Vec<(String, bool)> {
        spec.iter().map(|(n, p)| (n.to_string(), *p)).collect()
    }

    #[test]
    fn atomic_formula_is_a_unit_clause() {
        let p = to_cnf(&Formula::var("A"));
        assert_eq!(named(&p), vec![lits(&[("A", true)])]);
        assert_eq!(p.var_map.len(), 1);
    }

    #[test]
    fn or_gate_clauses() {
        let p = to_cnf(&Formula::or([Formula::var("A"), Formula::var("B")]));
        assert_eq!(
            named(&p),
            vec![
                lits(&[("__t1", false), ("A", true), ("B", true)]),
                lits(&[("A", false), ("__t1", true)]),
                lits(&[("B", false), ("__t1", true)]),
                lits(&[("__t1", true)]),
            ]
        );
        let t = p.var_map.get("__t1").unwrap();
        assert!(p.var_map.is_internal(t));
        assert!(!p.var_map.is_internal(p.var_map.get("A").unwrap()));
    }

    #[test]
    fn constants() {
        assert!(to_cnf(&Formula::True).clauses.is_empty());
        assert_eq!(to_cnf(&Formula::False).clauses, vec![Vec::<Literal>::new()]);
    }

    #[test]
    fn shared_subformulas_share_an_auxiliary() {
        let ab = Formula::and([Formula::var("A"), Formula::var("B")]);
        let f = Formula::or([ab.clone(), Formula::not(ab)]);
        let p = to_cnf(&f);
        // A, B, the shared AND gate and the OR gate.
        assert_eq!(p.var_map.len(), 4);
    }

    #[test]
    fn clause_count_is_linear() {
        let mut f = Formula::var("x0");
        for i in 1..200 {
            let v = Formula::var(format!("x{i}"));
            f = if i % 2 == 0 { Formula::And(vec![f, v]) } else { Formula::Or(vec![v, f]) };
        }
        let p = to_cnf(&f);
        assert!(p.clauses.len() <= 3 * f.node_count() + 1);
    }

    #[test]
    fn deterministic() {
        let f = Formula::or([
            Formula::and([Formula::var("A"), Formula::not(Formula::var("B"))]),
            Formula::var("C"),
        ]);
        assert_eq!(to_cnf(&f), to_cnf(&f));
    }
}
