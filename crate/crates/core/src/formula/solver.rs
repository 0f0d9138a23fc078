//! DPLL satisfiability search.
//!
//! Unit propagation and pure-literal elimination run to a fixpoint before each
//! decision. Decisions pick the lowest-index unassigned variable that occurs in
//! a not-yet-satisfied clause and try `true` first. The search is iterative and
//! keeps all state local to one call.

use super::cnf::{CnfProblem, Literal, VarId};
use super::{to_cnf, Assignment, Formula};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Sat(Assignment),
    Unsat,
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn model(&self) -> Option<&Assignment> {
        match self {
            SolveResult::Sat(m) => Some(m),
            SolveResult::Unsat => None,
        }
    }
}

#[derive(Clone, Copy)]
struct TrailEntry {
    var: VarId,
    decision: bool,
    flipped: bool,
}

struct Search<'p> {
    clauses: &'p [Vec<Literal>],
    /// 0 unassigned, 1 true, -1 false; indexed by `VarId::slot`.
    values: Vec<i8>,
    trail: Vec<TrailEntry>,
    polarity: Vec<u8>,
}

impl<'p> Search<'p> {
    fn value(&self, lit: Literal) -> Option<bool> {
        match self.values[lit.var.slot()] {
            0 => None,
            v => Some((v > 0) == lit.positive),
        }
    }

    fn assign(&mut self, var: VarId, value: bool, decision: bool, flipped: bool) {
        self.values[var.slot()] = if value { 1 } else { -1 };
        self.trail.push(TrailEntry { var, decision, flipped });
    }

    fn clause_satisfied(&self, clause: &[Literal]) -> bool {
        clause.iter().any(|&l| self.value(l) == Some(true))
    }

    /// Unit propagation plus pure-literal elimination; `false` on conflict.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for clause in self.clauses {
                let mut open = None;
                let mut open_count = 0;
                let mut satisfied = false;
                for &lit in clause {
                    match self.value(lit) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            open_count += 1;
                            open = Some(lit);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match (open_count, open) {
                    (0, _) => return false,
                    (1, Some(lit)) => {
                        self.assign(lit.var, lit.positive, false, false);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                changed = self.eliminate_pure();
            }
            if !changed {
                return true;
            }
        }
    }

    fn eliminate_pure(&mut self) -> bool {
        // bit 0: seen positive, bit 1: seen negative
        self.polarity.iter_mut().for_each(|p| *p = 0);
        for clause in self.clauses {
            if self.clause_satisfied(clause) {
                continue;
            }
            for &lit in clause {
                if self.values[lit.var.slot()] == 0 {
                    self.polarity[lit.var.slot()] |= if lit.positive { 1 } else { 2 };
                }
            }
        }
        let mut changed = false;
        for slot in 0..self.polarity.len() {
            let p = self.polarity[slot];
            if p == 1 || p == 2 {
                self.assign(VarId(slot as u32 + 1), p == 1, false, false);
                changed = true;
            }
        }
        changed
    }

    fn branch_variable(&self) -> Option<VarId> {
        self.clauses
            .iter()
            .filter(|c| !self.clause_satisfied(c))
            .flat_map(|c| c.iter())
            .filter(|l| self.values[l.var.slot()] == 0)
            .map(|l| l.var)
            .min()
    }

    /// Undo to the most recent unflipped decision and flip it; `false` when exhausted.
    fn backtrack(&mut self) -> bool {
        while let Some(entry) = self.trail.pop() {
            self.values[entry.var.slot()] = 0;
            if entry.decision && !entry.flipped {
                self.assign(entry.var, false, true, true);
                return true;
            }
        }
        false
    }

    fn run(&mut self) -> bool {
        loop {
            if !self.propagate() {
                if !self.backtrack() {
                    return false;
                }
                continue;
            }
            match self.branch_variable() {
                None => return true,
                Some(var) => self.assign(var, true, true, false),
            }
        }
    }
}

/// Decide satisfiability of `problem`. A model assigns every variable of the
/// problem's `var_map`; variables left open by the search are set to `false`.
pub fn solve(problem: &CnfProblem) -> SolveResult {
    let n = problem.var_map.len();
    let mut search = Search {
        clauses: &problem.clauses,
        values: vec![0; n],
        trail: Vec::new(),
        polarity: vec![0; n],
    };
    if !search.run() {
        return SolveResult::Unsat;
    }
    let model = problem
        .var_map
        .iter()
        .map(|(id, name)| (name, search.values[id.slot()] > 0))
        .collect();
    SolveResult::Sat(model)
}

pub fn is_satisfiable(formula: &Formula) -> bool {
    match formula.simplify() {
        Formula::True => true,
        Formula::False => false,
        f => solve(&to_cnf(&f)).is_sat(),
    }
}

/// `formula` holds under every assignment, decided as unsatisfiability of its negation.
pub fn is_tautology(formula: &Formula) -> bool {
    !is_satisfiable(&Formula::not(formula.clone()))
}
