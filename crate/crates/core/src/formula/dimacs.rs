use std::fmt::Write;

use super::cnf::CnfProblem;

/// DIMACS CNF text. Comment lines `c <index> <name>` list the variable map
/// (auxiliary variables are tagged `internal`), followed by the `p cnf` header
/// and one `0`-terminated line per clause.
pub fn to_dimacs(problem: &CnfProblem) -> String {
    let mut out = String::new();
    for (id, name) in problem.var_map.iter() {
        if problem.var_map.is_internal(id) {
            let _ = writeln!(out, "c {} {} internal", id.0, name);
        } else {
            let _ = writeln!(out, "c {} {}", id.0, name);
        }
    }
    let _ = writeln!(out, "p cnf {} {}", problem.var_map.len(), problem.clauses.len());
    for clause in &problem.clauses {
        for lit in clause {
            let _ = write!(out, "{} ", lit.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}
