//! Analyses over extracted models: presence conditions, feature effects, dead
//! blocks and block metrics. Every component sorts its rows before emitting,
//! so results do not depend on the order files arrive in.

use std::collections::{BTreeMap, BTreeSet};

use crate::build::BuildModel;
use crate::code::{is_opaque_atom, CodeModel};
use crate::formula::{is_satisfiable, Formula};
use crate::table::{Cell, ColumnKind, ResultTable};
use crate::varmodel::{VariabilityModel, MODULE_SUFFIX};

/// Feature name to the distinct combined PCs mentioning it.
pub type PcIndex = BTreeMap<String, BTreeSet<Formula>>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("{component} requires the {input} pipeline, which is not configured")]
    MissingInput { component: String, input: String },
}

/// Combined PC of a block: its code PC conjoined with the build PC of its file.
pub fn combined_pc(code_pc: &Formula, file: &str, build: Option<&BuildModel>, missing_default: bool) -> Formula {
    match build {
        Some(bm) => Formula::and([code_pc.clone(), bm.lookup_pc(file, missing_default).pc]).simplify(),
        None => code_pc.simplify(),
    }
}

/// Whether `name` is a selectable feature (not a `_MODULE` companion or an opaque atom).
pub fn is_feature_name(name: &str) -> bool {
    !name.ends_with(MODULE_SUFFIX) && !is_opaque_atom(name)
}

/// Incremental presence-condition discovery over a stream of code models.
pub struct PcFinder<'b> {
    build: Option<&'b BuildModel>,
    missing_default: bool,
    rows: Vec<(String, usize, Formula)>,
    index: PcIndex,
}

pub struct PcFinderOutput {
    /// `(file, line, pc)` per block.
    pub table: ResultTable,
    pub index: PcIndex,
}

impl<'b> PcFinder<'b> {
    pub fn new(build: Option<&'b BuildModel>, missing_default: bool) -> Self {
        PcFinder { build, missing_default, rows: Vec::new(), index: PcIndex::new() }
    }

    pub fn add(&mut self, model: &CodeModel) {
        for block in model.blocks() {
            let pc = combined_pc(&block.presence_condition, &model.file, self.build, self.missing_default);
            if !pc.is_false() {
                for var in pc.variable_set() {
                    if is_feature_name(&var) {
                        self.index.entry(var).or_default().insert(pc.clone());
                    }
                }
            }
            self.rows.push((model.file.clone(), block.line_start, pc));
        }
    }

    pub fn finish(self) -> PcFinderOutput {
        let mut table = ResultTable::new(
            "PcFinder",
            &[("file", ColumnKind::Text), ("line", ColumnKind::Int), ("pc", ColumnKind::Formula)],
            &[0, 1],
        );
        for (file, line, pc) in self.rows {
            table.push(vec![file.into(), line.into(), pc.into()]);
        }
        table.sort();
        PcFinderOutput { table, index: self.index }
    }
}

pub fn pc_finder<'m>(
    models: impl IntoIterator<Item = &'m CodeModel>,
    build: Option<&BuildModel>,
    missing_default: bool,
) -> PcFinderOutput {
    let mut finder = PcFinder::new(build, missing_default);
    for m in models {
        finder.add(m);
    }
    finder.finish()
}

/// Condition under which toggling `feature` changes whether some PC in `pcs` holds.
pub fn feature_effect<'p>(feature: &str, pcs: impl IntoIterator<Item = &'p Formula>) -> Formula {
    Formula::or(pcs.into_iter().map(|pc| {
        let on = pc.substitute(feature, true);
        let off = pc.substitute(feature, false);
        Formula::or([
            Formula::and([on.clone(), Formula::not(off.clone())]),
            Formula::and([Formula::not(on), off]),
        ])
    }))
    .simplify()
}

/// `(feature, effect)` for every indexed feature, sorted by feature.
pub fn feature_effects(index: &PcIndex) -> ResultTable {
    let mut table =
        ResultTable::new("FeatureEffects", &[("feature", ColumnKind::Text), ("effect", ColumnKind::Formula)], &[0]);
    for (feature, pcs) in index {
        if pcs.is_empty() || !is_feature_name(feature) {
            continue;
        }
        table.push(vec![feature.as_str().into(), feature_effect(feature, pcs).into()]);
    }
    table.sort();
    table
}

pub const DEAD: &str = "Dead";
pub const ALIVE: &str = "Alive";
/// Diagnostic for a satisfiable PC whose opaque atoms make the verdict inconclusive.
pub const UNDECIDED_OPAQUE: &str = "opaque_atoms";

/// `(file, line, pc, verdict, diagnostic)` per block; `pc` is the combined PC.
pub fn dead_blocks<'m>(
    models: impl IntoIterator<Item = &'m CodeModel>,
    build: Option<&BuildModel>,
    vm: Option<&VariabilityModel>,
    missing_default: bool,
) -> Result<ResultTable, AnalysisError> {
    let missing = |input: &str| AnalysisError::MissingInput { component: "DeadBlocks".into(), input: input.into() };
    let vm = vm.ok_or_else(|| missing("variability-model"))?;
    let build = build.ok_or_else(|| missing("build-model"))?;
    let mut table = ResultTable::new(
        "DeadBlocks",
        &[
            ("file", ColumnKind::Text),
            ("line", ColumnKind::Int),
            ("pc", ColumnKind::Formula),
            ("verdict", ColumnKind::Text),
            ("diagnostic", ColumnKind::Text),
        ],
        &[0, 1],
    );
    for model in models {
        for block in model.blocks() {
            let pc = combined_pc(&block.presence_condition, &model.file, Some(build), missing_default);
            let alive = is_satisfiable(&Formula::and([vm.constraint.clone(), pc.clone()]));
            let opaque = alive && pc.variable_set().iter().any(|v| is_opaque_atom(v));
            table.push(vec![
                model.file.as_str().into(),
                block.line_start.into(),
                pc.into(),
                if alive { ALIVE } else { DEAD }.into(),
                if opaque { UNDECIDED_OPAQUE } else { "" }.into(),
            ]);
        }
    }
    table.sort();
    Ok(table)
}

/// Per-file `(block_count, max_nesting_depth, variable_loc)`.
pub fn file_metrics(model: &CodeModel) -> (usize, usize, usize) {
    let mut count = 0;
    let mut depth = 0;
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (el, d) in model.root.descendants() {
        count += 1;
        depth = depth.max(d);
        spans.push((el.line_start, el.line_end));
    }
    spans.sort();
    let mut loc = 0;
    let mut covered_to = 0;
    for (start, end) in spans {
        let start = start.max(covered_to + 1);
        if end >= start {
            loc += end - start + 1;
            covered_to = end;
        }
    }
    (count, depth, loc)
}

pub fn block_metrics<'m>(models: impl IntoIterator<Item = &'m CodeModel>) -> ResultTable {
    let mut table = ResultTable::new(
        "BlockMetrics",
        &[
            ("file", ColumnKind::Text),
            ("block_count", ColumnKind::Int),
            ("max_nesting_depth", ColumnKind::Int),
            ("variable_loc", ColumnKind::Int),
        ],
        &[0],
    );
    for model in models {
        let (count, depth, loc) = file_metrics(model);
        table.push(vec![model.file.as_str().into(), count.into(), depth.into(), Cell::from(loc)]);
    }
    table.sort();
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{extract_file, ExtractOptions};
    use crate::formula::is_tautology;

    fn v(n: &str) -> Formula {
        Formula::var(n)
    }

    fn code(src: &str, file: &str) -> CodeModel {
        extract_file(src, file, &ExtractOptions::default()).unwrap()
    }

    fn equivalent(a: &Formula, b: &Formula) -> bool {
        is_tautology(&Formula::iff(a.clone(), b.clone()))
    }

    #[test]
    fn build_pc_is_conjoined() {
        let cm = code("#ifdef CONFIG_A\nx\n#endif\n", "f.c");
        let mut bm = BuildModel::default();
        bm.entries.insert("f.c".into(), v("B"));
        let out = pc_finder([&cm], Some(&bm), true);
        let ab = Formula::and([v("A"), v("B")]);
        assert_eq!(out.table.rows[0][2], Cell::Formula(ab.clone()));
        assert_eq!(out.index["A"], BTreeSet::from([ab.clone()]));
        assert_eq!(out.index["B"], BTreeSet::from([ab]));
    }

    #[test]
    fn no_build_model_keeps_code_pc() {
        let cm = code("#ifdef CONFIG_A\nx\n#endif\n", "f.c");
        let out = pc_finder([&cm], None, true);
        assert_eq!(out.index["A"], BTreeSet::from([v("A")]));
    }

    #[test]
    fn index_skips_companions_atoms_and_false() {
        let cm = code("#if defined(CONFIG_A_MODULE) && FOO(1)\n#endif\n#if 0\n#ifdef CONFIG_C\n#endif\n#endif\n", "f.c");
        let out = pc_finder([&cm], None, true);
        assert!(out.index.keys().all(|k| k.is_empty() || is_feature_name(k)));
        assert!(!out.index.contains_key("C"));
        assert_eq!(out.table.len(), 3);
    }

    #[test]
    fn effect_examples() {
        let a_and_b = Formula::and([v("A"), v("B")]);
        let a_and_not_b = Formula::and([v("A"), Formula::not(v("B"))]);
        assert_eq!(feature_effect("A", [&v("A")]), Formula::True);
        assert!(equivalent(&feature_effect("A", [&a_and_b]), &v("B")));
        assert!(is_tautology(&feature_effect("A", [&a_and_b, &a_and_not_b])));
        assert_eq!(feature_effect("A", [&Formula::not(v("A"))]), Formula::True);
    }

    #[test]
    fn effects_table_is_sorted_and_feature_free() {
        let mut index = PcIndex::new();
        index.entry("B".into()).or_default().insert(Formula::and([v("A"), v("B")]));
        index.entry("A".into()).or_default().insert(Formula::and([v("A"), v("B")]));
        let t = feature_effects(&index);
        assert_eq!(t.rows.iter().map(|r| r[0].render()).collect::<Vec<_>>(), vec!["A", "B"]);
        for row in &t.rows {
            let Cell::Formula(f) = &row[1] else { unreachable!() };
            assert!(!f.contains_var(&row[0].render()));
        }
    }

    #[test]
    fn dead_block_verdicts() {
        let cm = code("#if defined(CONFIG_A) && defined(CONFIG_B)\n#endif\n#ifdef CONFIG_A\n#endif\n#if defined(CONFIG_A) && X(1)\n#endif\n", "f.c");
        let vm = VariabilityModel { constraint: Formula::implies(v("B"), Formula::not(v("A"))), ..Default::default() };
        let bm = BuildModel::default();
        let t = dead_blocks([&cm], Some(&bm), Some(&vm), true).unwrap();
        let verdicts: Vec<(String, String)> = t.rows.iter().map(|r| (r[3].render(), r[4].render())).collect();
        assert_eq!(
            verdicts,
            vec![(DEAD.into(), "".into()), (ALIVE.into(), "".into()), (ALIVE.into(), UNDECIDED_OPAQUE.into())]
        );
    }

    #[test]
    fn dead_blocks_need_all_inputs() {
        let cm = code("", "f.c");
        let err = dead_blocks([&cm], Some(&BuildModel::default()), None, true).unwrap_err();
        assert!(err.to_string().contains("variability-model"));
        assert!(dead_blocks([&cm], None, Some(&VariabilityModel::default()), true).is_err());
    }

    #[test]
    fn metrics_examples() {
        assert_eq!(file_metrics(&code("int x;\n", "a.c")), (0, 0, 0));
        let nested = code("a\nb\n#ifdef CONFIG_A\n#ifdef CONFIG_B\n#endif\n#endif\n", "b.c");
        assert_eq!(file_metrics(&nested), (2, 2, 4));
        let mut manual = code("1\n2\n3\n4\n5\n", "d.c");
        let mut outer = nested.root.children[0].clone();
        outer.line_end = 5;
        outer.children[0].line_end = 4;
        manual.root.children.push(outer);
        assert_eq!(file_metrics(&manual), (2, 2, 3));
        let chain = code("#ifdef CONFIG_A\nx\n#else\ny\n#endif\nz\n", "c.c");
        assert_eq!(file_metrics(&chain), (2, 1, 5));
    }
}
