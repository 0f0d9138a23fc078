//! Test-side oracles and generators shared by the integration suites.
#![allow(dead_code)]

pub mod corpus;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use varlab_core::build::BuildModel;
use varlab_core::formula::Formula;

pub type Env = BTreeMap<String, bool>;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini-spl")
}

/// Direct recursive evaluation; unassigned variables are false.
pub fn eval(f: &Formula, env: &Env) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Var(v) => env.get(v).copied().unwrap_or(false),
        Formula::Not(x) => !eval(x, env),
        Formula::And(xs) => xs.iter().all(|x| eval(x, env)),
        Formula::Or(xs) => xs.iter().any(|x| eval(x, env)),
    }
}

pub fn vars_of(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::Var(v) => {
            out.insert(v.clone());
        }
        Formula::Not(x) => vars_of(x, out),
        Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| vars_of(x, out)),
        _ => {}
    }
}

/// Every assignment over `vars`, first variable least significant.
pub fn assignments(vars: &[String]) -> impl Iterator<Item = Env> + '_ {
    assert!(vars.len() <= 20, "truth table too large");
    (0u32..1 << vars.len()).map(move |bits| vars.iter().enumerate().map(|(i, v)| (v.clone(), bits >> i & 1 == 1)).collect())
}

pub fn equivalent(a: &Formula, b: &Formula) -> bool {
    let mut vs = BTreeSet::new();
    vars_of(a, &mut vs);
    vars_of(b, &mut vs);
    let vs: Vec<String> = vs.into_iter().collect();
    let same = assignments(&vs).all(|env| eval(a, &env) == eval(b, &env));
    same
}

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random formula over `vars`; constants appear rarely.
pub fn random_formula(rng: &mut StdRng, vars: &[String], depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..20) {
            0 => Formula::True,
            1 => Formula::False,
            _ => Formula::Var(vars.choose(rng).expect("vars").clone()),
        };
    }
    match rng.gen_range(0..3) {
        0 => Formula::Not(Box::new(random_formula(rng, vars, depth - 1))),
        k => {
            let n = rng.gen_range(2..=3);
            let xs = (0..n).map(|_| random_formula(rng, vars, depth - 1)).collect();
            if k == 1 {
                Formula::And(xs)
            } else {
                Formula::Or(xs)
            }
        }
    }
}

/// A generated block: directive line and its code-only presence condition.
#[derive(Debug, Clone)]
pub struct GenBlock {
    pub line: usize,
    pub pc: Formula,
}

#[derive(Debug, Clone)]
pub struct GenFile {
    pub path: String,
    pub source: String,
    pub blocks: Vec<GenBlock>,
}

fn cpp_condition(rng: &mut StdRng, features: &[String], depth: usize) -> (String, Formula) {
    let leaf = |rng: &mut StdRng| {
        let f = features.choose(rng).expect("features").clone();
        match rng.gen_range(0..4) {
            0 => (format!("defined(CONFIG_{f})"), Formula::Var(f)),
            1 => (format!("defined CONFIG_{f}"), Formula::Var(f)),
            2 => (format!("!defined(CONFIG_{f})"), Formula::Not(Box::new(Formula::Var(f)))),
            _ => (format!("CONFIG_{f}"), Formula::Var(f)),
        }
    };
    if depth == 0 || rng.gen_bool(0.5) {
        return leaf(rng);
    }
    let (a, fa) = cpp_condition(rng, features, depth - 1);
    let (b, fb) = cpp_condition(rng, features, depth - 1);
    if rng.gen_bool(0.5) {
        (format!("({a}) && ({b})"), Formula::And(vec![fa, fb]))
    } else {
        (format!("({a} || {b})"), Formula::Or(vec![fa, fb]))
    }
}

struct Emitter<'a> {
    rng: &'a mut StdRng,
    features: &'a [String],
    lines: Vec<String>,
    blocks: Vec<GenBlock>,
    budget: usize,
}

impl Emitter<'_> {
    fn body(&mut self, parent: &Formula, depth: usize) {
        let items = self.rng.gen_range(1..=3);
        for _ in 0..items {
            if self.budget > 0 && depth < 4 && self.rng.gen_bool(0.6) {
                self.chain(parent, depth);
            } else {
                let n = self.lines.len();
                self.lines.push(format!("int v{n} = {n};"));
            }
        }
    }

    fn chain(&mut self, parent: &Formula, depth: usize) {
        let mut prior: Vec<Formula> = Vec::new();
        let branches = self.rng.gen_range(1..=3).min(self.budget);
        for i in 0..branches {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            let (text, cond) = if i == 0 {
                let f = self.features.choose(self.rng).expect("features").clone();
                match self.rng.gen_range(0..3) {
                    0 => (format!("#ifdef CONFIG_{f}"), Formula::Var(f)),
                    1 => (format!("#ifndef CONFIG_{f}"), Formula::Not(Box::new(Formula::Var(f)))),
                    _ => {
                        let (t, c) = cpp_condition(self.rng, self.features, 2);
                        (format!("#if {t}"), c)
                    }
                }
            } else {
                let (t, c) = cpp_condition(self.rng, self.features, 2);
                (format!("#elif {t}"), c)
            };
            let mut conj = vec![parent.clone(), cond.clone()];
            conj.extend(prior.iter().map(|p| Formula::Not(Box::new(p.clone()))));
            let pc = Formula::And(conj);
            self.lines.push(text);
            self.blocks.push(GenBlock { line: self.lines.len(), pc: pc.clone() });
            self.body(&pc, depth + 1);
            prior.push(cond);
        }
        if self.budget > 0 && self.rng.gen_bool(0.5) {
            self.budget -= 1;
            let pc = Formula::And(vec![parent.clone(), Formula::Not(Box::new(Formula::Or(prior)))]);
            self.lines.push("#else".into());
            self.blocks.push(GenBlock { line: self.lines.len(), pc: pc.clone() });
            self.body(&pc, depth + 1);
        }
        self.lines.push("#endif".into());
    }
}

/// Random C file with at most `budget` conditional blocks over `features`.
pub fn random_c_file(rng: &mut StdRng, features: &[String], path: &str, budget: usize) -> GenFile {
    let mut e = Emitter { rng, features, lines: vec![format!("/* {path} */")], blocks: Vec::new(), budget };
    while e.budget > 0 {
        e.body(&Formula::True, 0);
    }
    let mut source = e.lines.join("\n");
    source.push('\n');
    GenFile { path: path.into(), source, blocks: e.blocks }
}

/// A random product line: code files, build-level conditions, feature names.
pub struct GenSpl {
    pub features: Vec<String>,
    pub files: Vec<GenFile>,
    pub build: BuildModel,
}

impl GenSpl {
    /// Combined code and build condition per block, `(file, line, pc)`.
    pub fn block_pcs(&self) -> Vec<(String, usize, Formula)> {
        let mut out = Vec::new();
        for f in &self.files {
            let build = self.build.entries.get(&f.path).cloned().unwrap_or(Formula::True);
            for b in &f.blocks {
                out.push((f.path.clone(), b.line, Formula::And(vec![b.pc.clone(), build.clone()])));
            }
        }
        out
    }
}

pub fn random_spl(rng: &mut StdRng, max_features: usize, max_blocks: usize) -> GenSpl {
    let letters = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"];
    let n = rng.gen_range(1..=max_features);
    let features: Vec<String> = letters[..n].iter().map(|s| s.to_string()).collect();
    let file_count = rng.gen_range(1..=4usize);
    let mut remaining = rng.gen_range(1..=max_blocks);
    let mut files = Vec::new();
    let mut entries = BTreeMap::new();
    for i in 0..file_count {
        let share = if i + 1 == file_count { remaining } else { rng.gen_range(0..=remaining) };
        remaining -= share;
        let path = format!("d{}/f{i}.c", i % 2);
        let file = random_c_file(rng, &features, &path, share);
        if rng.gen_bool(0.75) {
            entries.insert(path, random_formula(rng, &features, 2));
        }
        files.push(file);
    }
    GenSpl { features, files, build: BuildModel { entries, unresolved: Vec::new() } }
}

/// Relative paths of all regular files below `dir`, sorted.
pub fn tree_files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(dir).expect("readable dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).expect("below base").to_string_lossy().replace('\\', "/"));
            }
        }
    }
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Result tables (`*.csv` / `*.json` other than the report) in `dir`, by name.
pub fn result_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.is_file())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name.ends_with(".csv") || name.ends_with(".json")) && name != "run_report.json"
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

/// Copy the fixture source tree (without `.properties` files) to `dest`.
pub fn copy_fixture(dest: &Path) {
    let src = fixture_dir();
    for rel in tree_files(&src) {
        if rel.ends_with(".properties") {
            continue;
        }
        let to = dest.join(&rel);
        fs::create_dir_all(to.parent().unwrap()).unwrap();
        fs::copy(src.join(&rel), to).unwrap();
    }
}
