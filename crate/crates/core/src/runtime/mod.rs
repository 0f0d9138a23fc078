//! Pipeline execution: wires extractors and analysis components from a
//! [`Config`], runs them, and writes result tables, `run_report.json` and
//! `run.log` to the output directory.
//!
//! In parallel mode the build and variability-model pipelines each run on
//! their own thread, code extraction fans out to `jobs` workers, and the
//! analyses consume code models from a bounded channel as they arrive. With
//! `jobs = 1` and `pipeline.sequential = true` everything runs on the calling
//! thread in declaration order. Both modes produce identical result files.

pub mod config;
pub mod dsl;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use globset::{Glob, GlobSet, GlobSetBuilder};
use log::Level;
use serde::Serialize;
use walkdir::WalkDir;

use crate::analysis::{block_metrics, dead_blocks, feature_effects, PcFinder, PcIndex};
use crate::build::{BuildExtractor, BuildModel, BuildOptions, KbuildExtractor, BUILD_FILE_NAMES};
use crate::code::{CodeExtractor, CodeModel, CppExtractor, ExtractOptions};
use crate::persistence::{self, archive, CacheError};
use crate::table::ResultTable;
use crate::varmodel::{KconfigExtractor, VarModelExtractor, VariabilityModel, VmOptions};

pub use config::{
    load_config, load_config_file, AnalysisSpec, Config, ConfigError, LoadError, OutputFormat, Pipeline, Preset,
};
pub use dsl::{parse_pipeline_dsl, Component, DslError, NodeKind, PipelineGraph};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FILE: &str = "run_report.json";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pipeline: {0}")]
    Dsl(#[from] DslError),
    #[error("{component} requires the {pipeline} pipeline, which is not configured")]
    MissingInput { component: String, pipeline: Pipeline },
    #[error("{component}: {message}")]
    Extraction { component: String, message: String },
    #[error("{component}: {message}")]
    Analysis { component: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl RunError {
    /// 1 configuration, 2 extraction, 3 analysis, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Dsl(_) | RunError::MissingInput { .. } => 1,
            RunError::Extraction { .. } => 2,
            RunError::Analysis { .. } => 3,
            RunError::Io { .. } => 4,
        }
    }

    pub fn component(&self) -> Option<&str> {
        match self {
            RunError::MissingInput { component, .. }
            | RunError::Extraction { component, .. }
            | RunError::Analysis { component, .. } => Some(component),
            _ => None,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> RunError {
        RunError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: RunError,
    /// Present when the run got far enough to write a report.
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ComponentReport {
    pub name: String,
    /// `extractor`, `cache` or `analysis`.
    pub source: String,
    /// Wall time from start until the component's output was fully consumed.
    pub elapsed_ms: f64,
    /// Time spent in the component's own work, summed over workers; excludes
    /// waiting on downstream consumers.
    pub busy_ms: f64,
    pub items: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub tool_version: String,
    pub config_fingerprint: String,
    pub status: String,
    pub exit_code: i32,
    pub failing_component: Option<String>,
    pub error: Option<String>,
    pub pipeline: String,
    pub sequential: bool,
    pub jobs: usize,
    pub components: Vec<ComponentReport>,
    /// Number of extractor calls per pipeline (`code` counts files).
    pub extractor_invocations: BTreeMap<String, usize>,
    pub code_files: usize,
    pub blocks: usize,
    pub diagnostics: Vec<String>,
    /// Files written to the output directory, relative to it.
    pub outputs: Vec<String>,
    pub archive: Option<String>,
    pub total_ms: f64,
}

impl RunReport {
    pub fn component(&self, name: &str) -> Option<&ComponentReport> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Resolve the analysis graph for `config` and check its inputs are configured.
pub fn plan(config: &Config) -> Result<PipelineGraph, RunError> {
    let text = match &config.analysis {
        AnalysisSpec::Pipeline(dsl) => dsl.clone(),
        AnalysisSpec::Preset(Preset::FeatureEffects) if config.has_pipeline(Pipeline::Build) => {
            "FeatureEffects(PcFinder(cmComponent(), bmComponent()))".into()
        }
        AnalysisSpec::Preset(Preset::FeatureEffects) => "FeatureEffects(PcFinder(cmComponent()))".into(),
        AnalysisSpec::Preset(Preset::DeadBlocks) => "DeadBlocks(cmComponent(), bmComponent(), vmComponent())".into(),
        AnalysisSpec::Preset(Preset::Metrics) => "BlockMetrics(cmComponent())".into(),
    };
    let graph = parse_pipeline_dsl(&text)?;
    for node in &graph.nodes {
        let NodeKind::Analysis(component) = node.kind else { continue };
        for &input in &node.inputs {
            if let NodeKind::Terminal(p) = graph.nodes[input].kind {
                if !config.has_pipeline(p) {
                    return Err(RunError::MissingInput { component: component.name().into(), pipeline: p });
                }
            }
        }
    }
    for name in &config.intermediate_results {
        let known = graph.component(name).is_some_and(|i| matches!(graph.nodes[i].kind, NodeKind::Analysis(_)));
        if !known {
            return Err(ConfigError::InvalidValue {
                key: "analysis.output.intermediate_results".into(),
                reason: format!("`{name}` is not an analysis component of the pipeline"),
            }
            .into());
        }
    }
    Ok(graph)
}

/// Serialize `table` to `path` in `format`.
pub fn write_table(table: &ResultTable, format: OutputFormat, path: &Path) -> Result<(), RunError> {
    let text = match format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    };
    fs::write(path, text).map_err(|e| RunError::io(path, e))
}

struct RunLog {
    level: log::LevelFilter,
    lines: Mutex<Vec<String>>,
}

impl RunLog {
    fn log(&self, level: Level, component: &str, message: impl AsRef<str>) {
        let message = message.as_ref();
        log::log!(target: "varlab", level, "{component}: {message}");
        if level <= self.level {
            self.lines.lock().expect("log lock").push(format!("{:<5} {component}: {message}", level.as_str()));
        }
    }

    fn text(&self) -> String {
        self.lines.lock().expect("log lock").iter().map(|l| format!("{l}\n")).collect()
    }
}

/// Files under the source tree relevant to each pipeline, relative and sorted.
#[derive(Debug, Default)]
struct Listing {
    all: Vec<String>,
    code: Vec<String>,
    build: Vec<String>,
    vm: Vec<String>,
}

struct Ctx<'c> {
    config: &'c Config,
    source_root: PathBuf,
    log: RunLog,
    components: Mutex<Vec<ComponentReport>>,
    invocations: [AtomicUsize; 3],
    cancelled: AtomicBool,
    code_busy_ns: AtomicU64,
    listing: Listing,
}

fn invocation_slot(p: Pipeline) -> usize {
    match p {
        Pipeline::Code => 0,
        Pipeline::Build => 1,
        Pipeline::Vm => 2,
    }
}

fn extraction_error(component: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Extraction { component: component.into(), message: e.to_string() }
}

fn cache_error(component: &str, e: CacheError) -> RunError {
    RunError::Extraction { component: format!("{component} (cache)"), message: e.to_string() }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn include_set(patterns: &[String]) -> Result<GlobSet, RunError> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p)
            .map_err(|e| ConfigError::InvalidValue { key: "code.include".into(), reason: e.to_string() })?;
        b.add(glob);
    }
    b.build().map_err(|e| ConfigError::InvalidValue { key: "code.include".into(), reason: e.to_string() }.into())
}

fn canonical(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn list_sources(root: &Path, excluded: &[PathBuf], include: &GlobSet) -> Result<Listing, RunError> {
    let mut listing = Listing::default();
    let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        let hidden = e.depth() > 0 && e.file_name().to_string_lossy().starts_with('.');
        !hidden && !excluded.iter().any(|x| e.path() == x.as_path())
    });
    for entry in walker {
        let entry = entry.map_err(|e| RunError::io(root, e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays below root");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let name = entry.file_name().to_string_lossy();
        if include.is_match(&rel) {
            listing.code.push(rel.clone());
        }
        if BUILD_FILE_NAMES.contains(&name.as_ref()) {
            listing.build.push(rel.clone());
        }
        if name.starts_with("Kconfig") {
            listing.vm.push(rel.clone());
        }
        listing.all.push(rel);
    }
    for list in [&mut listing.all, &mut listing.code, &mut listing.build, &mut listing.vm] {
        list.sort();
    }
    Ok(listing)
}

impl Ctx<'_> {
    fn record(&self, name: &str, source: &str, start: Instant, items: usize) -> f64 {
        let elapsed_ms = millis(start);
        self.record_busy(name, source, elapsed_ms, elapsed_ms, items);
        elapsed_ms
    }

    fn record_busy(&self, name: &str, source: &str, elapsed_ms: f64, busy_ms: f64, items: usize) {
        self.components.lock().expect("report lock").push(ComponentReport {
            name: name.into(),
            source: source.into(),
            elapsed_ms,
            busy_ms,
            items,
        });
    }

    fn code_busy_ms(&self) -> f64 {
        self.code_busy_ns.load(Ordering::Relaxed) as f64 / 1e6
    }

    fn invoked(&self, p: Pipeline) {
        self.invocations[invocation_slot(p)].fetch_add(1, Ordering::Relaxed);
    }

    /// Fingerprint of `files`, or `None` when reading a cache without checking it.
    fn fingerprint(&self, p: Pipeline, files: &[String], component: &str) -> Result<Option<String>, RunError> {
        let cache = self.config.cache_use(p);
        if cache.read && self.config.cache_ignore_fingerprint {
            return Ok(None);
        }
        if !cache.read && !cache.write {
            return Ok(None);
        }
        persistence::fingerprint(&self.source_root, files).map(Some).map_err(|e| cache_error(component, e))
    }

    fn build_model(&self) -> Result<BuildModel, RunError> {
        let name = "bmComponent";
        let start = Instant::now();
        let cache = self.config.cache_use(Pipeline::Build);
        let fp = self.fingerprint(Pipeline::Build, &self.listing.build, name)?;
        let dir = &self.config.cache_dir;
        if cache.read {
            let model = persistence::read_build_cache(dir, fp.as_deref()).map_err(|e| cache_error(name, e))?;
            let ms = self.record(name, "cache", start, model.entries.len());
            self.log.log(Level::Info, name, format!("loaded {} entries from cache ({ms:.1} ms)", model.entries.len()));
            return Ok(model);
        }
        self.invoked(Pipeline::Build);
        let extractor = KbuildExtractor {
            options: BuildOptions { prefix: self.config.prefix.clone(), tristate: self.config.build_tristate },
        };
        let model = extractor.extract(&self.source_root).map_err(|e| extraction_error(name, e))?;
        for u in &model.unresolved {
            self.log.log(Level::Debug, name, format!("{}:{}: unresolved `{}`", u.file, u.line, u.text));
        }
        if let Some(fp) = &fp {
            persistence::write_build_cache(dir, &model, fp).map_err(|e| cache_error(name, e))?;
        }
        let ms = self.record(name, "extractor", start, model.entries.len());
        self.log.log(
            Level::Info,
            name,
            format!("{} entries, {} unresolved ({ms:.1} ms)", model.entries.len(), model.unresolved.len()),
        );
        Ok(model)
    }

    fn vm_model(&self) -> Result<VariabilityModel, RunError> {
        let name = "vmComponent";
        let start = Instant::now();
        let cache = self.config.cache_use(Pipeline::Vm);
        let fp = self.fingerprint(Pipeline::Vm, &self.listing.vm, name)?;
        let dir = &self.config.cache_dir;
        if cache.read {
            let model = persistence::read_vm_cache(dir, fp.as_deref()).map_err(|e| cache_error(name, e))?;
            let ms = self.record(name, "cache", start, model.features.len());
            self.log.log(Level::Info, name, format!("loaded {} features from cache ({ms:.1} ms)", model.features.len()));
            return Ok(model);
        }
        self.invoked(Pipeline::Vm);
        let extractor = KconfigExtractor { options: VmOptions { allow_undeclared: self.config.vm_allow_undeclared } };
        let model = extractor.extract(&self.source_root, &self.config.vm_files).map_err(|e| extraction_error(name, e))?;
        if let Some(fp) = &fp {
            persistence::write_vm_cache(dir, &model, fp).map_err(|e| cache_error(name, e))?;
        }
        let ms = self.record(name, "extractor", start, model.features.len());
        self.log.log(
            Level::Info,
            name,
            format!("{} features, {} constraints ({ms:.1} ms)", model.features.len(), model.source_positions.len()),
        );
        Ok(model)
    }

    fn code_extractor(&self) -> CppExtractor {
        CppExtractor { options: ExtractOptions { prefix: self.config.prefix.clone() } }
    }

    fn extract_one(&self, extractor: &dyn CodeExtractor, rel: &str, fp: Option<&str>) -> Result<CodeModel, RunError> {
        let start = Instant::now();
        let result = self.extract_uncounted(extractor, rel, fp);
        self.code_busy_ns.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        result
    }

    fn extract_uncounted(&self, extractor: &dyn CodeExtractor, rel: &str, fp: Option<&str>) -> Result<CodeModel, RunError> {
        let name = "cmComponent";
        let path = self.source_root.join(rel);
        let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
        self.invoked(Pipeline::Code);
        let model = extractor.extract(&String::from_utf8_lossy(&bytes), rel).map_err(|e| extraction_error(name, e))?;
        if let Some(fp) = fp.filter(|_| self.config.cache_use(Pipeline::Code).write) {
            persistence::write_code_model(&self.config.cache_dir, &model, fp).map_err(|e| cache_error(name, e))?;
        }
        Ok(model)
    }

    /// Code pipeline setup: either cached models or the fingerprint used for cache writes.
    fn code_source(&self) -> Result<CodeSource, RunError> {
        let name = "cmComponent";
        let cache = self.config.cache_use(Pipeline::Code);
        let start = Instant::now();
        let fp = self.fingerprint(Pipeline::Code, &self.listing.code, name)?;
        if cache.read {
            let models = persistence::read_code_cache(&self.config.cache_dir, fp.as_deref())
                .map_err(|e| cache_error(name, e))?;
            self.code_busy_ns.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
            return Ok(CodeSource::Cached(models, start));
        }
        if cache.write {
            persistence::reset_code_cache(&self.config.cache_dir).map_err(|e| cache_error(name, e))?;
        }
        self.code_busy_ns.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        Ok(CodeSource::Extract(fp))
    }
}

enum CodeSource {
    Cached(Vec<CodeModel>, Instant),
    Extract(Option<String>),
}

/// Incremental consumer of the code-model stream.
struct Consumer<'b> {
    finder: Option<PcFinder<'b>>,
    finder_ms: f64,
    keep_models: bool,
    models: Vec<CodeModel>,
    files: usize,
    blocks: usize,
}

impl<'b> Consumer<'b> {
    fn new(graph: &PipelineGraph, build: Option<&'b BuildModel>, missing_default: bool) -> Self {
        let analyses: Vec<Component> = graph
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Analysis(c) => Some(c),
                _ => None,
            })
            .collect();
        let pc_build = graph.component("PcFinder").and_then(|i| {
            let uses_build = graph.nodes[i].inputs.len() > 1;
            uses_build.then_some(build).flatten()
        });
        Consumer {
            finder: analyses.contains(&Component::PcFinder).then(|| PcFinder::new(pc_build, missing_default)),
            finder_ms: 0.0,
            keep_models: analyses.iter().any(|c| matches!(c, Component::DeadBlocks | Component::BlockMetrics)),
            models: Vec::new(),
            files: 0,
            blocks: 0,
        }
    }

    fn add(&mut self, model: CodeModel) {
        self.files += 1;
        self.blocks += model.block_count();
        if let Some(f) = self.finder.as_mut() {
            let start = Instant::now();
            f.add(&model);
            self.finder_ms += millis(start);
        }
        if self.keep_models {
            self.models.push(model);
        }
    }
}

struct Outcome {
    tables: BTreeMap<String, ResultTable>,
    files: usize,
    blocks: usize,
}

fn analyse(
    ctx: &Ctx,
    graph: &PipelineGraph,
    mut consumer: Consumer,
    build: Option<&BuildModel>,
    vm: Option<&VariabilityModel>,
) -> Result<Outcome, RunError> {
    consumer.models.sort_by(|a, b| a.file.cmp(&b.file));
    let mut tables = BTreeMap::new();
    let mut index: Option<PcIndex> = None;
    let missing_default = ctx.config.build_missing_file_pc;
    for node in &graph.nodes {
        let NodeKind::Analysis(component) = node.kind else { continue };
        let start = Instant::now();
        let table = match component {
            Component::PcFinder => {
                let out = consumer.finder.take().expect("consumer built a finder").finish();
                index = Some(out.index);
                out.table
            }
            Component::FeatureEffects => feature_effects(index.as_ref().expect("PcFinder precedes FeatureEffects")),
            Component::DeadBlocks => dead_blocks(&consumer.models, build, vm, missing_default)
                .map_err(|e| RunError::Analysis { component: component.name().into(), message: e.to_string() })?,
            Component::BlockMetrics => block_metrics(&consumer.models),
        };
        let extra = if component == Component::PcFinder { consumer.finder_ms } else { 0.0 };
        let ms = ctx.record(component.name(), "analysis", start, table.len()) + extra;
        ctx.log.log(Level::Info, component.name(), format!("{} rows ({ms:.1} ms)", table.len()));
        tables.insert(component.name().to_owned(), table);
    }
    Ok(Outcome { tables, files: consumer.files, blocks: consumer.blocks })
}

fn needs(graph: &PipelineGraph, p: Pipeline) -> bool {
    graph.pipelines().contains(&p)
}

fn execute_sequential(ctx: &Ctx, graph: &PipelineGraph) -> Result<Outcome, RunError> {
    let build = needs(graph, Pipeline::Build).then(|| ctx.build_model()).transpose()?;
    let vm = needs(graph, Pipeline::Vm).then(|| ctx.vm_model()).transpose()?;
    let mut consumer = Consumer::new(graph, build.as_ref(), ctx.config.build_missing_file_pc);
    if needs(graph, Pipeline::Code) {
        match ctx.code_source()? {
            CodeSource::Cached(models, start) => {
                let n = models.len();
                models.into_iter().for_each(|m| consumer.add(m));
                ctx.record_busy("cmComponent", "cache", millis(start), ctx.code_busy_ms(), n);
            }
            CodeSource::Extract(fp) => {
                let start = Instant::now();
                let extractor = ctx.code_extractor();
                for rel in &ctx.listing.code {
                    consumer.add(ctx.extract_one(&extractor, rel, fp.as_deref())?);
                }
                ctx.record_busy("cmComponent", "extractor", millis(start), ctx.code_busy_ms(), ctx.listing.code.len());
            }
        }
    }
    analyse(ctx, graph, consumer, build.as_ref(), vm.as_ref())
}

fn code_workers<'s>(
    scope: &'s thread::Scope<'s, '_>,
    ctx: &'s Ctx,
    fp: Option<String>,
    out: Sender<Result<CodeModel, RunError>>,
) {
    let (job_tx, job_rx): (Sender<&str>, Receiver<&str>) = unbounded();
    for rel in &ctx.listing.code {
        job_tx.send(rel).expect("receiver alive");
    }
    drop(job_tx);
    for _ in 0..ctx.config.jobs.max(1) {
        let (jobs, out, fp) = (job_rx.clone(), out.clone(), fp.clone());
        scope.spawn(move || {
            let extractor = ctx.code_extractor();
            while let Ok(rel) = jobs.recv() {
                if ctx.cancelled.load(Ordering::Relaxed) {
                    return;
                }
                let result = ctx.extract_one(&extractor, rel, fp.as_deref());
                let failed = result.is_err();
                if out.send(result).is_err() || failed {
                    return;
                }
            }
        });
    }
}

fn execute_parallel(ctx: &Ctx, graph: &PipelineGraph) -> Result<Outcome, RunError> {
    thread::scope(|s| {
        let build_rx = needs(graph, Pipeline::Build).then(|| {
            let (tx, rx) = bounded(1);
            s.spawn(move || tx.send(ctx.build_model()));
            rx
        });
        let vm_rx = needs(graph, Pipeline::Vm).then(|| {
            let (tx, rx) = bounded(1);
            s.spawn(move || tx.send(ctx.vm_model()));
            rx
        });

        let (code_tx, code_rx) = bounded(ctx.config.pipeline_buffer);
        let mut code_start = None;
        if needs(graph, Pipeline::Code) {
            let start = Instant::now();
            match ctx.code_source() {
                Ok(CodeSource::Cached(models, start)) => {
                    code_start = Some((start, "cache"));
                    let tx = code_tx.clone();
                    s.spawn(move || {
                        for m in models {
                            if tx.send(Ok(m)).is_err() {
                                return;
                            }
                        }
                    });
                }
                Ok(CodeSource::Extract(fp)) => {
                    code_start = Some((start, "extractor"));
                    code_workers(s, ctx, fp, code_tx.clone());
                }
                Err(e) => {
                    ctx.cancelled.store(true, Ordering::Relaxed);
                    return Err(e);
                }
            }
        }
        drop(code_tx);

        let abort = |e: RunError| {
            ctx.cancelled.store(true, Ordering::Relaxed);
            e
        };
        let build = build_rx.map(|rx| rx.recv().expect("build thread reports")).transpose().map_err(abort)?;
        let vm = vm_rx.map(|rx| rx.recv().expect("vm thread reports")).transpose().map_err(abort)?;
        let mut consumer = Consumer::new(graph, build.as_ref(), ctx.config.build_missing_file_pc);
        for item in code_rx.iter() {
            consumer.add(item.map_err(abort)?);
        }
        if let Some((start, source)) = code_start {
            ctx.record_busy("cmComponent", source, millis(start), ctx.code_busy_ms(), consumer.files);
        }
        analyse(ctx, graph, consumer, build.as_ref(), vm.as_ref())
    })
}

/// Execute `config`; on failure the returned report (if any) names the failing component.
pub fn run(config: &Config) -> Result<RunReport, RunFailure> {
    let fail = |error: RunError| RunFailure { error, report: None };
    let started = Instant::now();
    let graph = plan(config).map_err(fail)?;
    fs::create_dir_all(&config.output_dir).map_err(|e| fail(RunError::io(&config.output_dir, e)))?;
    let output_dir = canonical(&config.output_dir);

    let log = RunLog { level: config.log_level, lines: Mutex::new(Vec::new()) };
    for w in &config.warnings {
        log.log(Level::Warn, "config", w);
    }

    let source_root = canonical(&config.source_tree);
    let mut listing = Listing::default();
    let code_from_cache = config.cache_use(Pipeline::Code).read && config.cache_ignore_fingerprint;
    let walk_needed = graph.pipelines().iter().any(|&p| !(config.cache_use(p).read && config.cache_ignore_fingerprint))
        || (config.archive && config.archive_include_sources);
    let mut early_error = None;
    if walk_needed || !code_from_cache {
        if !source_root.is_dir() {
            early_error = Some(RunError::io(&config.source_tree, "source tree is not a readable directory"));
        } else {
            match include_set(&config.code_include)
                .and_then(|inc| list_sources(&source_root, &[output_dir.clone(), canonical(&config.cache_dir)], &inc))
            {
                Ok(l) => listing = l,
                Err(e) => early_error = Some(e),
            }
        }
    }

    let ctx = Ctx {
        config,
        source_root,
        log,
        components: Mutex::new(Vec::new()),
        invocations: Default::default(),
        cancelled: AtomicBool::new(false),
        code_busy_ns: AtomicU64::new(0),
        listing,
    };
    ctx.log.log(Level::Info, "runtime", format!("pipeline {}", graph.to_dsl()));

    let mut written: Vec<PathBuf> = Vec::new();
    let result = match early_error {
        Some(e) => Err(e),
        None if config.sequential() => execute_sequential(&ctx, &graph),
        None => execute_parallel(&ctx, &graph),
    };
    let result = result.and_then(|outcome| {
        let sink = graph.nodes[graph.sink].name();
        for (name, table) in &outcome.tables {
            if name != sink && !config.intermediate_results.contains(name) {
                continue;
            }
            let path = output_dir.join(format!("{}.{}", dsl::snake_case(name), config.output_format.extension()));
            write_table(table, config.output_format, &path)?;
            written.push(path);
        }
        Ok(outcome)
    });

    let mut report = RunReport {
        tool_version: TOOL_VERSION.into(),
        config_fingerprint: config.fingerprint(),
        status: "success".into(),
        exit_code: 0,
        failing_component: None,
        error: None,
        pipeline: graph.to_dsl(),
        sequential: config.sequential(),
        jobs: config.jobs,
        components: Vec::new(),
        extractor_invocations: Pipeline::ALL
            .iter()
            .map(|&p| (p.key().to_owned(), ctx.invocations[invocation_slot(p)].load(Ordering::Relaxed)))
            .collect(),
        code_files: 0,
        blocks: 0,
        diagnostics: config.warnings.clone(),
        outputs: Vec::new(),
        archive: None,
        total_ms: 0.0,
    };
    let error = match result {
        Ok(outcome) => {
            report.code_files = outcome.files;
            report.blocks = outcome.blocks;
            None
        }
        Err(e) => {
            ctx.log.log(Level::Error, e.component().unwrap_or("runtime"), e.to_string());
            report.status = "failed".into();
            report.exit_code = e.exit_code();
            report.failing_component = e.component().map(str::to_owned);
            report.error = Some(e.to_string());
            if !config.keep_partial {
                for path in written.drain(..) {
                    let _ = fs::remove_file(path);
                }
            }
            Some(e)
        }
    };
    let mut components = ctx.components.lock().expect("report lock").clone();
    components.sort_by(|a, b| a.name.cmp(&b.name));
    report.components = components;
    let rel = |p: &Path| p.strip_prefix(&output_dir).unwrap_or(p).display().to_string();
    report.outputs = written.iter().map(|p| rel(p)).collect();
    report.outputs.extend([LOG_FILE.to_owned(), REPORT_FILE.to_owned()]);

    let log_path = output_dir.join(LOG_FILE);
    let report_path = output_dir.join(REPORT_FILE);
    let write_meta = |report: &mut RunReport| -> Result<(), RunError> {
        report.total_ms = millis(started);
        fs::write(&log_path, ctx.log.text()).map_err(|e| RunError::io(&log_path, e))?;
        let mut text = serde_json::to_string_pretty(report).expect("report serializes");
        text.push('\n');
        fs::write(&report_path, text).map_err(|e| RunError::io(&report_path, e))
    };
    let mut error = error;
    if let Err(e) = write_meta(&mut report) {
        return Err(RunFailure { error: error.unwrap_or(e), report: Some(report) });
    }

    if config.archive {
        let contents = archive::ArchiveContents {
            tool_version: TOOL_VERSION.into(),
            config_fingerprint: report.config_fingerprint.clone(),
            config_properties: config.to_properties(),
            sources: config.archive_include_sources.then(|| (ctx.source_root.clone(), ctx.listing.all.clone())),
            cache_dir: config.cache_dir.clone(),
            results: written.clone(),
            run_log: Some(log_path.clone()),
            run_report: Some(report_path.clone()),
        };
        match archive::archive_run(&contents, &config.archive_path, config.archive_overwrite) {
            Ok(_) => {
                ctx.log.log(Level::Info, "archive", format!("wrote {}", config.archive_path.display()));
                report.archive = Some(config.archive_path.display().to_string());
                if !report.outputs.iter().any(|o| Path::new(o) == config.archive_path) {
                    report.outputs.push(rel(&config.archive_path));
                }
            }
            Err(e) => {
                let e = RunError::io(&config.archive_path, e);
                ctx.log.log(Level::Error, "archive", e.to_string());
                if error.is_none() {
                    report.status = "failed".into();
                    report.exit_code = e.exit_code();
                    report.failing_component = Some("archive".into());
                    report.error = Some(e.to_string());
                    error = Some(e);
                }
            }
        }
        if let Err(e) = write_meta(&mut report) {
            error.get_or_insert(e);
        }
    }

    match error {
        None => Ok(report),
        Some(error) => Err(RunFailure { error, report: Some(report) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> Config {
        let text = format!("source_tree = src\noutput_dir = out\n{extra}");
        load_config(&text, Path::new("/nowhere"), &[]).unwrap()
    }

    #[test]
    fn presets_follow_configured_pipelines() {
        let g = plan(&config("analysis.preset = feature_effects\n")).unwrap();
        assert_eq!(g.to_dsl(), "FeatureEffects(PcFinder(cmComponent()))");
        let g = plan(&config("analysis.preset = feature_effects\nbuild.extractor = kbuild\n")).unwrap();
        assert_eq!(g.to_dsl(), "FeatureEffects(PcFinder(cmComponent(), bmComponent()))");
    }

    #[test]
    fn missing_vm_pipeline_is_named() {
        let cfg = config("analysis.pipeline = DeadBlocks(cmComponent(), bmComponent(), vmComponent())\nbuild.extractor = kbuild\n");
        let err = plan(&cfg).unwrap_err();
        assert!(matches!(err, RunError::MissingInput { pipeline: Pipeline::Vm, .. }));
        assert!(err.to_string().contains("variability-model"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn intermediate_results_must_name_components() {
        let cfg = config("analysis.preset = metrics\nanalysis.output.intermediate_results = PcFinder\n");
        assert!(matches!(plan(&cfg), Err(RunError::Config(ConfigError::InvalidValue { .. }))));
    }
}
