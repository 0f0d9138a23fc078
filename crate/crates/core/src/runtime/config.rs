//! Properties-style run configuration.
//!
//! Syntax: `key = value` per line, `#` starts a comment line, blank lines are
//! ignored. A later duplicate key overrides an earlier one with a warning.
//! Relative paths resolve against the directory the configuration lives in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    SyntaxError { line: usize },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("missing required key `{0}`")]
    MissingRequired(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    FeatureEffects,
    DeadBlocks,
    Metrics,
}

impl Preset {
    fn parse(s: &str) -> Option<Preset> {
        match s {
            "feature_effects" => Some(Preset::FeatureEffects),
            "dead_blocks" => Some(Preset::DeadBlocks),
            "metrics" => Some(Preset::Metrics),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisSpec {
    Preset(Preset),
    Pipeline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// One extraction pipeline (code, build or variability model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pipeline {
    Code,
    Build,
    Vm,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Code, Pipeline::Build, Pipeline::Vm];

    /// Key namespace, also the cache `kind`.
    pub fn key(self) -> &'static str {
        match self {
            Pipeline::Code => "code",
            Pipeline::Build => "build",
            Pipeline::Vm => "vm",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Pipeline::Code => "code-model",
            Pipeline::Build => "build-model",
            Pipeline::Vm => "variability-model",
        }
    }

    fn default_extractor(self) -> &'static str {
        match self {
            Pipeline::Code => "cpp",
            Pipeline::Build => "kbuild",
            Pipeline::Vm => "kconfig",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheUse {
    pub read: bool,
    pub write: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    /// Effective key/value pairs after overrides, sorted by key.
    pub entries: BTreeMap<String, String>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub warnings: Vec<String>,

    pub source_tree: PathBuf,
    pub output_dir: PathBuf,
    pub analysis: AnalysisSpec,
    pub intermediate_results: Vec<String>,
    pub output_format: OutputFormat,
    pub keep_partial: bool,
    /// Extractor name per configured pipeline; an absent key disables the pipeline.
    pub extractors: BTreeMap<Pipeline, String>,
    pub cache: BTreeMap<Pipeline, CacheUse>,
    pub code_include: Vec<String>,
    pub prefix: String,
    pub build_tristate: bool,
    pub build_missing_file_pc: bool,
    pub vm_files: Vec<String>,
    pub vm_allow_undeclared: bool,
    pub cache_dir: PathBuf,
    pub cache_ignore_fingerprint: bool,
    pub archive: bool,
    pub archive_path: PathBuf,
    pub archive_include_sources: bool,
    pub archive_overwrite: bool,
    pub log_level: log::LevelFilter,
    pub jobs: usize,
    pub pipeline_buffer: usize,
    pub pipeline_sequential: bool,
}

pub const KNOWN_KEYS: &[&str] = &[
    "source_tree",
    "output_dir",
    "analysis.preset",
    "analysis.pipeline",
    "analysis.output.intermediate_results",
    "analysis.output.format",
    "output.keep_partial",
    "code.extractor",
    "code.include",
    "code.cache.read",
    "code.cache.write",
    "variability.prefix",
    "build.extractor",
    "build.tristate",
    "build.missing_file_pc",
    "build.cache.read",
    "build.cache.write",
    "vm.extractor",
    "vm.files",
    "vm.allow_undeclared",
    "vm.cache.read",
    "vm.cache.write",
    "cache.dir",
    "cache.ignore_fingerprint",
    "archive",
    "archive.path",
    "archive.include_sources",
    "archive.overwrite",
    "log.level",
    "jobs",
    "pipeline.buffer",
    "pipeline.sequential",
];

/// Parse properties text into `(line, key, value)` triples in file order.
pub fn parse_properties(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::SyntaxError { line: i + 1 });
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::SyntaxError { line: i + 1 });
        }
        out.push((i + 1, key.to_owned(), value.trim().to_owned()));
    }
    Ok(out)
}

/// Load configuration text, then apply `overrides` in order, then validate.
pub fn load_config(text: &str, base_dir: &Path, overrides: &[(String, String)]) -> Result<Config, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut warnings = Vec::new();
    for (line, key, value) in parse_properties(text)? {
        if entries.insert(key.clone(), value).is_some() {
            warnings.push(format!("line {line}: duplicate key `{key}` overrides earlier value"));
        }
    }
    for (key, value) in overrides {
        if let Some(old) = entries.insert(key.clone(), value.clone()) {
            if &old != value {
                warnings.push(format!("override `{key} = {value}` replaces configured `{old}`"));
            }
        }
    }
    Config::from_entries(entries, base_dir, warnings)
}

pub fn load_config_file(path: &Path, overrides: &[(String, String)]) -> Result<Config, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(load_config(&text, &base, overrides)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

struct Values<'a> {
    entries: &'a BTreeMap<String, String>,
    base: &'a Path,
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_owned(), reason: reason.into() }
}

impl Values<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        match self.get(key) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(ConfigError::MissingRequired(key.to_owned())),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(invalid(key, format!("expected true or false, got `{other}`"))),
        }
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(invalid(key, format!("expected a positive integer, got `{v}`"))),
            },
        }
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn list(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.get(key) {
            None => default.iter().map(|s| (*s).to_owned()).collect(),
            Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect(),
        }
    }
}

impl Config {
    pub fn from_entries(
        entries: BTreeMap<String, String>,
        base_dir: &Path,
        mut warnings: Vec<String>,
    ) -> Result<Config, ConfigError> {
        for key in entries.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                warnings.push(format!("unknown configuration key `{key}` ignored"));
            }
        }
        let v = Values { entries: &entries, base: base_dir };

        let source_tree = v.path(v.required("source_tree")?);
        let output_dir = v.path(v.required("output_dir")?);
        let analysis = match (v.get("analysis.preset"), v.get("analysis.pipeline")) {
            (Some(_), Some(_)) => {
                return Err(invalid("analysis.pipeline", "set either analysis.preset or analysis.pipeline, not both"))
            }
            (Some(p), None) => AnalysisSpec::Preset(
                Preset::parse(p)
                    .ok_or_else(|| invalid("analysis.preset", format!("unknown preset `{p}` (feature_effects, dead_blocks, metrics)")))?,
            ),
            (None, Some(dsl)) if !dsl.is_empty() => AnalysisSpec::Pipeline(dsl.to_owned()),
            _ => return Err(ConfigError::MissingRequired("analysis.pipeline".into())),
        };
        let output_format = match v.get("analysis.output.format").unwrap_or("csv") {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(invalid("analysis.output.format", format!("expected csv or json, got `{other}`"))),
        };

        let mut extractors = BTreeMap::new();
        let mut cache = BTreeMap::new();
        for p in Pipeline::ALL {
            let key = format!("{}.extractor", p.key());
            let name = match (p, v.get(&key)) {
                (Pipeline::Code, None) => Some(p.default_extractor().to_owned()),
                (_, None) => None,
                (_, Some(name)) if name == p.default_extractor() => Some(name.to_owned()),
                (_, Some(name)) => {
                    return Err(invalid(&key, format!("unknown extractor `{name}` (available: {})", p.default_extractor())))
                }
            };
            if let Some(name) = name {
                extractors.insert(p, name);
            }
            cache.insert(
                p,
                CacheUse {
                    read: v.bool(&format!("{}.cache.read", p.key()), false)?,
                    write: v.bool(&format!("{}.cache.write", p.key()), false)?,
                },
            );
        }

        let code_include = v.list("code.include", &["**/*.c", "**/*.h"]);
        for pattern in &code_include {
            globset::Glob::new(pattern).map_err(|e| invalid("code.include", e.to_string()))?;
        }
        let prefix = v.get("variability.prefix").unwrap_or("CONFIG_").to_owned();
        let vm_files = v.list("vm.files", &["Kconfig"]);
        if vm_files.is_empty() {
            return Err(invalid("vm.files", "at least one file is required"));
        }
        let log_level = match v.get("log.level").unwrap_or("info") {
            "error" => log::LevelFilter::Error,
            "warn" => log::LevelFilter::Warn,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            other => return Err(invalid("log.level", format!("expected error, warn, info or debug, got `{other}`"))),
        };
        let default_jobs = std::thread::available_parallelism().map_or(1, |n| n.get());

        Ok(Config {
            source_tree,
            analysis,
            intermediate_results: v.list("analysis.output.intermediate_results", &[]),
            output_format,
            keep_partial: v.bool("output.keep_partial", false)?,
            extractors,
            cache,
            code_include,
            prefix,
            build_tristate: v.bool("build.tristate", true)?,
            build_missing_file_pc: v.bool("build.missing_file_pc", true)?,
            vm_files,
            vm_allow_undeclared: v.bool("vm.allow_undeclared", false)?,
            cache_dir: v.get("cache.dir").map_or_else(|| output_dir.join("cache"), |d| v.path(d)),
            cache_ignore_fingerprint: v.bool("cache.ignore_fingerprint", false)?,
            archive: v.bool("archive", false)?,
            archive_path: v.get("archive.path").map_or_else(|| output_dir.join("archive.zip"), |p| v.path(p)),
            archive_include_sources: v.bool("archive.include_sources", true)?,
            archive_overwrite: v.bool("archive.overwrite", false)?,
            log_level,
            jobs: v.positive("jobs", default_jobs)?,
            pipeline_buffer: v.positive("pipeline.buffer", 64)?,
            pipeline_sequential: v.bool("pipeline.sequential", false)?,
            output_dir,
            warnings,
            base_dir: base_dir.to_path_buf(),
            entries,
        })
    }

    pub fn has_pipeline(&self, p: Pipeline) -> bool {
        self.extractors.contains_key(&p)
    }

    pub fn cache_use(&self, p: Pipeline) -> CacheUse {
        let c = self.cache.get(&p).copied().unwrap_or_default();
        CacheUse { read: c.read, write: c.write || (self.archive && !c.read) }
    }

    /// Everything runs in one task in declaration order.
    pub fn sequential(&self) -> bool {
        self.jobs == 1 && self.pipeline_sequential
    }

    /// SHA-256 over the effective `key=value` lines in key order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }

    /// Effective entries rendered back to properties text.
    pub fn to_properties(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
