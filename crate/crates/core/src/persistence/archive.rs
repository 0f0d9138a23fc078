//! Reproduction archives: a zip holding the configuration, inputs, caches,
//! results and log of one run, with a manifest of per-entry SHA-256 hashes.
//!
//! ```text
//! manifest.json
//! config.properties
//! input/...        (unless sources are excluded)
//! cache/...
//! results/...
//! run.log
//! run_report.json
//! ```
//!
//! Entries carry a fixed timestamp and permissions, so two archives of the
//! same run differ only in the manifest's `created` field.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;
use zip::write::SimpleFileOptions;

use crate::runtime::config::{load_config, Config, ConfigError};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ENTRY: &str = "config.properties";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub tool_version: String,
    pub config_fingerprint: String,
    /// Not part of reproducibility comparisons.
    pub created: String,
    pub sources_included: bool,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{} already exists (set archive.overwrite = true to replace it)", .0.display())]
    Exists(PathBuf),
    #[error("archive entry `{path}` failed verification: {reason}")]
    TamperDetected { path: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// What goes into an archive; paths are read at archive time.
#[derive(Debug, Clone)]
pub struct ArchiveContents {
    pub tool_version: String,
    pub config_fingerprint: String,
    pub config_properties: String,
    /// Source root and the files (relative, `/`-separated) copied to `input/`.
    pub sources: Option<(PathBuf, Vec<String>)>,
    pub cache_dir: PathBuf,
    pub results: Vec<PathBuf>,
    pub run_log: Option<PathBuf>,
    pub run_report: Option<PathBuf>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, ArchiveError> {
    fs::read(path).map_err(|source| ArchiveError::Io { path: path.to_path_buf(), source })
}

fn relative_files(root: &Path) -> Result<Vec<String>, ArchiveError> {
    let mut out = Vec::new();
    if !root.is_dir() {
        return Ok(out);
    }
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| ArchiveError::Io {
            path: root.to_path_buf(),
            source: e.into_io_error().unwrap_or_else(|| io::Error::other("directory walk failed")),
        })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).expect("walk stays below root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(out)
}

fn file_options() -> SimpleFileOptions {
    SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644)
}

/// Write the archive to `out`; returns the manifest stored in it.
pub fn archive_run(contents: &ArchiveContents, out: &Path, overwrite: bool) -> Result<ArchiveManifest, ArchiveError> {
    if out.exists() && !overwrite {
        return Err(ArchiveError::Exists(out.to_path_buf()));
    }
    let mut entries: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    entries.insert(CONFIG_ENTRY.into(), contents.config_properties.clone().into_bytes());
    if let Some((root, files)) = &contents.sources {
        for rel in files {
            entries.insert(format!("input/{rel}"), read(&root.join(rel))?);
        }
    }
    for rel in relative_files(&contents.cache_dir)? {
        entries.insert(format!("cache/{rel}"), read(&contents.cache_dir.join(&rel))?);
    }
    for path in &contents.results {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        entries.insert(format!("results/{name}"), read(path)?);
    }
    if let Some(log) = &contents.run_log {
        entries.insert("run.log".into(), read(log)?);
    }
    if let Some(report) = &contents.run_report {
        entries.insert("run_report.json".into(), read(report)?);
    }

    let manifest = ArchiveManifest {
        tool_version: contents.tool_version.clone(),
        config_fingerprint: contents.config_fingerprint.clone(),
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        sources_included: contents.sources.is_some(),
        files: entries.iter().map(|(path, bytes)| ManifestFile { path: path.clone(), sha256: sha256(bytes) }).collect(),
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');

    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).map_err(|source| ArchiveError::Io { path: parent.to_path_buf(), source })?;
    }
    let io_err = |source: io::Error| ArchiveError::Io { path: out.to_path_buf(), source };
    let zip_err = |e: zip::result::ZipError| ArchiveError::Format { path: out.to_path_buf(), reason: e.to_string() };
    let file = fs::File::create(out).map_err(io_err)?;
    let mut zip = zip::ZipWriter::new(io::BufWriter::new(file));
    zip.start_file(MANIFEST, file_options()).map_err(zip_err)?;
    zip.write_all(manifest_text.as_bytes()).map_err(io_err)?;
    for (name, bytes) in &entries {
        zip.start_file(name.as_str(), file_options()).map_err(zip_err)?;
        zip.write_all(bytes).map_err(io_err)?;
    }
    zip.finish().map_err(zip_err)?.flush().map_err(io_err)?;
    Ok(manifest)
}

/// Read every entry of an archive, checking it against the manifest.
pub fn verify(archive: &Path) -> Result<(ArchiveManifest, BTreeMap<String, Vec<u8>>), ArchiveError> {
    let format = |reason: String| ArchiveError::Format { path: archive.to_path_buf(), reason };
    let file = fs::File::open(archive).map_err(|source| ArchiveError::Io { path: archive.to_path_buf(), source })?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| format(e.to_string()))?;
    let mut entries = BTreeMap::new();
    for i in 0..zip.len() {
        let mut entry = zip.by_index(i).map_err(|e| format(e.to_string()))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_owned();
        if entry.enclosed_name().is_none() {
            return Err(ArchiveError::TamperDetected { path: name, reason: "path escapes the archive root".into() });
        }
        let mut bytes = Vec::new();
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| ArchiveError::TamperDetected { path: name.clone(), reason: e.to_string() })?;
        entries.insert(name, bytes);
    }
    let manifest_bytes = entries.remove(MANIFEST).ok_or_else(|| format("manifest.json is missing".into()))?;
    let manifest: ArchiveManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| format(format!("manifest.json: {e}")))?;
    for listed in &manifest.files {
        match entries.get(&listed.path) {
            None => {
                return Err(ArchiveError::TamperDetected { path: listed.path.clone(), reason: "listed but absent".into() })
            }
            Some(bytes) if sha256(bytes) != listed.sha256 => {
                return Err(ArchiveError::TamperDetected { path: listed.path.clone(), reason: "hash mismatch".into() })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = entries.keys().find(|k| !manifest.files.iter().any(|f| &f.path == *k)) {
        return Err(ArchiveError::TamperDetected { path: extra.clone(), reason: "not listed in manifest".into() });
    }
    Ok((manifest, entries))
}

/// Verify `archive`, then extract it into `dest`; nothing is written when verification fails.
pub fn unpack(archive: &Path, dest: &Path) -> Result<ArchiveManifest, ArchiveError> {
    let (manifest, entries) = verify(archive)?;
    let write = |name: &str, bytes: &[u8]| -> Result<(), ArchiveError> {
        let path = dest.join(name);
        let io_err = |source| ArchiveError::Io { path: path.clone(), source };
        fs::create_dir_all(path.parent().expect("entries live below dest")).map_err(io_err)?;
        fs::write(&path, bytes).map_err(io_err)
    };
    for (name, bytes) in &entries {
        write(name, bytes)?;
    }
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    write(MANIFEST, manifest_text.as_bytes())?;
    Ok(manifest)
}

/// Configuration that reruns an unpacked archive from its caches into `output_dir`.
pub fn reproduction_config(unpacked: &Path, output_dir: &Path) -> Result<Config, ArchiveError> {
    let config_path = unpacked.join(CONFIG_ENTRY);
    let text = fs::read_to_string(&config_path).map_err(|source| ArchiveError::Io { path: config_path, source })?;
    let cache = unpacked.join("cache");
    let input = unpacked.join("input");
    let mut overrides: Vec<(String, String)> = vec![
        ("output_dir".into(), output_dir.display().to_string()),
        ("cache.dir".into(), cache.display().to_string()),
        ("archive".into(), "false".into()),
    ];
    if input.is_dir() {
        overrides.push(("source_tree".into(), input.display().to_string()));
    } else {
        overrides.push(("source_tree".into(), unpacked.display().to_string()));
        overrides.push(("cache.ignore_fingerprint".into(), "true".into()));
    }
    for (kind, present) in
        [("code", cache.join("code").is_dir()), ("build", cache.join("build.json").is_file()), ("vm", cache.join("vm.json").is_file())]
    {
        if present {
            overrides.push((format!("{kind}.cache.read"), "true".into()));
            overrides.push((format!("{kind}.cache.write"), "false".into()));
        }
    }
    Ok(load_config(&text, unpacked, &overrides)?)
}
