//! Human-readable model cache and experiment archives.
//!
//! Cache layout under the cache directory:
//!
//! ```text
//! code/<path with / replaced by __>.json   one document per code file
//! build.json
//! vm.json
//! ```
//!
//! Every document is `{kind, version, source_fingerprint, payload}` with
//! formulas in text form, pretty-printed with LF line endings.

pub mod archive;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::build::BuildModel;
use crate::code::CodeModel;
use crate::varmodel::VariabilityModel;

/// Bumped whenever the serialized shape of a model changes.
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheKind {
    Code,
    Build,
    Vm,
}

impl CacheKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheKind::Code => "code",
            CacheKind::Build => "build",
            CacheKind::Vm => "vm",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("no {0} cache found")]
    MissingCache(&'static str),
    #[error("{}: cache format version {found}, expected {expected}", path.display())]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: cached {kind} model was extracted from different inputs", path.display())]
    FingerprintMismatch { kind: &'static str, path: PathBuf },
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry<T> {
    kind: String,
    version: u32,
    source_fingerprint: String,
    payload: T,
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
    source_fingerprint: String,
}

/// SHA-256 of a file's content, lowercase hex.
pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    io::copy(&mut fs::File::open(path)?, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Hash over sorted `(path, content hash)` pairs of `files` (relative to `root`).
pub fn fingerprint(root: &Path, files: &[String]) -> Result<String, CacheError> {
    let mut sorted: Vec<&String> = files.iter().collect();
    sorted.sort();
    let mut h = Sha256::new();
    for rel in sorted {
        let path = root.join(rel);
        let digest = file_sha256(&path).map_err(io_error(&path))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

pub fn code_cache_path(dir: &Path, file: &str) -> PathBuf {
    dir.join("code").join(format!("{}.json", file.replace('/', "__")))
}

fn to_document<T: Serialize>(kind: CacheKind, fingerprint: &str, payload: &T) -> String {
    let entry = CacheEntry {
        kind: kind.as_str().to_owned(),
        version: CACHE_FORMAT_VERSION,
        source_fingerprint: fingerprint.to_owned(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&entry).expect("models serialize");
    text.push('\n');
    text
}

fn write_document<T: Serialize>(path: &Path, kind: CacheKind, fingerprint: &str, payload: &T) -> Result<(), CacheError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, to_document(kind, fingerprint, payload)).map_err(io_error(path))
}

/// Read one document; `expected` is the current input fingerprint, `None` skips the check.
fn read_document<T: DeserializeOwned>(path: &Path, kind: CacheKind, expected: Option<&str>) -> Result<T, CacheError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(CacheError::MissingCache(kind.as_str())),
        Err(e) => return Err(CacheError::Io { path: path.to_path_buf(), source: e }),
    };
    let malformed = |e: serde_json::Error| CacheError::Malformed { path: path.to_path_buf(), reason: e.to_string() };
    // One full parse in the common case; the header alone is consulted only to explain a failure.
    let (header, payload) = match serde_json::from_str::<CacheEntry<T>>(&text) {
        Ok(entry) => {
            let header = Header { kind: entry.kind, version: entry.version, source_fingerprint: entry.source_fingerprint };
            (header, Ok(entry.payload))
        }
        Err(e) => (serde_json::from_str::<Header>(&text).map_err(malformed)?, Err(e)),
    };
    if header.version != CACHE_FORMAT_VERSION {
        return Err(CacheError::VersionMismatch {
            path: path.to_path_buf(),
            found: header.version,
            expected: CACHE_FORMAT_VERSION,
        });
    }
    if header.kind != kind.as_str() {
        return Err(CacheError::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected a {} document, found {}", kind.as_str(), header.kind),
        });
    }
    if expected.is_some_and(|fp| fp != header.source_fingerprint) {
        return Err(CacheError::FingerprintMismatch { kind: kind.as_str(), path: path.to_path_buf() });
    }
    payload.map_err(malformed)
}

/// Remove stale code documents before a fresh set is written.
pub fn reset_code_cache(dir: &Path) -> Result<(), CacheError> {
    let code = dir.join("code");
    match fs::remove_dir_all(&code) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(CacheError::Io { path: code, source: e }),
    }
    fs::create_dir_all(&code).map_err(io_error(&code))
}

/// Write one code model; safe to call concurrently for distinct files.
pub fn write_code_model(dir: &Path, model: &CodeModel, fingerprint: &str) -> Result<PathBuf, CacheError> {
    let path = code_cache_path(dir, &model.file);
    write_document(&path, CacheKind::Code, fingerprint, model)?;
    Ok(path)
}

pub fn write_code_cache(dir: &Path, models: &[CodeModel], fingerprint: &str) -> Result<Vec<PathBuf>, CacheError> {
    reset_code_cache(dir)?;
    models.iter().map(|m| write_code_model(dir, m, fingerprint)).collect()
}

/// All cached code models, ordered by file path.
pub fn read_code_cache(dir: &Path, expected: Option<&str>) -> Result<Vec<CodeModel>, CacheError> {
    let code = dir.join("code");
    let listing = match fs::read_dir(&code) {
        Ok(l) => l,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(CacheError::MissingCache("code")),
        Err(e) => return Err(CacheError::Io { path: code, source: e }),
    };
    let mut paths = Vec::new();
    for entry in listing {
        let path = entry.map_err(io_error(&code))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut models = paths
        .iter()
        .map(|p| read_document::<CodeModel>(p, CacheKind::Code, expected))
        .collect::<Result<Vec<_>, _>>()?;
    models.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(models)
}

pub fn write_build_cache(dir: &Path, model: &BuildModel, fingerprint: &str) -> Result<PathBuf, CacheError> {
    let path = dir.join("build.json");
    write_document(&path, CacheKind::Build, fingerprint, model)?;
    Ok(path)
}

pub fn read_build_cache(dir: &Path, expected: Option<&str>) -> Result<BuildModel, CacheError> {
    read_document(&dir.join("build.json"), CacheKind::Build, expected)
}

pub fn write_vm_cache(dir: &Path, model: &VariabilityModel, fingerprint: &str) -> Result<PathBuf, CacheError> {
    let path = dir.join("vm.json");
    write_document(&path, CacheKind::Vm, fingerprint, model)?;
    Ok(path)
}

pub fn read_vm_cache(dir: &Path, expected: Option<&str>) -> Result<VariabilityModel, CacheError> {
    read_document(&dir.join("vm.json"), CacheKind::Vm, expected)
}

/// One line per cached kind: document count, format version and fingerprint prefix.
pub fn summarize_cache(dir: &Path) -> Result<String, CacheError> {
    let mut out = String::new();
    let describe = |path: &Path| -> Result<(u32, String), CacheError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let h: Header = serde_json::from_str(&text)
            .map_err(|e| CacheError::Malformed { path: path.to_path_buf(), reason: e.to_string() })?;
        Ok((h.version, h.source_fingerprint.chars().take(12).collect()))
    };
    let code_dir = dir.join("code");
    if code_dir.is_dir() {
        let mut docs: Vec<PathBuf> = fs::read_dir(&code_dir)
            .map_err(io_error(&code_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        docs.sort();
        match docs.first() {
            Some(first) => {
                let (version, fp) = describe(first)?;
                let mut blocks = 0;
                for d in &docs {
                    blocks += read_document::<CodeModel>(d, CacheKind::Code, None)?.block_count();
                }
                out.push_str(&format!("code: {} files, {blocks} blocks, version {version}, fingerprint {fp}\n", docs.len()));
            }
            None => out.push_str("code: 0 files\n"),
        }
    } else {
        out.push_str("code: absent\n");
    }
    let build = dir.join("build.json");
    if build.is_file() {
        let (version, fp) = describe(&build)?;
        let m = read_build_cache(dir, None)?;
        out.push_str(&format!(
            "build: {} entries, {} unresolved, version {version}, fingerprint {fp}\n",
            m.entries.len(),
            m.unresolved.len()
        ));
    } else {
        out.push_str("build: absent\n");
    }
    let vm = dir.join("vm.json");
    if vm.is_file() {
        let (version, fp) = describe(&vm)?;
        let m = read_vm_cache(dir, None)?;
        out.push_str(&format!(
            "vm: {} features, {} constraints, version {version}, fingerprint {fp}\n",
            m.features.len(),
            m.source_positions.len()
        ));
    } else {
        out.push_str("vm: absent\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{extract_file, ExtractOptions};
    use crate::formula::Formula;

    fn sample() -> CodeModel {
        extract_file("#ifdef CONFIG_A\nx\n#ifdef CONFIG_B\n#endif\n#endif\n", "src/a.c", &ExtractOptions::default()).unwrap()
    }

    #[test]
    fn code_document_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_code_model(dir.path(), &sample(), "fp").unwrap();
        assert_eq!(path, dir.path().join("code/src__a.c.json"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"condition\": \"A\""));
        assert!(text.contains("\"children\": ["));
        assert!(!text.contains('\r'));
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn round_trips_and_checks_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        write_code_cache(dir.path(), &[sample()], "fp1").unwrap();
        assert_eq!(read_code_cache(dir.path(), Some("fp1")).unwrap(), vec![sample()]);
        assert!(matches!(read_code_cache(dir.path(), Some("fp2")), Err(CacheError::FingerprintMismatch { .. })));
        assert_eq!(read_code_cache(dir.path(), None).unwrap().len(), 1);
    }

    #[test]
    fn empty_build_model_document() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_build_cache(dir.path(), &BuildModel::default(), "fp").unwrap();
        assert!(fs::read_to_string(path).unwrap().contains("\"entries\": {}"));
        assert_eq!(read_build_cache(dir.path(), Some("fp")).unwrap(), BuildModel::default());
    }

    #[test]
    fn missing_and_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_vm_cache(dir.path(), None), Err(CacheError::MissingCache("vm"))));
        assert!(matches!(read_code_cache(dir.path(), None), Err(CacheError::MissingCache("code"))));
        let vm = VariabilityModel { constraint: Formula::var("A"), ..Default::default() };
        let path = write_vm_cache(dir.path(), &vm, "fp").unwrap();
        let bumped = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 99");
        fs::write(&path, bumped).unwrap();
        assert!(matches!(read_vm_cache(dir.path(), None), Err(CacheError::VersionMismatch { found: 99, .. })));
    }

    #[test]
    fn fingerprint_sensitive_to_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.c"), "x").unwrap();
        fs::write(dir.path().join("b.c"), "y").unwrap();
        let files = vec!["b.c".to_owned(), "a.c".to_owned()];
        let before = fingerprint(dir.path(), &files).unwrap();
        assert_eq!(before, fingerprint(dir.path(), &["a.c".into(), "b.c".into()]).unwrap());
        fs::write(dir.path().join("a.c"), "z").unwrap();
        assert_ne!(before, fingerprint(dir.path(), &files).unwrap());
    }

    #[test]
    fn reset_removes_stale_documents() {
        let dir = tempfile::tempdir().unwrap();
        write_code_model(dir.path(), &sample(), "fp").unwrap();
        reset_code_cache(dir.path()).unwrap();
        assert!(read_code_cache(dir.path(), None).unwrap().is_empty());
    }
}
