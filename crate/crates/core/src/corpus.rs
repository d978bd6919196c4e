//! Loading program files from a directory.
//!
//! `.lmt` files hold region programs; `.lmtν` files hold reference programs,
//! which [`region_programs`] also includes through their translation.

use std::path::{Path, PathBuf};

use crate::parse::{parse_source, ParseError, Source};
use crate::refs::{translate_source, NuError};

/// Extension of region programs.
pub const REGION_EXT: &str = "lmt";
/// Extension of reference programs.
pub const REFS_EXT: &str = "lmtν";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Translate { path: PathBuf, source: NuError },
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub path: PathBuf,
    pub source: Source,
}

fn files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CorpusError> {
    let io = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(io)? {
        let path = e.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_file(path: &Path) -> Result<Entry, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let source = parse_source(&text).map_err(|source| CorpusError::Parse { path: path.to_path_buf(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Entry { name, path: path.to_path_buf(), source })
}

/// All files of `dir` with extension `ext`, sorted by path.
pub fn load_dir(dir: &Path, ext: &str) -> Result<Vec<Entry>, CorpusError> {
    files(dir, ext)?.iter().map(|p| load_file(p)).collect()
}

/// Region programs of `dir` followed by the translations of the reference
/// programs of `refs_dir`.
pub fn region_programs(dir: &Path, refs_dir: &Path) -> Result<Vec<Entry>, CorpusError> {
    let mut out = load_dir(dir, REGION_EXT)?;
    for e in load_dir(refs_dir, REFS_EXT)? {
        let source =
            translate_source(&e.source).map_err(|source| CorpusError::Translate { path: e.path.clone(), source })?;
        out.push(Entry { name: format!("{} (translated)", e.name), path: e.path, source });
    }
    Ok(out)
}
