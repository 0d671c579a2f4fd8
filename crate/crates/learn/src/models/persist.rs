//! Model files: a magic line, an optional provenance line, then the model as
//! JSON. Floats round-trip exactly, so reloaded models predict bit-identically.

use std::fs;
use std::path::Path;

use coopra_core::csvio::ArtifactMeta;

use super::Regressor;
use crate::error::{LearnError, Result};

pub const MAGIC: &str = "COOPRA-MODEL 1";

pub fn to_string(model: &Regressor, meta: Option<&ArtifactMeta>) -> String {
    let mut out = String::from(MAGIC);
    out.push('\n');
    if let Some(m) = meta {
        out.push_str(&m.to_line());
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(model).expect("models serialize"));
    out.push('\n');
    out
}

/// Parses a model file's contents; `path` is only used in error messages.
pub fn from_str(text: &str, path: &Path) -> Result<(Regressor, Option<ArtifactMeta>)> {
    let bad = |message: String| LearnError::ModelFile {
        path: path.to_path_buf(),
        message,
    };
    let (first, mut rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != MAGIC {
        return Err(bad(format!("not a model file (expected {MAGIC:?} header)")));
    }
    let mut meta = None;
    if rest.starts_with('#') {
        let (line, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        meta = ArtifactMeta::parse_line(line.trim_end());
        rest = tail;
    }
    let model: Regressor = serde_json::from_str(rest).map_err(|e| bad(format!("malformed model: {e}")))?;
    Ok((model, meta))
}

pub fn save(path: &Path, model: &Regressor, meta: Option<&ArtifactMeta>) -> Result<()> {
    fs::write(path, to_string(model, meta)).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(Regressor, Option<ArtifactMeta>)> {
    let text = fs::read_to_string(path).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_str(&text, path)
}
