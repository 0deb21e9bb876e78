//! Line-delimited JSON corpus manifest.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Feature file; relative paths are resolved against the manifest's directory.
    pub features: PathBuf,
    pub reference: String,
    /// End time in ms of each reference word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_ms: Option<Vec<f64>>,
}

/// Parses manifest text. Blank lines are skipped; ids must be unique and
/// alignments nondecreasing with one entry per reference word.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Manifest { line: line_no, reason };
        let mut e: ManifestEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if !seen.insert(e.id.clone()) {
            return Err(bad(format!("duplicate id {:?}", e.id)));
        }
        if let Some(a) = &e.alignment_ms {
            let words = e.reference.split_whitespace().count();
            if a.len() != words {
                return Err(bad(format!("{} alignment entries for {words} reference words", a.len())));
            }
            if a.windows(2).any(|w| w[1] < w[0]) || a.iter().any(|v| !v.is_finite()) {
                return Err(bad("alignment must be finite and nondecreasing".into()));
            }
        }
        if e.features.is_relative() {
            e.features = base.join(&e.features);
        }
        out.push(e);
    }
    Ok(out)
}

/// Reads a manifest and checks that every feature file exists.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base)?;
    for (i, e) in entries.iter().enumerate() {
        if !e.features.is_file() {
            return Err(Error::Manifest {
                line: i + 1,
                reason: format!("feature file {} not found", e.features.display()),
            });
        }
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
