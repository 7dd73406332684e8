//! Driver source generation from validated documents.

mod c_cli;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::canonical_text;
use crate::diag::{has_errors, Diagnostic};
use crate::model::RdisDocument;
use crate::template::TemplateError;
use crate::validate::validate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

const TARGETS: &[TargetInfo] = &[TargetInfo {
    name: "c-cli",
    description: "single-file C99 command-line driver over TCP with a stdin command loop",
}];

pub fn list_targets() -> &'static [TargetInfo] {
    TARGETS
}

/// Generated files keyed by relative path, `<name>/<target>/...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedArtifact {
    pub target: String,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("unknown target `{0}` (known: {known})", known = TARGETS.iter().map(|t| t.name).collect::<Vec<_>>().join(", "))]
    UnknownTarget(String),
    #[error("document has {} validation error(s)", .0.iter().filter(|d| d.is_error()).count())]
    Invalid(Vec<Diagnostic>),
    #[error("target `{target}` does not support: {}", .features.join("; "))]
    Unsupported { target: String, features: Vec<String> },
    #[error("template: {0}")]
    Template(#[from] TemplateError),
}

pub fn generate(doc: &RdisDocument, target: &str) -> Result<GeneratedArtifact, CodegenError> {
    let info = TARGETS
        .iter()
        .find(|t| t.name == target)
        .ok_or_else(|| CodegenError::UnknownTarget(target.to_string()))?;
    let diags = validate(doc);
    if has_errors(&diags) {
        return Err(CodegenError::Invalid(diags));
    }
    let files = match info.name {
        "c-cli" => c_cli::generate(doc, &document_hash(doc))?,
        _ => unreachable!("target table and dispatch disagree"),
    };
    Ok(GeneratedArtifact {
        target: info.name.to_string(),
        files,
    })
}

/// Hex SHA-256 of the canonical text.
pub fn document_hash(doc: &RdisDocument) -> String {
    let digest = Sha256::digest(canonical_text(doc).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
