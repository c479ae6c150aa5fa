//! Per-stage manifests chaining artifact digests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const STAGE_MANIFEST_FORMAT: &str = "sgmus-stage-manifest";
pub const STAGE_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactDigest {
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageManifest {
    pub format: String,
    pub version: u32,
    pub stage: String,
    pub seed: u64,
    pub config_digest: String,
    pub inputs: Vec<ArtifactDigest>,
    pub outputs: Vec<ArtifactDigest>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn manifest_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(format!("{stage}.manifest.json"))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_or_missing(path, e, "artifact not found"))?;
    Ok(sgmus::sha256_hex(&bytes))
}

pub(crate) fn io_or_missing(path: &Path, e: std::io::Error, what: &str) -> CliError {
    match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingPath {
            path: path.to_path_buf(),
            what: what.into(),
        },
        _ => CliError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

impl StageManifest {
    pub fn new(stage: &str, seed: u64, config_digest: String) -> Self {
        Self {
            format: STAGE_MANIFEST_FORMAT.into(),
            version: STAGE_MANIFEST_VERSION,
            stage: stage.into(),
            seed,
            config_digest,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let m: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("stage manifest: {e}")))?;
        if m.format != STAGE_MANIFEST_FORMAT || m.version != STAGE_MANIFEST_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported stage manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }

    pub fn read(dir: &Path, stage: &str) -> CliResult<Self> {
        let path = manifest_path(dir, stage);
        let text = fs::read_to_string(&path)
            .map_err(|e| io_or_missing(&path, e, &format!("run the `{stage}` stage first")))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = manifest_path(dir, &self.stage);
        fs::write(&path, self.to_json()).map_err(|e| CliError::Io { path, source: e })
    }

    /// Records the digest of an existing file in the output directory.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        let sha256 = file_sha256(&dir.join(name))?;
        self.outputs.push(ArtifactDigest {
            path: name.into(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&self, name: &str) -> Option<&ArtifactDigest> {
        self.outputs.iter().find(|a| a.path == name)
    }

    /// Checks that `name` still hashes to what this manifest recorded and
    /// returns its digest for chaining.
    pub fn verify_output(&self, dir: &Path, name: &str) -> CliResult<ArtifactDigest> {
        let recorded = self.output(name).ok_or_else(|| {
            CliError::Validation(format!("`{}` manifest does not list {name}", self.stage))
        })?;
        let path = dir.join(name);
        let actual = file_sha256(&path)?;
        if actual != recorded.sha256 {
            return Err(CliError::Stale {
                path,
                expected: recorded.sha256.clone(),
                actual,
            });
        }
        Ok(recorded.clone())
    }
}

/// Verifies `name` against the manifest of `stage` and returns its digest.
pub fn upstream(dir: &Path, stage: &str, name: &str) -> CliResult<ArtifactDigest> {
    StageManifest::read(dir, stage)?.verify_output(dir, name)
}
