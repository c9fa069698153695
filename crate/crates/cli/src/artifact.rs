//! Output directory handling: atomic writes, envelopes that carry the
//! config hash and seed, and a manifest of file digests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use session_planner::models::data::{read_jsonl, write_jsonl};
use session_planner::models::SessionLog;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// JSON artifact with provenance.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact<T> {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sha256: String,
    pub bytes: usize,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, ManifestEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Workspace {
    pub config: RunConfig,
    pub dir: PathBuf,
    hash: String,
    written: BTreeMap<String, ManifestEntry>,
}

impl Workspace {
    pub fn open(config: RunConfig) -> CliResult<Self> {
        let dir = config.out_dir.clone();
        std::fs::create_dir_all(dir.join("models")).map_err(|e| CliError::io(&dir, e))?;
        let hash = config.hash();
        Ok(Self {
            config,
            dir,
            hash,
            written: BTreeMap::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Resolved config for embedding in reports; the output location is
    /// left out so reports do not depend on where they are written.
    pub fn config_snapshot(&self) -> serde_json::Value {
        let mut c = self.config.clone();
        c.out_dir = PathBuf::new();
        serde_json::to_value(c).expect("config serializes")
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8], track: bool) -> CliResult<PathBuf> {
        let path = self.path(name);
        let parent = path.parent().unwrap_or(&self.dir).to_path_buf();
        let mut tmp = NamedTempFile::new_in(&parent).map_err(|e| CliError::io(&parent, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        if track {
            self.written.insert(
                name.to_string(),
                ManifestEntry {
                    sha256: hex_digest(bytes),
                    bytes: bytes.len(),
                    config_hash: self.hash.clone(),
                    seed: self.config.seed,
                },
            );
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> CliResult<PathBuf> {
        let artifact = Artifact {
            kind: kind.to_string(),
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            data,
        };
        let mut text = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes(), true)
    }

    /// Plain text with a leading `#` provenance line.
    pub fn write_text(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let text = format!("# config_hash={} seed={}\n{body}", self.hash, self.config.seed);
        self.write_bytes(name, text.as_bytes(), true)
    }

    /// JSON Lines logs; provenance lives in the manifest.
    pub fn write_sessions(&mut self, name: &str, sessions: &[SessionLog]) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, sessions)?;
        self.write_bytes(name, &buf, true)
    }

    pub fn write_resolved_config(&mut self) -> CliResult<PathBuf> {
        let text = self.config.to_toml();
        self.write_bytes(RESOLVED_CONFIG, text.as_bytes(), false)
    }

    /// Merges this command's files into the manifest.
    pub fn finish(&mut self) -> CliResult<()> {
        let manifest_path = self.path(MANIFEST);
        let mut manifest: Manifest = std::fs::read(&manifest_path)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default();
        manifest.files.append(&mut self.written);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        self.write_bytes(MANIFEST, text.as_bytes(), false)?;
        Ok(())
    }
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> CliResult<T> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let artifact: Artifact<T> =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    if artifact.kind != kind {
        return Err(CliError::Schema(format!(
            "{}: expected a {kind} artifact, found {}",
            path.display(),
            artifact.kind
        )));
    }
    Ok(artifact.data)
}

pub fn read_sessions(path: &Path) -> CliResult<Vec<SessionLog>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_jsonl(std::io::BufReader::new(file)).map_err(|e| match e {
        session_planner::Error::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}
