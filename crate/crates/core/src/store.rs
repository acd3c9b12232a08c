//! Write-once artifact store on the local filesystem. One file per artifact,
//! with a greppable path derived from the key.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Critiques,
    Index,
    Semantic,
    /// Scored predictions of one evaluation cell.
    Eval,
    Probe,
    Report,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Critiques => "critiques",
            ArtifactKind::Index => "index",
            ArtifactKind::Semantic => "semantic",
            ArtifactKind::Eval => "eval",
            ArtifactKind::Probe => "probe",
            ArtifactKind::Report => "report",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactKey {
    pub kind: ArtifactKind,
    pub dataset: String,
    pub user_id: Option<String>,
    pub critic_model: String,
    pub fraction: Option<f64>,
    pub template_version: String,
    pub config_hash: String,
    /// Distinguishes artifacts that share every other field (strategy, k, condition).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

impl ArtifactKey {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() || self.critic_model.is_empty() || self.template_version.is_empty() {
            return Err(Error::Config(format!("artifact key has an empty field: {self:?}")));
        }
        if self.config_hash.is_empty() || !self.config_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Config(format!(
                "artifact key has a malformed config hash {:?}",
                self.config_hash
            )));
        }
        if let Some(f) = self.fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("artifact key fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Path relative to the store root.
    pub fn relative_path(&self) -> PathBuf {
        let fraction = match self.fraction {
            Some(f) => format!("f{f:.2}"),
            None => "all".to_string(),
        };
        let mut file = format!("{}-{}", component(&self.template_version), self.config_hash);
        if let Some(v) = &self.variant {
            file.push('-');
            file.push_str(&component(v));
        }
        file.push_str(".json");
        [
            self.kind.as_str().to_string(),
            component(&self.dataset),
            self.user_id.as_deref().map(component).unwrap_or_else(|| "_".into()),
            component(&self.critic_model),
            fraction,
            file,
        ]
        .iter()
        .collect()
    }
}

/// Filesystem-safe path component. Altered names get a digest suffix so
/// distinct inputs never collide.
fn component(raw: &str) -> String {
    let clean: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean == raw && !clean.is_empty() && clean != "." && clean != ".." && clean != "_" {
        clean
    } else {
        format!("{clean}~{}", &digest_hex(raw.as_bytes())[..8])
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 16-hex-digit digest of a value's JSON form (object keys sorted).
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_value(value)
        .expect("config values serialize")
        .to_string();
    digest_hex(canonical.as_bytes())[..16].to_string()
}

/// Hash of a parent hash extended with more configuration.
pub fn chain_hash<T: Serialize + ?Sized>(parent: &str, value: &T) -> String {
    config_hash(&(parent, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Written,
    /// Identical bytes were already stored.
    Unchanged,
}

#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    writes: Mutex<()>,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            writes: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, key: &ArtifactKey) -> PathBuf {
        self.root.join(key.relative_path())
    }

    pub fn put(&self, key: &ArtifactKey, bytes: &[u8]) -> Result<PutOutcome> {
        key.validate()?;
        let path = self.path(key);
        let _guard = self.writes.lock().unwrap_or_else(|p| p.into_inner());
        match std::fs::read(&path) {
            Ok(existing) if existing == bytes => return Ok(PutOutcome::Unchanged),
            Ok(_) => {
                return Err(Error::Integrity(format!(
                    "refusing to overwrite {} with different bytes",
                    path.display()
                )))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&path, e)),
        }
        let dir = path.parent().expect("artifact paths have a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension("json.tmp");
        let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes)
            .and_then(|_| file.sync_all())
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        tracing::debug!(path = %path.display(), "artifact written");
        Ok(PutOutcome::Written)
    }

    /// `None` when the artifact has not been built yet.
    pub fn get(&self, key: &ArtifactKey) -> Result<Option<Vec<u8>>> {
        key.validate()?;
        let path = self.path(key);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn put_json<T: Serialize>(&self, key: &ArtifactKey, value: &T) -> Result<PutOutcome> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(key, text.as_bytes())
    }

    pub fn get_json<T: DeserializeOwned>(&self, key: &ArtifactKey) -> Result<Option<T>> {
        match self.get(key)? {
            None => Ok(None),
            Some(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Integrity(format!("artifact {} does not decode: {e}", self.path(key).display()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(kind: ArtifactKind) -> ArtifactKey {
        ArtifactKey {
            kind,
            dataset: "keyed_binary".into(),
            user_id: None,
            critic_model: "gpt-4o-mini".into(),
            fraction: Some(0.25),
            template_version: "t1".into(),
            config_hash: "0123abcd".into(),
            variant: None,
        }
    }

    #[test]
    fn put_get_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let k = key(ArtifactKind::Critiques);
        assert_eq!(store.get(&k).unwrap(), None);
        assert_eq!(store.put(&k, b"abc").unwrap(), PutOutcome::Written);
        assert_eq!(store.get(&k).unwrap().unwrap(), b"abc");
        assert_eq!(store.put(&k, b"abc").unwrap(), PutOutcome::Unchanged);
        assert!(matches!(store.put(&k, b"abd"), Err(Error::Integrity(_))));
        assert_eq!(store.get(&k).unwrap().unwrap(), b"abc");
    }

    #[test]
    fn layout_is_greppable() {
        let mut k = key(ArtifactKind::Semantic);
        k.user_id = Some("1679".into());
        k.variant = Some("k5".into());
        assert_eq!(
            k.relative_path(),
            PathBuf::from("semantic/keyed_binary/1679/gpt-4o-mini/f0.25/t1-0123abcd-k5.json")
        );
        k.critic_model = "org/model:v1".into();
        let path = k.relative_path();
        let critic = path.iter().nth(3).unwrap().to_str().unwrap();
        assert!(critic.starts_with("org_model_v1~"), "{critic}");
    }

    #[test]
    fn malformed_keys_are_rejected() {
        let mut k = key(ArtifactKind::Index);
        k.config_hash = "../etc".into();
        assert!(k.validate().is_err());
        let mut k = key(ArtifactKind::Index);
        k.fraction = Some(1.5);
        assert!(k.validate().is_err());
    }

    #[test]
    fn hashes_ignore_field_order() {
        let a = serde_json::json!({"a": 1, "b": [1, 2]});
        let b = serde_json::json!({"b": [1, 2], "a": 1});
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), chain_hash("x", &a));
        assert_eq!(config_hash(&a).len(), 16);
    }

    proptest! {
        #[test]
        fn round_trip(bytes in prop::collection::vec(any::<u8>(), 0..512), dataset in "[ -~]{1,20}", user in prop::option::of("[a-z0-9/]{1,8}")) {
            let dir = tempfile::tempdir().unwrap();
            let store = ArtifactStore::open(dir.path()).unwrap();
            let mut k = key(ArtifactKind::Probe);
            k.dataset = dataset;
            k.user_id = user;
            store.put(&k, &bytes).unwrap();
            prop_assert_eq!(store.get(&k).unwrap().unwrap(), bytes);
            prop_assert!(store.path(&k).starts_with(dir.path()));
        }
    }
}
