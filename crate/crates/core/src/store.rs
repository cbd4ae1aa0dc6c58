//! Versioned document store.
//!
//! Every document lives under `(collection, key)` and carries a version that
//! starts at 1 and increases by one on each write. Writers state what they
//! expect to find ([`Expect`]); a mismatch is a [`StoreError::Conflict`] and
//! nothing is written. That compare-and-set is the only coordination
//! primitive the rest of the crate uses.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub version: u64,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    /// The key must not exist.
    Absent,
    /// The key must exist at exactly this version.
    Version(u64),
    /// Unconditional write.
    Any,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(
        "write conflict on {collection}/{key}: expected {expected:?}, found version {found:?}"
    )]
    Conflict {
        collection: String,
        key: String,
        expected: Expect,
        found: Option<u64>,
    },
    #[error("store i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt document {0}")]
    Corrupt(String),
    #[error("invalid collection name {0:?}")]
    BadCollection(String),
}

impl StoreError {
    pub fn is_conflict(&self) -> bool {
        matches!(self, StoreError::Conflict { .. })
    }
}

pub trait DocumentStore: Send + Sync {
    fn get(&self, collection: &str, key: &str) -> Result<Option<Document>, StoreError>;

    /// Write `body` and return the new version.
    fn put(
        &self,
        collection: &str,
        key: &str,
        body: &[u8],
        expect: Expect,
    ) -> Result<u64, StoreError>;

    fn delete(&self, collection: &str, key: &str, expect: Expect) -> Result<(), StoreError>;

    /// All documents of a collection, sorted by key.
    fn list(&self, collection: &str) -> Result<Vec<(String, Document)>, StoreError>;

    /// Names of all non-empty collections, sorted.
    fn collections(&self) -> Result<Vec<String>, StoreError>;
}

fn check_expect(
    collection: &str,
    key: &str,
    expect: Expect,
    found: Option<u64>,
) -> Result<(), StoreError> {
    let ok = match (expect, found) {
        (Expect::Any, _) => true,
        (Expect::Absent, None) => true,
        (Expect::Version(v), Some(f)) => v == f,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(StoreError::Conflict {
            collection: collection.to_string(),
            key: key.to_string(),
            expected: expect,
            found,
        })
    }
}

fn check_collection(name: &str) -> Result<(), StoreError> {
    if !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
        Ok(())
    } else {
        Err(StoreError::BadCollection(name.to_string()))
    }
}

/// Typed helpers over any [`DocumentStore`].
pub trait JsonStore {
    fn get_json<T: DeserializeOwned>(
        &self,
        collection: &str,
        key: &str,
    ) -> Result<Option<(u64, T)>, StoreError>;

    fn put_json<T: Serialize>(
        &self,
        collection: &str,
        key: &str,
        value: &T,
        expect: Expect,
    ) -> Result<u64, StoreError>;

    fn list_json<T: DeserializeOwned>(
        &self,
        collection: &str,
    ) -> Result<Vec<(String, u64, T)>, StoreError>;
}

impl<S: DocumentStore + ?Sized> JsonStore for S {
    fn get_json<T: DeserializeOwned>(
        &self,
        collection: &str,
        key: &str,
    ) -> Result<Option<(u64, T)>, StoreError> {
        match self.get(collection, key)? {
            None => Ok(None),
            Some(doc) => {
                let value = serde_json::from_slice(&doc.body)
                    .map_err(|e| StoreError::Corrupt(format!("{collection}/{key}: {e}")))?;
                Ok(Some((doc.version, value)))
            }
        }
    }

    fn put_json<T: Serialize>(
        &self,
        collection: &str,
        key: &str,
        value: &T,
        expect: Expect,
    ) -> Result<u64, StoreError> {
        let body = serde_json::to_vec(value)
            .map_err(|e| StoreError::Corrupt(format!("{collection}/{key}: {e}")))?;
        self.put(collection, key, &body, expect)
    }

    fn list_json<T: DeserializeOwned>(
        &self,
        collection: &str,
    ) -> Result<Vec<(String, u64, T)>, StoreError> {
        self.list(collection)?
            .into_iter()
            .map(|(key, doc)| {
                let value = serde_json::from_slice(&doc.body)
                    .map_err(|e| StoreError::Corrupt(format!("{collection}/{key}: {e}")))?;
                Ok((key, doc.version, value))
            })
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    data: RwLock<BTreeMap<String, BTreeMap<String, Document>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryStore {
    fn get(&self, collection: &str, key: &str) -> Result<Option<Document>, StoreError> {
        let data = self.data.read().unwrap();
        Ok(data.get(collection).and_then(|c| c.get(key)).cloned())
    }

    fn put(
        &self,
        collection: &str,
        key: &str,
        body: &[u8],
        expect: Expect,
    ) -> Result<u64, StoreError> {
        check_collection(collection)?;
        let mut data = self.data.write().unwrap();
        let coll = data.entry(collection.to_string()).or_default();
        let found = coll.get(key).map(|d| d.version);
        check_expect(collection, key, expect, found)?;
        let version = found.unwrap_or(0) + 1;
        coll.insert(
            key.to_string(),
            Document {
                version,
                body: body.to_vec(),
            },
        );
        Ok(version)
    }

    fn delete(&self, collection: &str, key: &str, expect: Expect) -> Result<(), StoreError> {
        let mut data = self.data.write().unwrap();
        let found = data
            .get(collection)
            .and_then(|c| c.get(key))
            .map(|d| d.version);
        check_expect(collection, key, expect, found)?;
        if let Some(c) = data.get_mut(collection) {
            c.remove(key);
            if c.is_empty() {
                data.remove(collection);
            }
        }
        Ok(())
    }

    fn list(&self, collection: &str) -> Result<Vec<(String, Document)>, StoreError> {
        let data = self.data.read().unwrap();
        Ok(data
            .get(collection)
            .map(|c| c.iter().map(|(k, d)| (k.clone(), d.clone())).collect())
            .unwrap_or_default())
    }

    fn collections(&self) -> Result<Vec<String>, StoreError> {
        Ok(self.data.read().unwrap().keys().cloned().collect())
    }
}

/// Directory-backed store: `<root>/<collection>/<escaped key>`, each file a
/// `v<version>` header line followed by the raw body. Writes go through a
/// temp file and an atomic rename. Several `FileStore` handles on the same
/// root (in one process or many) share one writer lock.
#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
    lock: Arc<Mutex<()>>,
}

fn process_lock(root: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut table = LOCKS.get_or_init(Default::default).lock().unwrap();
    table.entry(root.to_path_buf()).or_default().clone()
}

impl FileStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(root.as_ref())?;
        let root = fs::canonicalize(root.as_ref())?;
        let lock = process_lock(&root);
        Ok(Self { root, lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, collection: &str, key: &str) -> PathBuf {
        self.root.join(collection).join(escape_key(key))
    }

    fn read_doc(path: &Path) -> Result<Option<Document>, StoreError> {
        let raw = match fs::read(path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let nl = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| StoreError::Corrupt(path.display().to_string()))?;
        let version = std::str::from_utf8(&raw[..nl])
            .ok()
            .and_then(|h| h.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| StoreError::Corrupt(path.display().to_string()))?;
        Ok(Some(Document {
            version,
            body: raw[nl + 1..].to_vec(),
        }))
    }

    fn with_write_lock<T>(
        &self,
        f: impl FnOnce() -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let _guard = self.lock.lock().unwrap();
        let lock_file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join(".lock"))?;
        lock_file.lock()?;
        let out = f();
        lock_file.unlock()?;
        out
    }
}

impl DocumentStore for FileStore {
    fn get(&self, collection: &str, key: &str) -> Result<Option<Document>, StoreError> {
        Self::read_doc(&self.path(collection, key))
    }

    fn put(
        &self,
        collection: &str,
        key: &str,
        body: &[u8],
        expect: Expect,
    ) -> Result<u64, StoreError> {
        check_collection(collection)?;
        self.with_write_lock(|| {
            let path = self.path(collection, key);
            let found = Self::read_doc(&path)?.map(|d| d.version);
            check_expect(collection, key, expect, found)?;
            let version = found.unwrap_or(0) + 1;
            let dir = self.root.join(collection);
            fs::create_dir_all(&dir)?;
            let tmp = dir.join(format!(".tmp-{}", uuid::Uuid::new_v4()));
            {
                let mut f = fs::File::create(&tmp)?;
                writeln!(f, "v{version}")?;
                f.write_all(body)?;
                f.sync_data()?;
            }
            fs::rename(&tmp, &path)?;
            Ok(version)
        })
    }

    fn delete(&self, collection: &str, key: &str, expect: Expect) -> Result<(), StoreError> {
        self.with_write_lock(|| {
            let path = self.path(collection, key);
            let found = Self::read_doc(&path)?.map(|d| d.version);
            check_expect(collection, key, expect, found)?;
            if found.is_some() {
                fs::remove_file(&path)?;
            }
            Ok(())
        })
    }

    fn list(&self, collection: &str) -> Result<Vec<(String, Document)>, StoreError> {
        let dir = self.root.join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if name.starts_with('.') {
                continue;
            }
            let Some(key) = unescape_key(name) else {
                return Err(StoreError::Corrupt(entry.path().display().to_string()));
            };
            // A concurrent delete can remove the file between listing and reading.
            if let Some(doc) = Self::read_doc(&entry.path())? {
                out.push((key, doc));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn collections(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            if let Some(name) = entry.file_name().to_str() {
                if check_collection(name).is_ok() && !self.list(name)?.is_empty() {
                    out.push(name.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

fn escape_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    for (i, b) in key.bytes().enumerate() {
        let plain = b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && i > 0);
        if plain {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn unescape_key(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = name.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Every byte of every document, concatenated in (collection, key) order.
/// Used by anonymity scans and byte-identity checks.
pub fn dump(store: &dyn DocumentStore) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::new();
    for collection in store.collections()? {
        for (key, doc) in store.list(&collection)? {
            out.extend_from_slice(collection.as_bytes());
            out.push(b'/');
            out.extend_from_slice(key.as_bytes());
            out.extend_from_slice(format!(" v{}\n", doc.version).as_bytes());
            out.extend_from_slice(&doc.body);
            out.push(b'\n');
        }
    }
    Ok(out)
}
