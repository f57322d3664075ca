//! Content-addressed JSON file store used by the completion and embedding caches.
//!
//! Layout: `<root>/<first two hex chars>/<digest>.json`. Writes go through a
//! temporary file and an atomic rename, so concurrent readers never observe a
//! partially written entry.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug)]
pub struct ContentStore {
    root: PathBuf,
    writer: Mutex<()>,
}

impl ContentStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), writer: Mutex::new(()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        let prefix = digest.get(..2).unwrap_or(digest);
        self.root.join(prefix).join(format!("{digest}.json"))
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.path_for(digest).is_file()
    }

    pub fn read(&self, digest: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_for(digest)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn write(&self, digest: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.path_for(digest);
        let dir = path.parent().expect("store paths always have a parent");
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
