//! Where payload bytes live. Slots are opaque hex names.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;

pub trait PayloadStore: Send + Sync {
    fn put(&self, slot: &str, bytes: &[u8]) -> io::Result<()>;
    fn get(&self, slot: &str) -> io::Result<Option<Vec<u8>>>;
    fn remove(&self, slot: &str) -> io::Result<()>;
}

/// Shared in-memory store. Clones see the same contents.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    slots: Arc<RwLock<HashMap<String, Vec<u8>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every stored byte, concatenated in slot order.
    pub fn dump(&self) -> Vec<u8> {
        let slots = self.slots.read();
        let mut keys: Vec<_> = slots.keys().collect();
        keys.sort();
        let mut out = Vec::new();
        for k in keys {
            out.extend_from_slice(k.as_bytes());
            out.extend_from_slice(&slots[k]);
        }
        out
    }
}

impl PayloadStore for MemoryStore {
    fn put(&self, slot: &str, bytes: &[u8]) -> io::Result<()> {
        self.slots.write().insert(slot.to_string(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, slot: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.slots.read().get(slot).cloned())
    }

    fn remove(&self, slot: &str) -> io::Result<()> {
        self.slots.write().remove(slot);
        Ok(())
    }
}

/// One `<slot>.bin` file per payload.
#[derive(Debug, Clone)]
pub struct DirStore {
    dir: PathBuf,
}

impl DirStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(DirStore { dir })
    }

    pub fn path_of(&self, slot: &str) -> PathBuf {
        self.dir.join(format!("{slot}.bin"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl PayloadStore for DirStore {
    fn put(&self, slot: &str, bytes: &[u8]) -> io::Result<()> {
        let tmp = self.dir.join(format!("{slot}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
        fs::rename(tmp, self.path_of(slot))
    }

    fn get(&self, slot: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.path_of(slot)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn remove(&self, slot: &str) -> io::Result<()> {
        match fs::remove_file(self.path_of(slot)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}
