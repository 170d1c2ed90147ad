//! Block payload storage for one simulated datanode: one file per block,
//! mirrored in memory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;

use super::namespace::{BlockId, DataNodeId};
use super::DfsError;

const ID_FILE: &str = "VERSION";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataNodeConfig {
    pub id: DataNodeId,
    pub configured_capacity: u64,
    pub non_dfs_used: u64,
}

#[derive(Default)]
struct BlockStore {
    blocks: BTreeMap<BlockId, Arc<Vec<u8>>>,
    used: u64,
}

pub struct DataNode {
    pub id: DataNodeId,
    pub configured_capacity: u64,
    pub non_dfs_used: u64,
    dir: PathBuf,
    store: RwLock<BlockStore>,
}

fn block_file(dir: &Path, id: BlockId) -> PathBuf {
    dir.join(format!("blk_{}", id.0))
}

impl DataNode {
    /// Opens (or initializes) the storage directory and loads every block in it.
    pub fn open(config: &DataNodeConfig, dir: PathBuf) -> Result<Self, DfsError> {
        if config.configured_capacity < config.non_dfs_used {
            return Err(DfsError::InvalidConfig(format!(
                "datanode {}: capacity {} below non-DFS use {}",
                config.id, config.configured_capacity, config.non_dfs_used
            )));
        }
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(ID_FILE), config.id.0.as_bytes())?;
        let mut store = BlockStore::default();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(id) = name
                .to_str()
                .and_then(|n| n.strip_prefix("blk_"))
                .and_then(|n| n.parse::<u64>().ok())
            else {
                continue;
            };
            let bytes = fs::read(entry.path())?;
            store.used += bytes.len() as u64;
            store.blocks.insert(BlockId(id), Arc::new(bytes));
        }
        Ok(Self {
            id: config.id.clone(),
            configured_capacity: config.configured_capacity,
            non_dfs_used: config.non_dfs_used,
            dir,
            store: RwLock::new(store),
        })
    }

    /// Reads the datanode id recorded in a storage directory, if any.
    pub fn stored_id(dir: &Path) -> Option<DataNodeId> {
        fs::read_to_string(dir.join(ID_FILE)).ok().map(DataNodeId)
    }

    /// Block ids present in a storage directory, without loading payloads.
    pub fn scan_ids(dir: &Path) -> Result<Vec<BlockId>, DfsError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            if let Some(id) = name
                .to_str()
                .and_then(|n| n.strip_prefix("blk_"))
                .and_then(|n| n.parse::<u64>().ok())
            {
                out.push(BlockId(id));
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn dfs_used(&self) -> u64 {
        self.store.read().used
    }

    pub fn remaining(&self) -> u64 {
        self.configured_capacity - self.non_dfs_used - self.dfs_used()
    }

    pub fn write_block(&self, id: BlockId, bytes: Vec<u8>) -> Result<(), DfsError> {
        fs::write(block_file(&self.dir, id), &bytes)?;
        let mut store = self.store.write();
        store.used += bytes.len() as u64;
        if let Some(old) = store.blocks.insert(id, Arc::new(bytes)) {
            store.used -= old.len() as u64;
        }
        Ok(())
    }

    pub fn read_block(&self, id: BlockId) -> Option<Arc<Vec<u8>>> {
        self.store.read().blocks.get(&id).cloned()
    }

    pub fn has_block(&self, id: BlockId) -> bool {
        self.store.read().blocks.contains_key(&id)
    }

    pub fn delete_block(&self, id: BlockId) -> Result<bool, DfsError> {
        let mut store = self.store.write();
        let Some(old) = store.blocks.remove(&id) else { return Ok(false) };
        store.used -= old.len() as u64;
        drop(store);
        match fs::remove_file(block_file(&self.dir, id)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
            Err(e) => Err(e.into()),
        }
    }

    pub fn block_ids(&self) -> Vec<BlockId> {
        self.store.read().blocks.keys().copied().collect()
    }

    /// Test hook: flips the first byte of a stored replica in place.
    pub fn corrupt_block(&self, id: BlockId) -> bool {
        let mut store = self.store.write();
        match store.blocks.get_mut(&id) {
            Some(b) if !b.is_empty() => {
                Arc::make_mut(b)[0] ^= 0xff;
                true
            }
            _ => false,
        }
    }
}
