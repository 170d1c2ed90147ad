//! Write-once block filesystem.
//!
//! A [`BlockFs`] plays the namenode: it owns the namespace, logs every
//! mutation to an edit log before acknowledging it, and places block replicas
//! on simulated datanodes. All namespace mutations go through one mutex, so
//! there is exactly one writer at a time; block payload reads happen outside
//! it. Handles are cheap to clone and safe to share between threads.

pub mod datanode;
pub mod editlog;
pub mod namespace;
pub mod path;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{self, SharedClock};
use crate::config::{self, Config, ConfigError};

pub use datanode::{DataNode, DataNodeConfig};
pub use editlog::Checkpoint;
pub use namespace::{split_lengths, BlockId, BlockRef, DataNodeId, EditOp, FileEntry, NamespaceTree};
pub use path::DfsPath;
pub use report::{ClusterReport, DataNodeReport, NodeStatus};

use editlog::EditLog;

pub const DEFAULT_BLOCK_SIZE: u64 = 64 << 20;
pub const DEFAULT_HEARTBEAT_MS: i64 = 3_000;
pub const DEFAULT_EXPIRY_INTERVALS: i64 = 10;
pub const OWNER: &str = "hadoop";
pub const GROUP: &str = "supergroup";
const LOCK_FILE: &str = "in_use.lock";

#[derive(Debug, Error)]
pub enum DfsError {
    #[error("storage root {0} is locked by a running instance")]
    RootLocked(PathBuf),
    #[error("filesystem at {0} is not formatted; run `namenode -format` first")]
    NotFormatted(PathBuf),
    #[error("{0}: a file occupies this path")]
    PathIsFile(String),
    #[error("{0}: file exists")]
    FileExists(String),
    #[error("{0}: no such file or directory")]
    NotFound(String),
    #[error("{0}: is a directory")]
    IsDirectory(String),
    #[error("{path}: no live replica of {block}")]
    MissingBlock { path: String, block: BlockId },
    #[error("insufficient space: need {needed} bytes, {available} available")]
    InsufficientSpace { needed: u64, available: u64 },
    #[error("invalid replication factor {0}")]
    InvalidReplication(u32),
    #[error("unknown datanode {0}")]
    UnknownDataNode(String),
    #[error("no namespace image under {0}")]
    NoCheckpoint(PathBuf),
    #[error("corrupt namespace image: {0}")]
    CorruptImage(String),
    #[error("invalid path '{0}'")]
    InvalidPath(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ConfigError> for DfsError {
    fn from(e: ConfigError) -> Self {
        DfsError::InvalidConfig(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct BlockFsConfig {
    pub root: PathBuf,
    pub default_replication: u16,
    pub block_size: u64,
    pub heartbeat_interval_ms: i64,
    pub expiry_intervals: i64,
    pub datanodes: Vec<DataNodeConfig>,
}

impl BlockFsConfig {
    pub fn single_node(root: impl Into<PathBuf>, capacity: u64, non_dfs_used: u64) -> Self {
        Self {
            root: root.into(),
            default_replication: 1,
            block_size: DEFAULT_BLOCK_SIZE,
            heartbeat_interval_ms: DEFAULT_HEARTBEAT_MS,
            expiry_intervals: DEFAULT_EXPIRY_INTERVALS,
            datanodes: vec![DataNodeConfig {
                id: datanode_name(0),
                configured_capacity: capacity,
                non_dfs_used,
            }],
        }
    }

    /// Reads `hadoop.tmp.dir`, `dfs.replication`, `dfs.block.size`,
    /// `dfs.datanode.capacity`, `dfs.datanode.nondfs`, plus the optional
    /// `dfs.datanode.count` and `dfs.heartbeat.interval` (seconds).
    pub fn from_config(conf: &Config) -> Result<Self, DfsError> {
        let root = conf.tmp_dir()?;
        let capacity = conf.get_size(config::DFS_DATANODE_CAPACITY)?.unwrap_or(100 << 30);
        let non_dfs = conf.get_size(config::DFS_DATANODE_NONDFS)?.unwrap_or(0);
        let count: usize = conf.get_or("dfs.datanode.count", 1)?;
        let heartbeat_s: i64 = conf.get_or("dfs.heartbeat.interval", DEFAULT_HEARTBEAT_MS / 1000)?;
        let mut c = Self::single_node(root, capacity, non_dfs);
        c.default_replication = conf.get_or(config::DFS_REPLICATION, 1)?;
        c.block_size = conf.get_size(config::DFS_BLOCK_SIZE)?.unwrap_or(DEFAULT_BLOCK_SIZE);
        c.heartbeat_interval_ms = heartbeat_s * 1000;
        c.datanodes = (0..count)
            .map(|i| DataNodeConfig {
                id: datanode_name(i),
                configured_capacity: capacity,
                non_dfs_used: non_dfs,
            })
            .collect();
        if c.default_replication == 0 {
            return Err(DfsError::InvalidReplication(0));
        }
        if c.block_size == 0 {
            return Err(DfsError::InvalidConfig("dfs.block.size must be positive".into()));
        }
        Ok(c)
    }

    fn expiry_ms(&self) -> i64 {
        self.heartbeat_interval_ms * self.expiry_intervals
    }
}

pub fn datanode_name(index: usize) -> DataNodeId {
    DataNodeId(format!("127.0.0.1:{}", 50010 + index))
}

fn data_dir(root: &Path, index: usize) -> PathBuf {
    if index == 0 {
        root.join("data")
    } else {
        root.join(format!("data-{index}"))
    }
}

fn is_data_dir(name: &str) -> bool {
    name == "data" || name.strip_prefix("data-").is_some_and(|n| n.parse::<usize>().is_ok())
}

fn acquire_lock(root: &Path) -> Result<File, DfsError> {
    fs::create_dir_all(root)?;
    let f = File::options()
        .create(true)
        .truncate(false)
        .write(true)
        .open(root.join(LOCK_FILE))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(DfsError::RootLocked(root.to_path_buf())),
        Err(fs::TryLockError::Error(e)) => Err(e.into()),
    }
}

/// True while some instance holds the storage lock under `root`.
pub fn is_locked(root: &Path) -> bool {
    match File::options().write(true).open(root.join(LOCK_FILE)) {
        Ok(f) => matches!(f.try_lock(), Err(fs::TryLockError::WouldBlock)),
        Err(_) => false,
    }
}

pub fn is_formatted(root: &Path) -> bool {
    editlog::name_dir(root).join(editlog::IMAGE_FILE).exists()
}

/// Erases any namespace and block data under `root` and writes an empty image.
pub fn format_namespace(root: &Path, now_ms: i64) -> Result<NamespaceTree, DfsError> {
    let _lock = acquire_lock(root)?;
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if (name == "name" || is_data_dir(&name)) && entry.file_type()?.is_dir() {
            fs::remove_dir_all(entry.path())?;
        }
    }
    let tree = NamespaceTree::new(now_ms);
    editlog::write_image(
        root,
        &Checkpoint { image: tree.clone(), edit_log_offset: 0, taken_at: now_ms },
    )?;
    File::create(editlog::name_dir(root).join(editlog::EDITS_FILE))?;
    Ok(tree)
}

/// Rebuilds the namespace from the latest image plus committed edits, and
/// block locations from the datanode directories under `root`.
pub fn recover(root: &Path) -> Result<NamespaceTree, DfsError> {
    let (mut tree, _) = editlog::load_namespace(root)?;
    if let Ok(entries) = fs::read_dir(root) {
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .filter(|e| is_data_dir(&e.file_name().to_string_lossy()))
            .map(|e| e.path())
            .collect();
        dirs.sort();
        for dir in dirs {
            let Some(id) = DataNode::stored_id(&dir) else { continue };
            for block in DataNode::scan_ids(&dir)? {
                if let Some(holders) = tree.block_map.get_mut(&block) {
                    holders.insert(id.clone());
                }
            }
        }
    }
    Ok(tree)
}

/// One row of a recursive listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingRow {
    pub is_dir: bool,
    pub replication: u16,
    pub owner: String,
    pub group: String,
    pub size: u64,
    pub mtime: i64,
    pub path: String,
}

impl fmt::Display for ListingRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (perm, repl) = if self.is_dir {
            ("drwxr-xr-x", "-".to_string())
        } else {
            ("-rw-r--r--", self.replication.to_string())
        };
        write!(
            f,
            "{perm}   {repl} {} {} {:>10} {} {}",
            self.owner,
            self.group,
            self.size,
            clock::format_minute(self.mtime),
            self.path
        )
    }
}

/// What a datanode tells the namenode on each heartbeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeReport {
    pub dfs_used: u64,
    pub remaining: u64,
    pub blocks: usize,
}

/// Work the namenode hands back to a datanode in a heartbeat reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    Replicate { block: BlockId, targets: Vec<DataNodeId> },
    Delete { blocks: Vec<BlockId> },
}

struct NodeMeta {
    last_heartbeat: i64,
    status: NodeStatus,
}

struct NameNode {
    tree: NamespaceTree,
    edits: EditLog,
    under_construction: BTreeSet<String>,
    nodes: BTreeMap<DataNodeId, NodeMeta>,
}

struct Inner {
    config: BlockFsConfig,
    clock: SharedClock,
    namenode: Mutex<NameNode>,
    datanodes: BTreeMap<DataNodeId, Arc<DataNode>>,
    started_at: i64,
    _lock: File,
}

#[derive(Clone)]
pub struct BlockFs {
    inner: Arc<Inner>,
}

impl fmt::Debug for BlockFs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockFs").field("root", &self.inner.config.root).finish()
    }
}

impl NameNode {
    fn commit(&mut self, op: EditOp) -> Result<(), DfsError> {
        self.edits.append(&op)?;
        self.tree
            .apply(&op)
            .expect("edit validated before logging must apply");
        Ok(())
    }

    fn is_live(&self, id: &DataNodeId) -> bool {
        self.nodes.get(id).is_some_and(|m| m.status == NodeStatus::Normal)
    }

    fn live_holders(&self, block: BlockId) -> Vec<DataNodeId> {
        self.tree
            .block_map
            .get(&block)
            .map(|h| h.iter().filter(|d| self.is_live(d)).cloned().collect())
            .unwrap_or_default()
    }

    fn mark_dead(&mut self, id: &DataNodeId) {
        if let Some(m) = self.nodes.get_mut(id) {
            m.status = NodeStatus::Dead;
        }
        for holders in self.tree.block_map.values_mut() {
            holders.remove(id);
        }
    }
}

impl BlockFs {
    /// Starts the namenode and datanodes over a formatted root. Holds the
    /// root's lock until the last handle is dropped.
    pub fn open(config: BlockFsConfig, clock: SharedClock) -> Result<Self, DfsError> {
        let lock = acquire_lock(&config.root)?;
        if !is_formatted(&config.root) {
            return Err(DfsError::NotFormatted(config.root.clone()));
        }
        let (mut tree, committed) = editlog::load_namespace(&config.root)?;
        let edits = EditLog::open(&config.root, committed)?;
        let now = clock.now_ms();

        let mut datanodes = BTreeMap::new();
        let mut nodes = BTreeMap::new();
        for (i, dn_conf) in config.datanodes.iter().enumerate() {
            let dn = DataNode::open(dn_conf, data_dir(&config.root, i))?;
            for block in dn.block_ids() {
                match tree.block_map.get_mut(&block) {
                    Some(holders) => {
                        holders.insert(dn.id.clone());
                    }
                    None => {
                        // never committed or since deleted
                        dn.delete_block(block)?;
                    }
                }
            }
            nodes.insert(dn.id.clone(), NodeMeta { last_heartbeat: now, status: NodeStatus::Normal });
            datanodes.insert(dn.id.clone(), Arc::new(dn));
        }

        Ok(Self {
            inner: Arc::new(Inner {
                config,
                clock,
                namenode: Mutex::new(NameNode {
                    tree,
                    edits,
                    under_construction: BTreeSet::new(),
                    nodes,
                }),
                datanodes,
                started_at: now,
                _lock: lock,
            }),
        })
    }

    pub fn config(&self) -> &BlockFsConfig {
        &self.inner.config
    }

    pub fn root(&self) -> &Path {
        &self.inner.config.root
    }

    pub fn started_at(&self) -> i64 {
        self.inner.started_at
    }

    pub fn now_ms(&self) -> i64 {
        self.inner.clock.now_ms()
    }

    pub fn datanode_ids(&self) -> Vec<DataNodeId> {
        self.inner.datanodes.keys().cloned().collect()
    }

    pub fn datanode(&self, id: &DataNodeId) -> Option<Arc<DataNode>> {
        self.inner.datanodes.get(id).cloned()
    }

    fn lock_namenode(&self) -> parking_lot::MutexGuard<'_, NameNode> {
        let mut nn = self.inner.namenode.lock();
        self.expire(&mut nn);
        nn
    }

    fn expire(&self, nn: &mut NameNode) {
        let now = self.inner.clock.now_ms();
        let expiry = self.inner.config.expiry_ms();
        let expired: Vec<DataNodeId> = nn
            .nodes
            .iter()
            .filter(|(_, m)| m.status == NodeStatus::Normal && now - m.last_heartbeat > expiry)
            .map(|(id, _)| id.clone())
            .collect();
        for id in expired {
            log::warn!("datanode {id} missed heartbeats; marking dead");
            nn.mark_dead(&id);
        }
    }

    /// Copy of the live namespace, block locations included.
    pub fn namespace(&self) -> NamespaceTree {
        self.lock_namenode().tree.clone()
    }

    pub fn mkdir(&self, path: &DfsPath) -> Result<(), DfsError> {
        let mut nn = self.lock_namenode();
        nn.tree.check_dir_path(path)?;
        if nn.tree.is_dir(path) {
            return Ok(());
        }
        let mtime = self.now_ms();
        nn.commit(EditOp::Mkdir { path: path.to_string(), mtime })
    }

    /// Opens `path` for its one and only write. A second create on the same
    /// path fails while the first writer is open or after it has closed.
    pub fn create(
        &self,
        path: &DfsPath,
        replication: Option<u16>,
        block_size: Option<u64>,
    ) -> Result<FileWriter, DfsError> {
        let replication = replication.unwrap_or(self.inner.config.default_replication);
        if replication == 0 {
            return Err(DfsError::InvalidReplication(0));
        }
        let block_size = block_size.unwrap_or(self.inner.config.block_size);
        if block_size == 0 {
            return Err(DfsError::InvalidConfig("block size must be positive".into()));
        }
        let parent = path.parent().ok_or_else(|| DfsError::InvalidPath(path.to_string()))?;
        let mut nn = self.lock_namenode();
        if nn.tree.exists(path) || nn.under_construction.contains(path.as_str()) {
            return Err(DfsError::FileExists(path.to_string()));
        }
        nn.tree.check_dir_path(&parent)?;
        nn.under_construction.insert(path.to_string());
        Ok(FileWriter {
            fs: self.clone(),
            path: path.clone(),
            replication,
            block_size,
            buf: Vec::new(),
            closed: false,
        })
    }

    /// Writes a whole file: create, write, close.
    pub fn put(
        &self,
        data: &[u8],
        path: &DfsPath,
        replication: Option<u16>,
        block_size: Option<u64>,
    ) -> Result<FileEntry, DfsError> {
        let mut w = self.create(path, replication, block_size)?;
        w.buf.extend_from_slice(data);
        w.close()
    }

    fn seal(&self, w: &FileWriter) -> Result<FileEntry, DfsError> {
        let mut nn = self.lock_namenode();
        let result = self.place_and_commit(&mut nn, w);
        nn.under_construction.remove(w.path.as_str());
        result
    }

    fn place_and_commit(&self, nn: &mut NameNode, w: &FileWriter) -> Result<FileEntry, DfsError> {
        let lengths = split_lengths(w.buf.len() as u64, w.block_size);
        let live: Vec<Arc<DataNode>> = self
            .inner
            .datanodes
            .values()
            .filter(|d| nn.is_live(&d.id))
            .cloned()
            .collect();
        let effective = (w.replication as usize).min(live.len());
        if !lengths.is_empty() && effective == 0 {
            return Err(DfsError::InsufficientSpace { needed: w.buf.len() as u64, available: 0 });
        }

        // plan every replica before writing any
        let mut projected: Vec<u64> = live.iter().map(|d| d.remaining()).collect();
        let mut plan: Vec<Vec<usize>> = Vec::with_capacity(lengths.len());
        for &len in &lengths {
            let mut order: Vec<usize> = (0..live.len()).collect();
            order.sort_by(|&a, &b| projected[b].cmp(&projected[a]).then(a.cmp(&b)));
            let chosen: Vec<usize> = order.into_iter().take(effective).collect();
            for &i in &chosen {
                if projected[i] < len {
                    return Err(DfsError::InsufficientSpace { needed: len, available: projected[i] });
                }
                projected[i] -= len;
            }
            plan.push(chosen);
        }

        let first_id = nn.tree.next_block_id;
        let mut blocks = Vec::with_capacity(lengths.len());
        let mut written: Vec<(usize, BlockId)> = Vec::new();
        let mut offset = 0usize;
        for (i, &len) in lengths.iter().enumerate() {
            let id = BlockId(first_id + i as u64);
            let payload = &w.buf[offset..offset + len as usize];
            for &node in &plan[i] {
                if let Err(e) = live[node].write_block(id, payload.to_vec()) {
                    for (n, b) in written {
                        let _ = live[n].delete_block(b);
                    }
                    return Err(e);
                }
                written.push((node, id));
            }
            blocks.push(BlockRef { id, len });
            offset += len as usize;
        }

        let entry = FileEntry {
            path: w.path.to_string(),
            blocks,
            replication: w.replication,
            block_size: w.block_size,
            created_at: self.now_ms(),
            sealed: true,
        };
        if let Err(e) = nn.commit(EditOp::AddFile { entry: entry.clone() }) {
            for (n, b) in written {
                let _ = live[n].delete_block(b);
            }
            return Err(e);
        }
        for (node, id) in written {
            nn.tree.block_map.entry(id).or_default().insert(live[node].id.clone());
        }
        Ok(entry)
    }

    pub fn file_status(&self, path: &DfsPath) -> Result<FileEntry, DfsError> {
        let nn = self.lock_namenode();
        match nn.tree.file(path) {
            Some(f) => Ok(f.clone()),
            None if nn.tree.is_dir(path) => Err(DfsError::IsDirectory(path.to_string())),
            None => Err(DfsError::NotFound(path.to_string())),
        }
    }

    pub fn is_dir(&self, path: &DfsPath) -> bool {
        self.lock_namenode().tree.is_dir(path)
    }

    pub fn exists(&self, path: &DfsPath) -> bool {
        let nn = self.lock_namenode();
        nn.tree.exists(path) || nn.under_construction.contains(path.as_str())
    }

    /// Each block of a file with its byte offset and live replica holders.
    pub fn block_locations(&self, path: &DfsPath) -> Result<Vec<(BlockRef, u64, Vec<DataNodeId>)>, DfsError> {
        let nn = self.lock_namenode();
        let entry = match nn.tree.file(path) {
            Some(f) => f,
            None if nn.tree.is_dir(path) => return Err(DfsError::IsDirectory(path.to_string())),
            None => return Err(DfsError::NotFound(path.to_string())),
        };
        let mut offset = 0;
        let mut out = Vec::with_capacity(entry.blocks.len());
        for b in &entry.blocks {
            out.push((*b, offset, nn.live_holders(b.id)));
            offset += b.len;
        }
        Ok(out)
    }

    pub fn cat(&self, path: &DfsPath) -> Result<Vec<u8>, DfsError> {
        self.read_range(path, 0, u64::MAX)
    }

    /// Reads up to `len` bytes starting at `offset`.
    pub fn read_range(&self, path: &DfsPath, offset: u64, len: u64) -> Result<Vec<u8>, DfsError> {
        let locations = self.block_locations(path)?;
        let end = offset.saturating_add(len);
        let mut out = Vec::new();
        for (block, start, holders) in locations {
            let block_end = start + block.len;
            if block_end <= offset || start >= end {
                continue;
            }
            let payload = holders
                .iter()
                .filter_map(|h| self.inner.datanodes.get(h))
                .find_map(|dn| dn.read_block(block.id))
                .ok_or_else(|| DfsError::MissingBlock { path: path.to_string(), block: block.id })?;
            let from = offset.saturating_sub(start) as usize;
            let to = (end.min(block_end) - start) as usize;
            out.extend_from_slice(&payload[from..to]);
        }
        Ok(out)
    }

    fn row(tree: &NamespaceTree, path: &str, is_dir: bool) -> ListingRow {
        let (replication, size, mtime) = if is_dir {
            (0, 0, tree.directories[path])
        } else {
            let f = &tree.files[path];
            (f.replication, f.len(), f.created_at)
        };
        ListingRow {
            is_dir,
            replication,
            owner: OWNER.to_string(),
            group: GROUP.to_string(),
            size,
            mtime,
            path: path.to_string(),
        }
    }

    /// Direct children of a directory, or the file itself.
    pub fn list(&self, path: &DfsPath) -> Result<Vec<ListingRow>, DfsError> {
        let nn = self.lock_namenode();
        if nn.tree.files.contains_key(path.as_str()) {
            return Ok(vec![Self::row(&nn.tree, path.as_str(), false)]);
        }
        if !nn.tree.is_dir(path) {
            return Err(DfsError::NotFound(path.to_string()));
        }
        Ok(nn
            .tree
            .children(path)
            .into_iter()
            .map(|(p, is_dir)| Self::row(&nn.tree, &p, is_dir))
            .collect())
    }

    /// Everything below `path`, depth first, each directory before its
    /// contents, siblings in bytewise order.
    pub fn lsr(&self, path: &DfsPath) -> Result<Vec<ListingRow>, DfsError> {
        let nn = self.lock_namenode();
        if nn.tree.files.contains_key(path.as_str()) {
            return Ok(vec![Self::row(&nn.tree, path.as_str(), false)]);
        }
        if !nn.tree.is_dir(path) {
            return Err(DfsError::NotFound(path.to_string()));
        }
        let mut out = Vec::new();
        let mut stack: Vec<(String, bool)> = nn.tree.children(path);
        stack.reverse();
        while let Some((p, is_dir)) = stack.pop() {
            out.push(Self::row(&nn.tree, &p, is_dir));
            if is_dir {
                let dir = DfsPath::parse(&p)?;
                let mut kids = nn.tree.children(&dir);
                kids.reverse();
                stack.extend(kids);
            }
        }
        Ok(out)
    }

    pub fn set_replication(&self, path: &DfsPath, replication: u16) -> Result<FileEntry, DfsError> {
        if replication == 0 {
            return Err(DfsError::InvalidReplication(0));
        }
        let mut nn = self.lock_namenode();
        let current = match nn.tree.file(path) {
            Some(f) => f.replication,
            None if nn.tree.is_dir(path) => return Err(DfsError::IsDirectory(path.to_string())),
            None => return Err(DfsError::NotFound(path.to_string())),
        };
        if current != replication {
            nn.commit(EditOp::SetReplication { path: path.to_string(), replication })?;
        }
        Ok(nn.tree.file(path).cloned().expect("file checked above"))
    }

    /// Removes a file or a directory tree and invalidates its replicas.
    pub fn delete(&self, path: &DfsPath) -> Result<(), DfsError> {
        if path.is_root() {
            return Err(DfsError::InvalidPath(path.to_string()));
        }
        let mut nn = self.lock_namenode();
        if !nn.tree.exists(path) {
            return Err(DfsError::NotFound(path.to_string()));
        }
        let prefix = format!("{path}/");
        let doomed: Vec<BlockId> = nn
            .tree
            .files
            .iter()
            .filter(|(p, _)| p.as_str() == path.as_str() || p.starts_with(&prefix))
            .flat_map(|(_, f)| f.blocks.iter().map(|b| b.id))
            .collect();
        nn.commit(EditOp::Delete { path: path.to_string() })?;
        drop(nn);
        for dn in self.inner.datanodes.values() {
            for &b in &doomed {
                dn.delete_block(b)?;
            }
        }
        Ok(())
    }

    pub fn admin_report(&self) -> ClusterReport {
        let nn = self.lock_namenode();
        let mut datanodes = Vec::new();
        let (mut configured, mut used, mut non_dfs, mut remaining) = (0u64, 0u64, 0u64, 0u64);
        let (mut live, mut dead) = (0, 0);
        for (id, dn) in &self.inner.datanodes {
            let meta = &nn.nodes[id];
            let dn_used = dn.dfs_used();
            let dn_remaining = dn.remaining();
            if meta.status == NodeStatus::Normal {
                live += 1;
                configured += dn.configured_capacity;
                used += dn_used;
                non_dfs += dn.non_dfs_used;
                remaining += dn_remaining;
            } else {
                dead += 1;
            }
            datanodes.push(DataNodeReport {
                name: id.to_string(),
                status: meta.status,
                configured_capacity: dn.configured_capacity,
                dfs_used: dn_used,
                non_dfs_used: dn.non_dfs_used,
                dfs_remaining: dn_remaining,
                dfs_used_pct: report::percent(dn_used, dn.configured_capacity),
                dfs_remaining_pct: report::percent(dn_remaining, dn.configured_capacity),
                last_contact: meta.last_heartbeat,
                blocks: dn.block_ids().len(),
            });
        }
        let (mut under, mut missing) = (0, 0);
        for f in nn.tree.files.values() {
            for b in &f.blocks {
                let replicas = nn.live_holders(b.id).len();
                if replicas < f.replication as usize {
                    under += 1;
                }
                if replicas == 0 {
                    missing += 1;
                }
            }
        }
        ClusterReport {
            configured_capacity: configured,
            present_capacity: used + remaining,
            dfs_remaining: remaining,
            dfs_used: used,
            non_dfs_used: non_dfs,
            dfs_used_pct: report::percent(used, configured),
            dfs_remaining_pct: report::percent(remaining, configured),
            under_replicated: under,
            corrupt_replica_blocks: 0,
            missing_blocks: missing,
            datanodes,
            live,
            dead,
        }
    }

    /// Records a heartbeat and returns the commands queued for that node. A
    /// node previously declared dead rejoins and its replicas count again.
    pub fn heartbeat(&self, id: &DataNodeId, report: NodeReport) -> Result<Vec<Command>, DfsError> {
        let dn = self
            .inner
            .datanodes
            .get(id)
            .cloned()
            .ok_or_else(|| DfsError::UnknownDataNode(id.to_string()))?;
        let now = self.now_ms();
        let mut nn = self.lock_namenode();
        let meta = nn.nodes.get_mut(id).expect("registered datanodes have metadata");
        meta.last_heartbeat = now;
        if meta.status == NodeStatus::Dead {
            meta.status = NodeStatus::Normal;
            for b in dn.block_ids() {
                if let Some(h) = nn.tree.block_map.get_mut(&b) {
                    h.insert(id.clone());
                }
            }
        }
        if report.dfs_used != dn.dfs_used() {
            log::debug!("datanode {id} reported {} bytes used, store holds {}", report.dfs_used, dn.dfs_used());
        }

        let live: Vec<&Arc<DataNode>> = self
            .inner
            .datanodes
            .values()
            .filter(|d| nn.is_live(&d.id))
            .collect();
        let mut commands = Vec::new();
        let mut delete = Vec::new();
        let wanted: BTreeMap<BlockId, usize> = nn
            .tree
            .files
            .values()
            .flat_map(|f| f.blocks.iter().map(move |b| (b.id, f.replication as usize)))
            .collect();
        for b in dn.block_ids() {
            let Some(&replication) = wanted.get(&b) else {
                delete.push(b);
                continue;
            };
            let holders = nn.live_holders(b);
            let want = replication.min(live.len());
            if holders.len() < want && holders.first() == Some(id) {
                let mut targets: Vec<&Arc<DataNode>> =
                    live.iter().copied().filter(|d| !holders.contains(&d.id)).collect();
                targets.sort_by(|a, b| b.remaining().cmp(&a.remaining()).then(a.id.cmp(&b.id)));
                commands.push(Command::Replicate {
                    block: b,
                    targets: targets.into_iter().take(want - holders.len()).map(|d| d.id.clone()).collect(),
                });
            } else if holders.len() > replication && holders[replication..].contains(id) {
                delete.push(b);
            }
        }
        if !delete.is_empty() {
            commands.push(Command::Delete { blocks: delete });
        }
        Ok(commands)
    }

    /// Carries out heartbeat commands on behalf of datanode `id`.
    pub fn execute(&self, id: &DataNodeId, commands: &[Command]) -> Result<(), DfsError> {
        let source = self
            .inner
            .datanodes
            .get(id)
            .ok_or_else(|| DfsError::UnknownDataNode(id.to_string()))?;
        for cmd in commands {
            match cmd {
                Command::Replicate { block, targets } => {
                    let Some(payload) = source.read_block(*block) else { continue };
                    for t in targets {
                        let target = self
                            .inner
                            .datanodes
                            .get(t)
                            .ok_or_else(|| DfsError::UnknownDataNode(t.to_string()))?;
                        if target.remaining() < payload.len() as u64 {
                            continue;
                        }
                        target.write_block(*block, payload.to_vec())?;
                        let mut nn = self.inner.namenode.lock();
                        match nn.tree.block_map.get_mut(block) {
                            Some(h) => {
                                h.insert(t.clone());
                            }
                            None => {
                                drop(nn);
                                target.delete_block(*block)?;
                            }
                        }
                    }
                }
                Command::Delete { blocks } => {
                    for b in blocks {
                        source.delete_block(*b)?;
                        if let Some(h) = self.inner.namenode.lock().tree.block_map.get_mut(b) {
                            h.remove(id);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Heartbeats every datanode once and executes the replies.
    pub fn heartbeat_all(&self) -> Result<(), DfsError> {
        for (id, dn) in &self.inner.datanodes {
            let report = NodeReport {
                dfs_used: dn.dfs_used(),
                remaining: dn.remaining(),
                blocks: dn.block_ids().len(),
            };
            let cmds = self.heartbeat(id, report)?;
            self.execute(id, &cmds)?;
        }
        Ok(())
    }

    /// Snapshots the namespace to the image file; edits after the returned
    /// offset are replayed on recovery.
    pub fn checkpoint(&self) -> Result<Checkpoint, DfsError> {
        let nn = self.lock_namenode();
        nn.edits.sync()?;
        let ckpt = Checkpoint {
            image: nn.tree.clone(),
            edit_log_offset: nn.edits.len(),
            taken_at: self.now_ms(),
        };
        editlog::write_image(&self.inner.config.root, &ckpt)?;
        Ok(ckpt)
    }

    /// Test hook: a datanode loses its replica of `block` and reports it.
    pub fn drop_replica(&self, block: BlockId, node: &DataNodeId) -> Result<bool, DfsError> {
        let dn = self
            .inner
            .datanodes
            .get(node)
            .ok_or_else(|| DfsError::UnknownDataNode(node.to_string()))?;
        let removed = dn.delete_block(block)?;
        if let Some(h) = self.inner.namenode.lock().tree.block_map.get_mut(&block) {
            h.remove(node);
        }
        Ok(removed)
    }
}

/// An open write-once file. Bytes are committed as blocks on [`close`](Self::close).
pub struct FileWriter {
    fs: BlockFs,
    path: DfsPath,
    replication: u16,
    block_size: u64,
    buf: Vec<u8>,
    closed: bool,
}

impl FileWriter {
    pub fn path(&self) -> &DfsPath {
        &self.path
    }

    pub fn close(mut self) -> Result<FileEntry, DfsError> {
        self.closed = true;
        self.fs.seal(&self)
    }
}

impl Write for FileWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.buf.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl Drop for FileWriter {
    fn drop(&mut self) {
        if !self.closed {
            self.fs.inner.namenode.lock().under_construction.remove(self.path.as_str());
        }
    }
}

#[cfg(test)]
mod tests;
