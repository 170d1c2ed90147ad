use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::path::DfsPath;
use super::DfsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "blk_{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataNodeId(pub String);

impl fmt::Display for DataNodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRef {
    pub id: BlockId,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub blocks: Vec<BlockRef>,
    pub replication: u16,
    pub block_size: u64,
    pub created_at: i64,
    pub sealed: bool,
}

impl FileEntry {
    pub fn len(&self) -> u64 {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Lengths of the blocks a file of `len` bytes occupies.
pub fn split_lengths(len: u64, block_size: u64) -> Vec<u64> {
    assert!(block_size > 0, "block size must be positive");
    let full = len / block_size;
    let rest = len % block_size;
    let mut out = vec![block_size; full as usize];
    if rest > 0 {
        out.push(rest);
    }
    out
}

/// A logged namespace mutation. Replaying the log over an image rebuilds the
/// namespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Mkdir { path: String, mtime: i64 },
    AddFile { entry: FileEntry },
    SetReplication { path: String, replication: u16 },
    Delete { path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NamespaceTree {
    /// Directory path → modification time (ms). Always contains `/`.
    pub directories: BTreeMap<String, i64>,
    pub files: BTreeMap<String, FileEntry>,
    /// Block → datanodes holding a live replica. Rebuilt from block reports,
    /// never persisted.
    #[serde(skip)]
    pub block_map: BTreeMap<BlockId, BTreeSet<DataNodeId>>,
    pub next_block_id: u64,
}

impl NamespaceTree {
    pub fn new(now_ms: i64) -> Self {
        let mut t = Self::default();
        t.directories.insert("/".to_string(), now_ms);
        t.next_block_id = 1;
        t
    }

    pub fn is_dir(&self, path: &DfsPath) -> bool {
        self.directories.contains_key(path.as_str())
    }

    pub fn file(&self, path: &DfsPath) -> Option<&FileEntry> {
        self.files.get(path.as_str())
    }

    pub fn exists(&self, path: &DfsPath) -> bool {
        self.is_dir(path) || self.files.contains_key(path.as_str())
    }

    /// Directories plus files, the "files and directories" count.
    pub fn object_count(&self) -> usize {
        self.directories.len() + self.files.len()
    }

    pub fn block_count(&self) -> usize {
        self.files.values().map(|f| f.blocks.len()).sum()
    }

    /// Same directories, files and id counter; block locations are ignored.
    pub fn same_namespace(&self, other: &NamespaceTree) -> bool {
        self.directories == other.directories
            && self.files == other.files
            && self.next_block_id == other.next_block_id
    }

    /// Fails with `PathIsFile` when a file sits at `path` or any ancestor.
    pub fn check_dir_path(&self, path: &DfsPath) -> Result<(), DfsError> {
        for p in path.ancestors().iter().chain(std::iter::once(path)) {
            if self.files.contains_key(p.as_str()) {
                return Err(DfsError::PathIsFile(p.to_string()));
            }
        }
        Ok(())
    }

    /// Direct children of a directory, files and directories merged, sorted bytewise.
    pub fn children(&self, dir: &DfsPath) -> Vec<(String, bool)> {
        let prefix = if dir.is_root() { "/".to_string() } else { format!("{}/", dir) };
        let direct = |p: &&String| p.len() > prefix.len() && p.starts_with(&prefix) && !p[prefix.len()..].contains('/');
        let mut out: Vec<(String, bool)> = self
            .directories
            .range(prefix.clone()..)
            .map(|(p, _)| p)
            .take_while(|p| p.starts_with(&prefix))
            .filter(direct)
            .map(|p| (p.clone(), true))
            .chain(
                self.files
                    .range(prefix.clone()..)
                    .map(|(p, _)| p)
                    .take_while(|p| p.starts_with(&prefix))
                    .filter(direct)
                    .map(|p| (p.clone(), false)),
            )
            .collect();
        out.sort();
        out
    }

    fn ensure_dirs(&mut self, path: &DfsPath, mtime: i64) {
        for p in path.ancestors().into_iter().chain(std::iter::once(path.clone())) {
            self.directories.entry(p.to_string()).or_insert(mtime);
        }
    }

    /// Applies one edit. Live mutations validate before logging, so a failure
    /// here means the log disagrees with the image.
    pub fn apply(&mut self, op: &EditOp) -> Result<(), DfsError> {
        match op {
            EditOp::Mkdir { path, mtime } => {
                let p = DfsPath::parse(path)?;
                self.check_dir_path(&p)?;
                self.ensure_dirs(&p, *mtime);
            }
            EditOp::AddFile { entry } => {
                let p = DfsPath::parse(&entry.path)?;
                if self.exists(&p) {
                    return Err(DfsError::FileExists(entry.path.clone()));
                }
                let parent = p.parent().ok_or_else(|| DfsError::InvalidPath(entry.path.clone()))?;
                self.check_dir_path(&parent)?;
                self.ensure_dirs(&parent, entry.created_at);
                for b in &entry.blocks {
                    self.next_block_id = self.next_block_id.max(b.id.0 + 1);
                    self.block_map.entry(b.id).or_default();
                }
                self.files.insert(entry.path.clone(), entry.clone());
            }
            EditOp::SetReplication { path, replication } => {
                let f = self
                    .files
                    .get_mut(path)
                    .ok_or_else(|| DfsError::NotFound(path.clone()))?;
                f.replication = *replication;
            }
            EditOp::Delete { path } => {
                let p = DfsPath::parse(path)?;
                if p.is_root() {
                    return Err(DfsError::InvalidPath(path.clone()));
                }
                if let Some(f) = self.files.remove(path) {
                    for b in f.blocks {
                        self.block_map.remove(&b.id);
                    }
                } else if self.directories.remove(path).is_some() {
                    let prefix = format!("{path}/");
                    self.directories.retain(|d, _| !d.starts_with(&prefix));
                    let doomed: Vec<String> = self
                        .files
                        .keys()
                        .filter(|f| f.starts_with(&prefix))
                        .cloned()
                        .collect();
                    for f in doomed {
                        if let Some(entry) = self.files.remove(&f) {
                            for b in entry.blocks {
                                self.block_map.remove(&b.id);
                            }
                        }
                    }
                } else {
                    return Err(DfsError::NotFound(path.clone()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(path: &str, ids: &[(u64, u64)]) -> FileEntry {
        FileEntry {
            path: path.to_string(),
            blocks: ids.iter().map(|&(id, len)| BlockRef { id: BlockId(id), len }).collect(),
            replication: 1,
            block_size: 10,
            created_at: 7,
            sealed: true,
        }
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_lengths(0, 10), Vec::<u64>::new());
        assert_eq!(split_lengths(602, 1 << 20), vec![602]);
        assert_eq!(split_lengths(25, 10), vec![10, 10, 5]);
        assert_eq!(split_lengths(20, 10), vec![10, 10]);
    }

    #[test]
    fn add_file_creates_parents_and_advances_ids() {
        let mut t = NamespaceTree::new(0);
        t.apply(&EditOp::AddFile { entry: entry("/a/b/f", &[(4, 10), (5, 3)]) }).unwrap();
        assert!(t.directories.contains_key("/a"));
        assert!(t.directories.contains_key("/a/b"));
        assert_eq!(t.next_block_id, 6);
        assert_eq!(t.block_count(), 2);
        assert!(t.apply(&EditOp::AddFile { entry: entry("/a/b/f", &[]) }).is_err());
        assert!(matches!(
            t.apply(&EditOp::Mkdir { path: "/a/b/f/g".into(), mtime: 0 }),
            Err(DfsError::PathIsFile(_))
        ));
    }

    #[test]
    fn delete_directory_is_recursive() {
        let mut t = NamespaceTree::new(0);
        t.apply(&EditOp::AddFile { entry: entry("/a/x", &[(1, 1)]) }).unwrap();
        t.apply(&EditOp::AddFile { entry: entry("/ab", &[(2, 1)]) }).unwrap();
        t.apply(&EditOp::Delete { path: "/a".into() }).unwrap();
        assert!(t.files.contains_key("/ab"));
        assert!(!t.files.contains_key("/a/x"));
        assert_eq!(t.block_map.len(), 1);
        assert_eq!(t.next_block_id, 3);
    }

    #[test]
    fn children_are_direct_and_sorted() {
        let mut t = NamespaceTree::new(0);
        t.apply(&EditOp::Mkdir { path: "/b/c".into(), mtime: 0 }).unwrap();
        t.apply(&EditOp::AddFile { entry: entry("/a", &[]) }).unwrap();
        t.apply(&EditOp::AddFile { entry: entry("/b/z", &[]) }).unwrap();
        let kids = t.children(&DfsPath::root());
        assert_eq!(kids, vec![("/a".to_string(), false), ("/b".to_string(), true)]);
        let kids = t.children(&DfsPath::parse("/b").unwrap());
        assert_eq!(kids, vec![("/b/c".to_string(), true), ("/b/z".to_string(), false)]);
    }
}
