//! Where tables live: a local directory or a directory in the block
//! filesystem. Files are written whole and never modified afterwards.

use std::fs;
use std::path::PathBuf;

use crate::blockfs::{BlockFs, DfsPath};

use super::KvError;

pub trait TableStorage: Send + Sync {
    /// Writes a new file; `rel` is a `/`-separated path under the root.
    fn write(&self, rel: &str, data: &[u8]) -> Result<(), KvError>;
    fn read(&self, rel: &str) -> Result<Vec<u8>, KvError>;
    fn exists(&self, rel: &str) -> bool;
    /// Names of the entries directly under `rel`, sorted. Missing ⇒ empty.
    fn list(&self, rel: &str) -> Result<Vec<String>, KvError>;
    fn describe(&self) -> String;
}

pub struct LocalStorage {
    root: PathBuf,
}

impl LocalStorage {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn path(&self, rel: &str) -> PathBuf {
        rel.split('/').filter(|s| !s.is_empty()).fold(self.root.clone(), |p, s| p.join(s))
    }
}

impl TableStorage for LocalStorage {
    fn write(&self, rel: &str, data: &[u8]) -> Result<(), KvError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, data)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>, KvError> {
        Ok(fs::read(self.path(rel))?)
    }

    fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    fn list(&self, rel: &str) -> Result<Vec<String>, KvError> {
        let dir = self.path(rel);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut names: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| !n.ends_with(".tmp"))
            .collect();
        names.sort();
        Ok(names)
    }

    fn describe(&self) -> String {
        format!("file://{}", self.root.display())
    }
}

pub struct DfsStorage {
    fs: BlockFs,
    root: DfsPath,
}

impl DfsStorage {
    pub fn new(fs: BlockFs, root: DfsPath) -> Self {
        Self { fs, root }
    }

    fn path(&self, rel: &str) -> Result<DfsPath, KvError> {
        let mut p = self.root.clone();
        for seg in rel.split('/').filter(|s| !s.is_empty()) {
            p = p.join(seg)?;
        }
        Ok(p)
    }
}

impl TableStorage for DfsStorage {
    fn write(&self, rel: &str, data: &[u8]) -> Result<(), KvError> {
        self.fs.put(data, &self.path(rel)?, None, None)?;
        Ok(())
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>, KvError> {
        Ok(self.fs.cat(&self.path(rel)?)?)
    }

    fn exists(&self, rel: &str) -> bool {
        self.path(rel).map(|p| self.fs.exists(&p)).unwrap_or(false)
    }

    fn list(&self, rel: &str) -> Result<Vec<String>, KvError> {
        let dir = self.path(rel)?;
        if !self.fs.exists(&dir) {
            return Ok(Vec::new());
        }
        Ok(self
            .fs
            .list(&dir)?
            .into_iter()
            .map(|r| r.path.rsplit('/').next().unwrap_or_default().to_string())
            .collect())
    }

    fn describe(&self) -> String {
        format!("hdfs://{}", self.root)
    }
}

/// Splits an `hbase.rootdir` value into its scheme and path:
/// `hdfs://host:port/p` ⇒ `Dfs("/p")`; `file:///p` or a bare path ⇒ `Local`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RootDir {
    Dfs(String),
    Local(PathBuf),
}

pub fn parse_rootdir(text: &str) -> Result<RootDir, KvError> {
    if let Some(rest) = text.strip_prefix("hdfs://") {
        let path = rest.find('/').map_or("/", |i| &rest[i..]);
        DfsPath::parse(path).map_err(|_| KvError::InvalidConfig(format!("bad hbase.rootdir {text}")))?;
        Ok(RootDir::Dfs(path.to_string()))
    } else if let Some(rest) = text.strip_prefix("file://") {
        Ok(RootDir::Local(PathBuf::from(rest)))
    } else if text.contains("://") {
        Err(KvError::InvalidConfig(format!("unsupported hbase.rootdir scheme: {text}")))
    } else {
        Ok(RootDir::Local(PathBuf::from(text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rootdir_schemes() {
        assert_eq!(parse_rootdir("hdfs://localhost:9000/hbase").unwrap(), RootDir::Dfs("/hbase".into()));
        assert_eq!(parse_rootdir("file:///tmp/hb").unwrap(), RootDir::Local("/tmp/hb".into()));
        assert_eq!(parse_rootdir("/tmp/hb").unwrap(), RootDir::Local("/tmp/hb".into()));
        assert!(parse_rootdir("s3://bucket/x").is_err());
    }

    #[test]
    fn local_storage_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = LocalStorage::new(dir.path());
        s.write("t/.tableinfo", b"{}").unwrap();
        s.write("t/f/0000000001.sf", b"x").unwrap();
        assert_eq!(s.list("t").unwrap(), vec![".tableinfo", "f"]);
        assert_eq!(s.read("t/f/0000000001.sf").unwrap(), b"x");
        assert!(s.list("missing").unwrap().is_empty());
    }
}
