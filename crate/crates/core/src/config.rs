//! `key=value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub const FS_DEFAULT_NAME: &str = "fs.default.name";
pub const HADOOP_TMP_DIR: &str = "hadoop.tmp.dir";
pub const DFS_REPLICATION: &str = "dfs.replication";
pub const DFS_BLOCK_SIZE: &str = "dfs.block.size";
pub const DFS_DATANODE_CAPACITY: &str = "dfs.datanode.capacity";
pub const DFS_DATANODE_NONDFS: &str = "dfs.datanode.nondfs";
pub const MAPRED_JOB_TRACKER: &str = "mapred.job.tracker";
pub const MAPRED_MAP_SLOTS: &str = "mapred.tasktracker.map.slots";
pub const MAPRED_REDUCE_SLOTS: &str = "mapred.tasktracker.reduce.slots";
pub const MAPRED_TASK_RETRIES: &str = "mapred.task.retries";
pub const HBASE_ROOTDIR: &str = "hbase.rootdir";
pub const HBASE_CODECS: &str = "hbase.regionserver.codecs";
pub const HBASE_ZK_DATADIR: &str = "hbase.zookeeper.property.dataDir";
pub const STATUS_PORT: &str = "status.port";
pub const STATUS_MULTIPORT: &str = "status.multiport";
pub const FS_CHECKPOINT_PERIOD: &str = "fs.checkpoint.period";

/// Environment variable naming the config file when `--config` is absent.
pub const CONF_ENV: &str = "MINIGRID_CONF";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("invalid value for {key}: '{value}'")]
    InvalidValue { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    /// Settings for a single-machine cluster rooted at `tmp_dir`: 1 MiB blocks,
    /// replication 1, and a simulated datanode sized like a desktop disk.
    pub fn desk_profile(tmp_dir: impl AsRef<Path>) -> Self {
        let mut c = Self::new();
        c.set(FS_DEFAULT_NAME, "hdfs://localhost:9000");
        c.set(HADOOP_TMP_DIR, tmp_dir.as_ref().display().to_string());
        c.set(DFS_REPLICATION, "1");
        c.set(DFS_BLOCK_SIZE, (1u64 << 20).to_string());
        c.set(DFS_DATANODE_CAPACITY, "302827593728");
        c.set(DFS_DATANODE_NONDFS, "19106844657");
        c.set(MAPRED_JOB_TRACKER, "localhost:9001");
        c.set(HBASE_ROOTDIR, "hdfs://localhost:9000/hbase");
        c.set(HBASE_CODECS, "lzo,gz");
        c.set(STATUS_PORT, "50070");
        c
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1, text: raw.to_string() });
            }
            c.set(key, value.trim());
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` when the key is absent.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// Byte-size lookup accepting suffixes, see [`parse_size`].
    pub fn get_size(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_size(v).map(Some).ok_or_else(|| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn get_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn tmp_dir(&self) -> Result<PathBuf, ConfigError> {
        self.get(HADOOP_TMP_DIR)
            .map(PathBuf::from)
            .ok_or_else(|| ConfigError::InvalidValue {
                key: HADOOP_TMP_DIR.to_string(),
                value: String::new(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Parses `123`, `64KiB`, `64MiB`, `1GiB`, `10KB` (decimal) and friends.
pub fn parse_size(text: &str) -> Option<u64> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().ok()?;
    let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" => 1 << 10,
        "m" | "mib" => 1 << 20,
        "g" | "gib" => 1 << 30,
        "kb" => 1_000,
        "mb" => 1_000_000,
        "gb" => 1_000_000_000,
        _ => return None,
    };
    n.checked_mul(mult)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_and_comments() {
        let c = Config::parse("# comment\n\nfs.default.name = hdfs://localhost:9000\ndfs.replication=1\n").unwrap();
        assert_eq!(c.get(FS_DEFAULT_NAME), Some("hdfs://localhost:9000"));
        assert_eq!(c.get_or::<u16>(DFS_REPLICATION, 3).unwrap(), 1);
        assert_eq!(c.get_or::<u16>("missing", 3).unwrap(), 3);
    }

    #[test]
    fn rejects_bad_lines_and_values() {
        assert!(matches!(Config::parse("novalue"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("=x"), Err(ConfigError::Syntax { .. })));
        let c = Config::parse("dfs.replication=many").unwrap();
        assert!(c.get_parsed::<u16>(DFS_REPLICATION).is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64MiB"), Some(64 << 20));
        assert_eq!(parse_size("1024"), Some(1024));
        assert_eq!(parse_size("10KB"), Some(10_000));
        assert_eq!(parse_size("3 GiB"), Some(3 << 30));
        assert_eq!(parse_size("lots"), None);
    }

    #[test]
    fn lists() {
        let c = Config::parse("hbase.regionserver.codecs=lzo, gz,").unwrap();
        assert_eq!(c.get_list(HBASE_CODECS), vec!["lzo", "gz"]);
        assert!(Config::new().get_list(HBASE_CODECS).is_empty());
    }
}
