//! Column-family table store with a single region server.
//!
//! Puts land in a sorted memstore; `flush` writes one block-compressed store
//! file per family using that family's codec. Scans merge the memstore with
//! every store file and return the newest version of each column. The region
//! server refuses to start unless every codec named in
//! `hbase.regionserver.codecs` passes a compress/decompress probe.

pub mod cell;
pub mod shell;
pub mod storage;
pub mod storefile;

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockfs::{BlockFs, DfsError, DfsPath};
use crate::clock::SharedClock;
use crate::codec::{self, CodecError, CodecRegistry};
use crate::config::{self, Config};

pub use cell::{parse_column, Cell, CellKey};
pub use storage::{parse_rootdir, DfsStorage, LocalStorage, RootDir, TableStorage};
pub use storefile::StoreFile;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("Could not load codec '{0}'; region server cannot start")]
    CodecUnavailable(String),
    #[error("Table already exists: {0}")]
    TableExists(String),
    #[error("Unknown table {0}!")]
    UnknownTable(String),
    #[error("Unknown column family {family} in table {table}")]
    UnknownFamily { table: String, family: String },
    #[error("Unknown compression codec '{0}'")]
    UnknownCodec(String),
    #[error("invalid table schema: {0}")]
    InvalidSchema(String),
    #[error("invalid column '{0}': expected family:qualifier")]
    InvalidColumn(String),
    #[error("corrupt store file: {0}")]
    CorruptStoreFile(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dfs(#[from] DfsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_COMPRESSION: &str = "none";
const SCHEMA_FILE: &str = ".tableinfo";
const PROBE: &[u8] = b"region server codec probe: abcabcabcabcabcabc 0123456789 0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub compression: String,
}

impl FamilySpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), compression: DEFAULT_COMPRESSION.into() }
    }

    pub fn compressed(name: &str, codec: &str) -> Self {
        Self { name: name.into(), compression: codec.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub families: Vec<FamilySpec>,
}

impl TableSchema {
    pub fn family(&self, name: &str) -> Option<&FamilySpec> {
        self.families.iter().find(|f| f.name == name)
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Clone)]
pub struct KvConfig {
    pub rootdir: String,
    pub codecs: Vec<String>,
    pub zk_datadir: Option<String>,
}

impl KvConfig {
    pub fn from_config(conf: &Config) -> Self {
        Self {
            rootdir: conf.get(config::HBASE_ROOTDIR).unwrap_or("hdfs://localhost:9000/hbase").to_string(),
            codecs: conf.get_list(config::HBASE_CODECS),
            zk_datadir: conf.get(config::HBASE_ZK_DATADIR).map(str::to_string),
        }
    }
}

/// Storage for `rootdir`; `hdfs://` roots need the filesystem handle.
pub fn open_storage(rootdir: &str, fs: Option<&BlockFs>) -> Result<Arc<dyn TableStorage>, KvError> {
    match parse_rootdir(rootdir)? {
        RootDir::Local(p) => Ok(Arc::new(LocalStorage::new(p))),
        RootDir::Dfs(p) => {
            let fs = fs.ok_or_else(|| KvError::InvalidConfig(format!("{rootdir} needs a running filesystem")))?;
            Ok(Arc::new(DfsStorage::new(fs.clone(), DfsPath::parse(&p)?)))
        }
    }
}

/// What one flush wrote for one family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushedFile {
    pub family: String,
    pub path: String,
    pub cells: usize,
    pub blocks: usize,
    pub bytes: usize,
}

#[derive(Default)]
struct TableState {
    /// `(row, family, qualifier, ts desc)` → value. Same key ⇒ last put wins.
    memstore: BTreeMap<CellKey, Vec<u8>>,
    /// Per family, oldest first.
    files: BTreeMap<String, Vec<Arc<StoreFile>>>,
    next_seq: u64,
}

struct Table {
    schema: TableSchema,
    state: Mutex<TableState>,
}

pub struct RegionServer {
    storage: Arc<dyn TableStorage>,
    codecs: Arc<CodecRegistry>,
    clock: SharedClock,
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
    started_at: i64,
}

impl RegionServer {
    /// Runs the codec gate, then loads existing tables from storage.
    pub fn open(
        config: &KvConfig,
        storage: Arc<dyn TableStorage>,
        codecs: Arc<CodecRegistry>,
        clock: SharedClock,
    ) -> Result<Self, KvError> {
        for name in &config.codecs {
            let c = codecs.get(name).map_err(|_| KvError::CodecUnavailable(name.clone()))?;
            codec::self_test(c.as_ref(), PROBE).map_err(|_| KvError::CodecUnavailable(name.clone()))?;
        }
        if let Some(dir) = &config.zk_datadir {
            log::warn!("{} = {dir} is ignored: coordination is in-process", config::HBASE_ZK_DATADIR);
        }
        let server = Self {
            storage,
            codecs,
            started_at: clock.now_ms(),
            clock,
            tables: RwLock::new(BTreeMap::new()),
        };
        server.load_tables()?;
        Ok(server)
    }

    fn load_tables(&self) -> Result<(), KvError> {
        let mut tables = self.tables.write();
        for name in self.storage.list("")? {
            let schema_path = format!("{name}/{SCHEMA_FILE}");
            if !self.storage.exists(&schema_path) {
                continue;
            }
            let schema: TableSchema = serde_json::from_slice(&self.storage.read(&schema_path)?)
                .map_err(|e| KvError::InvalidSchema(format!("{name}: {e}")))?;
            let mut state = TableState::default();
            for fam in &schema.families {
                let mut files = Vec::new();
                for file in self.storage.list(&format!("{name}/{}", fam.name))? {
                    let Some(seq) = file.strip_suffix(".sf").and_then(|s| s.parse::<u64>().ok()) else {
                        continue;
                    };
                    state.next_seq = state.next_seq.max(seq + 1);
                    let bytes = self.storage.read(&format!("{name}/{}/{file}", fam.name))?;
                    files.push(Arc::new(StoreFile::parse(bytes)?));
                }
                state.files.insert(fam.name.clone(), files);
            }
            tables.insert(name.clone(), Arc::new(Table { schema, state: Mutex::new(state) }));
        }
        Ok(())
    }

    pub fn started_at(&self) -> i64 {
        self.started_at
    }

    pub fn storage(&self) -> &dyn TableStorage {
        self.storage.as_ref()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    fn table(&self, name: &str) -> Result<Arc<Table>, KvError> {
        self.tables.read().get(name).cloned().ok_or_else(|| KvError::UnknownTable(name.to_string()))
    }

    pub fn schema(&self, table: &str) -> Result<TableSchema, KvError> {
        Ok(self.table(table)?.schema.clone())
    }

    pub fn create_table(&self, name: &str, families: &[FamilySpec]) -> Result<TableSchema, KvError> {
        if !valid_name(name) {
            return Err(KvError::InvalidSchema(format!("bad table name '{name}'")));
        }
        if families.is_empty() {
            return Err(KvError::InvalidSchema("a table needs at least one column family".into()));
        }
        for (i, f) in families.iter().enumerate() {
            if !valid_name(&f.name) {
                return Err(KvError::InvalidSchema(format!("bad family name '{}'", f.name)));
            }
            if families[..i].iter().any(|g| g.name == f.name) {
                return Err(KvError::InvalidSchema(format!("duplicate family '{}'", f.name)));
            }
            if !self.codecs.contains(&f.compression) {
                return Err(KvError::UnknownCodec(f.compression.clone()));
            }
        }
        let mut tables = self.tables.write();
        if tables.contains_key(name) || self.storage.exists(&format!("{name}/{SCHEMA_FILE}")) {
            return Err(KvError::TableExists(name.to_string()));
        }
        let schema = TableSchema { name: name.to_string(), families: families.to_vec() };
        let json = serde_json::to_vec_pretty(&schema).expect("schema serializes");
        self.storage.write(&format!("{name}/{SCHEMA_FILE}"), &json)?;
        let state = TableState {
            files: families.iter().map(|f| (f.name.clone(), Vec::new())).collect(),
            ..TableState::default()
        };
        tables.insert(name.to_string(), Arc::new(Table { schema: schema.clone(), state: Mutex::new(state) }));
        Ok(schema)
    }

    /// Stores a cell; without `timestamp` the current clock is used.
    pub fn put(&self, table: &str, row: &[u8], column: &str, value: &[u8], timestamp: Option<i64>) -> Result<i64, KvError> {
        let t = self.table(table)?;
        let (family, qualifier) = parse_column(column)?;
        if t.schema.family(&family).is_none() {
            return Err(KvError::UnknownFamily { table: table.to_string(), family });
        }
        let ts = timestamp.unwrap_or_else(|| self.clock.now_ms());
        t.state.lock().memstore.insert((row.to_vec(), family, qualifier, Reverse(ts)), value.to_vec());
        Ok(ts)
    }

    /// Newest version of every column with `start ≤ row < stop`, in cell order.
    pub fn scan(&self, table: &str, start: Option<&[u8]>, stop: Option<&[u8]>) -> Result<Vec<Cell>, KvError> {
        let t = self.table(table)?;
        let (mem, files) = {
            let st = t.state.lock();
            let lo = start.map(|s| (s.to_vec(), String::new(), Vec::new(), Reverse(i64::MAX)));
            let mem: Vec<Cell> = match lo {
                Some(lo) => Box::new(st.memstore.range(lo..)) as Box<dyn Iterator<Item = _>>,
                None => Box::new(st.memstore.iter()),
            }
            .take_while(|((row, ..), _)| stop.is_none_or(|s| row.as_slice() < s))
            .map(|((row, family, qualifier, Reverse(ts)), v)| Cell {
                row: row.clone(),
                family: family.clone(),
                qualifier: qualifier.clone(),
                timestamp: *ts,
                value: v.clone(),
            })
            .collect();
            (mem, st.files.clone())
        };
        // Lower rank wins a timestamp tie: memstore, then newer files.
        let mut ranked: Vec<(Cell, usize)> = mem.into_iter().map(|c| (c, 0)).collect();
        for (family, fs) in &files {
            let codec_name = &t.schema.family(family).expect("family in schema").compression;
            let codec = self.codecs.get(codec_name)?;
            for (age, f) in fs.iter().rev().enumerate() {
                ranked.extend(f.scan(codec.as_ref(), start, stop)?.into_iter().map(|c| (c, age + 1)));
            }
        }
        ranked.sort_by(|(a, ra), (b, rb)| {
            (&a.row, &a.family, &a.qualifier, Reverse(a.timestamp), ra)
                .cmp(&(&b.row, &b.family, &b.qualifier, Reverse(b.timestamp), rb))
        });
        let mut out: Vec<Cell> = Vec::new();
        for (c, _) in ranked {
            if out.last().is_some_and(|l| l.same_column(&c)) {
                continue;
            }
            out.push(c);
        }
        Ok(out)
    }

    pub fn get(&self, table: &str, row: &[u8]) -> Result<Vec<Cell>, KvError> {
        let mut stop = row.to_vec();
        stop.push(0);
        self.scan(table, Some(row), Some(&stop))
    }

    /// Writes the memstore out as one store file per family that has cells.
    pub fn flush(&self, table: &str) -> Result<Vec<FlushedFile>, KvError> {
        let t = self.table(table)?;
        let mut st = t.state.lock();
        let mut by_family: BTreeMap<String, Vec<Cell>> = BTreeMap::new();
        for ((row, family, qualifier, Reverse(ts)), value) in &st.memstore {
            by_family.entry(family.clone()).or_default().push(Cell {
                row: row.clone(),
                family: family.clone(),
                qualifier: qualifier.clone(),
                timestamp: *ts,
                value: value.clone(),
            });
        }
        let mut written = Vec::new();
        let mut new_files = Vec::new();
        for (family, cells) in by_family {
            let spec = t.schema.family(&family).expect("family in schema");
            let codec = self.codecs.get(&spec.compression)?;
            let bytes = storefile::write(&family, codec.as_ref(), &cells);
            let path = format!("{}/{family}/{:010}.sf", t.schema.name, st.next_seq);
            self.storage.write(&path, &bytes)?;
            st.next_seq += 1;
            let sf = StoreFile::parse(bytes)?;
            written.push(FlushedFile { family: family.clone(), path, cells: cells.len(), blocks: sf.index.len(), bytes: sf.len() });
            new_files.push((family, Arc::new(sf)));
        }
        for (family, sf) in new_files {
            st.files.entry(family).or_default().push(sf);
        }
        st.memstore.clear();
        Ok(written)
    }

    /// Flushes every table; used on shutdown so nothing lives only in memory.
    pub fn flush_all(&self) -> Result<usize, KvError> {
        let mut files = 0;
        for name in self.table_names() {
            files += self.flush(&name)?.len();
        }
        Ok(files)
    }

    pub fn store_files(&self, table: &str, family: &str) -> Result<Vec<Arc<StoreFile>>, KvError> {
        Ok(self.table(table)?.state.lock().files.get(family).cloned().unwrap_or_default())
    }

    pub fn memstore_len(&self, table: &str) -> Result<usize, KvError> {
        Ok(self.table(table)?.state.lock().memstore.len())
    }
}
