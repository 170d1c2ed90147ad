//! In-process cluster: filesystem, checkpointer, job and task trackers, an
//! optional region server and the status listener, started and stopped as a
//! unit.

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::RwLock;
use thiserror::Error;

use crate::blockfs::{BlockFs, BlockFsConfig, DfsError};
use crate::clock::SharedClock;
use crate::codec::CodecRegistry;
use crate::config::{self, Config};
use crate::kvtable::{open_storage, KvConfig, KvError, RegionServer};
use crate::mrengine::{JobRegistry, JobTracker, MrConfig, MrError};
use crate::statusd::{self, StatusConfig, StatusError, StatusServer, StatusSources};

/// Checkpoint period when `fs.checkpoint.period` is unset, in seconds.
pub const DEFAULT_CHECKPOINT_PERIOD_S: u64 = 3600;
/// Written under the storage root by `cluster stop`; a foreground cluster
/// polls for it and shuts down.
pub const STOP_FILE: &str = "cluster.stop";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    NameNode,
    DataNode,
    SecondaryNameNode,
    JobTracker,
    TaskTracker,
    RegionServer,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("filesystem at {0} is not formatted; run `minigrid namenode -format` first")]
    NotFormatted(PathBuf),
    #[error("a cluster is already running over {0}")]
    AlreadyRunning(PathBuf),
    #[error(transparent)]
    Status(#[from] StatusError),
    #[error(transparent)]
    Dfs(DfsError),
    #[error(transparent)]
    Mr(#[from] MrError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<DfsError> for ClusterError {
    fn from(e: DfsError) -> Self {
        match e {
            DfsError::NotFormatted(p) => ClusterError::NotFormatted(p),
            DfsError::RootLocked(p) => ClusterError::AlreadyRunning(p),
            other => ClusterError::Dfs(other),
        }
    }
}

pub struct ClusterOptions {
    pub config: Config,
    pub clock: SharedClock,
    pub codecs: Arc<CodecRegistry>,
    pub region_server: bool,
    /// `None` runs without a status listener.
    pub status: Option<StatusConfig>,
}

impl ClusterOptions {
    pub fn new(config: Config) -> Self {
        Self {
            config,
            clock: crate::clock::system(),
            codecs: Arc::new(CodecRegistry::with_defaults()),
            region_server: false,
            status: None,
        }
    }
}

pub struct Cluster {
    fs: BlockFs,
    jobs: JobTracker,
    region: Option<Arc<RegionServer>>,
    status: Option<StatusServer>,
    components: Arc<RwLock<Vec<String>>>,
    stopping: Arc<AtomicBool>,
    stop_txs: Vec<mpsc::Sender<()>>,
    threads: Vec<JoinHandle<()>>,
}

/// Runs `tick` every `period` until the sender side is dropped.
fn periodic(period: Duration, stop: mpsc::Receiver<()>, mut tick: impl FnMut() + Send + 'static) -> JoinHandle<()> {
    std::thread::spawn(move || loop {
        match stop.recv_timeout(period) {
            Err(RecvTimeoutError::Timeout) => tick(),
            _ => return,
        }
    })
}

impl Cluster {
    pub fn start(opts: ClusterOptions) -> Result<Self, ClusterError> {
        let conf = &opts.config;
        let bad = |e: config::ConfigError| ClusterError::InvalidConfig(e.to_string());
        let fs_conf = BlockFsConfig::from_config(conf)?;
        let heartbeat = Duration::from_millis(fs_conf.heartbeat_interval_ms.max(1) as u64);
        let checkpoint = Duration::from_secs(conf.get_or(config::FS_CHECKPOINT_PERIOD, DEFAULT_CHECKPOINT_PERIOD_S).map_err(bad)?.max(1));
        let datanodes = fs_conf.datanodes.len();
        let namenode = conf
            .get(config::FS_DEFAULT_NAME)
            .unwrap_or("hdfs://localhost:9000")
            .trim_start_matches("hdfs://")
            .to_string();

        let fs = BlockFs::open(fs_conf, opts.clock.clone())?;
        let mut names = vec![Component::NameNode.to_string()];
        names.extend(std::iter::repeat_n(Component::DataNode.to_string(), datanodes));
        names.push(Component::SecondaryNameNode.to_string());

        let mr = MrConfig::from_config(conf)?;
        let jobs = JobTracker::new(fs.clone(), opts.clock.clone(), mr, JobRegistry::with_defaults())?;
        names.push(Component::JobTracker.to_string());
        names.push(Component::TaskTracker.to_string());

        let region = if opts.region_server {
            let kv = KvConfig::from_config(conf);
            let storage = open_storage(&kv.rootdir, Some(&fs))?;
            let rs = RegionServer::open(&kv, storage, opts.codecs.clone(), opts.clock.clone())?;
            names.push(Component::RegionServer.to_string());
            Some(Arc::new(rs))
        } else {
            None
        };

        let components = Arc::new(RwLock::new(names));
        let stopping = Arc::new(AtomicBool::new(false));
        let status = match &opts.status {
            Some(sc) => Some(statusd::serve(
                sc,
                StatusSources {
                    fs: fs.clone(),
                    jobs: jobs.clone(),
                    namenode,
                    components: components.clone(),
                    stopping: stopping.clone(),
                },
            )?),
            None => None,
        };

        let (hb_tx, hb_rx) = mpsc::channel::<()>();
        let (ck_tx, ck_rx) = mpsc::channel::<()>();
        let (hb_fs, ck_fs) = (fs.clone(), fs.clone());
        let threads = vec![
            periodic(heartbeat, hb_rx, move || {
                if let Err(e) = hb_fs.heartbeat_all() {
                    log::warn!("heartbeat failed: {e}");
                }
            }),
            periodic(checkpoint, ck_rx, move || match ck_fs.checkpoint() {
                Ok(c) => log::info!("checkpoint taken at {}", c.taken_at),
                Err(e) => log::warn!("checkpoint failed: {e}"),
            }),
        ];

        Ok(Self { fs, jobs, region, status, components, stopping, stop_txs: vec![hb_tx, ck_tx], threads })
    }

    pub fn fs(&self) -> &BlockFs {
        &self.fs
    }

    pub fn jobs(&self) -> &JobTracker {
        &self.jobs
    }

    pub fn region_server(&self) -> Option<&Arc<RegionServer>> {
        self.region.as_ref()
    }

    pub fn status_server(&self) -> Option<&StatusServer> {
        self.status.as_ref()
    }

    /// Running components, one per line: `<pid> <name>`.
    pub fn status_lines(&self) -> Vec<String> {
        let pid = std::process::id();
        self.components.read().iter().map(|c| format!("{pid} {c}")).collect()
    }

    pub fn components(&self) -> Vec<String> {
        self.components.read().clone()
    }

    pub fn state_hash(&self) -> u64 {
        statusd::state_hash(&self.fs, &self.jobs)
    }

    /// Waits for running jobs, flushes tables, takes a final checkpoint and
    /// releases the storage lock.
    pub fn stop(mut self) -> Result<(), ClusterError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), ClusterError> {
        if self.stop_txs.is_empty() {
            return Ok(());
        }
        self.stopping.store(true, Ordering::SeqCst);
        self.jobs.shutdown();
        let flushed = self.region.as_ref().map(|rs| rs.flush_all()).transpose();
        self.stop_txs.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        if let Some(mut s) = self.status.take() {
            s.shutdown();
        }
        self.components.write().clear();
        let ckpt = self.fs.checkpoint();
        flushed?;
        ckpt?;
        Ok(())
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        if let Err(e) = self.shutdown() {
            log::warn!("cluster shutdown: {e}");
        }
    }
}
