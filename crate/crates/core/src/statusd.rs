//! Read-only HTTP status pages for the filesystem, job tracker and task
//! tracker. Every page renders as plain text by default and as JSON when the
//! request carries `Accept: application/json`.
//!
//! Routing is a pure function of the request path ([`handle`]); the server
//! only moves bytes. Nothing reachable from a route mutates cluster state.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::RwLock;
use serde::Serialize;
use thiserror::Error;

use crate::blockfs::report::{format_bytes, format_pct};
use crate::blockfs::{BlockFs, DfsPath, ListingRow};
use crate::clock::format_long;
use crate::config::{Config, STATUS_MULTIPORT, STATUS_PORT};
use crate::mrengine::{CounterSet, JobState, JobTracker, TaskAttemptInfo, TaskKind, TaskTableRow};

pub const DEFAULT_PORT: u16 = 50070;
pub const JOBTRACKER_PORT: u16 = 50030;
pub const TASKTRACKER_PORT: u16 = 50060;
const WORKERS_PER_LISTENER: usize = 4;

#[derive(Debug, Error)]
pub enum StatusError {
    #[error("port {port} is already in use: {reason}")]
    PortInUse { port: u16, reason: String },
    #[error("invalid status configuration: {0}")]
    InvalidConfig(String),
}

/// What the pages read from. Cheap to clone; all fields share state.
#[derive(Clone)]
pub struct StatusSources {
    pub fs: BlockFs,
    pub jobs: JobTracker,
    /// `host:port` shown in the NameNode heading.
    pub namenode: String,
    /// Names of running components, in start order.
    pub components: Arc<RwLock<Vec<String>>>,
    pub stopping: Arc<AtomicBool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn text(status: u16, body: String) -> Self {
        Self { status, content_type: "text/plain; charset=utf-8", body: body.into_bytes() }
    }

    fn json<T: Serialize>(value: &T) -> Self {
        let body = serde_json::to_vec_pretty(value).expect("status documents serialize");
        Self { status: 200, content_type: "application/json", body }
    }

    fn render<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) -> Self {
        if json {
            Self::json(value)
        } else {
            Self::text(200, text(value))
        }
    }

    fn error(status: u16, json: bool, message: String) -> Self {
        if json {
            let body = serde_json::json!({ "status": status, "error": message }).to_string();
            Self { status, content_type: "application/json", body: body.into_bytes() }
        } else {
            Self::text(status, format!("{status} {message}\n"))
        }
    }

    pub fn body_text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfsHealth {
    pub namenode: String,
    pub started: i64,
    pub files_and_directories: usize,
    pub blocks: usize,
    pub configured_capacity: u64,
    pub dfs_used: u64,
    pub non_dfs_used: u64,
    pub dfs_remaining: u64,
    pub dfs_used_pct: f64,
    pub dfs_remaining_pct: f64,
    pub live_nodes: usize,
    pub dead_nodes: usize,
    pub storage_directory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSummary {
    pub id: String,
    pub name: String,
    pub user: String,
    pub status: String,
    pub map_pct: f64,
    pub reduce_pct: f64,
    pub started_at: i64,
    pub finished_at: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobDetail {
    #[serde(flatten)]
    pub summary: JobSummary,
    pub finished_in_secs: Option<i64>,
    pub tasks: Vec<TaskTableRow>,
    pub counters: CounterSet,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerView {
    pub id: String,
    pub map_slots: usize,
    pub reduce_slots: usize,
    pub running: Vec<TaskAttemptInfo>,
    pub non_running: Vec<TaskAttemptInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterView {
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Listing {
    pub path: String,
    pub entries: Vec<ListingRow>,
}

fn summary(j: &JobState) -> JobSummary {
    JobSummary {
        id: j.id.clone(),
        name: j.spec.name.clone(),
        user: j.user.clone(),
        status: j.phase.to_string(),
        map_pct: j.map_pct,
        reduce_pct: j.reduce_pct,
        started_at: j.started_at,
        finished_at: j.finished_at,
    }
}

pub fn dfs_health(src: &StatusSources) -> DfsHealth {
    let ns = src.fs.namespace();
    let r = src.fs.admin_report();
    DfsHealth {
        namenode: src.namenode.clone(),
        started: src.fs.started_at(),
        files_and_directories: ns.object_count(),
        blocks: ns.block_count(),
        configured_capacity: r.configured_capacity,
        dfs_used: r.dfs_used,
        non_dfs_used: r.non_dfs_used,
        dfs_remaining: r.dfs_remaining,
        dfs_used_pct: r.dfs_used_pct,
        dfs_remaining_pct: r.dfs_remaining_pct,
        live_nodes: r.live,
        dead_nodes: r.dead,
        storage_directory: src.fs.root().join("name").display().to_string(),
    }
}

pub fn job_detail(j: &JobState) -> JobDetail {
    JobDetail {
        summary: summary(j),
        finished_in_secs: j.elapsed_secs(),
        tasks: vec![j.table_row(TaskKind::Map), j.table_row(TaskKind::Reduce)],
        counters: j.counters,
        error: j.error.clone(),
    }
}

pub fn tracker_view(src: &StatusSources) -> TrackerView {
    let t = src.jobs.tracker();
    let (running, non_running) = src.jobs.attempts();
    TrackerView { id: t.id, map_slots: t.map_slots, reduce_slots: t.reduce_slots, running, non_running }
}

fn dfs_health_text(h: &DfsHealth) -> String {
    let total = h.files_and_directories + h.blocks;
    let mut s = String::new();
    let _ = writeln!(s, "NameNode '{}'", h.namenode);
    let _ = writeln!(s);
    let _ = writeln!(s, "Started: {}", format_long(h.started));
    let _ = writeln!(s);
    let _ = writeln!(s, "Cluster Summary");
    let _ = writeln!(s);
    let _ = writeln!(s, "{} files and directories, {} blocks = {total} total.", h.files_and_directories, h.blocks);
    for (label, v) in [
        ("Configured Capacity", h.configured_capacity),
        ("DFS Used", h.dfs_used),
        ("Non DFS Used", h.non_dfs_used),
        ("DFS Remaining", h.dfs_remaining),
    ] {
        let _ = writeln!(s, "{label} : {v} ({})", format_bytes(v));
    }
    let _ = writeln!(s, "DFS Used% : {} %", format_pct(h.dfs_used_pct));
    let _ = writeln!(s, "DFS Remaining% : {} %", format_pct(h.dfs_remaining_pct));
    let _ = writeln!(s, "Live Nodes : {}", h.live_nodes);
    let _ = writeln!(s, "Dead Nodes : {}", h.dead_nodes);
    let _ = writeln!(s);
    let _ = writeln!(s, "NameNode Storage:");
    let _ = writeln!(s, "Storage Directory\tType\tState");
    let _ = writeln!(s, "{}\tIMAGE_AND_EDITS\tActive", h.storage_directory);
    s
}

fn job_list_text(jobs: &Vec<JobSummary>) -> String {
    let mut s = String::from("Jobid\tUser\tName\tStatus\tMap % Complete\tReduce % Complete\n");
    for j in jobs {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{:.2}%\t{:.2}%", j.id, j.user, j.name, j.status, j.map_pct, j.reduce_pct);
    }
    s
}

pub fn job_detail_text(d: &JobDetail) -> String {
    let j = &d.summary;
    let mut s = String::new();
    let _ = writeln!(s, "Hadoop {}", j.id);
    let _ = writeln!(s);
    let _ = writeln!(s, "User: {}", j.user);
    let _ = writeln!(s, "Job Name: {}", j.name);
    let _ = writeln!(s, "Status: {}", j.status);
    let _ = writeln!(s, "Started at: {}", format_long(j.started_at));
    if let Some(f) = j.finished_at {
        let _ = writeln!(s, "Finished at: {}", format_long(f));
    }
    if let Some(secs) = d.finished_in_secs {
        let _ = writeln!(s, "Finished in: {secs}sec");
    }
    if let Some(e) = &d.error {
        let _ = writeln!(s, "Error: {e}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{}", crate::mrengine::job::TASK_TABLE_HEADER);
    for row in &d.tasks {
        let _ = writeln!(s, "{row}");
    }
    let _ = writeln!(s);
    for line in d.counters.dump_lines() {
        let _ = writeln!(s, "{line}");
    }
    s
}

fn tracker_text(t: &TrackerView) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "TaskTracker {}", t.id);
    let _ = writeln!(s, "Map slots: {}  Reduce slots: {}", t.map_slots, t.reduce_slots);
    for (title, list) in [("Running tasks", &t.running), ("Non-Running Tasks", &t.non_running)] {
        let _ = writeln!(s);
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "Task Attempts\tStatus\tProgress");
        for a in list {
            let _ = writeln!(s, "{}\t{:?}\t{:.2}%", a.attempt_id, a.state, a.progress * 100.0);
        }
    }
    s
}

const INDEX: &str = "\
/dfshealth               filesystem summary
/browse/<path>           directory listing or file contents (?recursive=1)
/dfsadmin/report         datanode report
/jobtracker              jobs
/jobtracker/job/<id>     job detail and task table
/tasktracker             task attempts
/cluster                 running components
";

fn browse(src: &StatusSources, path: &str, recursive: bool, json: bool) -> Response {
    let Ok(p) = DfsPath::parse(if path.is_empty() { "/" } else { path }) else {
        return Response::error(404, json, format!("bad path {path}"));
    };
    if src.fs.is_dir(&p) {
        let rows = if recursive { src.fs.lsr(&p) } else { src.fs.list(&p) };
        return match rows {
            Ok(entries) => Response::render(json, &Listing { path: p.to_string(), entries }, |l| {
                l.entries.iter().map(|r| format!("{r}\n")).collect()
            }),
            Err(e) => Response::error(404, json, e.to_string()),
        };
    }
    match src.fs.cat(&p) {
        Ok(bytes) => Response { status: 200, content_type: "application/octet-stream", body: bytes },
        Err(e) => Response::error(404, json, e.to_string()),
    }
}

/// Routes a GET. `path` may carry a query string; `?format=json` is
/// equivalent to an `Accept: application/json` header.
pub fn handle(src: &StatusSources, path: &str, accept_json: bool) -> Response {
    let (path, query) = path.split_once('?').unwrap_or((path, ""));
    let json = accept_json || query.split('&').any(|kv| kv == "format=json");
    let recursive = query.split('&').any(|kv| kv == "recursive=1");
    if src.stopping.load(Ordering::SeqCst) {
        return Response::error(503, json, "cluster is stopping".into());
    }
    let path = path.trim_end_matches('/');
    match path {
        "" => Response::text(200, INDEX.to_string()),
        "/dfshealth" => Response::render(json, &dfs_health(src), dfs_health_text),
        "/jobtracker" => {
            let jobs: Vec<JobSummary> = src.jobs.jobs().iter().map(summary).collect();
            Response::render(json, &jobs, job_list_text)
        }
        "/dfsadmin/report" => Response::render(json, &src.fs.admin_report(), |r| r.to_string()),
        "/tasktracker" => Response::render(json, &tracker_view(src), tracker_text),
        "/cluster" => Response::render(json, &ClusterView { components: src.components.read().clone() }, |c| {
            c.components.iter().map(|n| format!("{n}\n")).collect()
        }),
        "/browse" => browse(src, "/", recursive, json),
        _ => {
            if let Some(id) = path.strip_prefix("/jobtracker/job/") {
                match src.jobs.status(id) {
                    Ok(j) => Response::render(json, &job_detail(&j), job_detail_text),
                    Err(_) => Response::error(404, json, format!("unknown job {id}")),
                }
            } else if let Some(rest) = path.strip_prefix("/browse/") {
                browse(src, &format!("/{rest}"), recursive, json)
            } else {
                Response::error(404, json, format!("no page at {path}"))
            }
        }
    }
}

/// Digest of the durable cluster state: namespace, block placement, stored
/// replicas and job records. Heartbeat times are left out.
pub fn state_hash(fs: &BlockFs, jobs: &JobTracker) -> u64 {
    let mut h = DefaultHasher::new();
    let ns = fs.namespace();
    serde_json::to_string(&ns).unwrap_or_default().hash(&mut h);
    format!("{:?}", ns.block_map).hash(&mut h);
    for id in fs.datanode_ids() {
        if let Some(dn) = fs.datanode(&id) {
            format!("{id:?}").hash(&mut h);
            dn.block_ids().hash(&mut h);
        }
    }
    serde_json::to_string(&jobs.jobs()).unwrap_or_default().hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusConfig {
    pub host: String,
    /// One listener serves every page; three mirror the classic port split.
    pub ports: Vec<u16>,
}

impl StatusConfig {
    pub fn single(port: u16) -> Self {
        Self { host: "127.0.0.1".into(), ports: vec![port] }
    }

    pub fn from_config(conf: &Config) -> Result<Self, StatusError> {
        let bad = |e: crate::config::ConfigError| StatusError::InvalidConfig(e.to_string());
        let port = conf.get_or(STATUS_PORT, DEFAULT_PORT).map_err(bad)?;
        let multi = conf.get_or(STATUS_MULTIPORT, false).map_err(bad)?;
        let mut c = Self::single(port);
        if multi {
            c.ports.extend([JOBTRACKER_PORT, TASKTRACKER_PORT]);
        }
        Ok(c)
    }
}

/// Running listeners. Dropping the handle stops them.
pub struct StatusServer {
    servers: Vec<Arc<tiny_http::Server>>,
    addrs: Vec<SocketAddr>,
    workers: Vec<JoinHandle<()>>,
}

impl StatusServer {
    pub fn addrs(&self) -> &[SocketAddr] {
        &self.addrs
    }

    pub fn port(&self) -> u16 {
        self.addrs[0].port()
    }

    pub fn shutdown(&mut self) {
        // each blocked worker consumes one unblock
        for s in &self.servers {
            for _ in 0..WORKERS_PER_LISTENER {
                s.unblock();
            }
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.servers.clear();
    }
}

impl Drop for StatusServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn wants_json(req: &tiny_http::Request) -> bool {
    req.headers()
        .iter()
        .any(|h| h.field.equiv("Accept") && h.value.as_str().contains("application/json"))
}

fn respond(src: &StatusSources, req: tiny_http::Request) {
    let resp = match req.method() {
        tiny_http::Method::Get | tiny_http::Method::Head => handle(src, req.url(), wants_json(&req)),
        _ => Response::error(405, false, "only GET is supported".into()),
    };
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], resp.content_type.as_bytes())
        .expect("static header is valid");
    let out = tiny_http::Response::from_data(resp.body).with_status_code(resp.status).with_header(header);
    let _ = req.respond(out);
}

/// Binds every configured port (0 picks a free one) and starts serving.
pub fn serve(config: &StatusConfig, src: StatusSources) -> Result<StatusServer, StatusError> {
    let mut server = StatusServer { servers: Vec::new(), addrs: Vec::new(), workers: Vec::new() };
    for &port in &config.ports {
        let s = tiny_http::Server::http((config.host.as_str(), port))
            .map_err(|e| StatusError::PortInUse { port, reason: e.to_string() })?;
        let addr = s.server_addr().to_ip().ok_or_else(|| StatusError::InvalidConfig("not an IP listener".into()))?;
        let s = Arc::new(s);
        for _ in 0..WORKERS_PER_LISTENER {
            let (s, src) = (s.clone(), src.clone());
            server.workers.push(std::thread::spawn(move || {
                while let Ok(req) = s.recv() {
                    respond(&src, req);
                }
            }));
        }
        server.servers.push(s);
        server.addrs.push(addr);
    }
    Ok(server)
}

/// Minimal blocking GET used by the CLI to query a running cluster.
pub fn fetch(addr: &str, path: &str, json: bool) -> std::io::Result<(u16, Vec<u8>)> {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(std::time::Duration::from_secs(10)))?;
    let accept = if json { "application/json" } else { "text/plain" };
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nAccept: {accept}\r\nConnection: close\r\n\r\n")?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no header terminator"))?;
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad status line"))?;
    let mut body = raw[split + 4..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body = dechunk(&body);
    }
    Ok((status, body))
}

fn dechunk(mut data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    while let Some(eol) = data.windows(2).position(|w| w == b"\r\n") {
        let size = std::str::from_utf8(&data[..eol])
            .ok()
            .and_then(|s| usize::from_str_radix(s.split(';').next().unwrap_or("").trim(), 16).ok())
            .unwrap_or(0);
        if size == 0 || eol + 2 + size > data.len() {
            break;
        }
        out.extend_from_slice(&data[eol + 2..eol + 2 + size]);
        data = &data[(eol + 4 + size).min(data.len())..];
    }
    out
}

#[cfg(test)]
mod tests;
