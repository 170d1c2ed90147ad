//! Command dispatch for the `minigrid` binary.
//!
//! Every invocation boots the cluster in-process, runs one command and shuts
//! down cleanly, so state lives only in the storage root between runs. While
//! `cluster start` holds the root, other invocations attach through its
//! status port and may only read.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use minigrid::bench::{self, CorpusSpec};
use minigrid::blockfs::{self, DfsPath};
use minigrid::clock::{self, Clock};
use minigrid::cluster::{Cluster, ClusterOptions, STOP_FILE};
use minigrid::codec::{self, CodecRegistry};
use minigrid::config::{self, Config};
use minigrid::kvtable::shell::Session;
use minigrid::mrengine::{job_template, JobTracker, JOB_TEMPLATES};
use minigrid::statusd::{self, StatusConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Relative filesystem paths resolve against this directory.
pub const HOME: &str = "/user/hadoop";
/// Records the status port of a foreground cluster, under the storage root.
pub const PORT_FILE: &str = "cluster.port";

#[derive(Parser, Debug)]
#[command(name = "minigrid", version, about = "Single-process filesystem, MapReduce, table store and codecs")]
struct Cli {
    /// `key=value` config file; falls back to $MINIGRID_CONF.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// `namenode -format`: erase and initialise the filesystem.
    Namenode {
        #[arg(allow_hyphen_values = true, required = true)]
        args: Vec<String>,
    },
    /// Start, inspect or stop a foreground cluster.
    Cluster {
        #[command(subcommand)]
        action: ClusterAction,
    },
    /// Filesystem commands: -mkdir, -put, -cat, -ls, -lsr, -rmr.
    Dfs {
        #[arg(allow_hyphen_values = true, required = true)]
        args: Vec<String>,
    },
    /// `dfsadmin -report`: capacity and datanode report.
    Dfsadmin {
        #[arg(allow_hyphen_values = true, required = true)]
        args: Vec<String>,
    },
    /// Run and inspect MapReduce jobs.
    Job {
        #[command(subcommand)]
        action: JobAction,
    },
    /// `jar <jar> <job> <in> <out>`: the jar is ignored, jobs are built in.
    Jar {
        jar: String,
        job: String,
        input: String,
        output: String,
    },
    /// Table store commands.
    Hbase {
        #[command(subcommand)]
        action: HbaseAction,
    },
    /// Round-trip a local file through a codec and print SUCCESS.
    Compressiontest { location: String, codec: String },
    /// Codec comparison on a generated log corpus.
    Bench {
        #[arg(long, default_value = "64MiB")]
        size: String,
        #[arg(long, default_value_t = bench::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "none,lzo,gz", value_delimiter = ',')]
        codecs: Vec<String>,
        #[arg(long, default_value_t = bench::DEFAULT_REPS)]
        reps: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
enum ClusterAction {
    /// Run every component in the foreground until `cluster stop`.
    Start {
        /// Also start the region server.
        #[arg(long)]
        hbase: bool,
    },
    /// List running components.
    Status,
    /// Ask a foreground cluster to shut down and wait for it.
    Stop,
}

#[derive(Subcommand, Debug)]
enum JobAction {
    /// `run <job> <in> <out>`
    Run { job: String, input: String, output: String },
    /// Show a job's state, times and task table.
    Status { id: String },
    /// List known jobs.
    List,
}

#[derive(Subcommand, Debug)]
enum HbaseAction {
    /// Interactive shell reading commands from stdin.
    Shell,
}

/// Process streams plus the environment the CLI reads.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    /// Value of `MINIGRID_CONF`.
    pub env_config: Option<PathBuf>,
    /// Echo shell input after the prompt (stdin is not a terminal).
    pub echo: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

type Res<T = ()> = Result<T, CliError>;

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, S>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(io.err, "{e}") } else { write!(io.out, "{e}") };
            return code;
        }
    };
    match dispatch(cli, io) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(io.err, "minigrid: {m}");
            EXIT_USAGE
        }
        Err(CliError::Domain(m)) => {
            let _ = writeln!(io.err, "minigrid: {m}");
            EXIT_DOMAIN
        }
    }
}

/// Built-in desk profile rooted in the system temp dir, overlaid with the
/// config file named by `--config` or `MINIGRID_CONF`.
fn load_config(flag: Option<&Path>, env: Option<&Path>) -> Res<Config> {
    let user = std::env::var("USER").unwrap_or_else(|_| "hadoop".into());
    let mut conf = Config::desk_profile(std::env::temp_dir().join(format!("minigrid-{user}")));
    if let Some(path) = flag.or(env) {
        let file = Config::load(path).map_err(domain)?;
        for (k, v) in file.iter() {
            conf.set(k, v);
        }
    }
    Ok(conf)
}

struct Ctx {
    conf: Config,
    root: PathBuf,
}

fn dispatch(cli: Cli, io: &mut Io) -> Res {
    let conf = load_config(cli.config.as_deref(), io.env_config.as_deref())?;
    let root = conf.tmp_dir().map_err(domain)?;
    let ctx = Ctx { conf, root };
    match cli.command {
        Command::Namenode { args } => namenode(&ctx, &args, io),
        Command::Cluster { action } => match action {
            ClusterAction::Start { hbase } => cluster_start(&ctx, hbase, io),
            ClusterAction::Status => cluster_status(&ctx, io),
            ClusterAction::Stop => cluster_stop(&ctx, io),
        },
        Command::Dfs { args } => dfs(&ctx, &args, io),
        Command::Dfsadmin { args } => dfsadmin(&ctx, &args, io),
        Command::Job { action } => match action {
            JobAction::Run { job, input, output } => job_run(&ctx, &job, &input, &output, io),
            JobAction::Status { id } => job_status(&ctx, &id, io),
            JobAction::List => job_list(&ctx, io),
        },
        Command::Jar { job, input, output, .. } => job_run(&ctx, &job, &input, &output, io),
        Command::Hbase { action: HbaseAction::Shell } => hbase_shell(&ctx, io),
        Command::Compressiontest { location, codec } => {
            let registry = CodecRegistry::with_defaults();
            codec::compression_test(&registry, &location, &codec, io.out).map_err(domain)
        }
        Command::Bench { size, seed, codecs, reps, json } => {
            let size = config::parse_size(&size).ok_or_else(|| usage(format!("bad --size '{size}'")))?;
            let spec = CorpusSpec { size: size as usize, seed };
            let corpus = bench::generate_corpus(&spec);
            let names: Vec<&str> = codecs.iter().map(String::as_str).collect();
            let report = bench::run_benchmark(&CodecRegistry::with_defaults(), spec, &corpus, &names, reps)
                .map_err(domain)?;
            if json {
                writeln!(io.out, "{}", serde_json::to_string_pretty(&report).map_err(domain)?).map_err(domain)
            } else {
                writeln!(io.out, "{report}").map_err(domain)
            }
        }
    }
}

/// Either an in-process cluster for this invocation, or the status address
/// of one running in another process.
enum Target {
    Local(Cluster),
    Remote(String),
}

fn remote_addr(root: &Path) -> Option<String> {
    let port = std::fs::read_to_string(root.join(PORT_FILE)).ok()?;
    Some(format!("127.0.0.1:{}", port.trim()))
}

fn open_target(ctx: &Ctx, region_server: bool) -> Res<Target> {
    if blockfs::is_locked(&ctx.root) {
        return remote_addr(&ctx.root).map(Target::Remote).ok_or_else(|| {
            domain(format!("storage root {} is in use by another process", ctx.root.display()))
        });
    }
    let mut opts = ClusterOptions::new(ctx.conf.clone());
    opts.region_server = region_server;
    Cluster::start(opts).map(Target::Local).map_err(domain)
}

fn read_only(addr: &str) -> CliError {
    domain(format!(
        "a cluster is running in another process (status at http://{addr}/); \
         it accepts read-only commands only. Stop it with `minigrid cluster stop` first"
    ))
}

fn open_local(ctx: &Ctx, region_server: bool) -> Res<Cluster> {
    match open_target(ctx, region_server)? {
        Target::Local(c) => Ok(c),
        Target::Remote(addr) => Err(read_only(&addr)),
    }
}

fn finish(cluster: Cluster) -> Res {
    cluster.stop().map_err(domain)
}

/// GETs a status page, mapping 404 to a domain error with the page's text.
fn fetch(addr: &str, path: &str) -> Res<Vec<u8>> {
    let (code, body) = statusd::fetch(addr, path, false).map_err(|e| domain(format!("status port {addr}: {e}")))?;
    match code {
        200 => Ok(body),
        _ => Err(domain(String::from_utf8_lossy(&body).trim().trim_start_matches("404 ").to_string())),
    }
}

fn resolve(input: &str) -> Res<DfsPath> {
    let home = DfsPath::parse(HOME).expect("home is a valid path");
    DfsPath::resolve(input, &home).map_err(domain)
}

fn namenode(ctx: &Ctx, args: &[String], io: &mut Io) -> Res {
    if args != ["-format"] {
        return Err(usage("usage: minigrid namenode -format"));
    }
    let tree = blockfs::format_namespace(&ctx.root, clock::SystemClock.now_ms()).map_err(domain)?;
    let name_dir = ctx.root.join("name");
    writeln!(io.out, "INFO common.Storage: Image file of size {} saved.", serde_json::to_vec(&tree).map_err(domain)?.len())
        .and_then(|_| writeln!(io.out, "INFO common.Storage: Storage directory {} has been successfully formatted.", name_dir.display()))
        .map_err(domain)
}

fn cluster_start(ctx: &Ctx, hbase: bool, io: &mut Io) -> Res {
    let stop_file = ctx.root.join(STOP_FILE);
    let _ = std::fs::remove_file(&stop_file);
    let mut opts = ClusterOptions::new(ctx.conf.clone());
    opts.region_server = hbase;
    opts.status = Some(StatusConfig::from_config(&ctx.conf).map_err(domain)?);
    let cluster = Cluster::start(opts).map_err(domain)?;
    let port = cluster.status_server().map(|s| s.port()).unwrap_or(0);
    std::fs::write(ctx.root.join(PORT_FILE), port.to_string()).map_err(domain)?;
    for line in cluster.status_lines() {
        writeln!(io.out, "{line}").map_err(domain)?;
    }
    writeln!(io.out, "status pages at http://127.0.0.1:{port}/ ; stop with `minigrid cluster stop`").map_err(domain)?;
    io.out.flush().map_err(domain)?;
    while !stop_file.exists() {
        std::thread::sleep(Duration::from_millis(100));
    }
    let _ = std::fs::remove_file(&stop_file);
    let _ = std::fs::remove_file(ctx.root.join(PORT_FILE));
    finish(cluster)?;
    writeln!(io.out, "cluster stopped").map_err(domain)
}

fn cluster_status(ctx: &Ctx, io: &mut Io) -> Res {
    if !blockfs::is_locked(&ctx.root) {
        return writeln!(io.out, "cluster not running").map_err(domain);
    }
    let Some(addr) = remote_addr(&ctx.root) else {
        return writeln!(io.out, "storage root {} is in use, status port unknown", ctx.root.display()).map_err(domain);
    };
    let body = fetch(&addr, "/cluster")?;
    io.out.write_all(&body).map_err(domain)
}

fn cluster_stop(ctx: &Ctx, io: &mut Io) -> Res {
    if !blockfs::is_locked(&ctx.root) {
        return Err(domain("no cluster is running"));
    }
    std::fs::write(ctx.root.join(STOP_FILE), b"").map_err(domain)?;
    let deadline = Instant::now() + Duration::from_secs(60);
    while blockfs::is_locked(&ctx.root) {
        if Instant::now() > deadline {
            return Err(domain("cluster did not stop within 60 s"));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    writeln!(io.out, "cluster stopped").map_err(domain)
}

fn dfs(ctx: &Ctx, args: &[String], io: &mut Io) -> Res {
    const USAGE: &str = "usage: minigrid dfs [-mkdir <path>] [-put <local> <dst>] [-cat <path>] [-ls [path]] [-lsr [path]] [-rmr <path>]";
    let (op, rest) = args.split_first().ok_or_else(|| usage(USAGE))?;
    let arity_ok = match op.as_str() {
        "-mkdir" | "-cat" | "-rmr" => rest.len() == 1,
        "-put" => rest.len() == 2,
        "-ls" | "-lsr" => rest.len() <= 1,
        _ => false,
    };
    if !arity_ok {
        return Err(usage(format!("unknown or malformed dfs command '{}'\n{USAGE}", args.join(" "))));
    }
    let path_arg = |i: usize| resolve(rest.get(i).map_or(HOME, String::as_str));
    match open_target(ctx, false)? {
        Target::Remote(addr) => {
            let path = path_arg(0)?;
            let page = match op.as_str() {
                "-cat" | "-ls" => format!("/browse{path}"),
                "-lsr" => format!("/browse{path}?recursive=1"),
                _ => return Err(read_only(&addr)),
            };
            let body = fetch(&addr, &page)?;
            io.out.write_all(&body).map_err(domain)
        }
        Target::Local(cluster) => {
            let fs = cluster.fs();
            let result = match op.as_str() {
                "-mkdir" => fs.mkdir(&path_arg(0)?).map_err(domain),
                "-put" => {
                    let local = Path::new(&rest[0]);
                    let data = std::fs::read(local).map_err(|e| domain(format!("{}: {e}", local.display())))?;
                    let mut dst = path_arg(1)?;
                    if rest[1].ends_with('/') || fs.is_dir(&dst) {
                        let name = local.file_name().and_then(|n| n.to_str()).ok_or_else(|| domain("bad local file name"))?;
                        dst = dst.join(name).map_err(domain)?;
                    }
                    fs.put(&data, &dst, None, None).map(|_| ()).map_err(domain)
                }
                "-cat" => {
                    let bytes = fs.cat(&path_arg(0)?).map_err(domain)?;
                    io.out.write_all(&bytes).map_err(domain)
                }
                "-ls" | "-lsr" => {
                    let p = path_arg(0)?;
                    let rows = if op == "-ls" { fs.list(&p) } else { fs.lsr(&p) }.map_err(domain)?;
                    rows.iter().try_for_each(|r| writeln!(io.out, "{r}")).map_err(domain)
                }
                "-rmr" => {
                    let p = path_arg(0)?;
                    fs.delete(&p).map_err(domain)?;
                    writeln!(io.out, "Deleted hdfs://{}{p}", ctx.conf.get(config::FS_DEFAULT_NAME).unwrap_or("").trim_start_matches("hdfs://"))
                        .map_err(domain)
                }
                _ => unreachable!("arity check admits only known ops"),
            };
            let stopped = finish(cluster);
            result.and(stopped)
        }
    }
}

fn dfsadmin(ctx: &Ctx, args: &[String], io: &mut Io) -> Res {
    if args != ["-report"] {
        return Err(usage("usage: minigrid dfsadmin -report"));
    }
    match open_target(ctx, false)? {
        Target::Remote(addr) => {
            let body = fetch(&addr, "/dfsadmin/report")?;
            io.out.write_all(&body).map_err(domain)
        }
        Target::Local(cluster) => {
            cluster.fs().heartbeat_all().map_err(domain)?;
            let report = cluster.fs().admin_report();
            write!(io.out, "{report}").map_err(domain)?;
            finish(cluster)
        }
    }
}

fn job_run(ctx: &Ctx, name: &str, input: &str, output: &str, io: &mut Io) -> Res {
    let template = job_template(name).ok_or_else(|| {
        let known: Vec<&str> = JOB_TEMPLATES.iter().map(|(n, _)| *n).collect();
        usage(format!("unknown job '{name}'; registered jobs: {}", known.join(", ")))
    })?;
    let spec = template.spec(resolve(input)?.as_str(), resolve(output)?.as_str());
    let cluster = open_local(ctx, false)?;
    let out = &mut *io.out;
    let result = cluster
        .jobs()
        .run_reporting(spec, |line| {
            let _ = writeln!(out, "{line}");
            let _ = out.flush();
        })
        .map(|_| ())
        .map_err(domain);
    let stopped = finish(cluster);
    result.and(stopped)
}

fn job_status(ctx: &Ctx, id: &str, io: &mut Io) -> Res {
    match open_target(ctx, false)? {
        Target::Remote(addr) => {
            let body = fetch(&addr, &format!("/jobtracker/job/{id}"))?;
            io.out.write_all(&body).map_err(domain)
        }
        Target::Local(cluster) => {
            let mr = cluster.jobs().config().clone();
            let result = JobTracker::load_history(&mr.history_dir, id)
                .map_err(|_| domain(format!("unknown job {id}")))
                .and_then(|j| write!(io.out, "{}", statusd::job_detail_text(&statusd::job_detail(&j))).map_err(domain));
            let stopped = finish(cluster);
            result.and(stopped)
        }
    }
}

fn job_list(ctx: &Ctx, io: &mut Io) -> Res {
    match open_target(ctx, false)? {
        Target::Remote(addr) => {
            let body = fetch(&addr, "/jobtracker")?;
            io.out.write_all(&body).map_err(domain)
        }
        Target::Local(cluster) => {
            let dir = cluster.jobs().config().history_dir.clone();
            let mut ids: Vec<String> = std::fs::read_dir(&dir)
                .map(|rd| {
                    rd.filter_map(Result::ok)
                        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(str::to_string))
                        .collect()
                })
                .unwrap_or_default();
            ids.sort();
            let mut result = writeln!(io.out, "Jobid\tName\tStatus").map_err(domain);
            for id in ids {
                if let Ok(j) = JobTracker::load_history(&dir, &id) {
                    result = result.and(writeln!(io.out, "{}\t{}\t{}", j.id, j.spec.name, j.phase).map_err(domain));
                }
            }
            let stopped = finish(cluster);
            result.and(stopped)
        }
    }
}

fn hbase_shell(ctx: &Ctx, io: &mut Io) -> Res {
    let cluster = open_local(ctx, true)?;
    let rs = Arc::clone(cluster.region_server().expect("started with a region server"));
    let mut session = Session::new(rs);
    let result = (|| -> std::io::Result<()> {
        writeln!(io.out, "HBase Shell; enter 'help<RETURN>' for list of supported commands.")?;
        writeln!(io.out, "Type \"exit<RETURN>\" to leave the HBase Shell")?;
        writeln!(io.out)?;
        loop {
            write!(io.out, "{}", session.prompt())?;
            io.out.flush()?;
            let mut line = String::new();
            if io.stdin.read_line(&mut line)? == 0 {
                writeln!(io.out)?;
                return Ok(());
            }
            let line = line.trim_end_matches(['\r', '\n']);
            if io.echo {
                writeln!(io.out, "{line}")?;
            }
            let outcome = session.execute(line);
            write!(io.out, "{}", outcome.output)?;
            if !outcome.output.is_empty() && !outcome.output.ends_with('\n') {
                writeln!(io.out)?;
            }
            if outcome.exit {
                return Ok(());
            }
            writeln!(io.out)?;
        }
    })()
    .map_err(domain);
    let stopped = finish(cluster);
    result.and(stopped)
}
