use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::blockfs::{format_namespace, BlockFsConfig};
use crate::clock::{Clock, ManualClock};
use crate::mrengine::{JobRegistry, JobSpec, MrConfig};

const DATA1: &[u8] = include_bytes!("../../../../fixtures/data1.txt");

struct Env {
    _dir: tempfile::TempDir,
    src: StatusSources,
    job: String,
}

fn p(s: &str) -> DfsPath {
    DfsPath::parse(s).unwrap()
}

/// A cluster that has run the fixture wordcount job.
fn env() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(1_352_370_467_000);
    format_namespace(dir.path(), clock.now_ms()).unwrap();
    let mut cfg = BlockFsConfig::single_node(dir.path(), 302_827_593_728, 19_106_844_657);
    cfg.block_size = 256;
    let fs = BlockFs::open(cfg, Arc::new(clock.clone())).unwrap();
    let mut mr = MrConfig::under(dir.path());
    mr.heartbeat = std::time::Duration::from_millis(5);
    let jobs = JobTracker::new(fs.clone(), Arc::new(clock), mr, JobRegistry::with_defaults()).unwrap();
    fs.put(DATA1, &p("/user/hadoop/datain/data1.txt"), None, Some(1 << 20)).unwrap();
    fs.put(DATA1, &p("/user/hadoop/datain/data2.txt"), None, Some(1 << 20)).unwrap();
    let state = jobs.run(JobSpec::wordcount("/user/hadoop/datain", "/user/hadoop/dataout")).unwrap();
    let src = StatusSources {
        fs,
        jobs,
        namenode: "localhost:9000".into(),
        components: Arc::new(RwLock::new(vec!["NameNode".into(), "DataNode".into()])),
        stopping: Arc::new(AtomicBool::new(false)),
    };
    Env { _dir: dir, src, job: state.id }
}

fn json(src: &StatusSources, path: &str) -> serde_json::Value {
    let r = handle(src, path, true);
    assert_eq!(r.status, 200, "{path}: {}", r.body_text());
    serde_json::from_slice(&r.body).unwrap()
}

#[test]
fn job_page_shows_completed_task_table() {
    let e = env();
    let text = handle(&e.src, &format!("/jobtracker/job/{}", e.job), false).body_text();
    assert!(text.contains("Job Name: word count"), "{text}");
    assert!(text.contains("Status: Succeeded"));
    assert!(text.contains("Finished in: "));
    assert!(text.contains("\nmap\t100.00%\t2\t0\t0\t2\t0\t0/0\n"), "{text}");
    assert!(text.contains("\nreduce\t100.00%\t1\t0\t0\t1\t0\t0/0\n"), "{text}");
    assert!(text.contains("Reduce input groups=61"));

    let doc = json(&e.src, &format!("/jobtracker/job/{}", e.job));
    assert_eq!(doc["status"], "Succeeded");
    assert_eq!(doc["tasks"][0]["num_tasks"], 2);
    assert_eq!(doc["tasks"][0]["complete"], 2);
    assert_eq!(doc["tasks"][1]["complete"], 1);
    assert_eq!(doc["tasks"][1]["pct_complete"], 100.0);
    assert_eq!(doc["counters"]["REDUCE_INPUT_GROUPS"], 61);
}

#[test]
fn dfshealth_text_and_json_agree_and_balance() {
    let e = env();
    let doc = json(&e.src, "/dfshealth");
    let field = |k: &str| doc[k].as_u64().unwrap();
    assert_eq!(
        field("configured_capacity"),
        field("dfs_used") + field("non_dfs_used") + field("dfs_remaining")
    );
    assert_eq!(field("live_nodes"), 1);
    let report = handle(&e.src, "/dfsadmin/report", false).body_text();
    assert_eq!(report, e.src.fs.admin_report().to_string());
    let text = handle(&e.src, "/dfshealth", false).body_text();
    for (label, key) in [
        ("Configured Capacity", "configured_capacity"),
        ("DFS Used", "dfs_used"),
        ("Non DFS Used", "non_dfs_used"),
        ("DFS Remaining", "dfs_remaining"),
    ] {
        let line = text.lines().find(|l| l.starts_with(&format!("{label} : "))).unwrap();
        let n: u64 = line.split(" : ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert_eq!(n, field(key), "{label}");
    }
    let objects = field("files_and_directories");
    let blocks = field("blocks");
    assert!(text.contains(&format!("{objects} files and directories, {blocks} blocks = {} total.", objects + blocks)));
}

#[test]
fn browse_lists_and_streams() {
    let e = env();
    let listing = handle(&e.src, "/browse/user/hadoop/dataout", false).body_text();
    assert!(listing.contains("/user/hadoop/dataout/part-r-00000"), "{listing}");
    let part = handle(&e.src, "/browse/user/hadoop/dataout/part-r-00000", false);
    assert_eq!(part.body, e.src.fs.cat(&p("/user/hadoop/dataout/part-r-00000")).unwrap());
    // the default 256-byte block size splits the fixture into three blocks
    e.src.fs.put(DATA1, &p("/tmp/three"), None, None).unwrap();
    assert_eq!(e.src.fs.file_status(&p("/tmp/three")).unwrap().blocks.len(), 3);
    let f = handle(&e.src, "/browse/tmp/three", false);
    assert_eq!(f.body, e.src.fs.cat(&p("/tmp/three")).unwrap());
    assert_eq!(f.body, DATA1);
    assert_eq!(handle(&e.src, "/browse/missing", false).status, 404);
    let lsr = handle(&e.src, "/browse/user?recursive=1", false).body_text();
    let expect: String = e.src.fs.lsr(&p("/user")).unwrap().iter().map(|r| format!("{r}\n")).collect();
    assert_eq!(lsr, expect);
    assert!(lsr.contains("/user/hadoop/datain/data2.txt"));
}

#[test]
fn fresh_root_listing_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(0);
    format_namespace(dir.path(), 0).unwrap();
    let fs = BlockFs::open(BlockFsConfig::single_node(dir.path(), 1 << 30, 0), Arc::new(clock.clone())).unwrap();
    let jobs = JobTracker::new(fs.clone(), Arc::new(clock), MrConfig::under(dir.path()), JobRegistry::with_defaults()).unwrap();
    let src = StatusSources {
        fs,
        jobs,
        namenode: "localhost:9000".into(),
        components: Default::default(),
        stopping: Default::default(),
    };
    let r = handle(&src, "/browse/", false);
    assert_eq!(r.status, 200);
    assert!(r.body.is_empty());
    assert_eq!(json(&src, "/browse")["entries"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_pages_and_stopping() {
    let e = env();
    assert_eq!(handle(&e.src, "/jobtracker/job/bogus", false).status, 404);
    assert_eq!(handle(&e.src, "/nope", true).status, 404);
    assert_eq!(handle(&e.src, "/jobtracker?format=json", false).content_type, "application/json");
    e.src.stopping.store(true, Ordering::SeqCst);
    assert_eq!(handle(&e.src, "/dfshealth", false).status, 503);
}

#[test]
fn request_fuzz_leaves_state_unchanged() {
    let e = env();
    let before = state_hash(&e.src.fs, &e.src.jobs);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let known = [
        "/", "/dfshealth", "/jobtracker", "/tasktracker", "/cluster", "/browse/", "/browse/user/hadoop/dataout",
        "/browse/user/hadoop/dataout/part-r-00000", "/jobtracker/job/",
    ];
    for i in 0..1000 {
        let mut path = known[rng.random_range(0..known.len())].to_string();
        if path.ends_with("/job/") {
            path.push_str(if rng.random_bool(0.5) { &e.job } else { "job_x" });
        }
        if rng.random_bool(0.3) {
            let junk: String = (0..rng.random_range(1..12)).map(|_| rng.random_range(b'!'..=b'~') as char).collect();
            path.push_str(&junk);
        }
        let r = handle(&e.src, &path, i % 2 == 0);
        assert!([200, 404].contains(&r.status), "{path}: {}", r.status);
    }
    assert_eq!(state_hash(&e.src.fs, &e.src.jobs), before);
}

#[test]
fn served_over_http() {
    let e = env();
    let mut server = serve(&StatusConfig::single(0), e.src.clone()).unwrap();
    let addr = server.addrs()[0].to_string();
    let (status, body) = fetch(&addr, &format!("/jobtracker/job/{}", e.job), true).unwrap();
    assert_eq!(status, 200);
    let doc: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(doc["tasks"][0]["complete"], 2);
    let (status, body) = fetch(&addr, "/cluster", false).unwrap();
    assert_eq!((status, String::from_utf8(body).unwrap()), (200, "NameNode\nDataNode\n".to_string()));
    assert_eq!(fetch(&addr, "/jobtracker/job/bogus", false).unwrap().0, 404);
    assert!(matches!(serve(&StatusConfig::single(server.port()), e.src.clone()), Err(StatusError::PortInUse { .. })));
    server.shutdown();
}
