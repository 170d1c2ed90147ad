use super::*;
use crate::clock::{Clock, ManualClock};

const GB: u64 = 1 << 30;

struct Fixture {
    _dir: tempfile::TempDir,
    clock: ManualClock,
    fs: BlockFs,
}

fn p(s: &str) -> DfsPath {
    DfsPath::parse(s).unwrap()
}

fn fixture_with(nodes: usize, capacity: u64, non_dfs: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(1_352_369_520_000);
    let mut cfg = BlockFsConfig::single_node(dir.path(), capacity, non_dfs);
    cfg.block_size = 1 << 20;
    cfg.datanodes = (0..nodes)
        .map(|i| DataNodeConfig { id: datanode_name(i), configured_capacity: capacity, non_dfs_used: non_dfs })
        .collect();
    format_namespace(dir.path(), clock.now_ms()).unwrap();
    let fs = BlockFs::open(cfg, Arc::new(clock.clone())).unwrap();
    Fixture { _dir: dir, clock, fs }
}

fn fixture() -> Fixture {
    fixture_with(1, 10 * GB, GB)
}

#[test]
fn fresh_namespace_is_empty() {
    let f = fixture();
    let ns = f.fs.namespace();
    assert!(ns.files.is_empty());
    assert_eq!(ns.block_count(), 0);
    assert_eq!(ns.directories.len(), 1);
    assert!(f.fs.lsr(&DfsPath::root()).unwrap().is_empty());
}

#[test]
fn format_erases_and_respects_lock() {
    let f = fixture();
    f.fs.put(b"x", &p("/a"), None, None).unwrap();
    let root = f.fs.root().to_path_buf();
    assert!(is_locked(&root));
    assert!(matches!(format_namespace(&root, 0), Err(DfsError::RootLocked(_))));
    let cfg = f.fs.config().clone();
    drop(f.fs);
    assert!(!is_locked(&root));
    format_namespace(&root, 0).unwrap();
    let fs = BlockFs::open(cfg, Arc::new(f.clock.clone())).unwrap();
    assert!(fs.namespace().files.is_empty());
    assert_eq!(fs.admin_report().dfs_used, 0);
}

#[test]
fn open_unformatted_root_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BlockFsConfig::single_node(dir.path(), GB, 0);
    assert!(matches!(BlockFs::open(cfg, clock::system()), Err(DfsError::NotFormatted(_))));
}

#[test]
fn mkdir_lists_and_is_idempotent() {
    let f = fixture();
    f.fs.mkdir(&p("/user/hadoop/datain")).unwrap();
    f.fs.mkdir(&p("/user/hadoop/datain")).unwrap();
    let rows = f.fs.lsr(&p("/user/hadoop")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(
        rows[0].to_string(),
        "drwxr-xr-x   - hadoop supergroup          0 2012-11-08 10:12 /user/hadoop/datain"
    );
    f.fs.put(b"data", &p("/user/f"), None, None).unwrap();
    assert!(matches!(f.fs.mkdir(&p("/user/f")), Err(DfsError::PathIsFile(_))));
    assert!(matches!(f.fs.mkdir(&p("/user/f/g")), Err(DfsError::PathIsFile(_))));
}

#[test]
fn put_splits_into_blocks() {
    let f = fixture();
    let e = f.fs.put(&[7u8; 602], &p("/d/data1.txt"), None, None).unwrap();
    assert_eq!(e.blocks.len(), 1);
    assert_eq!(e.blocks[0].len, 602);
    assert!(e.sealed);

    let e = f.fs.put(b"", &p("/d/empty"), None, None).unwrap();
    assert!(e.blocks.is_empty());
    assert!(e.sealed);
    assert_eq!(f.fs.cat(&p("/d/empty")).unwrap(), b"");

    let bs = 1u64 << 20;
    let data: Vec<u8> = (0..(bs * 5 / 2)).map(|i| (i % 251) as u8).collect();
    let e = f.fs.put(&data, &p("/d/big"), None, None).unwrap();
    let lens: Vec<u64> = e.blocks.iter().map(|b| b.len).collect();
    assert_eq!(lens, vec![bs, bs, bs / 2]);
    assert_eq!(f.fs.cat(&p("/d/big")).unwrap(), data);
    assert_eq!(f.fs.read_range(&p("/d/big"), bs - 2, 4).unwrap(), data[(bs - 2) as usize..(bs + 2) as usize]);
}

#[test]
fn put_accounts_used_space() {
    let f = fixture();
    let before = f.fs.admin_report().dfs_used;
    f.fs.put(&[1u8; 1000], &p("/x"), None, None).unwrap();
    assert_eq!(f.fs.admin_report().dfs_used, before + 1000);
}

#[test]
fn write_once() {
    let f = fixture();
    let w = f.fs.create(&p("/once"), None, None).unwrap();
    assert!(matches!(f.fs.create(&p("/once"), None, None), Err(DfsError::FileExists(_))));
    w.close().unwrap();
    assert!(matches!(f.fs.put(b"again", &p("/once"), None, None), Err(DfsError::FileExists(_))));
    // an abandoned writer frees the path
    drop(f.fs.create(&p("/abandoned"), None, None).unwrap());
    f.fs.put(b"ok", &p("/abandoned"), None, None).unwrap();
}

#[test]
fn insufficient_space() {
    let f = fixture_with(1, 1000, 900);
    assert!(matches!(
        f.fs.put(&[0u8; 101], &p("/big"), None, None),
        Err(DfsError::InsufficientSpace { .. })
    ));
    f.fs.put(&[0u8; 100], &p("/fits"), None, None).unwrap();
    assert!(!f.fs.exists(&p("/big")));
    let r = f.fs.admin_report();
    assert_eq!(r.dfs_remaining, 0);
    assert_eq!(r.configured_capacity, r.dfs_used + r.non_dfs_used + r.dfs_remaining);
}

#[test]
fn cat_errors() {
    let f = fixture();
    f.fs.mkdir(&p("/dir")).unwrap();
    assert!(matches!(f.fs.cat(&p("/dir")), Err(DfsError::IsDirectory(_))));
    assert!(matches!(f.fs.cat(&p("/nope")), Err(DfsError::NotFound(_))));
    let e = f.fs.put(b"payload", &p("/dir/f"), None, None).unwrap();
    f.fs.drop_replica(e.blocks[0].id, &datanode_name(0)).unwrap();
    assert!(matches!(f.fs.cat(&p("/dir/f")), Err(DfsError::MissingBlock { .. })));
    assert_eq!(f.fs.admin_report().missing_blocks, 1);
}

#[test]
fn lsr_nested_tree() {
    let f = fixture();
    f.fs.mkdir(&p("/t/a/b")).unwrap();
    f.fs.put(b"12345", &p("/t/a/f1"), None, None).unwrap();
    f.fs.put(b"1", &p("/t/z"), None, None).unwrap();
    let rows: Vec<(String, bool, u64)> = f
        .fs
        .lsr(&p("/t"))
        .unwrap()
        .into_iter()
        .map(|r| (r.path, r.is_dir, r.size))
        .collect();
    assert_eq!(
        rows,
        vec![
            ("/t/a".to_string(), true, 0),
            ("/t/a/b".to_string(), true, 0),
            ("/t/a/f1".to_string(), false, 5),
            ("/t/z".to_string(), false, 1),
        ]
    );
    // from the root the /t directory itself is listed too: 3 dirs, 2 files
    assert_eq!(f.fs.lsr(&DfsPath::root()).unwrap().len(), 5);
    let file_row = f.fs.lsr(&p("/t/z")).unwrap().remove(0).to_string();
    assert!(file_row.starts_with("-rw-r--r--   1 hadoop supergroup          1 "), "{file_row}");
    assert!(matches!(f.fs.lsr(&p("/missing")), Err(DfsError::NotFound(_))));
}

#[test]
fn replication_changes() {
    let f = fixture();
    let data = vec![3u8; (1 << 20) + 10];
    f.fs.put(&data, &p("/r"), None, None).unwrap();
    assert_eq!(f.fs.set_replication(&p("/r"), 1).unwrap().replication, 1);
    assert_eq!(f.fs.admin_report().under_replicated, 0);
    f.fs.set_replication(&p("/r"), 3).unwrap();
    // one datanode: every block short of two replicas
    assert_eq!(f.fs.admin_report().under_replicated, 2);
    assert!(matches!(f.fs.set_replication(&p("/r"), 0), Err(DfsError::InvalidReplication(0))));
    assert!(matches!(f.fs.set_replication(&p("/nope"), 2), Err(DfsError::NotFound(_))));
}

#[test]
fn report_matches_reference_figures() {
    let f = fixture_with(1, 302_827_593_728, 19_106_844_657);
    let r = f.fs.admin_report();
    assert_eq!(r.dfs_remaining, 302_827_593_728 - 19_106_844_657);
    assert_eq!(report::format_bytes(r.dfs_remaining), "264.24 GB");
    assert_eq!(report::format_pct(r.datanodes[0].dfs_remaining_pct), "93.69");
    assert_eq!(report::format_pct(r.dfs_used_pct), "0");
    assert_eq!((r.live, r.dead), (1, 0));
    assert_eq!(r.present_capacity, r.dfs_used + r.dfs_remaining);
    let text = r.to_string();
    assert!(text.contains("Configured Capacity: 302827593728 (282.03 GB)"));
    assert!(text.contains("Datanodes available: 1 (1 total, 0 dead)"));
    assert!(text.contains("Decommission Status : Normal"));
    assert!(text.contains("DFS Remaining%: 93.69%"));
}

#[test]
fn heartbeat_expiry_and_revival() {
    let f = fixture_with(2, 10 * GB, 0);
    let e = f.fs.put(b"only copy", &p("/f"), Some(1), None).unwrap();
    let holder = f.fs.block_locations(&p("/f")).unwrap()[0].2[0].clone();
    let other = f.fs.datanode_ids().into_iter().find(|d| *d != holder).unwrap();

    f.clock.advance(3_000);
    f.fs.heartbeat(&holder, NodeReport::default()).unwrap();
    f.fs.heartbeat(&other, NodeReport::default()).unwrap();
    assert_eq!((f.fs.admin_report().live, f.fs.admin_report().dead), (2, 0));

    // only `other` keeps beating
    for _ in 0..11 {
        f.clock.advance(3_000);
        f.fs.heartbeat(&other, NodeReport::default()).unwrap();
    }
    let r = f.fs.admin_report();
    assert_eq!((r.live, r.dead), (1, 1));
    assert_eq!(r.missing_blocks, 1);
    assert!(matches!(f.fs.cat(&p("/f")), Err(DfsError::MissingBlock { block, .. }) if block == e.blocks[0].id));

    f.fs.heartbeat(&holder, NodeReport::default()).unwrap();
    assert_eq!(f.fs.admin_report().dead, 0);
    assert_eq!(f.fs.cat(&p("/f")).unwrap(), b"only copy");

    assert!(matches!(
        f.fs.heartbeat(&DataNodeId("bogus".into()), NodeReport::default()),
        Err(DfsError::UnknownDataNode(_))
    ));
}

#[test]
fn heartbeat_commands_repair_replication() {
    let f = fixture_with(3, 10 * GB, 0);
    f.fs.put(b"replicate me", &p("/f"), Some(1), None).unwrap();
    f.fs.set_replication(&p("/f"), 3).unwrap();
    assert_eq!(f.fs.admin_report().under_replicated, 1);
    f.fs.heartbeat_all().unwrap();
    assert_eq!(f.fs.admin_report().under_replicated, 0);
    assert_eq!(f.fs.block_locations(&p("/f")).unwrap()[0].2.len(), 3);

    f.fs.set_replication(&p("/f"), 1).unwrap();
    f.fs.heartbeat_all().unwrap();
    assert_eq!(f.fs.block_locations(&p("/f")).unwrap()[0].2.len(), 1);
    let r = f.fs.admin_report();
    assert_eq!(r.dfs_used, b"replicate me".len() as u64);
}

#[test]
fn replication_is_clamped_to_live_nodes() {
    let f = fixture_with(2, 10 * GB, 0);
    let e = f.fs.put(b"abc", &p("/f"), Some(3), None).unwrap();
    assert_eq!(e.replication, 3);
    assert_eq!(f.fs.admin_report().dfs_used, 6);
    assert_eq!(f.fs.admin_report().under_replicated, 1);
}

#[test]
fn delete_frees_blocks_and_ids_are_not_reused() {
    let f = fixture();
    let a = f.fs.put(b"aaaa", &p("/d/a"), None, None).unwrap();
    f.fs.delete(&p("/d")).unwrap();
    assert_eq!(f.fs.admin_report().dfs_used, 0);
    let b = f.fs.put(b"bbbb", &p("/d/a"), None, None).unwrap();
    assert!(b.blocks[0].id > a.blocks[0].id);
    assert!(matches!(f.fs.delete(&DfsPath::root()), Err(DfsError::InvalidPath(_))));
    assert!(matches!(f.fs.delete(&p("/nope")), Err(DfsError::NotFound(_))));
}

#[test]
fn checkpoint_and_recover() {
    let f = fixture();
    f.fs.put(b"before", &p("/a/f"), None, None).unwrap();
    let ckpt = f.fs.checkpoint().unwrap();
    assert!(ckpt.image.files.contains_key("/a/f"));
    let root = f.fs.root().to_path_buf();

    let recovered = recover(&root).unwrap();
    assert!(recovered.same_namespace(&f.fs.namespace()));
    assert_eq!(recovered.block_map, f.fs.namespace().block_map);

    for i in 0..5 {
        f.fs.mkdir(&p(&format!("/after/{i}"))).unwrap();
    }
    let live = f.fs.namespace();
    let cfg = f.fs.config().clone();
    drop(f.fs);
    let recovered = recover(&root).unwrap();
    assert!(recovered.same_namespace(&live));
    for i in 0..5 {
        assert!(recovered.directories.contains_key(&format!("/after/{i}")));
    }
    let fs = BlockFs::open(cfg, Arc::new(f.clock.clone())).unwrap();
    assert_eq!(fs.cat(&p("/a/f")).unwrap(), b"before");
}

#[test]
fn recover_rejects_truncated_image() {
    let f = fixture();
    f.fs.checkpoint().unwrap();
    let root = f.fs.root().to_path_buf();
    drop(f.fs);
    let image = editlog::name_dir(&root).join(editlog::IMAGE_FILE);
    let bytes = fs::read(&image).unwrap();
    fs::write(&image, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(recover(&root), Err(DfsError::CorruptImage(_))));
    fs::remove_file(&image).unwrap();
    assert!(matches!(recover(&root), Err(DfsError::NoCheckpoint(_))));
}

#[test]
fn orphan_blocks_are_dropped_on_restart() {
    let f = fixture();
    f.fs.put(b"kept", &p("/k"), None, None).unwrap();
    let cfg = f.fs.config().clone();
    let root = f.fs.root().to_path_buf();
    drop(f.fs);
    fs::write(root.join("data").join("blk_999"), b"uncommitted").unwrap();
    let fs = BlockFs::open(cfg, Arc::new(f.clock.clone())).unwrap();
    assert_eq!(fs.admin_report().dfs_used, 4);
}

#[test]
fn handles_are_shareable_across_threads() {
    let f = fixture();
    std::thread::scope(|s| {
        for t in 0..4 {
            let fs = f.fs.clone();
            s.spawn(move || {
                for i in 0..10 {
                    fs.put(format!("{t}-{i}").as_bytes(), &p(&format!("/t{t}/f{i}")), None, None).unwrap();
                }
            });
        }
    });
    assert_eq!(f.fs.namespace().files.len(), 40);
}
