use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use minigrid::blockfs::{format_namespace, BlockFs, BlockFsConfig, DfsPath};
use minigrid::clock::ManualClock;
use minigrid::mrengine::ops::partition;
use minigrid::mrengine::{Counter, JobRegistry, JobSpec, JobTracker, MrConfig};
use proptest::prelude::*;

fn p(s: &str) -> DfsPath {
    DfsPath::parse(s).unwrap()
}

struct Env {
    _dir: tempfile::TempDir,
    fs: BlockFs,
    jt: JobTracker,
}

fn env(block_size: u64, map_slots: usize) -> Env {
    let dir = tempfile::tempdir().unwrap();
    format_namespace(dir.path(), 0).unwrap();
    let mut cfg = BlockFsConfig::single_node(dir.path(), 1 << 36, 0);
    cfg.block_size = block_size;
    let clock = ManualClock::new(1_352_370_467_000);
    let fs = BlockFs::open(cfg, Arc::new(clock.clone())).unwrap();
    let mut mr = MrConfig::under(dir.path());
    mr.heartbeat = Duration::from_millis(1);
    mr.map_slots = map_slots;
    let jt = JobTracker::new(fs.clone(), Arc::new(clock), mr, JobRegistry::with_defaults()).unwrap();
    Env { _dir: dir, fs, jt }
}

fn text(tokens: &[(u8, u8)]) -> Vec<u8> {
    let mut out = Vec::new();
    for &(word, sep) in tokens {
        out.extend_from_slice(format!("w{}", word % 40).as_bytes());
        out.extend_from_slice([b" ".as_slice(), b"\n", b"\t", b"  "][sep as usize % 4]);
    }
    out
}

fn outputs(e: &Env, dir: &str, reducers: usize) -> Vec<Vec<u8>> {
    (0..reducers).map(|r| e.fs.cat(&p(&format!("{dir}/part-r-{r:05}"))).unwrap()).collect()
}

fn keys(part: &[u8]) -> Vec<Vec<u8>> {
    part.split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| l[..l.iter().rposition(|&b| b == b'\t').unwrap()].to_vec())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wordcount_matches_hash_map_and_counter_identities(
        tokens in prop::collection::vec((any::<u8>(), any::<u8>()), 0..3000),
        reducers in 1usize..4,
        block in 64u64..4096,
    ) {
        let e = env(block, 2);
        let t = text(&tokens);
        e.fs.put(&t, &p("/in/a"), None, None).unwrap();
        let mut spec = JobSpec::wordcount("/in", "/out");
        spec.reducers = reducers;
        let job = e.jt.run(spec).unwrap();
        let c = job.counters;
        prop_assert_eq!(c[Counter::CombineInputRecords], c[Counter::MapOutputRecords]);
        prop_assert_eq!(c[Counter::ReduceInputRecords], c[Counter::CombineOutputRecords]);
        prop_assert_eq!(c[Counter::ReduceOutputRecords], c[Counter::ReduceInputGroups]);
        prop_assert!(c[Counter::ReduceInputGroups] <= c[Counter::ReduceInputRecords]);

        let mut reference: BTreeMap<String, u64> = BTreeMap::new();
        for &(w, _) in &tokens {
            *reference.entry(format!("w{}", w % 40)).or_default() += 1;
        }
        let parts = outputs(&e, "/out", reducers);
        let mut seen = BTreeSet::new();
        for (r, part) in parts.iter().enumerate() {
            let ks = keys(part);
            prop_assert!(ks.windows(2).all(|w| w[0] < w[1]), "partition {} unsorted", r);
            for k in ks {
                prop_assert_eq!(partition(&k, reducers), r);
                prop_assert!(seen.insert(k));
            }
        }
        prop_assert_eq!(seen.len(), reference.len());
        let engine: BTreeMap<String, u64> = parts
            .concat()
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| {
                let s = std::str::from_utf8(l).unwrap();
                let (k, v) = s.rsplit_once('\t').unwrap();
                (k.to_string(), v.parse().unwrap())
            })
            .collect();
        prop_assert_eq!(engine, reference);
    }

    #[test]
    fn combiner_and_scheduling_do_not_change_output(
        tokens in prop::collection::vec((any::<u8>(), any::<u8>()), 0..2000),
        reducers in 1usize..4,
    ) {
        let t = text(&tokens);
        let mut runs = Vec::new();
        for (slots, combiner) in [(1, true), (3, false), (2, true)] {
            let e = env(256, slots);
            let cut = t.len() / 2;
            let cut = cut + t[cut..].iter().position(|b| b.is_ascii_whitespace()).unwrap_or(t.len() - cut);
            e.fs.put(&t[..cut], &p("/in/a"), None, None).unwrap();
            e.fs.put(&t[cut..], &p("/in/b"), None, None).unwrap();
            let mut spec = JobSpec::wordcount("/in", "/out");
            spec.reducers = reducers;
            if !combiner {
                spec.combiner = None;
            }
            e.jt.run(spec).unwrap();
            runs.push(outputs(&e, "/out", reducers));
        }
        prop_assert_eq!(&runs[0], &runs[1]);
        prop_assert_eq!(&runs[0], &runs[2]);
    }
}

proptest! {
    #[test]
    fn partition_is_total_and_stable(key in prop::collection::vec(any::<u8>(), 0..64), reducers in 1usize..64) {
        let r = partition(&key, reducers);
        prop_assert!(r < reducers);
        prop_assert_eq!(r, partition(&key, reducers));
    }
}
