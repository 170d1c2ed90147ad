use std::collections::BTreeMap;
use std::sync::Arc;

use minigrid::clock::{Clock, ManualClock};
use minigrid::codec::CodecRegistry;
use minigrid::kvtable::storefile::{self, StoreFile};
use minigrid::kvtable::{Cell, FamilySpec, KvConfig, LocalStorage, RegionServer};
use proptest::prelude::*;

fn server(dir: &std::path::Path, clock: &ManualClock) -> RegionServer {
    let conf = KvConfig { rootdir: String::new(), codecs: vec!["lzo".into(), "gz".into()], zk_datadir: None };
    RegionServer::open(
        &conf,
        Arc::new(LocalStorage::new(dir)),
        Arc::new(CodecRegistry::with_defaults()),
        Arc::new(clock.clone()),
    )
    .unwrap()
}

type Op = (u8, u8, u8, bool);
type CellView = (Vec<u8>, String, Vec<u8>, i64, Vec<u8>);

fn ops() -> impl Strategy<Value = Vec<Op>> {
    // (row, qualifier, value, flush-after)
    prop::collection::vec((0u8..30, 0u8..4, any::<u8>(), prop::bool::weighted(0.1)), 0..150)
}

fn scan_view(rs: &RegionServer, table: &str) -> Vec<CellView> {
    rs.scan(table, None, None)
        .unwrap()
        .into_iter()
        .map(|c| (c.row, c.family, c.qualifier, c.timestamp, c.value))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flushes_are_invisible_to_scans(ops in ops()) {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(1_000);
        let rs = server(dir.path(), &clock);
        rs.create_table("t", &[FamilySpec::compressed("f", "lzo")]).unwrap();
        let mut reference: BTreeMap<(Vec<u8>, Vec<u8>), Vec<u8>> = BTreeMap::new();
        for (row, q, v, flush) in ops {
            let row = format!("r{row:02}").into_bytes();
            rs.put("t", &row, &format!("f:q{q}"), &[v], None).unwrap();
            reference.insert((row, format!("q{q}").into_bytes()), vec![v]);
            clock.advance(1);
            if flush {
                let before = scan_view(&rs, "t");
                rs.flush("t").unwrap();
                prop_assert_eq!(scan_view(&rs, "t"), before);
            }
        }
        let got: BTreeMap<(Vec<u8>, Vec<u8>), Vec<u8>> =
            rs.scan("t", None, None).unwrap().into_iter().map(|c| ((c.row, c.qualifier), c.value)).collect();
        prop_assert_eq!(got, reference);
    }

    #[test]
    fn family_codec_does_not_change_scans(ops in ops()) {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(1_000);
        let rs = server(dir.path(), &clock);
        let tables = [("plain", FamilySpec::new("f")), ("lzo", FamilySpec::compressed("f", "lzo")), ("gz", FamilySpec::compressed("f", "gz"))];
        for (name, fam) in &tables {
            rs.create_table(name, std::slice::from_ref(fam)).unwrap();
        }
        for (row, q, v, flush) in ops {
            clock.advance(1);
            let ts = clock.now_ms();
            for (name, _) in &tables {
                rs.put(name, format!("r{row:02}").as_bytes(), &format!("f:q{q}"), &[v], Some(ts)).unwrap();
                if flush {
                    rs.flush(name).unwrap();
                }
            }
        }
        let views: Vec<_> = tables.iter().map(|(n, _)| scan_view(&rs, n)).collect();
        prop_assert_eq!(&views[0], &views[1]);
        prop_assert_eq!(&views[0], &views[2]);
    }

    #[test]
    fn block_index_brackets_rows(rows in prop::collection::btree_set(prop::collection::vec(any::<u8>(), 1..12), 1..300), width in 1usize..3000) {
        let cells: Vec<Cell> = rows
            .iter()
            .flat_map(|r| {
                (0..3).map(move |q| Cell {
                    row: r.clone(),
                    family: "f".into(),
                    qualifier: vec![b'a' + q],
                    timestamp: 5,
                    value: vec![7; width],
                })
            })
            .collect();
        let reg = CodecRegistry::with_defaults();
        let codec = reg.get("lzo").unwrap();
        let file = StoreFile::parse(storefile::write("f", codec.as_ref(), &cells)).unwrap();
        let mut all = Vec::new();
        for (i, entry) in file.index.iter().enumerate() {
            let block = file.read_block(i, codec.as_ref()).unwrap();
            let next = file.index.get(i + 1).map(|e| &e.first_row);
            for c in &block {
                prop_assert!(c.row >= entry.first_row);
                prop_assert!(next.is_none_or(|n| c.row < *n));
            }
            all.extend(block);
        }
        prop_assert_eq!(all, cells);
    }
}
