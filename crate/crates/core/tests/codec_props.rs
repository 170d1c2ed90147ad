use minigrid::codec::{mlzo1, CodecRegistry};
use proptest::prelude::*;

/// Inputs mixing literal runs with back-references, so both token kinds and
/// overlapping copies occur.
fn structured() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec((prop::collection::vec(any::<u8>(), 0..50), 0usize..400, 1usize..300), 0..60).prop_map(
        |pieces| {
            let mut v: Vec<u8> = Vec::new();
            for (lit, back, n) in pieces {
                v.extend_from_slice(&lit);
                if !v.is_empty() {
                    let start = v.len() - 1 - back % v.len();
                    for i in 0..n {
                        v.push(v[start + i]);
                    }
                }
            }
            v
        },
    )
}

fn inputs() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        prop::collection::vec(any::<u8>(), 0..20_000),
        structured(),
        (any::<u8>(), 0usize..100_000).prop_map(|(b, n)| vec![b; n]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn every_codec_round_trips(x in inputs()) {
        let reg = CodecRegistry::with_defaults();
        for name in reg.names() {
            let c = reg.get(&name).unwrap();
            prop_assert_eq!(c.decompress(&c.compress(&x)).unwrap(), x.clone(), "{}", name);
        }
    }

    #[test]
    fn mlzo1_expansion_bound_and_determinism(x in inputs()) {
        let z = mlzo1::compress(&x);
        prop_assert!(z.len() <= x.len() + x.len().div_ceil(255) + 16);
        prop_assert!(z.len() <= mlzo1::max_compressed_len(x.len()));
        prop_assert_eq!(mlzo1::compress(&x), z);
    }

    #[test]
    fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..2000), keep_magic in any::<bool>()) {
        let mut stream = bytes;
        if keep_magic {
            let valid = mlzo1::compress(b"some text some text some text");
            let n = valid.len().min(stream.len());
            stream[..n.min(8)].copy_from_slice(&valid[..n.min(8)]);
        }
        let _ = mlzo1::decompress(&stream);
        let reg = CodecRegistry::with_defaults();
        let _ = reg.get("gz").unwrap().decompress(&stream);
    }
}

#[test]
fn sixteen_mib_round_trip() {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let x: Vec<u8> = (0..16usize << 20)
        .map(|i| {
            if i % 4096 < 2048 {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 56) as u8
            } else {
                b"compressible "[i % 13]
            }
        })
        .collect();
    let reg = CodecRegistry::with_defaults();
    for name in reg.names() {
        let c = reg.get(&name).unwrap();
        assert_eq!(c.decompress(&c.compress(&x)).unwrap(), x, "{name}");
    }
}
