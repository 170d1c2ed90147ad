//! Codec benchmark: a deterministic log-text corpus and median-of-N timings.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Serialize;
use thiserror::Error;

use crate::codec::CodecRegistry;

pub const VOCABULARY_SIZE: usize = 500;
pub const DEFAULT_SIZE: usize = 64 << 20;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPS: usize = 3;

const VOCABULARY_SEED: u64 = 0x006c_6f67_7465_7874;
const ZIPF_EXPONENT: f64 = 1.1;
const LEVELS: [(&str, u32); 4] = [("INFO", 80), ("DEBUG", 12), ("WARN", 6), ("ERROR", 2)];
const SOURCES: [&str; 12] = [
    "org.apache.hadoop.hdfs.server.namenode.NameNode",
    "org.apache.hadoop.hdfs.server.datanode.DataNode",
    "org.apache.hadoop.hdfs.StateChange",
    "org.apache.hadoop.mapred.JobTracker",
    "org.apache.hadoop.mapred.TaskTracker",
    "org.apache.hadoop.mapred.JobInProgress",
    "org.apache.hadoop.mapred.Merger",
    "org.apache.hadoop.ipc.Server",
    "org.apache.hadoop.hbase.regionserver.HRegion",
    "org.apache.hadoop.hbase.regionserver.Store",
    "org.apache.hadoop.hbase.master.HMaster",
    "org.apache.zookeeper.server.NIOServerCnxn",
];
/// 2012-11-08T00:00:00Z.
const CORPUS_EPOCH_SECS: i64 = 1_352_332_800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusSpec {
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { size: DEFAULT_SIZE, seed: DEFAULT_SEED }
    }
}

/// The fixed 500-word vocabulary, independent of the corpus seed.
pub fn vocabulary() -> Vec<String> {
    const ONSETS: [&str; 16] = ["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "st", "tr"];
    const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ea"];
    const CODAS: [&str; 6] = ["", "n", "r", "s", "t", "ck"];
    let mut rng = ChaCha8Rng::seed_from_u64(VOCABULARY_SEED);
    let mut words = std::collections::BTreeSet::new();
    let mut ordered = Vec::with_capacity(VOCABULARY_SIZE);
    while ordered.len() < VOCABULARY_SIZE {
        let syllables = rng.random_range(1..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
        }
        w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        if words.insert(w.clone()) {
            ordered.push(w);
        }
    }
    ordered
}

/// Pseudo log lines (`timestamp level source: message`) totalling exactly
/// `spec.size` bytes; the last line is cut short when needed.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<u8> {
    let vocab = vocabulary();
    let zipf = Zipf::new(VOCABULARY_SIZE as f64, ZIPF_EXPONENT).expect("valid Zipf parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let level_total: u32 = LEVELS.iter().map(|l| l.1).sum();
    let mut out = Vec::with_capacity(spec.size + 256);
    let mut ms: i64 = 0;
    while out.len() < spec.size {
        ms += rng.random_range(0..400);
        push_timestamp(&mut out, CORPUS_EPOCH_SECS * 1000 + ms);
        let mut pick = rng.random_range(0..level_total);
        let mut level = LEVELS[0].0;
        for (name, weight) in LEVELS {
            if pick < weight {
                level = name;
                break;
            }
            pick -= weight;
        }
        out.extend_from_slice(level.as_bytes());
        out.push(b' ');
        out.extend_from_slice(SOURCES[rng.random_range(0..SOURCES.len())].as_bytes());
        out.push(b':');
        for _ in 0..rng.random_range(4..=14) {
            out.extend_from_slice(b" ");
            if rng.random_range(0..10) == 0 {
                out.extend_from_slice(format!("blk_{}", rng.random_range(0..100_000u32)).as_bytes());
            } else {
                let rank = zipf.sample(&mut rng) as usize;
                out.extend_from_slice(vocab[rank.clamp(1, VOCABULARY_SIZE) - 1].as_bytes());
            }
        }
        out.push(b'\n');
    }
    out.truncate(spec.size);
    out
}

fn push_timestamp(out: &mut Vec<u8>, epoch_ms: i64) {
    let t = chrono::DateTime::from_timestamp_millis(epoch_ms).expect("corpus timestamps are in range");
    out.extend_from_slice(t.format("%Y-%m-%d %H:%M:%S,%3f ").to_string().as_bytes());
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown codec '{0}'")]
    UnknownCodec(String),
    #[error("codec '{0}' round trip did not reproduce the corpus")]
    RoundTripFailure(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub codec: String,
    pub version: String,
    pub size: u64,
    pub compress_secs: f64,
    pub decompress_secs: f64,
    /// Compressed size over corpus size.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub corpus: CorpusSpec,
    pub reps: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, codec: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.codec == codec)
    }
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

/// Times each codec over `corpus`: one untimed warm-up, then `reps` timed
/// runs whose output is verified before its time is kept.
pub fn run_benchmark(
    registry: &CodecRegistry,
    spec: CorpusSpec,
    corpus: &[u8],
    codecs: &[&str],
    reps: usize,
) -> Result<BenchReport, BenchError> {
    let resolved = codecs
        .iter()
        .map(|n| registry.get(n).map_err(|_| BenchError::UnknownCodec(n.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let reps = reps.max(1);
    let mut rows = Vec::with_capacity(resolved.len());
    for codec in resolved {
        let warm = codec.compress(corpus);
        if codec.decompress(&warm).ok().as_deref() != Some(corpus) {
            return Err(BenchError::RoundTripFailure(codec.name().to_string()));
        }
        let (mut ctimes, mut dtimes) = (Vec::new(), Vec::new());
        let mut size = warm.len();
        drop(warm);
        for _ in 0..reps {
            let t = Instant::now();
            let packed = codec.compress(corpus);
            let ct = t.elapsed();
            let t = Instant::now();
            let restored = codec.decompress(&packed);
            let dt = t.elapsed();
            if restored.ok().as_deref() != Some(corpus) {
                return Err(BenchError::RoundTripFailure(codec.name().to_string()));
            }
            size = packed.len();
            ctimes.push(ct);
            dtimes.push(dt);
        }
        rows.push(BenchRow {
            codec: codec.name().to_string(),
            version: codec.version().to_string(),
            size: size as u64,
            compress_secs: median(ctimes).as_secs_f64(),
            decompress_secs: median(dtimes).as_secs_f64(),
            ratio: if corpus.is_empty() { 1.0 } else { size as f64 / corpus.len() as f64 },
        });
    }
    Ok(BenchReport { corpus: spec, reps, rows })
}

fn display_name(codec: &str) -> &str {
    match codec {
        "none" => "None",
        "gz" => "Gzip",
        "lzo" => "LZO",
        other => other,
    }
}

fn file_name(codec: &str) -> String {
    match codec {
        "none" => "some_logs".into(),
        other => format!("some_logs.{other}"),
    }
}

/// Human-readable byte count with one decimal.
pub fn human_size(bytes: u64) -> String {
    const UNITS: [&str; 4] = ["B", "KiB", "MiB", "GiB"];
    let mut v = bytes as f64;
    let mut u = 0;
    while v >= 1024.0 && u + 1 < UNITS.len() {
        v /= 1024.0;
        u += 1;
    }
    if u == 0 {
        format!("{bytes} B")
    } else {
        format!("{v:.1} {}", UNITS[u])
    }
}

impl fmt::Display for BenchReport {
    /// Tab-separated table; the identity codec's times print as `-`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Compression\tFile\tSize\tCompression Time (s)\tDecompression Time (s)")?;
        for r in &self.rows {
            let (c, d) = if r.codec == "none" {
                ("-".to_string(), "-".to_string())
            } else {
                (format!("{:.3}", r.compress_secs), format!("{:.3}", r.decompress_secs))
            };
            writeln!(f, "{}\t{}\t{}\t{c}\t{d}", display_name(&r.codec), file_name(&r.codec), human_size(r.size))?;
        }
        write!(f, "corpus: {} bytes, seed {}, median of {}", self.corpus.size, self.corpus.seed, self.reps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Codec, CodecError};
    use std::sync::Arc;

    #[test]
    fn corpus_is_exact_and_deterministic() {
        assert!(generate_corpus(&CorpusSpec { size: 0, seed: 1 }).is_empty());
        for size in [1, 77, 4096, 100_003] {
            let spec = CorpusSpec { size, seed: 9 };
            let a = generate_corpus(&spec);
            assert_eq!(a.len(), size);
            assert_eq!(a, generate_corpus(&spec));
        }
        let a = generate_corpus(&CorpusSpec { size: 10_000, seed: 1 });
        let b = generate_corpus(&CorpusSpec { size: 10_000, seed: 2 });
        assert_ne!(a, b);
    }

    #[test]
    fn corpus_looks_like_log_lines() {
        let text = String::from_utf8(generate_corpus(&CorpusSpec { size: 50_000, seed: 42 })).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("2012-11-08 00:00:00,"), "{first}");
        let levels = ["INFO", "DEBUG", "WARN", "ERROR"];
        assert!(text.lines().take(100).all(|l| levels.contains(&l.split(' ').nth(2).unwrap())));
    }

    #[test]
    fn vocabulary_is_distinct_and_zipf_skewed() {
        let v = vocabulary();
        assert_eq!(v.len(), VOCABULARY_SIZE);
        assert_eq!(v.iter().collect::<std::collections::HashSet<_>>().len(), VOCABULARY_SIZE);
        let text = String::from_utf8(generate_corpus(&CorpusSpec { size: 1 << 20, seed: 42 })).unwrap();
        let count = |w: &str| text.split([' ', '\n']).filter(|t| *t == w).count();
        assert!(count(&v[0]) > 20 * count(&v[99]).max(1), "{} vs {}", count(&v[0]), count(&v[99]));
    }

    #[test]
    fn small_benchmark_orders_sizes() {
        let reg = CodecRegistry::with_defaults();
        let spec = CorpusSpec { size: 1 << 20, seed: 42 };
        let corpus = generate_corpus(&spec);
        let report = run_benchmark(&reg, spec, &corpus, &["none", "lzo", "gz"], 3).unwrap();
        let size = |c| report.row(c).unwrap().size;
        assert_eq!(size("none"), corpus.len() as u64);
        assert!(size("none") > size("lzo") && size("lzo") > size("gz"));
        assert_eq!(report.row("none").unwrap().ratio, 1.0);
        let text = report.to_string();
        assert!(text.starts_with("Compression\tFile\tSize\tCompression Time (s)\tDecompression Time (s)\n"));
        assert!(text.contains("None\tsome_logs\t1.0 MiB\t-\t-\n"), "{text}");
        let json: serde_json::Value = serde_json::to_value(&report).unwrap();
        assert_eq!(json["rows"][2]["codec"], "gz");
    }

    #[test]
    fn unknown_codec_and_broken_round_trip() {
        struct Truncating;
        impl Codec for Truncating {
            fn name(&self) -> &str {
                "trunc"
            }
            fn compress(&self, input: &[u8]) -> Vec<u8> {
                input[..input.len() / 2].to_vec()
            }
            fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CodecError> {
                Ok(input.to_vec())
            }
        }
        let reg = CodecRegistry::with_defaults();
        let spec = CorpusSpec { size: 1000, seed: 1 };
        let corpus = generate_corpus(&spec);
        assert_eq!(run_benchmark(&reg, spec, &corpus, &["zstd"], 1).unwrap_err(), BenchError::UnknownCodec("zstd".into()));
        reg.register(Arc::new(Truncating));
        assert_eq!(run_benchmark(&reg, spec, &corpus, &["trunc"], 1).unwrap_err(), BenchError::RoundTripFailure("trunc".into()));
    }
}
