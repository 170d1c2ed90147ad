//! Record-level operations: tokenizing, combining, partitioning, grouping
//! and the length-prefixed pair encoding used for spills and shuffles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::counters::{Counter, CounterSet};
use super::MrError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyValue {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
}

impl KeyValue {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Self {
        Self { key: key.into(), value: value.into() }
    }

    /// Bytes this pair occupies in the pair encoding.
    pub fn encoded_len(&self) -> u64 {
        8 + self.key.len() as u64 + self.value.len() as u64
    }
}

/// Emits `(key, value)` pairs.
pub type Emit<'a> = dyn FnMut(&[u8], &[u8]) + 'a;

pub trait Mapper: Send + Sync {
    /// Called once per input record (one line, terminator stripped).
    fn map(&self, offset: u64, record: &[u8], emit: &mut Emit<'_>) -> Result<(), MrError>;
}

pub trait Reducer: Send + Sync {
    /// Called once per key group; `values` arrive in merge order.
    fn reduce(&self, key: &[u8], values: &[&[u8]], emit: &mut Emit<'_>) -> Result<(), MrError>;
}

/// Splits on ASCII space, tab, CR and LF. Punctuation stays attached.
pub fn tokenize(text: &[u8]) -> impl Iterator<Item = &[u8]> {
    text.split(|b| matches!(b, b' ' | b'\t' | b'\r' | b'\n')).filter(|t| !t.is_empty())
}

pub struct WordCountMapper;

impl Mapper for WordCountMapper {
    fn map(&self, _offset: u64, record: &[u8], emit: &mut Emit<'_>) -> Result<(), MrError> {
        for tok in tokenize(record) {
            emit(tok, b"1");
        }
        Ok(())
    }
}

/// Sums decimal values; used as both combiner and reducer for wordcount.
pub struct SumReducer;

pub fn parse_count(key: &[u8], v: &[u8]) -> Result<u64, MrError> {
    std::str::from_utf8(v)
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| MrError::NonNumericValue {
            key: String::from_utf8_lossy(key).into_owned(),
            value: String::from_utf8_lossy(v).into_owned(),
        })
}

impl Reducer for SumReducer {
    fn reduce(&self, key: &[u8], values: &[&[u8]], emit: &mut Emit<'_>) -> Result<(), MrError> {
        let mut sum = 0u64;
        for v in values {
            sum += parse_count(key, v)?;
        }
        emit(key, sum.to_string().as_bytes());
        Ok(())
    }
}

/// Passes every pair through unchanged.
pub struct IdentityReducer;

impl Reducer for IdentityReducer {
    fn reduce(&self, key: &[u8], values: &[&[u8]], emit: &mut Emit<'_>) -> Result<(), MrError> {
        for v in values {
            emit(key, v);
        }
        Ok(())
    }
}

/// Runs `mapper` over newline-delimited `text`, counting map-side records.
pub fn run_map(
    mapper: &dyn Mapper,
    text: &[u8],
    base_offset: u64,
    counters: &mut CounterSet,
) -> Result<Vec<KeyValue>, MrError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < text.len() {
        let end = text[pos..].iter().position(|&b| b == b'\n').map_or(text.len(), |i| pos + i);
        let mut line = &text[pos..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        counters.incr(Counter::MapInputRecords);
        mapper.map(base_offset + pos as u64, line, &mut |k, v| out.push(KeyValue::new(k, v)))?;
        pos = end + 1;
    }
    counters.add(Counter::MapOutputRecords, out.len() as u64);
    counters.add(Counter::MapOutputBytes, out.iter().map(KeyValue::encoded_len).sum());
    Ok(out)
}

/// Adjacent runs of equal keys in a key-sorted slice.
pub fn groups(sorted: &[KeyValue]) -> impl Iterator<Item = &[KeyValue]> {
    sorted.chunk_by(|a, b| a.key == b.key)
}

/// Applies `reducer` to each key group of a sorted run.
pub fn reduce_sorted(sorted: &[KeyValue], reducer: &dyn Reducer) -> Result<Vec<KeyValue>, MrError> {
    let mut out = Vec::new();
    for g in groups(sorted) {
        let values: Vec<&[u8]> = g.iter().map(|kv| kv.value.as_slice()).collect();
        reducer.reduce(&g[0].key, &values, &mut |k, v| out.push(KeyValue::new(k, v)))?;
    }
    Ok(out)
}

/// Map-side combine over a sorted run. Output stays sorted for reducers that
/// emit their input key, as wordcount's does.
pub fn combine(
    sorted: &[KeyValue],
    combiner: &dyn Reducer,
    counters: &mut CounterSet,
) -> Result<Vec<KeyValue>, MrError> {
    counters.add(Counter::CombineInputRecords, sorted.len() as u64);
    let out = reduce_sorted(sorted, combiner)?;
    counters.add(Counter::CombineOutputRecords, out.len() as u64);
    Ok(out)
}

/// Stable bytewise sort by key; equal keys keep emission order.
pub fn sort_run(run: &mut [KeyValue]) {
    run.sort_by(|a, b| a.key.cmp(&b.key));
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn partition(key: &[u8], reducers: usize) -> usize {
    assert!(reducers > 0, "reducer count must be positive");
    (fnv1a64(key) % reducers as u64) as usize
}

/// Pair encoding: `[u32 LE key len][key][u32 LE value len][value]`.
pub fn encode_pairs(pairs: &[KeyValue], out: &mut Vec<u8>) {
    for kv in pairs {
        out.extend_from_slice(&(kv.key.len() as u32).to_le_bytes());
        out.extend_from_slice(&kv.key);
        out.extend_from_slice(&(kv.value.len() as u32).to_le_bytes());
        out.extend_from_slice(&kv.value);
    }
}

pub fn decode_pairs(mut bytes: &[u8]) -> Result<Vec<KeyValue>, MrError> {
    fn field<'a>(bytes: &mut &'a [u8]) -> Result<&'a [u8], MrError> {
        let short = || MrError::CorruptSpill("truncated pair".into());
        let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(short)?.try_into().unwrap();
        let len = u32::from_le_bytes(len_bytes) as usize;
        let body = bytes.get(4..4 + len).ok_or_else(short)?;
        *bytes = &bytes[4 + len..];
        Ok(body)
    }
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let k = field(&mut bytes)?;
        let v = field(&mut bytes)?;
        out.push(KeyValue::new(k, v));
    }
    Ok(out)
}

struct Head {
    key: Vec<u8>,
    source: usize,
    index: usize,
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Head {}
impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Head {
    // Reversed for a min-heap; ties go to the lower source index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then(other.source.cmp(&self.source))
    }
}

/// k-way merge of key-sorted runs. Equal keys come out in run order, so
/// the result is independent of which run finished first.
pub fn merge_runs(runs: Vec<Vec<KeyValue>>) -> Vec<KeyValue> {
    let total = runs.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap = BinaryHeap::new();
    for (source, run) in runs.iter().enumerate() {
        if let Some(first) = run.first() {
            heap.push(Head { key: first.key.clone(), source, index: 0 });
        }
    }
    let mut runs: Vec<std::vec::IntoIter<KeyValue>> = runs.into_iter().map(Vec::into_iter).collect();
    while let Some(Head { source, index, .. }) = heap.pop() {
        let kv = runs[source].next().expect("head present");
        out.push(kv);
        if let Some(next) = runs[source].as_slice().first() {
            heap.push(Head { key: next.key.clone(), source, index: index + 1 });
        }
    }
    out
}

/// `key<TAB>value<NL>` lines, as written to part files.
pub fn format_output(pairs: &[KeyValue]) -> Vec<u8> {
    let mut out = Vec::new();
    for kv in pairs {
        out.extend_from_slice(&kv.key);
        out.push(b'\t');
        out.extend_from_slice(&kv.value);
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> KeyValue {
        KeyValue::new(k.as_bytes(), v.as_bytes())
    }

    #[test]
    fn map_counts_lines_and_tokens() {
        let mut c = CounterSet::new();
        let out = run_map(&WordCountMapper, b"a b a\n", 0, &mut c).unwrap();
        assert_eq!(out, vec![kv("a", "1"), kv("b", "1"), kv("a", "1")]);
        assert_eq!(c[Counter::MapInputRecords], 1);
        assert_eq!(c[Counter::MapOutputRecords], 3);
        assert_eq!(c[Counter::MapOutputBytes], 3 * 10);

        let mut c = CounterSet::new();
        assert!(run_map(&WordCountMapper, b"", 0, &mut c).unwrap().is_empty());
        assert_eq!(c[Counter::MapInputRecords], 0);
    }

    #[test]
    fn tokens_keep_punctuation_and_bytes() {
        let toks: Vec<&[u8]> = tokenize(b" hardware,\tfull\r\nx\xff ").collect();
        assert_eq!(toks, vec![&b"hardware,"[..], b"full", b"x\xff"]);
    }

    #[test]
    fn combine_sums_adjacent_keys() {
        let mut c = CounterSet::new();
        let out = combine(&[kv("a", "1"), kv("a", "1"), kv("b", "1")], &SumReducer, &mut c).unwrap();
        assert_eq!(out, vec![kv("a", "2"), kv("b", "1")]);
        assert_eq!((c[Counter::CombineInputRecords], c[Counter::CombineOutputRecords]), (3, 2));
        assert!(combine(&[], &SumReducer, &mut c).unwrap().is_empty());
        assert!(matches!(
            combine(&[kv("a", "x")], &SumReducer, &mut c),
            Err(MrError::NonNumericValue { .. })
        ));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn partitions_cover_keys_once() {
        let keys = ["a", "b", "c", "d", "e", "f"];
        let mut seen = vec![Vec::new(); 2];
        for k in keys {
            seen[partition(k.as_bytes(), 2)].push(k);
        }
        let mut all: Vec<_> = seen.concat();
        all.sort();
        assert_eq!(all, keys);
    }

    #[test]
    fn pair_codec_round_trips() {
        let pairs = vec![kv("", ""), kv("word", "12"), KeyValue::new(vec![0, 255], vec![9; 300])];
        let mut buf = Vec::new();
        encode_pairs(&pairs, &mut buf);
        assert_eq!(buf.len() as u64, pairs.iter().map(KeyValue::encoded_len).sum::<u64>());
        assert_eq!(decode_pairs(&buf).unwrap(), pairs);
        assert!(decode_pairs(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn merge_is_sorted_and_stable() {
        let a = vec![kv("a", "1"), kv("c", "1")];
        let b = vec![kv("a", "2"), kv("b", "2")];
        let merged = merge_runs(vec![a, b]);
        assert_eq!(merged, vec![kv("a", "1"), kv("a", "2"), kv("b", "2"), kv("c", "1")]);
    }
}
