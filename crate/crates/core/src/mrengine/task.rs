//! Task bodies. Each runs on a worker thread and touches only its own spill
//! files and, for reduces, its own part file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::blockfs::{BlockFs, DfsPath};

use super::counters::{Counter, CounterSet};
use super::ops::{self, KeyValue, Mapper, Reducer};
use super::split::{read_split_lines, InputSplit};
use super::MrError;

/// Location of one map task's spill: a single file of per-partition segments.
#[derive(Debug, Clone)]
pub struct MapOutput {
    pub file: PathBuf,
    /// `(offset, length)` of each reducer's segment.
    pub segments: Vec<(u64, u64)>,
}

pub struct MapTask {
    pub split: InputSplit,
    pub mapper: Arc<dyn Mapper>,
    pub combiner: Option<Arc<dyn Reducer>>,
    pub reducers: usize,
    pub spill_dir: PathBuf,
}

pub fn run_map_task(fs: &BlockFs, t: &MapTask, counters: &mut CounterSet) -> Result<MapOutput, MrError> {
    let (text, start) = read_split_lines(fs, &t.split)?;
    counters.add(Counter::HdfsBytesRead, t.split.length);
    let records = ops::run_map(t.mapper.as_ref(), &text, start, counters)?;

    let mut buckets: Vec<Vec<KeyValue>> = vec![Vec::new(); t.reducers];
    for kv in records {
        buckets[ops::partition(&kv.key, t.reducers)].push(kv);
    }
    let mut file_bytes = Vec::new();
    let mut segments = Vec::with_capacity(t.reducers);
    for mut bucket in buckets {
        ops::sort_run(&mut bucket);
        let run = match &t.combiner {
            Some(c) => {
                let mut combined = ops::combine(&bucket, c.as_ref(), counters)?;
                // A combiner may emit keys other than its input key.
                ops::sort_run(&mut combined);
                combined
            }
            None => bucket,
        };
        counters.add(Counter::SpilledRecords, run.len() as u64);
        let offset = file_bytes.len() as u64;
        ops::encode_pairs(&run, &mut file_bytes);
        segments.push((offset, file_bytes.len() as u64 - offset));
    }
    fs::create_dir_all(&t.spill_dir)?;
    let file = t.spill_dir.join("file.out");
    fs::write(&file, &file_bytes)?;
    counters.add(Counter::FileBytesWritten, file_bytes.len() as u64);
    Ok(MapOutput { file, segments })
}

pub struct ReduceTask {
    pub partition: usize,
    pub map_outputs: Vec<MapOutput>,
    pub reducer: Arc<dyn Reducer>,
    pub output: DfsPath,
    pub work_dir: PathBuf,
}

pub fn part_name(partition: usize) -> String {
    format!("part-r-{partition:05}")
}

fn read_segment(file: &Path, offset: u64, len: u64) -> Result<Vec<u8>, MrError> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = fs::File::open(file)?;
    f.seek(SeekFrom::Start(offset))?;
    let mut buf = vec![0; len as usize];
    f.read_exact(&mut buf)?;
    Ok(buf)
}

/// Shuffle, merge, reduce. `progress` is told 1/3, 2/3 and 1 as each stage ends.
pub fn run_reduce_task(
    fs: &BlockFs,
    t: &ReduceTask,
    counters: &mut CounterSet,
    progress: &mut dyn FnMut(f64),
) -> Result<(), MrError> {
    let mut runs = Vec::with_capacity(t.map_outputs.len());
    for out in &t.map_outputs {
        let (offset, len) = out.segments[t.partition];
        let bytes = read_segment(&out.file, offset, len)?;
        counters.add(Counter::ReduceShuffleBytes, len);
        counters.add(Counter::FileBytesRead, len);
        runs.push(ops::decode_pairs(&bytes)?);
    }
    progress(1.0 / 3.0);

    let merged = ops::merge_runs(runs);
    let mut bytes = Vec::new();
    ops::encode_pairs(&merged, &mut bytes);
    fs::create_dir_all(&t.work_dir)?;
    let merged_file = t.work_dir.join("merged.out");
    fs::write(&merged_file, &bytes)?;
    counters.add(Counter::SpilledRecords, merged.len() as u64);
    counters.add(Counter::FileBytesWritten, bytes.len() as u64);
    drop(merged);
    progress(2.0 / 3.0);

    let bytes = fs::read(&merged_file)?;
    counters.add(Counter::FileBytesRead, bytes.len() as u64);
    let input = ops::decode_pairs(&bytes)?;
    counters.add(Counter::ReduceInputRecords, input.len() as u64);
    counters.add(Counter::ReduceInputGroups, ops::groups(&input).count() as u64);
    let output = ops::reduce_sorted(&input, t.reducer.as_ref())?;
    counters.add(Counter::ReduceOutputRecords, output.len() as u64);
    let text = ops::format_output(&output);
    fs.put(&text, &t.output.join(&part_name(t.partition))?, None, None)?;
    counters.add(Counter::HdfsBytesWritten, text.len() as u64);
    progress(1.0);
    Ok(())
}
