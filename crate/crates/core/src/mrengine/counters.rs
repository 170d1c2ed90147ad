use std::fmt;
use std::ops::{AddAssign, Index};

use serde::{Deserialize, Serialize};

/// The seventeen job counters, in dump order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Counter {
    LaunchedReduceTasks,
    LaunchedMapTasks,
    DataLocalMapTasks,
    FileBytesRead,
    HdfsBytesRead,
    FileBytesWritten,
    HdfsBytesWritten,
    ReduceInputGroups,
    CombineOutputRecords,
    MapInputRecords,
    ReduceShuffleBytes,
    ReduceOutputRecords,
    SpilledRecords,
    MapOutputBytes,
    CombineInputRecords,
    MapOutputRecords,
    ReduceInputRecords,
}

pub const COUNTER_COUNT: usize = 17;

impl Counter {
    pub const ALL: [Counter; COUNTER_COUNT] = [
        Counter::LaunchedReduceTasks,
        Counter::LaunchedMapTasks,
        Counter::DataLocalMapTasks,
        Counter::FileBytesRead,
        Counter::HdfsBytesRead,
        Counter::FileBytesWritten,
        Counter::HdfsBytesWritten,
        Counter::ReduceInputGroups,
        Counter::CombineOutputRecords,
        Counter::MapInputRecords,
        Counter::ReduceShuffleBytes,
        Counter::ReduceOutputRecords,
        Counter::SpilledRecords,
        Counter::MapOutputBytes,
        Counter::CombineInputRecords,
        Counter::MapOutputRecords,
        Counter::ReduceInputRecords,
    ];

    /// Upper-snake identifier, e.g. `SPILLED_RECORDS`.
    pub fn name(self) -> &'static str {
        match self {
            Counter::LaunchedReduceTasks => "LAUNCHED_REDUCE_TASKS",
            Counter::LaunchedMapTasks => "LAUNCHED_MAP_TASKS",
            Counter::DataLocalMapTasks => "DATA_LOCAL_MAP_TASKS",
            Counter::FileBytesRead => "FILE_BYTES_READ",
            Counter::HdfsBytesRead => "HDFS_BYTES_READ",
            Counter::FileBytesWritten => "FILE_BYTES_WRITTEN",
            Counter::HdfsBytesWritten => "HDFS_BYTES_WRITTEN",
            Counter::ReduceInputGroups => "REDUCE_INPUT_GROUPS",
            Counter::CombineOutputRecords => "COMBINE_OUTPUT_RECORDS",
            Counter::MapInputRecords => "MAP_INPUT_RECORDS",
            Counter::ReduceShuffleBytes => "REDUCE_SHUFFLE_BYTES",
            Counter::ReduceOutputRecords => "REDUCE_OUTPUT_RECORDS",
            Counter::SpilledRecords => "SPILLED_RECORDS",
            Counter::MapOutputBytes => "MAP_OUTPUT_BYTES",
            Counter::CombineInputRecords => "COMBINE_INPUT_RECORDS",
            Counter::MapOutputRecords => "MAP_OUTPUT_RECORDS",
            Counter::ReduceInputRecords => "REDUCE_INPUT_RECORDS",
        }
    }

    /// Label used in the job-completion dump.
    pub fn display_name(self) -> &'static str {
        match self {
            Counter::LaunchedReduceTasks => "Launched reduce tasks",
            Counter::LaunchedMapTasks => "Launched map tasks",
            Counter::DataLocalMapTasks => "Data-local map tasks",
            Counter::FileBytesRead => "FILE_BYTES_READ",
            Counter::HdfsBytesRead => "HDFS_BYTES_READ",
            Counter::FileBytesWritten => "FILE_BYTES_WRITTEN",
            Counter::HdfsBytesWritten => "HDFS_BYTES_WRITTEN",
            Counter::ReduceInputGroups => "Reduce input groups",
            Counter::CombineOutputRecords => "Combine output records",
            Counter::MapInputRecords => "Map input records",
            Counter::ReduceShuffleBytes => "Reduce shuffle bytes",
            Counter::ReduceOutputRecords => "Reduce output records",
            Counter::SpilledRecords => "Spilled Records",
            Counter::MapOutputBytes => "Map output bytes",
            Counter::CombineInputRecords => "Combine input records",
            Counter::MapOutputRecords => "Map output records",
            Counter::ReduceInputRecords => "Reduce input records",
        }
    }

    pub fn group(self) -> &'static str {
        match self {
            Counter::LaunchedReduceTasks | Counter::LaunchedMapTasks | Counter::DataLocalMapTasks => {
                "Job Counters"
            }
            Counter::FileBytesRead
            | Counter::HdfsBytesRead
            | Counter::FileBytesWritten
            | Counter::HdfsBytesWritten => "FileSystemCounters",
            _ => "Map-Reduce Framework",
        }
    }

    pub fn from_name(name: &str) -> Option<Counter> {
        Counter::ALL.into_iter().find(|c| c.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// A fixed set of monotone counters; merging is componentwise addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CounterSet([u64; COUNTER_COUNT]);

impl CounterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, c: Counter) -> u64 {
        self.0[c.index()]
    }

    pub fn add(&mut self, c: Counter, n: u64) {
        self.0[c.index()] += n;
    }

    pub fn incr(&mut self, c: Counter) {
        self.add(c, 1);
    }

    pub fn merge(&mut self, other: &CounterSet) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Counter, u64)> + '_ {
        Counter::ALL.into_iter().map(|c| (c, self.get(c)))
    }

    /// `true` when every counter in `self` is ≤ the same counter in `later`.
    pub fn dominated_by(&self, later: &CounterSet) -> bool {
        self.0.iter().zip(later.0.iter()).all(|(a, b)| a <= b)
    }

    /// The dump printed at job completion: a `Counters: 17` header, then each
    /// group name followed by its `Label=value` lines.
    pub fn dump_lines(&self) -> Vec<String> {
        let mut out = vec![format!("Counters: {COUNTER_COUNT}")];
        let mut group = "";
        for (c, v) in self.iter() {
            if c.group() != group {
                group = c.group();
                out.push(group.to_string());
            }
            out.push(format!("{}={}", c.display_name(), v));
        }
        out
    }
}

impl Index<Counter> for CounterSet {
    type Output = u64;
    fn index(&self, c: Counter) -> &u64 {
        &self.0[c.index()]
    }
}

impl AddAssign<&CounterSet> for CounterSet {
    fn add_assign(&mut self, rhs: &CounterSet) {
        self.merge(rhs);
    }
}

impl fmt::Display for CounterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.dump_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

// Serialized as a name → value map so stored history stays readable.
impl Serialize for CounterSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(COUNTER_COUNT))?;
        for (c, v) in self.iter() {
            m.serialize_entry(c.name(), &v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for CounterSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, u64>::deserialize(d)?;
        let mut out = CounterSet::new();
        for (k, v) in raw {
            let c = Counter::from_name(&k)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown counter {k}")))?;
            out.add(c, v);
        }
        Ok(out)
    }
}
