//! MapReduce engine.
//!
//! A [`JobTracker`] turns an input directory into one map task per block,
//! hands tasks to a slotted task tracker on each heartbeat, and runs them on
//! worker threads that report back over a channel. Map tasks sort, combine
//! and spill once at the end; reduce tasks start after every map has
//! finished, fetch their partition from each spill, materialize the merge
//! once, then reduce into `part-r-NNNNN`.

pub mod counters;
pub mod job;
pub mod ops;
pub mod split;
mod task;
mod tracker;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::blockfs::DfsError;

pub use counters::{Counter, CounterSet};
pub use job::{
    schedule, Assignment, JobPhase, JobSpec, JobState, TaskKind, TaskState, TaskStatus, TaskTableRow,
    TaskTrackerState,
};
pub use ops::{KeyValue, Mapper, Reducer, SumReducer, WordCountMapper};
pub use split::{compute_splits, InputSplit};
pub use tracker::{job_log_line, JobTracker, MrConfig, TaskAttemptInfo};

#[derive(Debug, Error)]
pub enum MrError {
    #[error("Input path does not exist: {0}")]
    InputMissing(String),
    #[error("Output directory {0} already exists")]
    OutputExists(String),
    #[error("{kind} '{name}' is not registered")]
    UnknownFunction { kind: &'static str, name: String },
    #[error("unknown job '{0}'")]
    UnknownJob(String),
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("task {task} failed after {attempts} attempts: {cause}")]
    TaskFailed { task: String, attempts: u32, cause: String },
    #[error("value '{value}' for key '{key}' is not a decimal count")]
    NonNumericValue { key: String, value: String },
    #[error("corrupt spill: {0}")]
    CorruptSpill(String),
    #[error("task error: {0}")]
    Task(String),
    #[error("job tracker is shutting down")]
    ShuttingDown,
    #[error(transparent)]
    Dfs(#[from] DfsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// In-process replacement for job JARs: mappers and reducers by id.
#[derive(Clone)]
pub struct JobRegistry {
    mappers: BTreeMap<String, Arc<dyn Mapper>>,
    reducers: BTreeMap<String, Arc<dyn Reducer>>,
}

/// A named job recipe the CLI can run, e.g. `wordcount`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobTemplate {
    pub job_name: &'static str,
    pub mapper: &'static str,
    pub reducer: &'static str,
    pub combiner: Option<&'static str>,
}

impl JobTemplate {
    pub fn spec(&self, input: &str, output: &str) -> JobSpec {
        JobSpec {
            name: self.job_name.into(),
            input: input.into(),
            output: output.into(),
            mapper: self.mapper.into(),
            reducer: self.reducer.into(),
            combiner: self.combiner.map(Into::into),
            reducers: 1,
        }
    }
}

pub const JOB_TEMPLATES: &[(&str, JobTemplate)] = &[(
    "wordcount",
    JobTemplate { job_name: "word count", mapper: "wordcount", reducer: "sum", combiner: Some("sum") },
)];

pub fn job_template(name: &str) -> Option<&'static JobTemplate> {
    JOB_TEMPLATES.iter().find(|(n, _)| *n == name).map(|(_, t)| t)
}

impl JobRegistry {
    pub fn empty() -> Self {
        Self { mappers: BTreeMap::new(), reducers: BTreeMap::new() }
    }

    /// `wordcount` mapper, `sum` and `identity` reducers.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register_mapper("wordcount", Arc::new(WordCountMapper));
        r.register_reducer("sum", Arc::new(SumReducer));
        r.register_reducer("identity", Arc::new(ops::IdentityReducer));
        r
    }

    pub fn register_mapper(&mut self, name: &str, m: Arc<dyn Mapper>) {
        self.mappers.insert(name.to_string(), m);
    }

    pub fn register_reducer(&mut self, name: &str, r: Arc<dyn Reducer>) {
        self.reducers.insert(name.to_string(), r);
    }

    pub fn mapper(&self, name: &str) -> Result<Arc<dyn Mapper>, MrError> {
        self.mappers
            .get(name)
            .cloned()
            .ok_or_else(|| MrError::UnknownFunction { kind: "mapper", name: name.to_string() })
    }

    pub fn reducer(&self, name: &str) -> Result<Arc<dyn Reducer>, MrError> {
        self.reducers
            .get(name)
            .cloned()
            .ok_or_else(|| MrError::UnknownFunction { kind: "reducer", name: name.to_string() })
    }
}

impl Default for JobRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
