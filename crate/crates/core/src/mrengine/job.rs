use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blockfs::DataNodeId;

use super::counters::CounterSet;
use super::split::InputSplit;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub name: String,
    pub input: String,
    pub output: String,
    pub mapper: String,
    pub reducer: String,
    pub combiner: Option<String>,
    pub reducers: usize,
}

impl JobSpec {
    pub fn wordcount(input: &str, output: &str) -> Self {
        Self {
            name: "word count".into(),
            input: input.into(),
            output: output.into(),
            mapper: "wordcount".into(),
            reducer: "sum".into(),
            combiner: Some("sum".into()),
            reducers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobPhase {
    Setup,
    Map,
    Reduce,
    Cleanup,
    Succeeded,
    Failed,
}

impl JobPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobPhase::Succeeded | JobPhase::Failed)
    }
}

impl fmt::Display for JobPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Map,
    Reduce,
}

impl TaskKind {
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Map => "map",
            TaskKind::Reduce => "reduce",
        }
    }

    pub fn letter(self) -> char {
        match self {
            TaskKind::Map => 'm',
            TaskKind::Reduce => 'r',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Pending,
    Running,
    Complete,
    Failed,
    Killed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub state: TaskState,
    /// Attempts launched so far.
    pub attempts: u32,
    pub failed_attempts: u32,
    pub killed_attempts: u32,
    /// 0.0 to 1.0 for the current attempt.
    pub progress: f64,
    pub last_error: Option<String>,
}

impl TaskStatus {
    pub fn pending() -> Self {
        Self {
            state: TaskState::Pending,
            attempts: 0,
            failed_attempts: 0,
            killed_attempts: 0,
            progress: 0.0,
            last_error: None,
        }
    }
}

/// One row of the per-kind task table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTableRow {
    pub kind: TaskKind,
    pub pct_complete: f64,
    pub num_tasks: usize,
    pub pending: usize,
    pub running: usize,
    pub complete: usize,
    pub killed: usize,
    pub failed_attempts: u32,
    pub killed_attempts: u32,
}

impl fmt::Display for TaskTableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.2}%\t{}\t{}\t{}\t{}\t{}\t{}/{}",
            self.kind.label(),
            self.pct_complete,
            self.num_tasks,
            self.pending,
            self.running,
            self.complete,
            self.killed,
            self.failed_attempts,
            self.killed_attempts
        )
    }
}

pub const TASK_TABLE_HEADER: &str =
    "Kind\t% Complete\tNum Tasks\tPending\tRunning\tComplete\tKilled\tFailed/Killed Task Attempts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub id: String,
    pub spec: JobSpec,
    pub user: String,
    pub phase: JobPhase,
    pub map_pct: f64,
    pub reduce_pct: f64,
    pub splits: Vec<InputSplit>,
    pub maps: Vec<TaskStatus>,
    pub reduces: Vec<TaskStatus>,
    pub counters: CounterSet,
    pub started_at: i64,
    pub finished_at: Option<i64>,
    /// `(timestamp ms, "map N% reduce M%")` each time the pair changes.
    pub progress_log: Vec<(i64, String)>,
    pub error: Option<String>,
}

/// Percentage of `tasks` done, counting partial progress. Empty ⇒ 100.
fn pct(tasks: &[TaskStatus]) -> f64 {
    if tasks.is_empty() {
        return 100.0;
    }
    let done: f64 = tasks
        .iter()
        .map(|t| if t.state == TaskState::Complete { 1.0 } else { t.progress })
        .sum();
    done * 100.0 / tasks.len() as f64
}

impl JobState {
    pub fn new(id: String, spec: JobSpec, splits: Vec<InputSplit>, now: i64) -> Self {
        let maps = vec![TaskStatus::pending(); splits.len()];
        let reduces = vec![TaskStatus::pending(); spec.reducers];
        Self {
            id,
            spec,
            user: "hadoop".into(),
            phase: JobPhase::Setup,
            map_pct: 0.0,
            reduce_pct: 0.0,
            splits,
            maps,
            reduces,
            counters: CounterSet::new(),
            started_at: now,
            finished_at: None,
            progress_log: Vec::new(),
            error: None,
        }
    }

    pub fn tasks(&self, kind: TaskKind) -> &[TaskStatus] {
        match kind {
            TaskKind::Map => &self.maps,
            TaskKind::Reduce => &self.reduces,
        }
    }

    pub fn tasks_mut(&mut self, kind: TaskKind) -> &mut Vec<TaskStatus> {
        match kind {
            TaskKind::Map => &mut self.maps,
            TaskKind::Reduce => &mut self.reduces,
        }
    }

    pub fn maps_done(&self) -> bool {
        self.maps.iter().all(|t| t.state == TaskState::Complete)
    }

    pub fn reduces_done(&self) -> bool {
        self.reduces.iter().all(|t| t.state == TaskState::Complete)
    }

    pub fn running(&self, kind: TaskKind) -> usize {
        self.tasks(kind).iter().filter(|t| t.state == TaskState::Running).count()
    }

    /// Recomputes percentages and appends a progress line if either moved.
    pub fn refresh_progress(&mut self, now: i64) {
        self.map_pct = if self.phase == JobPhase::Setup { 0.0 } else { pct(&self.maps) };
        self.reduce_pct = if self.maps_done() && self.phase != JobPhase::Setup { pct(&self.reduces) } else { 0.0 };
        let line = self.progress_line();
        if self.progress_log.last().map(|(_, l)| l) != Some(&line) {
            self.progress_log.push((now, line));
        }
    }

    pub fn progress_line(&self) -> String {
        format!("map {}% reduce {}%", self.map_pct.floor() as u32, self.reduce_pct.floor() as u32)
    }

    pub fn table_row(&self, kind: TaskKind) -> TaskTableRow {
        let tasks = self.tasks(kind);
        let count = |s: TaskState| tasks.iter().filter(|t| t.state == s).count();
        TaskTableRow {
            kind,
            pct_complete: match kind {
                TaskKind::Map => self.map_pct,
                TaskKind::Reduce => self.reduce_pct,
            },
            num_tasks: tasks.len(),
            pending: count(TaskState::Pending),
            running: count(TaskState::Running),
            complete: count(TaskState::Complete),
            killed: count(TaskState::Killed) + count(TaskState::Failed),
            failed_attempts: tasks.iter().map(|t| t.failed_attempts).sum(),
            killed_attempts: tasks.iter().map(|t| t.killed_attempts).sum(),
        }
    }

    pub fn elapsed_secs(&self) -> Option<i64> {
        self.finished_at.map(|f| ((f - self.started_at) as f64 / 1000.0).round() as i64)
    }
}

/// A task tracker as the job tracker sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTrackerState {
    pub id: String,
    /// Datanode on the same host, for locality decisions.
    pub datanode: Option<DataNodeId>,
    pub map_slots: usize,
    pub reduce_slots: usize,
    pub running_maps: usize,
    pub running_reduces: usize,
    pub last_heartbeat: i64,
}

impl TaskTrackerState {
    pub fn free(&self, kind: TaskKind) -> usize {
        match kind {
            TaskKind::Map => self.map_slots.saturating_sub(self.running_maps),
            TaskKind::Reduce => self.reduce_slots.saturating_sub(self.running_reduces),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub kind: TaskKind,
    pub index: usize,
    pub data_local: bool,
}

fn is_local(split: &InputSplit, tracker: &TaskTrackerState) -> bool {
    tracker.datanode.as_ref().is_some_and(|d| split.locations.contains(d))
}

/// Tasks to hand `tracker` on one heartbeat. Fills free map slots with
/// pending maps, data-local ones first; reduces are offered only once every
/// map has completed. Does not mutate anything.
pub fn schedule(job: &JobState, tracker: &TaskTrackerState) -> Vec<Assignment> {
    if job.phase.is_terminal() || job.phase == JobPhase::Setup {
        return Vec::new();
    }
    let mut out = Vec::new();
    let pending: Vec<usize> = job
        .maps
        .iter()
        .enumerate()
        .filter(|(_, t)| t.state == TaskState::Pending)
        .map(|(i, _)| i)
        .collect();
    let (local, remote): (Vec<usize>, Vec<usize>) =
        pending.into_iter().partition(|&i| is_local(&job.splits[i], tracker));
    let map_free = tracker.free(TaskKind::Map);
    out.extend(
        local
            .into_iter()
            .map(|index| Assignment { kind: TaskKind::Map, index, data_local: true })
            .chain(remote.into_iter().map(|index| Assignment { kind: TaskKind::Map, index, data_local: false }))
            .take(map_free),
    );
    if job.maps_done() {
        out.extend(
            job.reduces
                .iter()
                .enumerate()
                .filter(|(_, t)| t.state == TaskState::Pending)
                .map(|(index, _)| Assignment { kind: TaskKind::Reduce, index, data_local: false })
                .take(tracker.free(TaskKind::Reduce)),
        );
    }
    out
}
