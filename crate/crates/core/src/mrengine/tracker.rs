use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::blockfs::{BlockFs, DfsPath};
use crate::clock::SharedClock;
use crate::config::{self, Config};

use super::counters::{Counter, CounterSet};
use super::job::{schedule, Assignment, JobPhase, JobSpec, JobState, TaskKind, TaskState, TaskTrackerState};
use super::split::compute_splits;
use super::task::{self, MapOutput, MapTask, ReduceTask};
use super::{JobRegistry, MrError};

#[derive(Debug, Clone)]
pub struct MrConfig {
    pub job_tracker: String,
    pub map_slots: usize,
    pub reduce_slots: usize,
    /// Retries after the first attempt.
    pub task_retries: u32,
    pub local_dir: PathBuf,
    pub history_dir: PathBuf,
    pub heartbeat: Duration,
}

impl MrConfig {
    pub fn under(root: &Path) -> Self {
        Self {
            job_tracker: "localhost:9001".into(),
            map_slots: 2,
            reduce_slots: 2,
            task_retries: 2,
            local_dir: root.join("mapred").join("local"),
            history_dir: root.join("mapred").join("history"),
            heartbeat: Duration::from_millis(50),
        }
    }

    pub fn from_config(conf: &Config) -> Result<Self, MrError> {
        let root = conf.tmp_dir().map_err(|e| MrError::InvalidJob(e.to_string()))?;
        let bad = |e: config::ConfigError| MrError::InvalidJob(e.to_string());
        let mut c = Self::under(&root);
        c.job_tracker = conf.get(config::MAPRED_JOB_TRACKER).unwrap_or("localhost:9001").to_string();
        c.map_slots = conf.get_or(config::MAPRED_MAP_SLOTS, 2).map_err(bad)?;
        c.reduce_slots = conf.get_or(config::MAPRED_REDUCE_SLOTS, 2).map_err(bad)?;
        c.task_retries = conf.get_or(config::MAPRED_TASK_RETRIES, 2).map_err(bad)?;
        if c.map_slots == 0 || c.reduce_slots == 0 {
            return Err(MrError::InvalidJob("task tracker slots must be positive".into()));
        }
        Ok(c)
    }

    pub fn max_attempts(&self) -> u32 {
        self.task_retries + 1
    }
}

/// A task attempt as listed on the task tracker page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAttemptInfo {
    pub attempt_id: String,
    pub state: TaskState,
    pub progress: f64,
}

const RECENT_ATTEMPTS: usize = 100;

struct TrackerSlot {
    state: TaskTrackerState,
    running: BTreeMap<String, TaskAttemptInfo>,
    finished: VecDeque<TaskAttemptInfo>,
}

struct Inner {
    fs: BlockFs,
    clock: SharedClock,
    config: MrConfig,
    registry: RwLock<JobRegistry>,
    jobs: Mutex<BTreeMap<String, JobState>>,
    job_done: Condvar,
    tracker: Mutex<TrackerSlot>,
    stamp: String,
    seq: AtomicU32,
    stopping: AtomicBool,
}

/// Job scheduler plus its single co-located task tracker.
#[derive(Clone)]
pub struct JobTracker {
    inner: Arc<Inner>,
}

enum Event {
    Progress { kind: TaskKind, index: usize, progress: f64 },
    MapDone { index: usize, result: Result<(MapOutput, CounterSet), String> },
    ReduceDone { index: usize, result: Result<CounterSet, String> },
}

/// `yy/MM/dd HH:mm:ss INFO <source>: <msg>`.
pub fn job_log_line(ms: i64, source: &str, msg: &str) -> String {
    let t = Utc.timestamp_millis_opt(ms).single().unwrap_or_default();
    format!("{} INFO {}: {}", t.format("%y/%m/%d %H:%M:%S"), source, msg)
}

fn attempt_id(job: &str, kind: TaskKind, index: usize, attempt: u32) -> String {
    let base = job.strip_prefix("job_").unwrap_or(job);
    format!("attempt_{base}_{}_{index:06}_{attempt}", kind.letter())
}

impl JobTracker {
    pub fn new(fs: BlockFs, clock: SharedClock, config: MrConfig, registry: JobRegistry) -> Result<Self, MrError> {
        let now = clock.now_ms();
        let stamp = Utc.timestamp_millis_opt(now).single().unwrap_or_default().format("%Y%m%d%H%M").to_string();
        fs::create_dir_all(&config.history_dir)?;
        let prefix = format!("job_{stamp}_");
        let last_seq = fs::read_dir(&config.history_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_prefix(&prefix)?.strip_suffix(".json")?.parse::<u32>().ok()
            })
            .max()
            .unwrap_or(0);
        let tracker = TaskTrackerState {
            id: "tracker_localhost".into(),
            datanode: fs.datanode_ids().into_iter().next(),
            map_slots: config.map_slots,
            reduce_slots: config.reduce_slots,
            running_maps: 0,
            running_reduces: 0,
            last_heartbeat: now,
        };
        Ok(Self {
            inner: Arc::new(Inner {
                fs,
                clock,
                config,
                registry: RwLock::new(registry),
                jobs: Mutex::new(BTreeMap::new()),
                job_done: Condvar::new(),
                tracker: Mutex::new(TrackerSlot { state: tracker, running: BTreeMap::new(), finished: VecDeque::new() }),
                stamp,
                seq: AtomicU32::new(last_seq),
                stopping: AtomicBool::new(false),
            }),
        })
    }

    pub fn config(&self) -> &MrConfig {
        &self.inner.config
    }

    pub fn registry(&self) -> parking_lot::RwLockWriteGuard<'_, JobRegistry> {
        self.inner.registry.write()
    }

    /// Validates the job spec, computes splits and starts the job in the
    /// background. Fails before any task launches if the output exists.
    pub fn submit(&self, spec: JobSpec) -> Result<String, MrError> {
        if self.inner.stopping.load(Ordering::SeqCst) {
            return Err(MrError::ShuttingDown);
        }
        if spec.reducers == 0 {
            return Err(MrError::InvalidJob("at least one reducer is required".into()));
        }
        let (mapper, reducer, combiner) = {
            let reg = self.inner.registry.read();
            let combiner = spec.combiner.as_deref().map(|c| reg.reducer(c)).transpose()?;
            (reg.mapper(&spec.mapper)?, reg.reducer(&spec.reducer)?, combiner)
        };
        let fs = &self.inner.fs;
        let input = DfsPath::parse(&spec.input).map_err(|_| MrError::InputMissing(spec.input.clone()))?;
        let output = DfsPath::parse(&spec.output).map_err(|_| MrError::InvalidJob(format!("bad output path {}", spec.output)))?;
        if !fs.exists(&input) {
            return Err(MrError::InputMissing(spec.input.clone()));
        }
        if fs.exists(&output) {
            return Err(MrError::OutputExists(spec.output.clone()));
        }
        let splits = compute_splits(fs, &input)?;
        let seq = self.inner.seq.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("job_{}_{seq:04}", self.inner.stamp);
        let now = self.inner.clock.now_ms();
        let state = JobState::new(id.clone(), spec, splits, now);
        self.inner.jobs.lock().insert(id.clone(), state);
        let driver = Driver {
            jt: self.clone(),
            id: id.clone(),
            output,
            mapper,
            reducer,
            combiner,
            map_outputs: BTreeMap::new(),
        };
        thread::Builder::new().name(format!("driver-{id}")).spawn(move || driver.run())?;
        Ok(id)
    }

    pub fn poll(&self, id: &str) -> Option<JobState> {
        self.inner.jobs.lock().get(id).cloned()
    }

    /// Blocks until the job reaches Succeeded or Failed.
    pub fn wait(&self, id: &str) -> Result<JobState, MrError> {
        let mut jobs = self.inner.jobs.lock();
        loop {
            let job = jobs.get(id).ok_or_else(|| MrError::UnknownJob(id.to_string()))?;
            if job.phase.is_terminal() {
                return Ok(job.clone());
            }
            self.inner.job_done.wait_for(&mut jobs, Duration::from_millis(100));
        }
    }

    /// Submits and waits, failing with `TaskFailed` when the job fails.
    pub fn run(&self, spec: JobSpec) -> Result<JobState, MrError> {
        let id = self.submit(spec)?;
        let state = self.wait(&id)?;
        Self::outcome(state)
    }

    /// Like [`run`](Self::run), reporting client log lines (`Running job`,
    /// each progress change, then the counter dump) as the job advances.
    pub fn run_reporting(&self, spec: JobSpec, mut line: impl FnMut(&str)) -> Result<JobState, MrError> {
        const SOURCE: &str = "mapred.JobClient";
        let id = self.submit(spec)?;
        let mut shown = 0;
        let mut jobs = self.inner.jobs.lock();
        let started = jobs.get(&id).map_or_else(|| self.inner.clock.now_ms(), |j| j.started_at);
        let paths: BTreeSet<&str> = jobs.get(&id).map(|j| j.splits.iter().map(|s| s.path.as_str()).collect()).unwrap_or_default();
        let total = format!("Total input paths to process : {}", paths.len());
        line(&job_log_line(started, "input.FileInputFormat", &total));
        line(&job_log_line(started, SOURCE, &format!("Running job: {id}")));
        let state = loop {
            let job = jobs.get(&id).ok_or_else(|| MrError::UnknownJob(id.clone()))?;
            for (ms, msg) in &job.progress_log[shown..] {
                line(&job_log_line(*ms, SOURCE, msg));
            }
            shown = job.progress_log.len();
            if job.phase.is_terminal() {
                break job.clone();
            }
            self.inner.job_done.wait_for(&mut jobs, Duration::from_millis(20));
        };
        drop(jobs);
        let end = state.finished_at.unwrap_or(started);
        if state.phase == JobPhase::Succeeded {
            line(&job_log_line(end, SOURCE, &format!("Job complete: {id}")));
            for l in state.counters.dump_lines() {
                line(&job_log_line(end, SOURCE, &l));
            }
        } else {
            let cause = state.error.clone().unwrap_or_default();
            line(&job_log_line(end, SOURCE, &format!("Job failed: {id}: {cause}")));
        }
        Self::outcome(state)
    }

    fn outcome(state: JobState) -> Result<JobState, MrError> {
        match state.phase {
            JobPhase::Succeeded => Ok(state),
            _ => Err(MrError::TaskFailed {
                task: state.id.clone(),
                attempts: state.maps.iter().chain(&state.reduces).map(|t| t.attempts).max().unwrap_or(0),
                cause: state.error.clone().unwrap_or_default(),
            }),
        }
    }

    pub fn jobs(&self) -> Vec<JobState> {
        self.inner.jobs.lock().values().cloned().collect()
    }

    pub fn tracker(&self) -> TaskTrackerState {
        self.inner.tracker.lock().state.clone()
    }

    /// Running attempts, then recently finished ones (newest first).
    pub fn attempts(&self) -> (Vec<TaskAttemptInfo>, Vec<TaskAttemptInfo>) {
        let t = self.inner.tracker.lock();
        (t.running.values().cloned().collect(), t.finished.iter().rev().cloned().collect())
    }

    /// Refuses new jobs and waits for running ones.
    pub fn shutdown(&self) {
        self.inner.stopping.store(true, Ordering::SeqCst);
        let ids: Vec<String> = self.inner.jobs.lock().keys().cloned().collect();
        for id in ids {
            let _ = self.wait(&id);
        }
    }

    pub fn history_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    /// Reads a finished job written by an earlier tracker.
    pub fn load_history(dir: &Path, id: &str) -> Result<JobState, MrError> {
        let bytes = fs::read(Self::history_path(dir, id)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => MrError::UnknownJob(id.to_string()),
            _ => MrError::Io(e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| MrError::CorruptSpill(format!("history {id}: {e}")))
    }

    /// A live job if this tracker knows it, else the stored history.
    pub fn status(&self, id: &str) -> Result<JobState, MrError> {
        match self.poll(id) {
            Some(s) => Ok(s),
            None => Self::load_history(&self.inner.config.history_dir, id),
        }
    }
}

struct Driver {
    jt: JobTracker,
    id: String,
    output: DfsPath,
    mapper: Arc<dyn super::Mapper>,
    reducer: Arc<dyn super::Reducer>,
    combiner: Option<Arc<dyn super::Reducer>>,
    map_outputs: BTreeMap<usize, MapOutput>,
}

impl Driver {
    fn inner(&self) -> &Inner {
        &self.jt.inner
    }

    fn with_job<R>(&self, f: impl FnOnce(&mut JobState, i64) -> R) -> R {
        let now = self.inner().clock.now_ms();
        let mut jobs = self.inner().jobs.lock();
        f(jobs.get_mut(&self.id).expect("job registered"), now)
    }

    fn job_dir(&self) -> PathBuf {
        self.inner().config.local_dir.join(&self.id)
    }

    fn run(mut self) {
        self.with_job(|j, now| {
            j.phase = JobPhase::Map;
            j.refresh_progress(now);
        });
        let (tx, rx) = mpsc::channel::<Event>();
        let mut in_flight = 0usize;
        loop {
            let assignments = self.heartbeat();
            for a in assignments {
                in_flight += 1;
                self.launch(a, tx.clone());
            }
            let finished = self.with_job(|j, _| j.phase.is_terminal() || (j.maps_done() && j.reduces_done()));
            if finished && in_flight == 0 {
                break;
            }
            match rx.recv_timeout(self.inner().config.heartbeat) {
                Ok(ev) => {
                    if !matches!(ev, Event::Progress { .. }) {
                        in_flight -= 1;
                    }
                    self.handle(ev);
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => unreachable!("driver holds a sender"),
            }
        }
        self.finish();
    }

    /// One tracker heartbeat: report free slots, receive assignments, and
    /// mark them running.
    fn heartbeat(&self) -> Vec<Assignment> {
        let now = self.inner().clock.now_ms();
        let mut jobs = self.inner().jobs.lock();
        let job = jobs.get_mut(&self.id).expect("job registered");
        let mut tracker = self.inner().tracker.lock();
        tracker.state.last_heartbeat = now;
        if job.phase == JobPhase::Map && job.maps_done() {
            job.phase = JobPhase::Reduce;
        }
        let assignments = schedule(job, &tracker.state);
        for a in &assignments {
            let t = &mut job.tasks_mut(a.kind)[a.index];
            t.state = TaskState::Running;
            t.progress = 0.0;
            t.attempts += 1;
            let attempt = attempt_id(&self.id, a.kind, a.index, t.attempts - 1);
            match a.kind {
                TaskKind::Map => {
                    tracker.state.running_maps += 1;
                    job.counters.incr(Counter::LaunchedMapTasks);
                    if a.data_local {
                        job.counters.incr(Counter::DataLocalMapTasks);
                    }
                }
                TaskKind::Reduce => {
                    tracker.state.running_reduces += 1;
                    job.counters.incr(Counter::LaunchedReduceTasks);
                }
            }
            tracker
                .running
                .insert(attempt.clone(), TaskAttemptInfo { attempt_id: attempt, state: TaskState::Running, progress: 0.0 });
        }
        assignments
    }

    fn launch(&self, a: Assignment, tx: mpsc::Sender<Event>) {
        let fs = self.inner().fs.clone();
        let attempt = self.with_job(|j, _| j.tasks(a.kind)[a.index].attempts - 1);
        let work = self.job_dir().join(attempt_id(&self.id, a.kind, a.index, attempt));
        let fail_tx = tx.clone();
        let body: Box<dyn FnOnce() + Send> = match a.kind {
            TaskKind::Map => {
                let t = MapTask {
                    split: self.with_job(|j, _| j.splits[a.index].clone()),
                    mapper: self.mapper.clone(),
                    combiner: self.combiner.clone(),
                    reducers: self.with_job(|j, _| j.spec.reducers),
                    spill_dir: work,
                };
                Box::new(move || {
                    let mut c = CounterSet::new();
                    let result = task::run_map_task(&fs, &t, &mut c).map(|o| (o, c)).map_err(|e| e.to_string());
                    let _ = tx.send(Event::MapDone { index: a.index, result });
                })
            }
            TaskKind::Reduce => {
                let t = ReduceTask {
                    partition: a.index,
                    map_outputs: self.map_outputs.values().cloned().collect(),
                    reducer: self.reducer.clone(),
                    output: self.output.clone(),
                    work_dir: work,
                };
                Box::new(move || {
                    let mut c = CounterSet::new();
                    let progress_tx = tx.clone();
                    let mut progress = |p: f64| {
                        let _ = progress_tx.send(Event::Progress { kind: TaskKind::Reduce, index: a.index, progress: p });
                    };
                    let result = task::run_reduce_task(&fs, &t, &mut c, &mut progress).map(|_| c).map_err(|e| e.to_string());
                    let _ = tx.send(Event::ReduceDone { index: a.index, result });
                })
            }
        };
        let spawned = thread::Builder::new().name(format!("task-{}-{}", a.kind.label(), a.index)).spawn(body);
        if let Err(e) = spawned {
            let msg = format!("could not start task thread: {e}");
            let _ = fail_tx.send(match a.kind {
                TaskKind::Map => Event::MapDone { index: a.index, result: Err(msg) },
                TaskKind::Reduce => Event::ReduceDone { index: a.index, result: Err(msg) },
            });
        }
    }

    fn release_slot(&self, kind: TaskKind, index: usize, attempt: u32, state: TaskState) {
        let mut tracker = self.inner().tracker.lock();
        match kind {
            TaskKind::Map => tracker.state.running_maps -= 1,
            TaskKind::Reduce => tracker.state.running_reduces -= 1,
        }
        let id = attempt_id(&self.id, kind, index, attempt);
        if let Some(mut info) = tracker.running.remove(&id) {
            info.state = state;
            if state == TaskState::Complete {
                info.progress = 1.0;
            }
            tracker.finished.push_back(info);
            if tracker.finished.len() > RECENT_ATTEMPTS {
                tracker.finished.pop_front();
            }
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Progress { kind, index, progress } => {
                let attempt = self.with_job(|j, now| {
                    let t = &mut j.tasks_mut(kind)[index];
                    t.progress = t.progress.max(progress);
                    j.refresh_progress(now);
                    j.tasks(kind)[index].attempts - 1
                });
                let id = attempt_id(&self.id, kind, index, attempt);
                if let Some(info) = self.inner().tracker.lock().running.get_mut(&id) {
                    info.progress = progress;
                }
            }
            Event::MapDone { index, result } => {
                let result = result.map(|(out, c)| {
                    self.map_outputs.insert(index, out);
                    c
                });
                self.task_done(TaskKind::Map, index, result);
            }
            Event::ReduceDone { index, result } => self.task_done(TaskKind::Reduce, index, result),
        }
    }

    fn task_done(&self, kind: TaskKind, index: usize, result: Result<CounterSet, String>) {
        let max_attempts = self.inner().config.max_attempts();
        let (attempt, state) = self.with_job(|j, now| {
            let failed_job = j.phase == JobPhase::Failed;
            let t = &mut j.tasks_mut(kind)[index];
            let attempt = t.attempts - 1;
            let state = match result {
                Ok(_) if failed_job => {
                    t.state = TaskState::Killed;
                    t.killed_attempts += 1;
                    TaskState::Killed
                }
                Ok(c) => {
                    t.state = TaskState::Complete;
                    t.progress = 1.0;
                    j.counters.merge(&c);
                    TaskState::Complete
                }
                Err(e) => {
                    t.failed_attempts += 1;
                    t.last_error = Some(e.clone());
                    if failed_job {
                        t.state = TaskState::Killed;
                    } else if t.attempts < max_attempts {
                        t.state = TaskState::Pending;
                        t.progress = 0.0;
                    } else {
                        t.state = TaskState::Failed;
                        let attempts = t.attempts;
                        let task = attempt_id(&j.id, kind, index, attempt);
                        j.error = Some(MrError::TaskFailed { task, attempts, cause: e }.to_string());
                        j.phase = JobPhase::Failed;
                        for other in j.maps.iter_mut().chain(j.reduces.iter_mut()) {
                            if other.state == TaskState::Pending {
                                other.state = TaskState::Killed;
                            }
                        }
                    }
                    TaskState::Failed
                }
            };
            j.refresh_progress(now);
            (attempt, state)
        });
        self.release_slot(kind, index, attempt, state);
    }

    fn finish(&self) {
        let failed = self.with_job(|j, _| j.phase == JobPhase::Failed);
        let fs = &self.inner().fs;
        let outcome = if failed {
            if fs.exists(&self.output) {
                let _ = fs.delete(&self.output);
            }
            Ok(())
        } else {
            self.with_job(|j, _| j.phase = JobPhase::Cleanup);
            self.output.join("_SUCCESS").map_err(MrError::from).and_then(|p| {
                // An empty job still gets its output directory.
                fs.mkdir(&self.output)?;
                fs.put(&[], &p, None, None).map(|_| ()).map_err(MrError::from)
            })
        };
        let _ = fs::remove_dir_all(self.job_dir());
        let state = self.with_job(|j, now| {
            match outcome {
                Ok(()) if !failed => j.phase = JobPhase::Succeeded,
                Ok(()) => {}
                Err(e) => {
                    j.phase = JobPhase::Failed;
                    j.error = Some(e.to_string());
                }
            }
            j.finished_at = Some(now);
            j.refresh_progress(now);
            j.clone()
        });
        let path = JobTracker::history_path(&self.inner().config.history_dir, &self.id);
        match serde_json::to_vec_pretty(&state) {
            Ok(bytes) => {
                if let Err(e) = fs::write(&path, bytes) {
                    log::warn!("could not write job history {}: {e}", path.display());
                }
            }
            Err(e) => log::warn!("could not encode job history: {e}"),
        }
        self.inner().job_done.notify_all();
    }
}
