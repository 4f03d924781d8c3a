//! Worker pool and the two ways task outputs come back together: in task
//! order over bounded channels, or genome-merged from spooled task files.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::model::{BoxStream, ContigOrder, MergeStream, Row, RowStream, Schema};

const BATCH_ROWS: usize = 256;
const CHANNEL_BATCHES: usize = 4;

type Opener = Box<dyn FnOnce() -> Result<BoxStream> + Send>;

/// One unit of partitioned work.
pub struct Task {
    /// Range or part description used in errors.
    pub label: String,
    pub open: Opener,
}

impl Task {
    pub fn new(label: impl Into<String>, open: impl FnOnce() -> Result<BoxStream> + Send + 'static) -> Self {
        Task { label: label.into(), open: Box::new(open) }
    }

    fn failed(label: &str, e: Error) -> Error {
        Error::TaskFailed { range: label.to_string(), source: Box::new(e) }
    }
}

/// Stops idle workers once every consumer handle is gone.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

/// Runs `work` over `jobs` on up to `workers` detached threads, in job order.
fn spawn_pool<J: Send + 'static>(
    jobs: Vec<J>,
    workers: usize,
    cancelled: Arc<AtomicBool>,
    work: impl Fn(J) + Send + Sync + 'static,
) {
    let n = workers.max(1).min(jobs.len());
    let queue = Arc::new(Mutex::new(VecDeque::from(jobs)));
    let work = Arc::new(work);
    for _ in 0..n {
        let (queue, work, cancelled) = (queue.clone(), work.clone(), cancelled.clone());
        std::thread::spawn(move || loop {
            if cancelled.load(Ordering::Relaxed) {
                break;
            }
            let Some(job) = queue.lock().unwrap().pop_front() else { break };
            work(job);
        });
    }
}

/// Runs `work` over `jobs` on scoped threads and returns results in job order.
pub fn run_scoped<J: Send, T: Send>(jobs: Vec<J>, workers: usize, work: impl Fn(J) -> T + Sync) -> Vec<T> {
    let n = workers.max(1).min(jobs.len());
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<VecDeque<_>>());
    let results: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..n {
            s.spawn(|| loop {
                let Some((i, job)) = queue.lock().unwrap().pop_front() else { break };
                let r = work(job);
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut r = results.into_inner().unwrap();
    r.sort_by_key(|(i, _)| *i);
    r.into_iter().map(|(_, t)| t).collect()
}

fn drain(task: Task, emit: &mut dyn FnMut(Vec<Row>) -> bool) -> Result<()> {
    let mut s = (task.open)()?;
    let mut batch = Vec::with_capacity(BATCH_ROWS);
    while let Some(r) = s.next_row()? {
        batch.push(r);
        if batch.len() == BATCH_ROWS && !emit(std::mem::replace(&mut batch, Vec::with_capacity(BATCH_ROWS))) {
            return Ok(());
        }
    }
    if !batch.is_empty() {
        emit(batch);
    }
    Ok(())
}

/// Task outputs concatenated in task order. Workers start on the first pull.
pub struct ConcatExec {
    schema: Schema,
    plan: Option<Box<dyn FnOnce() -> Result<Vec<Task>> + Send>>,
    workers: usize,
    cancel: CancelOnDrop,
    receivers: VecDeque<Receiver<Result<Vec<Row>>>>,
    rows: std::vec::IntoIter<Row>,
}

impl ConcatExec {
    /// `plan` produces the tasks; it runs lazily so that binding does no I/O.
    pub fn new(schema: Schema, workers: usize, plan: impl FnOnce() -> Result<Vec<Task>> + Send + 'static) -> Self {
        ConcatExec {
            schema,
            plan: Some(Box::new(plan)),
            workers,
            cancel: CancelOnDrop(Arc::new(AtomicBool::new(false))),
            receivers: VecDeque::new(),
            rows: Vec::new().into_iter(),
        }
    }

    fn start(&mut self, tasks: Vec<Task>) {
        let mut jobs = Vec::with_capacity(tasks.len());
        for t in tasks {
            let (tx, rx) = sync_channel(CHANNEL_BATCHES);
            jobs.push((t, tx));
            self.receivers.push_back(rx);
        }
        spawn_pool(jobs, self.workers, self.cancel.0.clone(), |(task, tx)| {
            let label = task.label.clone();
            if let Err(e) = drain(task, &mut |b| tx.send(Ok(b)).is_ok()) {
                let _ = tx.send(Err(Task::failed(&label, e)));
            }
        });
    }
}

impl RowStream for ConcatExec {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if let Some(plan) = self.plan.take() {
            self.start(plan()?);
        }
        loop {
            if let Some(r) = self.rows.next() {
                return Ok(Some(r));
            }
            let Some(rx) = self.receivers.front() else { return Ok(None) };
            match rx.recv() {
                Ok(Ok(batch)) => self.rows = batch.into_iter(),
                Ok(Err(e)) => {
                    self.receivers.clear();
                    return Err(e);
                }
                Err(_) => {
                    self.receivers.pop_front();
                }
            }
        }
    }
}

/// A task's output spooled to an anonymous temp file; readable once the
/// task is done.
struct Spooled {
    schema: Schema,
    label: String,
    rx: Option<Receiver<Result<File>>>,
    lines: Option<std::io::Lines<BufReader<File>>>,
    _cancel: Arc<CancelOnDrop>,
}

impl RowStream for Spooled {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if let Some(rx) = self.rx.take() {
            let f = rx
                .recv()
                .map_err(|_| Task::failed(&self.label, Error::Usage("worker stopped before finishing".into())))??;
            self.lines = Some(BufReader::new(f).lines());
        }
        match self.lines.as_mut().and_then(|l| l.next()) {
            Some(l) => Ok(Some(Row::from_line(l.map_err(|e| Error::io("<spool>", e))?))),
            None => Ok(None),
        }
    }
}

fn spool(task: Task, temp_dir: &PathBuf) -> Result<File> {
    let file = tempfile::tempfile_in(temp_dir).map_err(|e| Error::io(temp_dir, e))?;
    let mut w = BufWriter::new(file);
    let mut err = None;
    drain(task, &mut |batch| {
        for r in batch {
            if let Err(e) = w.write_all(r.line().as_bytes()).and_then(|_| w.write_all(b"\n")) {
                err = Some(e);
                return false;
            }
        }
        true
    })?;
    if let Some(e) = err {
        return Err(Error::io(temp_dir, e));
    }
    let mut f = w.into_inner().map_err(|e| Error::io(temp_dir, e.into_error()))?;
    f.seek(SeekFrom::Start(0)).map_err(|e| Error::io(temp_dir, e))?;
    Ok(f)
}

/// Genome-ordered merge of task outputs, stable in task order. Tasks run on
/// the pool and spool to disk, so the merge never waits on a task that has
/// no worker.
pub fn merged(schema: Schema, build: Arc<ContigOrder>, tasks: Vec<Task>, workers: usize, temp_dir: PathBuf) -> Result<BoxStream> {
    let cancel = Arc::new(CancelOnDrop(Arc::new(AtomicBool::new(false))));
    let mut jobs = Vec::with_capacity(tasks.len());
    let mut sources: Vec<BoxStream> = Vec::with_capacity(tasks.len());
    for t in tasks {
        let (tx, rx) = sync_channel(1);
        sources.push(Box::new(Spooled {
            schema: schema.clone(),
            label: t.label.clone(),
            rx: Some(rx),
            lines: None,
            _cancel: cancel.clone(),
        }));
        jobs.push((t, tx));
    }
    spawn_pool(jobs, workers, cancel.0.clone(), move |(task, tx)| {
        let label = task.label.clone();
        let _ = tx.send(spool(task, &temp_dir).map_err(|e| Task::failed(&label, e)));
    });
    Ok(Box::new(MergeStream::new(schema, sources, build)?))
}
