//! Two-phase task runtime: dependence analysis over an emitted task stream,
//! then dispatch on a fixed pool of workers.
//!
//! Analysis walks the stream in emission order and keeps, per operand, the
//! last writer and the readers seen since that write. A read depends on the
//! last writer (RAW); a write depends on every reader since the last write
//! (WAR) or, when there were none, on the last writer itself (WAW). Every
//! conflicting pair is therefore ordered, directly or through a reader.
//!
//! Dispatch keeps one shared ready set ordered by emission index; an idle
//! worker always claims the lowest-index ready task. With one worker the
//! execution order is exactly the emission order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Display;
use std::fs;
use std::hash::Hash;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use crate::error::{Error, Result};

/// Anything with declared read and read-write operands.
pub trait Dependent {
    type Id: Clone + Eq + Hash + Display;
    fn reads(&self) -> &[Self::Id];
    /// In/out operands: read, then written.
    fn writes(&self) -> &[Self::Id];
    /// Short label used in traces.
    fn label(&self) -> String;
}

#[derive(Debug)]
pub struct TaskGraph<T> {
    nodes: Vec<T>,
    succ: Vec<Vec<usize>>,
    npred: Vec<usize>,
}

impl<T: Dependent> TaskGraph<T> {
    pub fn build(nodes: Vec<T>) -> Result<Self> {
        let n = nodes.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut last_writer: HashMap<T::Id, usize> = HashMap::new();
        let mut readers: HashMap<T::Id, Vec<usize>> = HashMap::new();

        for (t, node) in nodes.iter().enumerate() {
            if let Some(id) = node.reads().iter().find(|id| node.writes().contains(id)) {
                return Err(Error::Graph(format!(
                    "task {t} ({}) lists {id} as both in and in/out",
                    node.label()
                )));
            }
            for id in node.reads() {
                if let Some(&w) = last_writer.get(id) {
                    succ[w].push(t);
                }
                readers.entry(id.clone()).or_default().push(t);
            }
            for id in node.writes() {
                match readers.get_mut(id) {
                    Some(rs) if !rs.is_empty() => {
                        for &r in rs.iter() {
                            succ[r].push(t);
                        }
                        rs.clear();
                    }
                    _ => {
                        if let Some(&w) = last_writer.get(id) {
                            succ[w].push(t);
                        }
                    }
                }
                last_writer.insert(id.clone(), t);
            }
        }

        let mut npred = vec![0; n];
        for (a, s) in succ.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            s.retain(|&b| b != a);
            for &b in s.iter() {
                npred[b] += 1;
            }
        }
        Ok(Self { nodes, succ, npred })
    }
}

impl<T> TaskGraph<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<T> {
        self.nodes
    }

    pub fn successors(&self, t: usize) -> &[usize] {
        &self.succ[t]
    }

    pub fn predecessor_count(&self, t: usize) -> usize {
        self.npred[t]
    }

    /// All `(earlier, later)` edges.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.succ.get(a).is_some_and(|s| s.binary_search(&b).is_ok())
    }

    /// Checks that `order` runs every task exactly once and respects every edge.
    pub fn check_linear_extension(&self, order: &[usize]) -> Result<()> {
        let n = self.len();
        if order.len() != n {
            return Err(Error::Graph(format!("order has {} entries for {n} tasks", order.len())));
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &t) in order.iter().enumerate() {
            if t >= n || pos[t] != usize::MAX {
                return Err(Error::Graph(format!("task {t} missing or repeated in order")));
            }
            pos[t] = p;
        }
        for (a, b) in self.edges() {
            if pos[a] > pos[b] {
                return Err(Error::Graph(format!("task {b} ran before its predecessor {a}")));
            }
        }
        Ok(())
    }
}

/// One executed task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub task: usize,
    pub worker: usize,
    /// Nanoseconds since dispatch began.
    pub start_ns: u64,
    pub end_ns: u64,
}

struct Dispatch {
    ready: BinaryHeap<Reverse<usize>>,
    pending: Vec<usize>,
    done: usize,
    failed: Option<Error>,
    events: Vec<TraceEvent>,
}

fn task_error<T: Dependent>(index: usize, node: &T, e: Error) -> Error {
    match e {
        e @ Error::Task { .. } => e,
        other => Error::Task {
            index,
            kind: node.label(),
            reason: other.to_string(),
        },
    }
}

/// Runs every task of `g` on `workers` threads, returning events in
/// completion order. The kernel must only touch the operands its task
/// declares; the dispatcher never runs two tasks with a conflicting operand
/// at the same time.
pub fn execute<T, F>(g: &TaskGraph<T>, workers: usize, kernel: F) -> Result<Vec<TraceEvent>>
where
    T: Dependent + Sync,
    F: Fn(usize, &T) -> Result<()> + Sync,
{
    if workers < 1 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    let n = g.len();
    let ready = (0..n).filter(|&t| g.npred[t] == 0).map(Reverse).collect();
    let state = Mutex::new(Dispatch {
        ready,
        pending: g.npred.clone(),
        done: 0,
        failed: None,
        events: Vec::with_capacity(n),
    });
    let wake = Condvar::new();
    let epoch = Instant::now();

    let work = |worker: usize| loop {
        let task = {
            let mut s = state.lock().unwrap();
            loop {
                if s.failed.is_some() || s.done == n {
                    return;
                }
                if let Some(Reverse(t)) = s.ready.pop() {
                    break t;
                }
                s = wake.wait(s).unwrap();
            }
        };
        let start = epoch.elapsed().as_nanos() as u64;
        let outcome = kernel(task, &g.nodes[task]);
        let end = epoch.elapsed().as_nanos() as u64;

        let mut s = state.lock().unwrap();
        match outcome {
            Ok(()) => {
                s.events.push(TraceEvent {
                    task,
                    worker,
                    start_ns: start,
                    end_ns: end.max(start),
                });
                for &b in &g.succ[task] {
                    s.pending[b] -= 1;
                    if s.pending[b] == 0 {
                        s.ready.push(Reverse(b));
                    }
                }
                s.done += 1;
            }
            Err(e) => {
                if s.failed.is_none() {
                    s.failed = Some(task_error(task, &g.nodes[task], e));
                }
            }
        }
        drop(s);
        wake.notify_all();
    };

    if workers == 1 {
        work(0);
    } else {
        std::thread::scope(|scope| {
            for w in 0..workers {
                let work = &work;
                scope.spawn(move || work(w));
            }
        });
    }

    let s = state.into_inner().unwrap();
    if let Some(e) = s.failed {
        return Err(e);
    }
    if s.done != n {
        return Err(Error::Graph(format!("dispatch stalled after {} of {n} tasks", s.done)));
    }
    Ok(s.events)
}

/// Re-executes a recorded order on the calling thread after checking that it
/// is a valid linear extension of `g`.
pub fn replay<T, F>(g: &TaskGraph<T>, order: &[usize], kernel: F) -> Result<()>
where
    T: Dependent,
    F: Fn(usize, &T) -> Result<()>,
{
    g.check_linear_extension(order)?;
    for &t in order {
        kernel(t, &g.nodes[t]).map_err(|e| task_error(t, &g.nodes[t], e))?;
    }
    Ok(())
}

/// Verifies a trace against the graph: exactly-once execution, every edge
/// respected in time, and no overlap between events of one worker.
pub fn validate_trace<T>(g: &TaskGraph<T>, events: &[TraceEvent]) -> Result<()> {
    let n = g.len();
    let mut by_task: Vec<Option<&TraceEvent>> = vec![None; n];
    for e in events {
        if e.end_ns < e.start_ns {
            return Err(Error::Graph(format!("task {} ends before it starts", e.task)));
        }
        match by_task.get_mut(e.task) {
            Some(slot @ None) => *slot = Some(e),
            _ => return Err(Error::Graph(format!("task {} unknown or run twice", e.task))),
        }
    }
    if let Some(t) = by_task.iter().position(Option::is_none) {
        return Err(Error::Graph(format!("task {t} never ran")));
    }
    for (a, b) in g.edges() {
        let (ea, eb) = (by_task[a].unwrap(), by_task[b].unwrap());
        if ea.end_ns > eb.start_ns {
            return Err(Error::Graph(format!("task {b} started before predecessor {a} ended")));
        }
    }
    let mut per_worker: HashMap<usize, Vec<&TraceEvent>> = HashMap::new();
    for e in events {
        per_worker.entry(e.worker).or_default().push(e);
    }
    for (w, mut evs) in per_worker {
        evs.sort_by_key(|e| (e.start_ns, e.end_ns));
        if evs.windows(2).any(|p| p[0].end_ns > p[1].start_ns) {
            return Err(Error::Graph(format!("worker {w} ran overlapping tasks")));
        }
    }
    Ok(())
}

/// Task indices in start order (ties by index).
pub fn start_order(events: &[TraceEvent]) -> Vec<usize> {
    let mut evs: Vec<&TraceEvent> = events.iter().collect();
    evs.sort_by_key(|e| (e.start_ns, e.task));
    evs.into_iter().map(|e| e.task).collect()
}

/// Largest number of tasks whose execution intervals overlap.
pub fn max_concurrency(events: &[TraceEvent]) -> usize {
    let mut marks: Vec<(u64, i32)> = Vec::with_capacity(2 * events.len());
    for e in events {
        if e.end_ns > e.start_ns {
            marks.push((e.start_ns, 1));
            marks.push((e.end_ns, -1));
        }
    }
    // Ends sort before starts at equal times: touching intervals do not overlap.
    marks.sort();
    let (mut cur, mut best) = (0i32, 0i32);
    for (_, d) in marks {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

/// Writes `task_index,kind,worker,start_ns,end_ns` records, one per line,
/// after a header line.
pub fn export_trace<T: Dependent>(
    g: &TaskGraph<T>,
    events: &[TraceEvent],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "task_index,kind,worker,start_ns,end_ns")?;
    for e in events {
        let kind = g.nodes.get(e.task).map(Dependent::label).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", e.task, kind, e.worker, e.start_ns, e.end_ns)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a file written by [`export_trace`], returning `(kind, event)` pairs.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<(String, TraceEvent)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("task_index") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("trace line {}: {line:?}", ln + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
        out.push((
            f[1].to_string(),
            TraceEvent {
                task: num(f[0])? as usize,
                worker: num(f[2])? as usize,
                start_ns: num(f[3])?,
                end_ns: num(f[4])?,
            },
        ));
    }
    Ok(out)
}
