use std::cmp::Ordering;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Queued simulation events. Declaration order is the tie-break rank at equal
/// timestamps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum EventKind {
    TaskComplete,
    TransferComplete,
    AppArrival,
    TaskReady,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub app: usize,
    pub task: usize,
    pub resource: usize,
}

impl Event {
    fn key(&self) -> (EventKind, usize, usize, usize) {
        (self.kind, self.app, self.task, self.resource)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.key().cmp(&other.key()))
    }
}

/// One line of an exported event log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    AppArrival,
    TaskReady,
    Assign,
    TransferComplete,
    TaskStart,
    TaskComplete,
    AppComplete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: f64,
    pub event: LogEvent,
    pub app: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub task: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resource: Option<usize>,
}

pub fn write_event_log<W: Write>(records: &[EventRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Environment(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(input: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueuedTask {
    pub arrival_ms: f64,
    pub app: usize,
    pub task: usize,
    pub proc_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningTask {
    pub app: usize,
    pub task: usize,
    pub start_ms: f64,
    pub finish_ms: f64,
}

/// Serial FIFO compute queue of one resource, ordered by
/// (arrival time, app id, task id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FifoQueue {
    waiting: VecDeque<QueuedTask>,
    running: Option<RunningTask>,
}

impl FifoQueue {
    pub fn new() -> Self {
        FifoQueue::default()
    }

    pub fn push(&mut self, item: QueuedTask) {
        let key = |q: &QueuedTask| (q.arrival_ms, q.app, q.task);
        let pos = self
            .waiting
            .iter()
            .position(|q| {
                let (a, b) = (key(q), key(&item));
                a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))) == Ordering::Greater
            })
            .unwrap_or(self.waiting.len());
        self.waiting.insert(pos, item);
    }

    pub fn running(&self) -> Option<&RunningTask> {
        self.running.as_ref()
    }

    pub fn is_idle(&self) -> bool {
        self.running.is_none()
    }

    pub fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.running.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starts the head of the queue at `now` if the processor is free.
    pub fn start_next(&mut self, now: f64) -> Option<RunningTask> {
        if self.running.is_some() {
            return None;
        }
        let q = self.waiting.pop_front()?;
        let run = RunningTask {
            app: q.app,
            task: q.task,
            start_ms: now,
            finish_ms: now + q.proc_ms,
        };
        self.running = Some(run.clone());
        Some(run)
    }

    pub fn finish(&mut self) -> Option<RunningTask> {
        self.running.take()
    }

    /// Remaining processing of every task ahead of a task that arrives at
    /// `arrival_ms` with id `(app, task)`.
    pub fn queue_time(&self, now: f64, arrival_ms: f64, app: usize, task: usize) -> f64 {
        let running = self.running.as_ref().map_or(0.0, |r| (r.finish_ms - now).max(0.0));
        let ahead: f64 = self
            .waiting
            .iter()
            .filter(|q| {
                q.arrival_ms
                    .total_cmp(&arrival_ms)
                    .then((q.app, q.task).cmp(&(app, task)))
                    == Ordering::Less
            })
            .map(|q| q.proc_ms)
            .sum();
        running + ahead
    }

    /// Total committed work still to run, in ms.
    pub fn backlog(&self, now: f64) -> f64 {
        self.running.as_ref().map_or(0.0, |r| (r.finish_ms - now).max(0.0))
            + self.waiting.iter().map(|q| q.proc_ms).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;
    use std::cmp::Reverse;

    fn q(arrival_ms: f64, app: usize, task: usize, proc_ms: f64) -> QueuedTask {
        QueuedTask {
            arrival_ms,
            app,
            task,
            proc_ms,
        }
    }

    #[test]
    fn empty_queue_has_no_wait() {
        assert_eq!(FifoQueue::new().queue_time(0.0, 0.0, 0, 0), 0.0);
    }

    #[test]
    fn queue_time_sums_earlier_arrivals() {
        let mut f = FifoQueue::new();
        f.push(q(0.0, 0, 0, 100.0));
        f.push(q(1.0, 0, 1, 200.0));
        assert_eq!(f.queue_time(1.0, 2.0, 1, 0), 300.0);
    }

    #[test]
    fn ties_broken_by_app_then_task() {
        let mut f = FifoQueue::new();
        f.push(q(5.0, 2, 0, 10.0));
        f.push(q(5.0, 1, 3, 20.0));
        f.push(q(5.0, 1, 1, 40.0));
        assert_eq!(f.queue_time(5.0, 5.0, 1, 2), 40.0);
        assert_eq!(f.queue_time(5.0, 5.0, 3, 0), 70.0);
        let first = f.start_next(5.0).unwrap();
        assert_eq!((first.app, first.task), (1, 1));
    }

    #[test]
    fn running_task_counts_remaining_only() {
        let mut f = FifoQueue::new();
        f.push(q(0.0, 0, 0, 100.0));
        f.start_next(0.0);
        assert_eq!(f.queue_time(30.0, 30.0, 0, 1), 70.0);
    }

    #[test]
    fn event_order_is_time_rank_app_task() {
        let ev = |time, kind, app, task| Event {
            time,
            kind,
            app,
            task,
            resource: 0,
        };
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(ev(1.0, EventKind::TaskReady, 0, 0)));
        heap.push(Reverse(ev(1.0, EventKind::TaskComplete, 3, 1)));
        heap.push(Reverse(ev(1.0, EventKind::TaskComplete, 2, 5)));
        heap.push(Reverse(ev(0.5, EventKind::AppArrival, 9, 0)));
        let order: Vec<_> = std::iter::from_fn(|| heap.pop().map(|r| (r.0.kind, r.0.app))).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::AppArrival, 9),
                (EventKind::TaskComplete, 2),
                (EventKind::TaskComplete, 3),
                (EventKind::TaskReady, 0)
            ]
        );
    }

    #[test]
    fn log_roundtrip() {
        let recs = vec![
            EventRecord {
                timestamp: 0.0,
                event: LogEvent::AppArrival,
                app: 0,
                task: None,
                resource: None,
            },
            EventRecord {
                timestamp: 1.5,
                event: LogEvent::TaskStart,
                app: 0,
                task: Some(2),
                resource: Some(1),
            },
        ];
        let mut buf = Vec::new();
        write_event_log(&recs, &mut buf).unwrap();
        assert_eq!(read_event_log(buf.as_slice()).unwrap(), recs);
    }
}
