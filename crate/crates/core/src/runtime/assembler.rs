use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::executor::{ExecError, MicroBatch, WindowInstance};
use crate::rdf::TimedTriple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("clock moved backwards from {previous} to {now}")]
    ClockRegression { previous: u64, now: u64 },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// What one clock tick produced.
#[derive(Debug, Default)]
pub struct Tick {
    pub sealed: Vec<u64>,
    pub windows: Vec<WindowInstance>,
}

/// Routes timed triples into micro-batches by event time and cuts windows
/// at slide boundaries. Window `n` spans `[n*slide, n*slide + window)`.
#[derive(Debug)]
pub struct WindowAssembler {
    window_ms: u64,
    slide_ms: u64,
    batch_ms: u64,
    now: u64,
    open: BTreeMap<u64, Vec<TimedTriple>>,
    sealed: BTreeMap<u64, Arc<MicroBatch>>,
    next_seal: u64,
    next_window: u64,
    late_dropped: u64,
    max_retained: usize,
}

impl WindowAssembler {
    pub fn new(window_ms: u64, slide_ms: u64, batch_ms: u64) -> Self {
        WindowAssembler {
            window_ms,
            slide_ms,
            batch_ms,
            now: 0,
            open: BTreeMap::new(),
            sealed: BTreeMap::new(),
            next_seal: 0,
            next_window: 0,
            late_dropped: 0,
            max_retained: 0,
        }
    }

    /// Accepts one triple; events for already sealed batches are dropped
    /// and counted.
    pub fn ingest(&mut self, t: TimedTriple) {
        let idx = t.event_time / self.batch_ms;
        if idx < self.next_seal {
            self.late_dropped += 1;
        } else {
            self.open.entry(idx).or_default().push(t);
        }
    }

    pub fn late_dropped(&self) -> u64 {
        self.late_dropped
    }

    /// Sealed plus open batches currently held.
    pub fn retained_batches(&self) -> usize {
        self.sealed.len() + self.open.len()
    }

    pub fn max_retained_batches(&self) -> usize {
        self.max_retained
    }

    pub fn next_window(&self) -> u64 {
        self.next_window
    }

    pub fn simulated_clock_tick(&mut self, now: u64) -> Result<Tick, ClockError> {
        if now < self.now {
            return Err(ClockError::ClockRegression { previous: self.now, now });
        }
        self.now = now;
        let mut tick = Tick::default();
        while (self.next_seal + 1) * self.batch_ms <= now {
            let idx = self.next_seal;
            let start = idx * self.batch_ms;
            let triples = self.open.remove(&idx).unwrap_or_default();
            let batch = MicroBatch::seal(idx, start, start + self.batch_ms, triples)?;
            self.sealed.insert(idx, Arc::new(batch));
            tick.sealed.push(idx);
            self.next_seal += 1;
        }
        self.max_retained = self.max_retained.max(self.retained_batches());

        while self.next_window * self.slide_ms + self.window_ms <= now {
            let n = self.next_window;
            let start = n * self.slide_ms;
            let first = start / self.batch_ms;
            let count = self.window_ms / self.batch_ms;
            let batches = (first..first + count).map(|i| self.sealed[&i].clone()).collect();
            tick.windows.push(WindowInstance::new(n, start, start + self.window_ms, self.batch_ms, batches)?);
            self.next_window += 1;
            let keep_from = self.next_window * self.slide_ms / self.batch_ms;
            self.sealed.retain(|&i, _| i >= keep_from);
        }
        Ok(tick)
    }
}
