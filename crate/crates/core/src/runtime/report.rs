use std::fmt;
use std::time::Duration;

use serde::Serialize;

use crate::htm::{AbortReason, MemoryImage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AbortCounts {
    pub conflict: u64,
    pub capacity: u64,
    pub order_inversion: u64,
    pub other: u64,
}

impl AbortCounts {
    pub fn add(&mut self, reason: AbortReason) {
        match reason {
            AbortReason::Conflict => self.conflict += 1,
            AbortReason::Capacity => self.capacity += 1,
            AbortReason::OrderInversion => self.order_inversion += 1,
            AbortReason::Other => self.other += 1,
        }
    }

    pub fn get(&self, reason: AbortReason) -> u64 {
        match reason {
            AbortReason::Conflict => self.conflict,
            AbortReason::Capacity => self.capacity,
            AbortReason::OrderInversion => self.order_inversion,
            AbortReason::Other => self.other,
        }
    }

    pub fn total(&self) -> u64 {
        self.conflict + self.capacity + self.order_inversion + self.other
    }

    pub fn merge(&mut self, other: &AbortCounts) {
        self.conflict += other.conflict;
        self.capacity += other.capacity;
        self.order_inversion += other.order_inversion;
        self.other += other.other;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutcome {
    Committed,
    /// Ran directly on memory because it was the oldest strip.
    NonSpeculative,
    Aborted(AbortReason),
}

impl fmt::Display for TraceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceOutcome::Committed => f.write_str("committed"),
            TraceOutcome::NonSpeculative => f.write_str("nonspeculative"),
            TraceOutcome::Aborted(r) => write!(f, "aborted:{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    /// Strip start iteration.
    pub strip: i64,
    pub worker: usize,
    pub attempt: u32,
    pub outcome: TraceOutcome,
    /// Global order in which outcomes were recorded.
    pub seq: u64,
}

/// Counters and final memory of one program run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub commits: u64,
    pub aborts: AbortCounts,
    /// Retries per strip, in strip order, concatenated over all executed loops.
    pub retries: Vec<u32>,
    pub nonspec: u64,
    pub tx_started: u64,
    pub trace: Vec<TraceEvent>,
    pub wall: Duration,
    pub memory: MemoryImage,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    commits: u64,
    aborts: &'a AbortCounts,
    retries: &'a [u32],
    nonspec: u64,
    tx_started: u64,
    digest: String,
}

impl RunReport {
    pub fn digest(&self) -> String {
        self.memory.digest()
    }

    pub fn max_retries(&self) -> u32 {
        self.retries.iter().copied().max().unwrap_or(0)
    }

    /// Accumulates the counters of a later loop of the same run.
    pub(crate) fn absorb(&mut self, other: RunReport) {
        self.commits += other.commits;
        self.aborts.merge(&other.aborts);
        self.retries.extend(other.retries);
        self.nonspec += other.nonspec;
        self.tx_started += other.tx_started;
        self.trace.extend(other.trace);
        self.wall += other.wall;
        self.memory = other.memory;
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(JsonReport {
            commits: self.commits,
            aborts: &self.aborts,
            retries: &self.retries,
            nonspec: self.nonspec,
            tx_started: self.tx_started,
            digest: self.digest(),
        })
        .expect("report serializes")
    }
}
