//! Best-effort hardware transactional memory, emulated in software.
//!
//! Transactions buffer their writes (lazy versioning) and track read and
//! write sets at granule resolution. Every granule carries the commit-clock
//! value of its last update. A read of a granule updated after the
//! transaction started aborts it on the spot, so a live transaction always
//! sees a consistent snapshot; a commit revalidates the read set and then
//! publishes its buffer under a single lock.

mod memory;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering::SeqCst};
use std::sync::{Arc, Mutex};

use serde::Serialize;

pub use memory::{Layout, MemoryImage, VarSlot};

const CELL_BYTES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Conflict,
    Capacity,
    OrderInversion,
    Other,
}

impl AbortReason {
    pub const ALL: [AbortReason; 4] = [
        AbortReason::Conflict,
        AbortReason::Capacity,
        AbortReason::OrderInversion,
        AbortReason::Other,
    ];
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::Conflict => "conflict",
            AbortReason::Capacity => "capacity",
            AbortReason::OrderInversion => "order_inversion",
            AbortReason::Other => "other",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Active,
    Committed,
    Aborted(AbortReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitResult {
    Committed,
    Aborted(AbortReason),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum HtmError {
    #[error("worker {worker} already has an active transaction")]
    NestedTransaction { worker: usize },
    #[error("transaction is not active")]
    NotActive,
    #[error("invalid HTM configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HtmConfig {
    pub granule_bytes: usize,
    /// Read-set capacity in granules.
    pub rs_cap: usize,
    /// Write-set capacity in granules.
    pub ws_cap: usize,
    /// Probability that a commit attempt fails with an `Other` abort.
    pub other_abort_prob: f64,
    pub seed: u64,
    /// Keep every publication in a log, for replay checks.
    pub log_commits: bool,
}

impl Default for HtmConfig {
    fn default() -> Self {
        Self {
            granule_bytes: 64,
            rs_cap: 512,
            ws_cap: 512,
            other_abort_prob: 0.0,
            seed: 0,
            log_commits: false,
        }
    }
}

impl HtmConfig {
    pub fn check(&self) -> Result<(), HtmError> {
        if !self.granule_bytes.is_power_of_two() || self.granule_bytes < CELL_BYTES {
            return Err(HtmError::Config(format!(
                "granule size {} is not a power of two >= {CELL_BYTES}",
                self.granule_bytes
            )));
        }
        if self.rs_cap < 1 || self.ws_cap < 1 {
            return Err(HtmError::Config("capacities must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.other_abort_prob) {
            return Err(HtmError::Config(
                "other-abort probability must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One publication to memory: a committed transaction or a direct write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    /// Clock value after the publication.
    pub seq: u64,
    pub writes: Vec<(usize, i64)>,
}

/// Membership marks stamped with the owning attempt's epoch, so clearing is O(1).
#[derive(Clone, Debug, Default)]
struct MarkSet {
    marks: Vec<u32>,
    list: Vec<usize>,
}

impl MarkSet {
    fn new(size: usize) -> Self {
        Self {
            marks: vec![0; size],
            list: Vec::new(),
        }
    }

    fn contains(&self, i: usize, epoch: u32) -> bool {
        self.marks[i] == epoch
    }

    fn insert(&mut self, i: usize, epoch: u32) {
        self.marks[i] = epoch;
        self.list.push(i);
    }

    fn reset(&mut self, wrapped: bool) {
        self.list.clear();
        if wrapped {
            self.marks.fill(0);
        }
    }
}

/// One attempt at executing a strip.
#[derive(Debug)]
pub struct TxHandle {
    pub id: u64,
    pub worker: usize,
    pub strip_start: i64,
    /// `false` for strips running directly on memory.
    pub speculative: bool,
    pub start: u64,
    pub status: TxStatus,
    epoch: u32,
    read_set: MarkSet,
    write_set: MarkSet,
    buffer: MarkSet,
    values: Vec<i64>,
}

impl TxHandle {
    pub fn read_set(&self) -> &[usize] {
        &self.read_set.list
    }

    pub fn write_set(&self) -> &[usize] {
        &self.write_set.list
    }

    /// Buffered writes in first-write order.
    pub fn buffered(&self) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.buffer.list.iter().map(|&a| (a, self.values[a]))
    }

    pub fn is_active(&self) -> bool {
        self.status == TxStatus::Active
    }
}

/// Shared memory plus the transactional machinery around it.
pub struct Htm {
    config: HtmConfig,
    layout: Arc<Layout>,
    cells: Box<[AtomicI64]>,
    versions: Box<[AtomicU64]>,
    clock: AtomicU64,
    commit_lock: Mutex<()>,
    active: Box<[AtomicBool]>,
    next_tx: AtomicU64,
    log: Option<Mutex<Vec<CommitRecord>>>,
    granule_shift: u32,
}

impl std::fmt::Debug for Htm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Htm")
            .field("config", &self.config)
            .field("cells", &self.cells.len())
            .field("clock", &self.clock())
            .finish()
    }
}

impl Htm {
    pub fn new(image: &MemoryImage, config: HtmConfig, workers: usize) -> Result<Self, HtmError> {
        config.check()?;
        let granule_shift = (config.granule_bytes / CELL_BYTES).trailing_zeros();
        let cells: Box<[AtomicI64]> = image.cells().iter().map(|&v| AtomicI64::new(v)).collect();
        let granules = (cells.len() >> granule_shift) + 1;
        Ok(Self {
            layout: image.layout().clone(),
            versions: (0..granules).map(|_| AtomicU64::new(0)).collect(),
            cells,
            clock: AtomicU64::new(0),
            commit_lock: Mutex::new(()),
            active: (0..workers.max(1))
                .map(|_| AtomicBool::new(false))
                .collect(),
            next_tx: AtomicU64::new(0),
            log: config.log_commits.then(|| Mutex::new(Vec::new())),
            config,
            granule_shift,
        })
    }

    pub fn config(&self) -> &HtmConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn clock(&self) -> u64 {
        self.clock.load(SeqCst)
    }

    pub fn granule_of(&self, addr: usize) -> usize {
        addr >> self.granule_shift
    }

    pub fn cells(&self) -> usize {
        self.cells.len()
    }

    fn granules(&self) -> usize {
        self.versions.len()
    }

    fn claim_worker(&self, worker: usize) -> Result<(), HtmError> {
        self.active[worker]
            .compare_exchange(false, true, SeqCst, SeqCst)
            .map(|_| ())
            .map_err(|_| HtmError::NestedTransaction { worker })
    }

    fn release_worker(&self, worker: usize) {
        self.active[worker].store(false, SeqCst);
    }

    /// Starts a transaction stamped with the current commit clock.
    pub fn tx_begin(&self, worker: usize, strip_start: i64) -> Result<TxHandle, HtmError> {
        self.claim_worker(worker)?;
        Ok(TxHandle {
            id: self.next_tx.fetch_add(1, SeqCst),
            worker,
            strip_start,
            speculative: true,
            start: self.clock(),
            status: TxStatus::Active,
            epoch: 1,
            read_set: MarkSet::new(self.granules()),
            write_set: MarkSet::new(self.granules()),
            buffer: MarkSet::new(self.cells()),
            values: vec![0; self.cells()],
        })
    }

    /// An inactive handle with buffers sized for this memory, ready for `tx_restart`.
    pub fn handle(&self, worker: usize) -> TxHandle {
        TxHandle {
            id: u64::MAX,
            worker,
            strip_start: 0,
            speculative: true,
            start: 0,
            status: TxStatus::Committed,
            epoch: 0,
            read_set: MarkSet::new(self.granules()),
            write_set: MarkSet::new(self.granules()),
            buffer: MarkSet::new(self.cells()),
            values: vec![0; self.cells()],
        }
    }

    /// Starts a new transaction reusing the buffers of a finished handle.
    pub fn tx_restart(&self, tx: &mut TxHandle, strip_start: i64) -> Result<(), HtmError> {
        if tx.is_active() && tx.speculative {
            return Err(HtmError::NestedTransaction { worker: tx.worker });
        }
        if tx.buffer.marks.len() != self.cells() {
            *tx = self.tx_begin(tx.worker, strip_start)?;
            return Ok(());
        }
        self.claim_worker(tx.worker)?;
        let (epoch, wrapped) = match tx.epoch.checked_add(1) {
            Some(e) => (e, false),
            None => (1, true),
        };
        tx.epoch = epoch;
        tx.read_set.reset(wrapped);
        tx.write_set.reset(wrapped);
        tx.buffer.reset(wrapped);
        tx.id = self.next_tx.fetch_add(1, SeqCst);
        tx.strip_start = strip_start;
        tx.speculative = true;
        tx.start = self.clock();
        tx.status = TxStatus::Active;
        Ok(())
    }

    /// A handle whose accesses go straight to memory.
    pub fn nonspeculative(&self, worker: usize, strip_start: i64) -> TxHandle {
        TxHandle {
            id: u64::MAX,
            worker,
            strip_start,
            speculative: false,
            start: self.clock(),
            status: TxStatus::Active,
            epoch: 1,
            read_set: MarkSet::default(),
            write_set: MarkSet::default(),
            buffer: MarkSet::default(),
            values: Vec::new(),
        }
    }

    fn fail(&self, tx: &mut TxHandle, reason: AbortReason) -> AbortReason {
        tx.status = TxStatus::Aborted(reason);
        self.release_worker(tx.worker);
        reason
    }

    pub fn tx_read(&self, tx: &mut TxHandle, addr: usize) -> Result<i64, AbortReason> {
        if !tx.speculative {
            return Ok(self.read_direct(addr));
        }
        debug_assert!(tx.is_active());
        let g = self.granule_of(addr);
        if !tx.read_set.contains(g, tx.epoch) {
            if tx.read_set.list.len() >= self.config.rs_cap {
                return Err(self.fail(tx, AbortReason::Capacity));
            }
            tx.read_set.insert(g, tx.epoch);
        }
        if tx.buffer.contains(addr, tx.epoch) {
            return Ok(tx.values[addr]);
        }
        let v = self.cells[addr].load(SeqCst);
        // Publishers bump the version before the cells, so a fresh value is
        // always accompanied by a fresh version here.
        if self.versions[g].load(SeqCst) > tx.start {
            return Err(self.fail(tx, AbortReason::Conflict));
        }
        Ok(v)
    }

    pub fn tx_write(&self, tx: &mut TxHandle, addr: usize, value: i64) -> Result<(), AbortReason> {
        if !tx.speculative {
            self.write_direct(addr, value);
            return Ok(());
        }
        debug_assert!(tx.is_active());
        let g = self.granule_of(addr);
        if !tx.write_set.contains(g, tx.epoch) {
            if tx.write_set.list.len() >= self.config.ws_cap {
                return Err(self.fail(tx, AbortReason::Capacity));
            }
            tx.write_set.insert(g, tx.epoch);
        }
        if !tx.buffer.contains(addr, tx.epoch) {
            tx.buffer.insert(addr, tx.epoch);
        }
        tx.values[addr] = value;
        Ok(())
    }

    /// True while no granule in the read set was published after the start.
    pub fn validate(&self, tx: &TxHandle) -> bool {
        tx.read_set
            .list
            .iter()
            .all(|&g| self.versions[g].load(SeqCst) <= tx.start)
    }

    pub fn tx_commit(&self, tx: &mut TxHandle) -> CommitResult {
        if !tx.is_active() {
            return match tx.status {
                TxStatus::Aborted(r) => CommitResult::Aborted(r),
                _ => CommitResult::Committed,
            };
        }
        if !tx.speculative {
            tx.status = TxStatus::Committed;
            return CommitResult::Committed;
        }
        if self.config.other_abort_prob > 0.0 {
            let draw = crate::runtime::rnd(self.config.seed ^ 0x006f_7468_6572, tx.id as i64);
            if (draw as f64) < self.config.other_abort_prob * (i64::MAX as f64) {
                return CommitResult::Aborted(self.fail(tx, AbortReason::Other));
            }
        }
        let guard = self.commit_lock.lock().unwrap_or_else(|e| e.into_inner());
        if !self.validate(tx) {
            drop(guard);
            return CommitResult::Aborted(self.fail(tx, AbortReason::Conflict));
        }
        let seq = self.clock.load(SeqCst) + 1;
        for &g in &tx.write_set.list {
            self.versions[g].store(seq, SeqCst);
        }
        for &addr in &tx.buffer.list {
            self.cells[addr].store(tx.values[addr], SeqCst);
        }
        self.clock.store(seq, SeqCst);
        if let Some(log) = &self.log {
            let writes = tx.buffered().collect();
            log.lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(CommitRecord { seq, writes });
        }
        drop(guard);
        tx.status = TxStatus::Committed;
        self.release_worker(tx.worker);
        CommitResult::Committed
    }

    /// Explicit abort (the emulated `xabort`).
    pub fn tx_abort_explicit(
        &self,
        tx: &mut TxHandle,
        reason: AbortReason,
    ) -> Result<(), HtmError> {
        if !tx.is_active() {
            return Err(HtmError::NotActive);
        }
        if tx.speculative {
            self.fail(tx, reason);
        } else {
            tx.status = TxStatus::Aborted(reason);
        }
        Ok(())
    }

    pub fn read_direct(&self, addr: usize) -> i64 {
        self.cells[addr].load(SeqCst)
    }

    /// Non-transactional store; versions the granule like a one-write commit.
    pub fn write_direct(&self, addr: usize, value: i64) {
        let guard = self.commit_lock.lock().unwrap_or_else(|e| e.into_inner());
        let seq = self.clock.load(SeqCst) + 1;
        self.versions[self.granule_of(addr)].store(seq, SeqCst);
        self.cells[addr].store(value, SeqCst);
        self.clock.store(seq, SeqCst);
        if let Some(log) = &self.log {
            log.lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(CommitRecord {
                    seq,
                    writes: vec![(addr, value)],
                });
        }
        drop(guard);
    }

    pub fn snapshot(&self) -> MemoryImage {
        let cells = self.cells.iter().map(|c| c.load(SeqCst)).collect();
        MemoryImage::from_cells(self.layout.clone(), cells)
    }

    pub fn commit_log(&self) -> Vec<CommitRecord> {
        match &self.log {
            Some(l) => l.lock().unwrap_or_else(|e| e.into_inner()).clone(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Program, VarDecl};

    fn htm(cells: usize, config: HtmConfig) -> Htm {
        let mut p = Program::default();
        p.globals.push(VarDecl::array("M", cells));
        Htm::new(&MemoryImage::initial(&p), config, 2).unwrap()
    }

    #[test]
    fn begin_stamps_clock_and_rejects_nesting() {
        let h = htm(64, HtmConfig::default());
        let mut a = h.tx_begin(0, 0).unwrap();
        assert_eq!(a.start, 0);
        assert_eq!(
            h.tx_begin(0, 0).unwrap_err(),
            HtmError::NestedTransaction { worker: 0 }
        );
        h.tx_abort_explicit(&mut a, AbortReason::Other).unwrap();
        for i in 0..3 {
            h.write_direct(i, 1);
        }
        let b = h.tx_begin(0, 0).unwrap();
        assert_eq!(b.start, 3);
    }

    #[test]
    fn read_own_write_and_isolation() {
        let h = htm(64, HtmConfig::default());
        let mut a = h.tx_begin(0, 0).unwrap();
        let mut b = h.tx_begin(1, 0).unwrap();
        h.tx_write(&mut a, 5, 7).unwrap();
        assert_eq!(h.tx_read(&mut a, 5), Ok(7));
        assert_eq!(h.tx_read(&mut b, 5), Ok(0));
        assert_eq!(h.read_direct(5), 0);
        assert_eq!(h.tx_commit(&mut a), CommitResult::Committed);
        assert_eq!(h.read_direct(5), 7);
        // b read the granule before a published it.
        assert_eq!(
            h.tx_commit(&mut b),
            CommitResult::Aborted(AbortReason::Conflict)
        );
    }

    #[test]
    fn stale_read_aborts_immediately() {
        let h = htm(64, HtmConfig::default());
        let mut a = h.tx_begin(0, 0).unwrap();
        h.write_direct(9, 1);
        assert_eq!(h.tx_read(&mut a, 0), Ok(0));
        assert_eq!(h.tx_read(&mut a, 8), Err(AbortReason::Conflict));
    }

    #[test]
    fn read_capacity_overflow() {
        let h = htm(8 * 600, HtmConfig::default());
        let mut a = h.tx_begin(0, 0).unwrap();
        for g in 0..512 {
            h.tx_read(&mut a, g * 8).unwrap();
        }
        assert_eq!(h.tx_read(&mut a, 512 * 8), Err(AbortReason::Capacity));
        assert_eq!(a.status, TxStatus::Aborted(AbortReason::Capacity));
    }

    #[test]
    fn write_capacity_overflow_leaves_memory() {
        let cfg = HtmConfig {
            ws_cap: 2,
            ..HtmConfig::default()
        };
        let h = htm(64, cfg);
        let mut a = h.tx_begin(0, 0).unwrap();
        h.tx_write(&mut a, 0, 1).unwrap();
        h.tx_write(&mut a, 8, 1).unwrap();
        assert_eq!(h.tx_write(&mut a, 16, 1), Err(AbortReason::Capacity));
        assert!(h.snapshot().cells().iter().all(|&c| c == 0));
    }

    #[test]
    fn double_abort_is_not_active() {
        let h = htm(8, HtmConfig::default());
        let mut a = h.tx_begin(0, 0).unwrap();
        h.tx_write(&mut a, 1, 9).unwrap();
        h.tx_abort_explicit(&mut a, AbortReason::OrderInversion)
            .unwrap();
        assert_eq!(
            h.tx_abort_explicit(&mut a, AbortReason::OrderInversion),
            Err(HtmError::NotActive)
        );
        assert_eq!(h.read_direct(1), 0);
        h.tx_restart(&mut a, 0).unwrap();
        assert!(a.read_set().is_empty() && a.write_set().is_empty());
        assert_eq!(h.tx_read(&mut a, 1), Ok(0));
    }

    #[test]
    fn bad_granule_rejected() {
        let cfg = HtmConfig {
            granule_bytes: 48,
            ..HtmConfig::default()
        };
        assert!(cfg.check().is_err());
    }
}
