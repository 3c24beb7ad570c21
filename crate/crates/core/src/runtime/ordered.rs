use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::SeqCst};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::htm::{Htm, HtmConfig, Layout, MemoryImage};
use crate::ir::{For, Program, SourceSpan};
use crate::transform::canonical_bounds;

use super::interp::{eval_expr, image_of, interpret_with, write_back, Env, LoopHook, Store};
use super::RuntimeError;

/// Logical time an iteration spent between passing its sink and its source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionSpan {
    pub iteration: i64,
    pub enter: u64,
    pub exit: u64,
}

#[derive(Clone, Debug)]
pub struct OrderedReport {
    pub memory: MemoryImage,
    pub regions: Vec<RegionSpan>,
    pub wall: Duration,
}

impl OrderedReport {
    /// True if some two sink-to-source regions were open at the same time.
    pub fn regions_overlap(&self) -> bool {
        let mut r = self.regions.clone();
        r.sort_by_key(|s| s.enter);
        r.windows(2).any(|w| w[1].enter < w[0].exit)
    }
}

/// Runs every `ordered(1)` loop of `program` with iterations dealt
/// cyclically to `threads` threads, synchronized by their sink/source
/// markers. Everything else runs serially.
pub fn run_ordered(
    program: &Program,
    threads: usize,
    seed: u64,
    timeout: Duration,
) -> Result<OrderedReport, RuntimeError> {
    if threads == 0 {
        return Err(RuntimeError::Unsupported("zero worker threads".into()));
    }
    let started = Instant::now();
    let mut image = MemoryImage::initial(program);
    let mut hook = OrderedHook {
        threads,
        seed,
        timeout,
        regions: Vec::new(),
    };
    interpret_with(
        &program.body,
        &mut Env::new(),
        &mut image,
        seed,
        Some(&mut hook),
    )?;
    Ok(OrderedReport {
        memory: image,
        regions: hook.regions,
        wall: started.elapsed(),
    })
}

struct OrderedHook {
    threads: usize,
    seed: u64,
    timeout: Duration,
    regions: Vec<RegionSpan>,
}

impl LoopHook for OrderedHook {
    fn run_loop(
        &mut self,
        l: &For,
        env: &mut Env,
        store: &mut dyn Store,
    ) -> Result<bool, RuntimeError> {
        if l.ordered().is_none() {
            return Ok(false);
        }
        let (lo, hi) = canonical_bounds(l)?;
        let lo = eval_expr(lo, env, store, self.seed)?;
        let hi = eval_expr(hi, env, store, self.seed)?;
        let n = hi.saturating_sub(lo).max(0) as usize;
        let htm = Htm::new(&image_of(store), HtmConfig::default(), 1)?;
        let sync = Sync {
            lo,
            done: (0..n).map(|_| AtomicBool::new(false)).collect(),
            finished: (0..n).map(|_| AtomicBool::new(false)).collect(),
            clock: AtomicU64::new(0),
            stop: AtomicBool::new(false),
            failure: Mutex::new(None),
            regions: Mutex::new(Vec::new()),
            deadline: Instant::now() + self.timeout,
        };
        let private = &l.ordered().expect("checked above").private;
        std::thread::scope(|s| {
            for t in 0..self.threads.min(n.max(1)) {
                let (sync, htm, env) = (&sync, &htm, env.clone());
                let (seed, threads) = (self.seed, self.threads);
                s.spawn(move || {
                    let mut store = Direct {
                        htm,
                        layout: htm.layout(),
                    };
                    for k in (t..n).step_by(threads) {
                        if sync.stop.load(SeqCst) {
                            return;
                        }
                        let mut env = env.clone();
                        env.push_scalar(&l.induction, lo + k as i64);
                        for p in private {
                            env.push_scalar(p, 0);
                        }
                        let mut it = Iteration {
                            sync,
                            index: k,
                            enter: None,
                        };
                        let r = interpret_with(&l.body, &mut env, &mut store, seed, Some(&mut it));
                        sync.finished[k].store(true, SeqCst);
                        if let Err(e) = r {
                            sync.fail(e);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = sync.failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(e);
        }
        self.regions
            .extend(sync.regions.into_inner().unwrap_or_else(|e| e.into_inner()));
        write_back(store, &htm.snapshot());
        Ok(true)
    }
}

struct Sync {
    lo: i64,
    /// Iteration has passed its source.
    done: Vec<AtomicBool>,
    /// Iteration body has returned.
    finished: Vec<AtomicBool>,
    clock: AtomicU64,
    stop: AtomicBool,
    failure: Mutex<Option<RuntimeError>>,
    regions: Mutex<Vec<RegionSpan>>,
    deadline: Instant,
}

impl Sync {
    fn fail(&self, e: RuntimeError) {
        self.failure
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get_or_insert(e);
        self.stop.store(true, SeqCst);
    }
}

struct Iteration<'a> {
    sync: &'a Sync,
    index: usize,
    enter: Option<u64>,
}

impl LoopHook for Iteration<'_> {
    fn run_loop(&mut self, _: &For, _: &mut Env, _: &mut dyn Store) -> Result<bool, RuntimeError> {
        Ok(false)
    }

    fn ordered(&mut self, sink: Option<i64>, _span: &SourceSpan) -> Result<(), RuntimeError> {
        let sy = self.sync;
        let iteration = sy.lo + self.index as i64;
        match sink {
            Some(target) => {
                let k = target - sy.lo;
                if (0..self.index as i64).contains(&k) {
                    let k = k as usize;
                    let mut spins = 0u32;
                    while !sy.done[k].load(SeqCst) {
                        if sy.stop.load(SeqCst) {
                            return Err(RuntimeError::DeadlockDetected { iteration });
                        }
                        // Finished without passing its source: nobody will signal.
                        if sy.finished[k].load(SeqCst) && !sy.done[k].load(SeqCst) {
                            return Err(RuntimeError::DeadlockDetected { iteration });
                        }
                        if Instant::now() > sy.deadline {
                            return Err(RuntimeError::DeadlockDetected { iteration });
                        }
                        spins += 1;
                        if spins < 64 {
                            std::hint::spin_loop();
                        } else {
                            std::thread::yield_now();
                        }
                    }
                }
                self.enter
                    .get_or_insert_with(|| sy.clock.fetch_add(1, SeqCst));
            }
            None => {
                let exit = sy.clock.fetch_add(1, SeqCst);
                if let Some(enter) = self.enter.take() {
                    sy.regions
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .push(RegionSpan {
                            iteration,
                            enter,
                            exit,
                        });
                }
                sy.done[self.index].store(true, SeqCst);
            }
        }
        Ok(())
    }
}

/// Plain shared-memory access through the emulator's cells.
struct Direct<'a> {
    htm: &'a Htm,
    layout: &'a Layout,
}

impl Store for Direct<'_> {
    fn layout(&self) -> &Layout {
        self.layout
    }

    fn load(&mut self, addr: usize) -> i64 {
        self.htm.read_direct(addr)
    }

    fn store(&mut self, addr: usize, value: i64) {
        self.htm.write_direct(addr, value)
    }
}
