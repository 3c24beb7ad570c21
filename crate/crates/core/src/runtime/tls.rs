use std::sync::atomic::{
    AtomicBool, AtomicI64, AtomicU32, AtomicU64, AtomicUsize, Ordering::SeqCst,
};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::htm::{AbortReason, CommitResult, Htm, HtmConfig, MemoryImage, TxHandle};
use crate::ir::{For, Intrinsic, Program, Stmt};
use crate::transform::{apply_taskloop_tls_with, LoopPlan, TransformOptions, TransformedProgram};

use super::interp::{eval_expr, image_of, interpret_with, write_back, Env, LoopHook, Store};
use super::report::{AbortCounts, RunReport, TraceEvent, TraceOutcome};
use super::sched::{Dispatcher, SchedPolicy};
use super::vm::{compile_strip, Event, Frame, Step, StripCode};
use super::RuntimeError;

/// Instructions a speculative attempt may run between validations.
const VALIDATE_EVERY: u64 = 4096;
const MAX_BACKOFF_EXP: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// One OS thread per worker.
    Threads,
    /// All workers interleaved on the calling thread by a seeded scheduler.
    Sim { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub threads: usize,
    pub sched: SchedPolicy,
    /// Overrides the strip size of every loop.
    pub strip: Option<i64>,
    pub htm: HtmConfig,
    /// Seed of the `rnd` intrinsic.
    pub seed: u64,
    pub exec: ExecMode,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 4,
            sched: SchedPolicy::Monotonic,
            strip: None,
            htm: HtmConfig::default(),
            seed: 0,
            exec: ExecMode::Threads,
            trace: false,
        }
    }
}

/// Transforms `program` and runs it with speculative tasks.
pub fn run_taskloop_tls(program: &Program, config: &RunConfig) -> Result<RunReport, RuntimeError> {
    let t = apply_taskloop_tls_with(
        program,
        TransformOptions {
            strip_override: config.strip,
        },
    )?;
    run_transformed(&t, config)
}

pub fn run_transformed(
    program: &TransformedProgram,
    config: &RunConfig,
) -> Result<RunReport, RuntimeError> {
    if config.threads == 0 {
        return Err(RuntimeError::Unsupported("zero worker threads".into()));
    }
    config.htm.check()?;
    let started = Instant::now();
    let mut image = MemoryImage::initial(&program.base);
    let mut hook = TlsHook {
        plans: &program.loops,
        config,
        report: RunReport {
            commits: 0,
            aborts: AbortCounts::default(),
            retries: Vec::new(),
            nonspec: 0,
            tx_started: 0,
            trace: Vec::new(),
            wall: Duration::ZERO,
            memory: image.clone(),
        },
    };
    interpret_with(
        &program.base.body,
        &mut Env::new(),
        &mut image,
        config.seed,
        Some(&mut hook),
    )?;
    let mut report = hook.report;
    report.memory = image;
    report.wall = started.elapsed();
    Ok(report)
}

struct TlsHook<'a> {
    plans: &'a [LoopPlan],
    config: &'a RunConfig,
    report: RunReport,
}

impl LoopHook for TlsHook<'_> {
    fn run_loop(
        &mut self,
        l: &For,
        env: &mut Env,
        store: &mut dyn Store,
    ) -> Result<bool, RuntimeError> {
        if l.taskloop().is_none() {
            return Ok(false);
        }
        let cursor = l.body.iter().find_map(|s| match s {
            Stmt::Intrinsic(Intrinsic::Begin { cursor, .. }) => Some(cursor),
            _ => None,
        });
        let Some(plan) = cursor.and_then(|c| self.plans.iter().find(|p| &p.naming.cursor == c))
        else {
            return Ok(false);
        };
        let seed = self.config.seed;
        let init = eval_expr(&plan.init, env, store, seed)?;
        let bound = eval_expr(&plan.bound, env, store, seed)?;
        let mut preset = env.scalars();
        for v in &plan.snapshot {
            if !preset.iter().any(|(n, _)| n == v) {
                let value = eval_expr(&crate::ir::Expr::var(v.clone()), env, store, seed)?;
                preset.push((v.clone(), value));
            }
        }
        let image = image_of(store);
        let code = compile_strip(l, image.layout(), &preset)?;
        let part = run_strips(&code, &image, init, bound, plan.strip_size, self.config)?;
        write_back(store, &part.memory);
        self.report.absorb(part);
        Ok(true)
    }
}

/// Runs strips `init, init + step, ..` below `bound` on a fresh HTM over `image`.
fn run_strips(
    code: &StripCode,
    image: &MemoryImage,
    init: i64,
    bound: i64,
    step: i64,
    config: &RunConfig,
) -> Result<RunReport, RuntimeError> {
    let started = Instant::now();
    let span = bound.saturating_sub(init).max(0) as u64;
    let nstrips = span.div_ceil(step as u64) as usize;
    let htm = Htm::new(image, config.htm.clone(), config.threads)?;
    let shared = Shared {
        code,
        cursor: AtomicI64::new(init),
        init,
        step,
        nstrips,
        dispatcher: Mutex::new(Dispatcher::new(nstrips, config.sched)),
        retries: (0..nstrips).map(|_| AtomicU32::new(0)).collect(),
        must_wait: (0..nstrips).map(|_| AtomicBool::new(false)).collect(),
        committed: AtomicUsize::new(0),
        seq: AtomicU64::new(0),
        failure: Mutex::new(None),
        stop: AtomicBool::new(false),
        seed: config.seed,
        trace: config.trace,
        htm,
    };
    let mut workers: Vec<Worker> = (0..config.threads)
        .map(|id| Worker::new(id, &shared))
        .collect();
    match config.exec {
        ExecMode::Threads => std::thread::scope(|s| {
            for w in workers.iter_mut() {
                let shared = &shared;
                s.spawn(move || loop {
                    match w.step(shared, VALIDATE_EVERY) {
                        Poll::Busy => {}
                        Poll::Idle => std::thread::yield_now(),
                        Poll::Backoff(e) => {
                            let until = Instant::now() + Duration::from_micros(1 << e);
                            while !w.is_oldest(shared) && Instant::now() < until {
                                std::thread::yield_now();
                            }
                        }
                        Poll::Done => break,
                    }
                });
            }
        }),
        ExecMode::Sim { seed } => simulate(&mut workers, &shared, seed),
    }
    if let Some(e) = shared
        .failure
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .take()
    {
        return Err(e);
    }
    let mut report = RunReport {
        commits: 0,
        aborts: AbortCounts::default(),
        retries: shared.retries.iter().map(|r| r.load(SeqCst)).collect(),
        nonspec: 0,
        tx_started: 0,
        trace: Vec::new(),
        wall: Duration::ZERO,
        memory: shared.htm.snapshot(),
    };
    for w in workers {
        report.commits += w.commits;
        report.aborts.merge(&w.aborts);
        report.nonspec += w.nonspec;
        report.tx_started += w.tx_started;
        report.trace.extend(w.trace);
    }
    report.trace.sort_by_key(|t| t.seq);
    report.wall = started.elapsed();
    Ok(report)
}

/// Seeded round-robin-free interleaving of workers with random quanta.
fn simulate(workers: &mut [Worker], shared: &Shared, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wake = vec![0u64; workers.len()];
    let mut done = vec![false; workers.len()];
    let mut tick = 0u64;
    let mut runnable = Vec::with_capacity(workers.len());
    loop {
        runnable.clear();
        runnable.extend(
            (0..workers.len())
                .filter(|&w| !done[w] && (wake[w] <= tick || workers[w].is_oldest(shared))),
        );
        if runnable.is_empty() {
            match (0..workers.len())
                .filter(|&w| !done[w])
                .map(|w| wake[w])
                .min()
            {
                Some(t) => {
                    tick = t;
                    continue;
                }
                None => return,
            }
        }
        let w = runnable[rng.gen_range(0..runnable.len())];
        let quantum = rng.gen_range(1..=2 * VALIDATE_EVERY / 8);
        match workers[w].step(shared, quantum) {
            Poll::Busy => {}
            Poll::Idle => wake[w] = tick + 1,
            Poll::Backoff(e) => wake[w] = tick + (1 << e),
            Poll::Done => done[w] = true,
        }
        tick += 1;
    }
}

struct Shared<'a> {
    code: &'a StripCode,
    htm: Htm,
    cursor: AtomicI64,
    init: i64,
    step: i64,
    nstrips: usize,
    dispatcher: Mutex<Dispatcher>,
    retries: Vec<AtomicU32>,
    /// Strips that must run non-speculatively once their turn comes.
    must_wait: Vec<AtomicBool>,
    committed: AtomicUsize,
    seq: AtomicU64,
    failure: Mutex<Option<RuntimeError>>,
    stop: AtomicBool,
    seed: u64,
    trace: bool,
}

impl Shared<'_> {
    fn start_of(&self, strip: usize) -> i64 {
        self.init + strip as i64 * self.step
    }

    fn dispatcher(&self) -> std::sync::MutexGuard<'_, Dispatcher> {
        self.dispatcher.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn fail(&self, e: RuntimeError) {
        let mut f = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        f.get_or_insert(e);
        self.stop.store(true, SeqCst);
    }
}

enum Poll {
    Busy,
    Idle,
    Backoff(u32),
    Done,
}

struct Worker {
    id: usize,
    spec: TxHandle,
    direct: TxHandle,
    /// Accesses go straight to memory (oldest strip or epilogue).
    in_direct: bool,
    frame: Frame,
    strip: Option<usize>,
    backoff: u32,
    since_validate: u64,
    commits: u64,
    nonspec: u64,
    tx_started: u64,
    aborts: AbortCounts,
    trace: Vec<TraceEvent>,
}

impl Worker {
    fn new(id: usize, sh: &Shared) -> Self {
        Self {
            id,
            spec: sh.htm.handle(id),
            direct: sh.htm.nonspeculative(id, 0),
            in_direct: false,
            frame: sh.code.frame(sh.init),
            strip: None,
            backoff: 0,
            since_validate: 0,
            commits: 0,
            nonspec: 0,
            tx_started: 0,
            aborts: AbortCounts::default(),
            trace: Vec::new(),
        }
    }

    /// Holds the strip at the commit cursor.
    fn is_oldest(&self, sh: &Shared) -> bool {
        self.strip
            .is_some_and(|s| sh.start_of(s) == sh.cursor.load(SeqCst))
    }

    fn record(&mut self, sh: &Shared, strip: usize, outcome: TraceOutcome) {
        if sh.trace {
            self.trace.push(TraceEvent {
                strip: sh.start_of(strip),
                worker: self.id,
                attempt: sh.retries[strip].load(SeqCst),
                outcome,
                seq: sh.seq.fetch_add(1, SeqCst),
            });
        }
    }

    fn take(&mut self, sh: &Shared, strip: usize) {
        self.strip = Some(strip);
        self.in_direct = false;
        sh.code.reset(&mut self.frame, sh.start_of(strip));
    }

    /// Runs strips for at most `budget` instructions, moving on to a fresh
    /// strip whenever the current one finishes.
    fn step(&mut self, sh: &Shared, mut budget: u64) -> Poll {
        loop {
            let p = self.run_strip(sh, &mut budget);
            if !matches!(p, Poll::Busy) || self.strip.is_some() || budget == 0 {
                return p;
            }
        }
    }

    fn run_strip(&mut self, sh: &Shared, budget: &mut u64) -> Poll {
        if sh.stop.load(SeqCst) {
            if self.spec.is_active() {
                let _ = sh.htm.tx_abort_explicit(&mut self.spec, AbortReason::Other);
            }
            return Poll::Done;
        }
        let strip = match self.strip {
            Some(s) => s,
            None => {
                let claimed = sh.dispatcher().claim();
                match claimed {
                    Some(s) => {
                        self.take(sh, s);
                        s
                    }
                    None if sh.committed.load(SeqCst) == sh.nstrips => return Poll::Done,
                    None => return Poll::Idle,
                }
            }
        };
        let start = sh.start_of(strip);
        loop {
            let before = *budget;
            let tx = if self.in_direct {
                &mut self.direct
            } else {
                &mut self.spec
            };
            let outcome = sh.code.run(&mut self.frame, &sh.htm, tx, sh.seed, budget);
            let speculative = !self.in_direct && self.spec.is_active();
            match outcome {
                Step::Budget => {
                    if speculative {
                        self.since_validate += before;
                        if self.since_validate >= VALIDATE_EVERY {
                            self.since_validate = 0;
                            if !sh.htm.validate(&self.spec) {
                                let _ = sh
                                    .htm
                                    .tx_abort_explicit(&mut self.spec, AbortReason::Conflict);
                                return self.aborted(sh, strip, AbortReason::Conflict);
                            }
                        }
                    }
                    return Poll::Busy;
                }
                Step::Event(Event::Begin { flag_slot }) => {
                    if sh.cursor.load(SeqCst) == start {
                        self.in_direct = true;
                        self.direct.strip_start = start;
                        self.frame.set_local(flag_slot, 0);
                    } else if sh.must_wait[strip].load(SeqCst) {
                        sh.code.reset(&mut self.frame, start);
                        let mut d = sh.dispatcher();
                        if let Some(p) = d.claim_predecessor(strip) {
                            d.release(strip);
                            drop(d);
                            self.take(sh, p);
                            return Poll::Busy;
                        }
                        return Poll::Backoff(0);
                    } else {
                        if let Err(e) = sh.htm.tx_restart(&mut self.spec, start) {
                            sh.fail(e.into());
                            return Poll::Done;
                        }
                        self.tx_started += 1;
                        self.since_validate = 0;
                        self.frame.set_local(flag_slot, 1);
                    }
                }
                Step::Event(Event::End) => {
                    if self.in_direct {
                        self.nonspec += 1;
                        self.record(sh, strip, TraceOutcome::NonSpeculative);
                        continue;
                    }
                    if sh.cursor.load(SeqCst) != start {
                        let _ = sh
                            .htm
                            .tx_abort_explicit(&mut self.spec, AbortReason::OrderInversion);
                        return self.aborted(sh, strip, AbortReason::OrderInversion);
                    }
                    match sh.htm.tx_commit(&mut self.spec) {
                        CommitResult::Committed => {
                            self.commits += 1;
                            self.backoff = 0;
                            self.record(sh, strip, TraceOutcome::Committed);
                            self.in_direct = true;
                            self.direct.strip_start = start;
                        }
                        CommitResult::Aborted(r) => return self.aborted(sh, strip, r),
                    }
                }
                Step::Event(Event::Advance) => {
                    sh.cursor.fetch_add(sh.step, SeqCst);
                    sh.committed.fetch_add(1, SeqCst);
                }
                Step::Halt => {
                    self.strip = None;
                    return Poll::Busy;
                }
                Step::Abort(r) => return self.aborted(sh, strip, r),
                Step::Error(e) => {
                    if !speculative {
                        sh.fail(e);
                        return Poll::Done;
                    }
                    // A speculative fault is either the product of a stale
                    // read or a genuine error that only a non-speculative run
                    // may report.
                    let reason = if sh.htm.validate(&self.spec) {
                        sh.must_wait[strip].store(true, SeqCst);
                        AbortReason::Other
                    } else {
                        AbortReason::Conflict
                    };
                    let _ = sh.htm.tx_abort_explicit(&mut self.spec, reason);
                    return self.aborted(sh, strip, reason);
                }
            }
            if *budget == 0 {
                return Poll::Busy;
            }
        }
    }

    fn aborted(&mut self, sh: &Shared, strip: usize, reason: AbortReason) -> Poll {
        self.aborts.add(reason);
        self.record(sh, strip, TraceOutcome::Aborted(reason));
        sh.retries[strip].fetch_add(1, SeqCst);
        let start = sh.start_of(strip);
        sh.code.reset(&mut self.frame, start);
        match reason {
            AbortReason::OrderInversion => {
                let mut d = sh.dispatcher();
                if let Some(p) = d.claim_predecessor(strip) {
                    d.release(strip);
                    drop(d);
                    self.take(sh, p);
                    return Poll::Busy;
                }
                drop(d);
                let e = self.backoff;
                self.backoff = (self.backoff + 1).min(MAX_BACKOFF_EXP);
                Poll::Backoff(e)
            }
            AbortReason::Capacity => {
                sh.must_wait[strip].store(true, SeqCst);
                Poll::Busy
            }
            AbortReason::Conflict | AbortReason::Other => Poll::Busy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load;
    use crate::runtime::interpret;

    const FIG4: &str = include_str!("../../kernels/fig4.stec");

    fn serial_digest(p: &Program, seed: u64) -> String {
        let mut m = MemoryImage::initial(p);
        interpret(p, &mut m, seed).unwrap();
        m.digest()
    }

    #[test]
    fn fig4_matches_serial_in_sim() {
        let p = load("fig4.stec", FIG4).unwrap();
        let want = serial_digest(&p, 11);
        for threads in [1, 2, 4, 8] {
            for sched in [
                SchedPolicy::Monotonic,
                SchedPolicy::Lifo,
                SchedPolicy::NonMonotonicRandom(3),
            ] {
                for strip in [1, 4, 7] {
                    let cfg = RunConfig {
                        threads,
                        sched,
                        strip: Some(strip),
                        seed: 11,
                        exec: ExecMode::Sim {
                            seed: threads as u64,
                        },
                        trace: true,
                        ..RunConfig::default()
                    };
                    let r = run_taskloop_tls(&p, &cfg).unwrap();
                    assert_eq!(r.digest(), want, "{threads} {sched} {strip}");
                    let order: Vec<i64> = r
                        .trace
                        .iter()
                        .filter(|t| !matches!(t.outcome, TraceOutcome::Aborted(_)))
                        .map(|t| t.strip)
                        .collect();
                    let expected: Vec<i64> =
                        (0..order.len() as i64).map(|k| 3 + k * strip).collect();
                    assert_eq!(order, expected);
                }
            }
        }
    }

    #[test]
    fn fig4_matches_serial_on_threads() {
        let p = load("fig4.stec", FIG4).unwrap();
        let want = serial_digest(&p, 11);
        for sched in [SchedPolicy::Monotonic, SchedPolicy::NonMonotonicRandom(1)] {
            let cfg = RunConfig {
                threads: 4,
                sched,
                seed: 11,
                ..RunConfig::default()
            };
            assert_eq!(run_taskloop_tls(&p, &cfg).unwrap().digest(), want);
        }
    }

    #[test]
    fn one_thread_monotonic_never_speculates() {
        let p = load("fig4.stec", FIG4).unwrap();
        let cfg = RunConfig {
            threads: 1,
            ..RunConfig::default()
        };
        let r = run_taskloop_tls(&p, &cfg).unwrap();
        assert_eq!(r.tx_started, 0);
        assert_eq!(r.aborts.total(), 0);
        assert_eq!(r.nonspec, 50);
    }
}
