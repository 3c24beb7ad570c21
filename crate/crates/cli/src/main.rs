mod settings;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use ste::frontend::load;
use ste::htm::MemoryImage;
use ste::ir::Program;
use ste::kernels;
use ste::runtime::{interpret, run_ordered, run_taskloop_tls, RunReport, SchedPolicy};
use ste::transform::{apply_taskloop_tls_with, TransformOptions};

use settings::{Exec, Knobs, RunFlags};

/// Speculative execution of `taskloop tls` loops on an emulated HTM.
#[derive(Parser, Debug)]
#[command(name = "ste", version)]
struct Cli {
    /// Seed of every random stream (rnd intrinsic, schedules, injected aborts).
    #[arg(long, global = true, env = "STE_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rewrite every `taskloop tls` loop into speculative tasks.
    Transform {
        /// Source file, or the name of a bundled kernel.
        input: String,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Overrides the strip size of every taskloop.
        #[arg(long)]
        strip: Option<i64>,
    },
    /// Run speculatively and check the result against a serial run.
    Run {
        input: String,
        #[command(flatten)]
        flags: RunFlags,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write one CSV row per strip attempt.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep bundled kernels over a configuration grid and print CSV.
    Bench {
        /// Comma-separated kernel names; all bundled kernels when absent.
        #[arg(long, value_delimiter = ',')]
        kernels: Option<Vec<String>>,
        /// Comma-separated thread counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
        threads: Vec<usize>,
        /// Comma-separated scheduling policies.
        #[arg(long, value_delimiter = ',', default_value = "mono,lifo,rand:1")]
        sched: Vec<SchedPolicy>,
        /// Comma-separated strip sizes; each kernel's own size when absent.
        #[arg(long, value_delimiter = ',')]
        strip: Vec<i64>,
        #[command(flatten)]
        knobs: Knobs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run `ordered` loops with sink/source synchronization.
    Ordered {
        input: String,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        /// Give up waiting on a sink after this many milliseconds.
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

const SOUNDNESS: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    match cli.command {
        Command::Transform {
            input,
            output,
            strip,
        } => transform(&input, output.as_deref(), strip),
        Command::Run {
            input,
            flags,
            report,
            trace,
        } => run(&input, flags, seed, report.as_deref(), trace.as_deref()),
        Command::Bench {
            kernels,
            threads,
            sched,
            strip,
            knobs,
            output,
        } => {
            let grid = Grid {
                threads,
                sched,
                strip,
            };
            let names = kernels.unwrap_or_else(|| {
                kernels::gallery()
                    .iter()
                    .map(|k| k.name.to_string())
                    .collect()
            });
            bench(&names, &grid, knobs, seed, output.as_deref())
        }
        Command::Ordered {
            input,
            threads,
            timeout_ms,
            report,
        } => ordered(&input, threads, seed, timeout_ms, report.as_deref()),
    }
}

/// Reads `input` as a file, falling back to a bundled kernel or fixture name.
fn source(input: &str) -> Result<(String, String)> {
    let path = Path::new(input);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {input}"))?;
        return Ok((input.to_string(), text));
    }
    if let Some(k) = kernels::find(input) {
        return Ok((k.file.to_string(), k.source.to_string()));
    }
    if let Some(text) = kernels::fixture(input) {
        return Ok((format!("{input}.stec"), text.to_string()));
    }
    Err(anyhow!("{input}: no such file or bundled kernel"))
}

fn program(input: &str) -> Result<Program> {
    let (name, text) = source(input)?;
    Ok(load(&name, &text)?)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn serial_digest(p: &Program, seed: u64) -> Result<String> {
    let mut image = MemoryImage::initial(p);
    interpret(p, &mut image, seed).context("serial run failed")?;
    Ok(image.digest())
}

fn transform(input: &str, output: Option<&Path>, strip: Option<i64>) -> Result<u8> {
    let p = program(input)?;
    let t = apply_taskloop_tls_with(
        &p,
        TransformOptions {
            strip_override: strip,
        },
    )?;
    emit(output, &t.render())?;
    Ok(0)
}

fn run(
    input: &str,
    flags: RunFlags,
    seed: u64,
    report: Option<&Path>,
    trace: Option<&Path>,
) -> Result<u8> {
    let p = program(input)?;
    let mut cfg = flags.resolve()?.run_config(seed, Exec::Threads)?;
    cfg.trace = trace.is_some();
    let want = serial_digest(&p, seed)?;
    let r = run_taskloop_tls(&p, &cfg)?;
    let mut doc = r.to_json();
    doc["serial_digest"] = json!(want);
    emit(report, &format!("{}\n", serde_json::to_string(&doc)?))?;
    if let Some(path) = trace {
        write_trace(path, &r)?;
    }
    if r.digest() != want {
        eprintln!(
            "soundness violation: speculative digest {} differs from serial {want}",
            r.digest()
        );
        return Ok(SOUNDNESS);
    }
    Ok(0)
}

fn write_trace(path: &Path, r: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seq", "strip", "worker", "attempt", "outcome"])?;
    for t in &r.trace {
        w.write_record([
            t.seq.to_string(),
            t.strip.to_string(),
            t.worker.to_string(),
            t.attempt.to_string(),
            t.outcome.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Grid {
    threads: Vec<usize>,
    sched: Vec<SchedPolicy>,
    strip: Vec<i64>,
}

const BENCH_COLUMNS: [&str; 11] = [
    "kernel",
    "threads",
    "sched",
    "strip",
    "commits",
    "conflict",
    "capacity",
    "order_inversion",
    "other",
    "nonspec",
    "retries_max",
];

/// One row per kernel and grid point. A failing configuration is reported
/// on stderr and the sweep goes on; the exit code reflects the worst row.
fn bench(
    names: &[String],
    grid: &Grid,
    knobs: Knobs,
    seed: u64,
    output: Option<&Path>,
) -> Result<u8> {
    let flags = RunFlags {
        knobs,
        ..RunFlags::default()
    }
    .resolve()?;
    let mut specs = Vec::new();
    for n in names.iter().filter(|n| !n.is_empty()) {
        let k = kernels::find(n).ok_or_else(|| anyhow!("unknown kernel `{n}`"))?;
        specs.push((k, k.program()?, serial_digest(&k.program()?, seed)?));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_COLUMNS)?;
    let mut code = 0;
    for (k, p, want) in &specs {
        let strips = if grid.strip.is_empty() {
            vec![k.strip]
        } else {
            grid.strip.clone()
        };
        for &threads in &grid.threads {
            for &sched in &grid.sched {
                for &strip in &strips {
                    let mut row = flags.clone();
                    row.threads = Some(threads);
                    row.sched = Some(sched);
                    row.strip = Some(strip);
                    let label = format!("{} threads={threads} sched={sched} strip={strip}", k.name);
                    let r = row
                        .run_config(seed, Exec::Sim)
                        .and_then(|cfg| Ok(run_taskloop_tls(p, &cfg)?));
                    let r = match r {
                        Ok(r) => r,
                        Err(e) => {
                            eprintln!("{label}: {e:#}");
                            code = code.max(1);
                            continue;
                        }
                    };
                    if &r.digest() != want {
                        eprintln!("{label}: soundness violation, digest differs from serial");
                        code = SOUNDNESS;
                    }
                    let a = &r.aborts;
                    w.write_record([
                        k.name.to_string(),
                        threads.to_string(),
                        sched.to_string(),
                        strip.to_string(),
                        r.commits.to_string(),
                        a.conflict.to_string(),
                        a.capacity.to_string(),
                        a.order_inversion.to_string(),
                        a.other.to_string(),
                        r.nonspec.to_string(),
                        r.max_retries().to_string(),
                    ])?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    emit(output, &String::from_utf8(bytes)?)?;
    Ok(code)
}

fn ordered(
    input: &str,
    threads: usize,
    seed: u64,
    timeout_ms: u64,
    report: Option<&Path>,
) -> Result<u8> {
    let p = program(input)?;
    let want = serial_digest(&p, seed)?;
    let r = run_ordered(&p, threads, seed, Duration::from_millis(timeout_ms))?;
    let doc = json!({
        "digest": r.memory.digest(),
        "serial_digest": want,
        "regions": r.regions.len(),
        "regions_overlap": r.regions_overlap(),
    });
    emit(report, &format!("{}\n", serde_json::to_string(&doc)?))?;
    if r.memory.digest() != want || r.regions_overlap() {
        eprintln!("soundness violation: ordered run does not match the serial run");
        return Ok(SOUNDNESS);
    }
    Ok(0)
}
