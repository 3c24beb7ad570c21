use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ste::htm::HtmConfig;
use ste::runtime::{ExecMode, RunConfig, SchedPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Exec {
    Threads,
    Sim,
}

/// Execution flags of `run`. Unset flags fall back to the `--config` file,
/// then to built-in defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct RunFlags {
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Strip scheduling policy: mono, lifo or rand:<seed>.
    #[arg(long)]
    pub sched: Option<SchedPolicy>,
    /// Overrides the strip size of every taskloop.
    #[arg(long)]
    pub strip: Option<i64>,
    #[command(flatten)]
    pub knobs: Knobs,
}

/// Emulator and executor flags shared by `run` and `bench`.
#[derive(Args, Clone, Debug, Default)]
pub struct Knobs {
    /// Conflict-detection granule in bytes.
    #[arg(long)]
    pub htm_granule: Option<usize>,
    /// Read-set capacity in granules.
    #[arg(long)]
    pub rs_cap: Option<usize>,
    /// Write-set capacity in granules.
    #[arg(long)]
    pub ws_cap: Option<usize>,
    /// Probability that a commit fails with an `other` abort.
    #[arg(long)]
    pub other_abort_prob: Option<f64>,
    /// Executor: OS threads or the seeded single-thread simulator.
    #[arg(long, value_enum)]
    pub exec: Option<Exec>,
    /// Plain-text key=value file with defaults for these flags.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

impl RunFlags {
    /// Fills unset flags from the `--config` file, if any.
    pub fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.knobs.config.take() else {
            return Ok(self);
        };
        let file = load_config(&path)?;
        self.threads = self.threads.or(file.threads);
        self.sched = self.sched.or(file.sched);
        self.strip = self.strip.or(file.strip);
        let (k, f) = (&mut self.knobs, file.knobs);
        k.htm_granule = k.htm_granule.or(f.htm_granule);
        k.rs_cap = k.rs_cap.or(f.rs_cap);
        k.ws_cap = k.ws_cap.or(f.ws_cap);
        k.other_abort_prob = k.other_abort_prob.or(f.other_abort_prob);
        k.exec = k.exec.or(f.exec);
        Ok(self)
    }

    pub fn run_config(&self, seed: u64, default_exec: Exec) -> Result<RunConfig> {
        let (d, k) = (HtmConfig::default(), &self.knobs);
        let htm = HtmConfig {
            granule_bytes: k.htm_granule.unwrap_or(d.granule_bytes),
            rs_cap: k.rs_cap.unwrap_or(d.rs_cap),
            ws_cap: k.ws_cap.unwrap_or(d.ws_cap),
            other_abort_prob: k.other_abort_prob.unwrap_or(d.other_abort_prob),
            seed,
            log_commits: false,
        };
        htm.check()?;
        let threads = self.threads.unwrap_or(RunConfig::default().threads);
        if threads < 1 {
            bail!("--threads must be at least 1");
        }
        if let Some(s) = self.strip {
            if s < 1 {
                bail!("--strip must be at least 1");
            }
        }
        let exec = match k.exec.unwrap_or(default_exec) {
            Exec::Threads => ExecMode::Threads,
            Exec::Sim => ExecMode::Sim { seed },
        };
        Ok(RunConfig {
            threads,
            sched: self.sched.unwrap_or(SchedPolicy::Monotonic),
            strip: self.strip,
            htm,
            seed,
            exec,
            trace: false,
        })
    }
}

fn load_config(path: &Path) -> Result<RunFlags> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

/// Parses `key = value` lines; `#` starts a comment. Keys are the long flag
/// names without dashes or with `_` in place of `-`.
pub fn parse_config(text: &str) -> Result<RunFlags> {
    let mut f = RunFlags::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value", n + 1);
        };
        let value = value.trim().trim_matches('"');
        let at = |e: anyhow::Error| e.context(format!("line {}", n + 1));
        match key.trim().replace('_', "-").as_str() {
            "threads" => f.threads = Some(num(value).map_err(at)?),
            "sched" => f.sched = Some(num(value).map_err(at)?),
            "strip" => f.strip = Some(num(value).map_err(at)?),
            "htm-granule" => f.knobs.htm_granule = Some(num(value).map_err(at)?),
            "rs-cap" => f.knobs.rs_cap = Some(num(value).map_err(at)?),
            "ws-cap" => f.knobs.ws_cap = Some(num(value).map_err(at)?),
            "other-abort-prob" => f.knobs.other_abort_prob = Some(num(value).map_err(at)?),
            "exec" => {
                f.knobs.exec =
                    Some(Exec::from_str(value, true).map_err(|e| at(anyhow::anyhow!(e)))?)
            }
            other => bail!("line {}: unknown key `{other}`", n + 1),
        }
    }
    Ok(f)
}

fn num<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value `{value}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let f =
            parse_config("# defaults\nthreads = 8\nsched=rand:7\nrs_cap = 16 # small\nexec=sim\n")
                .unwrap();
        assert_eq!(f.threads, Some(8));
        assert_eq!(f.sched, Some(SchedPolicy::NonMonotonicRandom(7)));
        assert_eq!(f.knobs.rs_cap, Some(16));
        assert_eq!(f.knobs.exec, Some(Exec::Sim));
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("threads").is_err());
        assert!(parse_config("threads = x").is_err());
    }
}
