//! Execution of transformed programs: a serial reference interpreter, a
//! bytecode VM for strip bodies, the speculative task runtime and the
//! `ordered` baseline.

mod interp;
mod ordered;
mod report;
mod sched;
mod tls;
mod vm;

pub use interp::{eval_expr, interpret, interpret_with, Env, LoopHook, Store};
pub use ordered::{run_ordered, OrderedReport, RegionSpan};
pub use report::{AbortCounts, RunReport, TraceEvent, TraceOutcome};
pub use sched::{Dispatcher, SchedPolicy};
pub use tls::{run_taskloop_tls, run_transformed, ExecMode, RunConfig};
pub use vm::{compile_strip, Event, Frame, Step, StripCode};

use crate::htm::HtmError;
use crate::ir::{BinOp, SourceSpan, UnOp};
use crate::transform::TransformError;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("{span}: division by zero")]
    DivisionByZero { span: SourceSpan },
    #[error("{span}: index {index} out of bounds for `{var}` of length {len}")]
    IndexOutOfBounds {
        var: String,
        index: i64,
        len: usize,
        span: SourceSpan,
    },
    #[error("unknown variable `{0}`")]
    Unbound(String),
    #[error("cannot execute: {0}")]
    Unsupported(String),
    #[error("ordered loop deadlocked at iteration {iteration}")]
    DeadlockDetected { iteration: i64 },
    #[error(transparent)]
    Htm(#[from] HtmError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Deterministic pseudo-random value in `0..=i64::MAX` for input `x`.
pub fn rnd(seed: u64, x: i64) -> i64 {
    let mut z = seed
        .wrapping_add((x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 1) as i64
}

/// `None` on division or remainder by zero.
pub fn apply_bin(op: BinOp, a: i64, b: i64) -> Option<i64> {
    use BinOp::*;
    Some(match op {
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Mul => a.wrapping_mul(b),
        Div => {
            if b == 0 {
                return None;
            }
            a.wrapping_div(b)
        }
        Rem => {
            if b == 0 {
                return None;
            }
            a.wrapping_rem(b)
        }
        Shl => a.wrapping_shl(b as u32),
        Shr => a.wrapping_shr(b as u32),
        BitAnd => a & b,
        BitOr => a | b,
        BitXor => a ^ b,
        Lt => (a < b) as i64,
        Le => (a <= b) as i64,
        Gt => (a > b) as i64,
        Ge => (a >= b) as i64,
        Eq => (a == b) as i64,
        Ne => (a != b) as i64,
        And => (a != 0 && b != 0) as i64,
        Or => (a != 0 || b != 0) as i64,
    })
}

pub fn apply_un(op: UnOp, a: i64) -> i64 {
    match op {
        UnOp::Neg => a.wrapping_neg(),
        UnOp::Not => (a == 0) as i64,
        UnOp::BitNot => !a,
    }
}
