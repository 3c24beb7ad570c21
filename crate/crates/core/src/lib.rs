//! Speculative task execution for pragma-annotated loops.

pub mod frontend;
pub mod htm;
pub mod ir;
pub mod kernels;
pub mod runtime;
pub mod transform;
