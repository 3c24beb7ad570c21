//! Source-to-source rewrite of `taskloop tls` loops into strip-mined tasks
//! with explicit commit plumbing, speculative privatization and reductions.

mod array;
mod naming;
mod reduction;
mod scalar;
mod strip;

use std::collections::{BTreeMap, HashMap};

pub use array::emit_copyback;
pub use naming::{PrivateArray, PrivateScalar, TransformNaming};
pub use reduction::ReductionPlan;
pub use strip::{canonical_bounds, strip_mine};

use crate::ir::{
    collect_copyback_events, render::render_program, validate, CopybackEvent, Expr, For, Intrinsic,
    LocalDecl, LoopDirective, Program, ReductionOp, SourceSpan, Stmt, TaskloopDirective,
    TlsClauseKind, VarKind,
};
use naming::Namer;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("{span}: loop is not canonical: {reason}")]
    NonCanonicalLoop { span: SourceSpan, reason: String },
    #[error("spec_private target `{var}` is not a declared scalar or array")]
    UnsupportedTarget { var: String },
    #[error("`{var}`: {reason}")]
    MissingAccessClause { var: String, reason: String },
    #[error("unsupported access to `{var}`: {reason}")]
    UnsupportedAccess { var: String, reason: String },
    #[error("{span}: update of `{var}` does not match `{var} = {var} {} expr`", op.symbol())]
    PatternMismatch {
        var: String,
        op: ReductionOp,
        span: SourceSpan,
    },
    #[error("program is not valid:\n{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransformOptions {
    /// Replaces the strip size written in every `tls(...)` clause.
    pub strip_override: Option<i64>,
}

pub(crate) struct TransformSettings {
    pub strip_size: i64,
}

/// Pieces of the strip body collected while rewriting the inner loop.
#[derive(Default)]
pub(crate) struct StripParts {
    pub locals: Vec<LocalDecl>,
    pub reduction_locals: Vec<LocalDecl>,
    /// Runs inside the transaction, before the inner loop.
    pub entry: Vec<Stmt>,
    /// Scalar copy-backs, right after the commit.
    pub after_end: Vec<Stmt>,
    pub merges: Vec<Stmt>,
}

/// What the runtime needs to know about one rewritten loop.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopPlan {
    pub naming: TransformNaming,
    pub strip_size: i64,
    pub init: Expr,
    pub bound: Expr,
    pub reductions: Vec<ReductionPlan>,
    /// Arrays listed in spec_private that are also read, left shared.
    pub shared_arrays: Vec<String>,
    /// Scalars each task reads once at creation: firstprivate and loop-bound variables.
    pub snapshot: Vec<String>,
    pub copyback_events: Vec<CopybackEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformedProgram {
    pub base: Program,
    /// One entry per rewritten loop, in program order.
    pub loops: Vec<LoopPlan>,
}

impl TransformedProgram {
    pub fn render(&self) -> String {
        render_program(&self.base)
    }
}

/// Rewrites every `taskloop tls` loop of `program`.
pub fn apply_taskloop_tls(program: &Program) -> Result<TransformedProgram, TransformError> {
    apply_taskloop_tls_with(program, TransformOptions::default())
}

pub fn apply_taskloop_tls_with(
    program: &Program,
    options: TransformOptions,
) -> Result<TransformedProgram, TransformError> {
    let report = validate(program);
    if !report.is_ok() {
        return Err(TransformError::Invalid(report.to_string()));
    }
    if let Some(s) = options.strip_override {
        if s < 1 {
            return Err(TransformError::Invalid("strip_size must be >= 1".into()));
        }
    }
    let mut t = Transformer {
        program,
        options,
        namer: Namer::new(program.identifiers()),
        loops: Vec::new(),
    };
    let body = t.block(&program.body)?;
    Ok(TransformedProgram {
        base: Program {
            globals: program.globals.clone(),
            body,
        },
        loops: t.loops,
    })
}

struct Transformer<'a> {
    program: &'a Program,
    options: TransformOptions,
    namer: Namer,
    loops: Vec<LoopPlan>,
}

impl Transformer<'_> {
    fn block(&mut self, body: &[Stmt]) -> Result<Vec<Stmt>, TransformError> {
        let mut out = Vec::with_capacity(body.len());
        for s in body {
            match s {
                Stmt::For(l) if l.taskloop().is_some_and(TaskloopDirective::is_tls) => {
                    let (stmts, plan) = self.tls_loop(l)?;
                    out.extend(stmts);
                    self.loops.push(plan);
                }
                Stmt::For(l) => {
                    let mut l = l.clone();
                    l.body = self.block(&l.body)?;
                    out.push(Stmt::For(l));
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                } => out.push(Stmt::If {
                    cond: cond.clone(),
                    then_body: self.block(then_body)?,
                    else_body: self.block(else_body)?,
                    span: span.clone(),
                }),
                other => out.push(other.clone()),
            }
        }
        Ok(out)
    }

    fn tls_loop(&mut self, l: &For) -> Result<(Vec<Stmt>, LoopPlan), TransformError> {
        let d = l.taskloop().expect("caller checked the directive");
        let strip_size = self
            .options
            .strip_override
            .or(d.strip_size)
            .expect("tls loop has a strip size");
        let (init, bound) = canonical_bounds(l)?;
        let (init, bound) = (init.clone(), bound.clone());

        let cursor = self.namer.fresh("next_strip_to_commit");
        let inner_name = self.namer.fresh("ii");
        let speculative = self.namer.fresh("speculative");

        let mut outer = strip_mine(l, strip_size, &inner_name)?;
        let Some(Stmt::For(mut inner)) = outer.body.pop() else {
            unreachable!("strip_mine yields a single inner loop")
        };

        let mut clauses: BTreeMap<String, Vec<TlsClauseKind>> = BTreeMap::new();
        crate::ir::walk_stmts(&inner.body, &mut |s| {
            if let Stmt::PragmaTls(c) = s {
                clauses.entry(c.target.clone()).or_default().push(c.kind);
            }
        });

        let settings = TransformSettings { strip_size };
        let mut parts = StripParts::default();
        let mut scalars = Vec::new();
        let mut actx = array::ArrayContext::default();
        let mut shared_arrays = Vec::new();
        for var in &d.spec_private {
            let kinds = clauses.get(var).cloned().unwrap_or_default();
            match self.program.global(var).map(|g| g.kind) {
                Some(VarKind::Scalar) => {
                    scalars.push(scalar::spec_private_scalar(
                        &mut inner,
                        var,
                        &kinds,
                        &mut self.namer,
                        &mut parts,
                    )?);
                }
                Some(VarKind::Array(_)) => {
                    if kinds.is_empty() {
                        return Err(TransformError::MissingAccessClause {
                            var: var.clone(),
                            reason: "no write/if_write clause".into(),
                        });
                    }
                    let privatized = array::spec_private_array(
                        &mut inner,
                        var,
                        &settings,
                        &mut self.namer,
                        &mut actx,
                    )?;
                    if !privatized {
                        shared_arrays.push(var.clone());
                    }
                }
                None => return Err(TransformError::UnsupportedTarget { var: var.clone() }),
            }
        }

        let mut copyback_events = Vec::new();
        let mut copyback = Vec::new();
        if !actx.counters.is_empty() {
            array::insert_counter_increments(&mut inner, &actx);
            let counters = array::counters_by_induction(&actx);
            let sites: HashMap<_, _> = actx.sites.clone().into_iter().collect();
            copyback_events = collect_copyback_events(&inner, &counters, &sites);
            copyback = array::counter_resets(&actx);
            copyback.extend(emit_copyback(&copyback_events));
        }

        let mut reductions = Vec::new();
        for r in &d.spec_reduction {
            for var in &r.names {
                reductions.push(reduction::spec_reduction(
                    &mut inner,
                    var,
                    r.op,
                    &mut self.namer,
                    &mut parts,
                )?);
            }
        }
        remove_tls_pragmas(&mut inner.body);

        let mut body: Vec<Stmt> = Vec::new();
        let locals = parts
            .locals
            .into_iter()
            .chain(parts.reduction_locals)
            .chain(array::array_locals(&actx))
            .chain([LocalDecl {
                name: speculative.clone(),
                array: None,
                init: None,
            }]);
        body.extend(locals.map(Stmt::Local));
        let strip_start = Expr::var(l.induction.clone());
        body.push(Stmt::Intrinsic(Intrinsic::Begin {
            flag: speculative.clone(),
            cursor: cursor.clone(),
            strip_start: strip_start.clone(),
        }));
        body.extend(parts.entry);
        body.push(Stmt::For(inner));
        body.push(Stmt::Intrinsic(Intrinsic::End {
            flag: speculative.clone(),
            cursor: cursor.clone(),
            strip_start,
        }));
        body.extend(parts.after_end);
        body.extend(parts.merges);
        body.extend(copyback);
        body.push(Stmt::Intrinsic(Intrinsic::CursorAdvance {
            cursor: cursor.clone(),
            step: strip_size,
        }));
        outer.body = body;

        let mut shared = d.shared.clone();
        let reduction_names = d.spec_reduction.iter().flat_map(|r| r.names.iter());
        for n in d.spec_private.iter().chain(reduction_names) {
            if !shared.contains(n) {
                shared.push(n.clone());
            }
        }
        outer.directive = Some(LoopDirective::Taskloop(TaskloopDirective {
            strip_size: None,
            grainsize: Some(1),
            spec_private: Vec::new(),
            spec_reduction: Vec::new(),
            firstprivate: d.firstprivate.clone(),
            shared,
            span: d.span.clone(),
        }));

        let mut snapshot = d.firstprivate.clone();
        bound.for_each_var(&mut |v| {
            let scalar = self.program.global(v).is_some_and(|g| !g.is_array());
            if scalar && !snapshot.iter().any(|s| s == v) {
                snapshot.push(v.to_string());
            }
        });

        let plan = LoopPlan {
            naming: TransformNaming {
                cursor: cursor.clone(),
                inner: inner_name,
                speculative,
                counters: actx.counters.values().cloned().collect(),
                scalars,
                arrays: actx.arrays,
            },
            strip_size,
            init: init.clone(),
            bound,
            reductions,
            shared_arrays,
            snapshot,
            copyback_events,
        };
        let stmts = vec![
            Stmt::Intrinsic(Intrinsic::CursorInit {
                cursor,
                value: init,
            }),
            Stmt::For(outer),
        ];
        Ok((stmts, plan))
    }
}

fn remove_tls_pragmas(body: &mut Vec<Stmt>) {
    body.retain(|s| !matches!(s, Stmt::PragmaTls(_)));
    for s in body {
        match s {
            Stmt::For(l) => remove_tls_pragmas(&mut l.body),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                remove_tls_pragmas(then_body);
                remove_tls_pragmas(else_body);
            }
            _ => {}
        }
    }
}
