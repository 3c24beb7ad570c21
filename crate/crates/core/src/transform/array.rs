use std::collections::{BTreeMap, BTreeSet};

use super::naming::{Namer, PrivateArray};
use super::{TransformError, TransformSettings};
use crate::ir::{
    stmt_exprs, walk_stmts, CopybackEvent, Expr, For, LValue, LocalDecl, LocalLen, Stmt,
    TlsClauseKind, WriteEvent, WriteKind,
};

/// State shared by the privatizations of all arrays of one loop.
#[derive(Debug, Default)]
pub(crate) struct ArrayContext {
    /// Counter names keyed by preorder `for` number (strip loop = 1).
    pub counters: BTreeMap<usize, String>,
    /// Induction name of every numbered `for`.
    pub inductions: BTreeMap<usize, String>,
    pub arrays: Vec<PrivateArray>,
    /// Write events keyed by private copy name.
    pub sites: BTreeMap<String, WriteEvent>,
}

struct Site {
    path: Vec<usize>,
    index: Expr,
    if_write: bool,
}

struct Key {
    for_id: usize,
    index: Expr,
    array: usize,
}

/// Speculative write-privatization of one array.
///
/// Returns `Ok(false)` when the array is also read in the loop; such arrays
/// stay shared and are accessed speculatively in place.
pub(crate) fn spec_private_array(
    inner: &mut For,
    var: &str,
    settings: &TransformSettings,
    namer: &mut Namer,
    ctx: &mut ArrayContext,
) -> Result<bool, TransformError> {
    let mut read = false;
    walk_stmts(&inner.body, &mut |s| {
        for e in stmt_exprs(s) {
            read |= e.mentions(var);
        }
    });
    if read || inner.cond.mentions(var) {
        return Ok(false);
    }

    let mut written = BTreeSet::new();
    walk_stmts(&inner.body, &mut |s| {
        if let Stmt::Assign { target, .. } = s {
            written.insert(target.name().to_string());
        }
    });

    let mut sites = Vec::new();
    let mut finder = SiteFinder {
        var,
        written: &written,
        next_id: 1,
        sites: &mut sites,
        inductions: &mut ctx.inductions,
    };
    finder.visit_for(inner, &mut Vec::new(), false)?;

    let mut keys: Vec<Key> = Vec::new();
    for site in &sites {
        let for_id = *site.path.last().expect("site outside any loop");
        for &id in &site.path {
            ctx.counters
                .entry(id)
                .or_insert_with(|| namer.fresh(&format!("count_{id}")));
        }
        let existing = keys
            .iter()
            .find(|k| k.for_id == for_id && k.index == site.index)
            .map(|k| k.array);
        let array = match existing {
            Some(a) => a,
            None => {
                let ordinal = ctx.arrays.len() + 1;
                ctx.arrays.push(PrivateArray {
                    var: var.to_string(),
                    private: namer.fresh(&format!("{var}L_{for_id}_{ordinal}")),
                    counter: ctx.counters[&for_id].clone(),
                    pred: None,
                    len: (for_id == 1).then_some(settings.strip_size as usize),
                });
                keys.push(Key {
                    for_id,
                    index: site.index.clone(),
                    array: ctx.arrays.len() - 1,
                });
                ctx.arrays.len() - 1
            }
        };
        if site.if_write && ctx.arrays[array].pred.is_none() {
            let ordinal = array + 1;
            ctx.arrays[array].pred = Some(namer.fresh(&format!("pred_{var}_{ordinal}")));
        }
    }

    let mut next_id = 1;
    rewrite_for(inner, var, &keys, ctx, &mut next_id);
    for k in &keys {
        let a = &ctx.arrays[k.array];
        ctx.sites.insert(
            a.private.clone(),
            WriteEvent {
                var: var.to_string(),
                private: a.private.clone(),
                index: k.index.clone(),
                kind: if a.pred.is_some() {
                    WriteKind::IfWrite
                } else {
                    WriteKind::Write
                },
                pred: a.pred.clone(),
            },
        );
    }
    Ok(true)
}

struct SiteFinder<'a> {
    var: &'a str,
    written: &'a BTreeSet<String>,
    next_id: usize,
    sites: &'a mut Vec<Site>,
    inductions: &'a mut BTreeMap<usize, String>,
}

impl SiteFinder<'_> {
    fn unsupported(&self, reason: &str) -> TransformError {
        TransformError::UnsupportedAccess {
            var: self.var.to_string(),
            reason: reason.to_string(),
        }
    }

    fn mentions_written(&self, e: &Expr) -> bool {
        let mut hit = false;
        e.for_each_var(&mut |v| hit |= self.written.contains(v));
        hit
    }

    fn visit_for(
        &mut self,
        l: &For,
        path: &mut Vec<usize>,
        under_if: bool,
    ) -> Result<(), TransformError> {
        let id = self.next_id;
        self.next_id += 1;
        self.inductions.insert(id, l.induction.clone());
        path.push(id);
        let before = self.sites.len();
        self.visit_block(&l.body, path, false)?;
        path.pop();
        if self.sites.len() > before && id != 1 {
            if under_if {
                return Err(self.unsupported("privatized write in a loop nested under `if`"));
            }
            if [&l.init, &l.cond, &l.step]
                .into_iter()
                .any(|e| self.mentions_written(e))
            {
                return Err(
                    self.unsupported("nested loop bounds depend on values written in the loop")
                );
            }
        }
        Ok(())
    }

    fn visit_block(
        &mut self,
        body: &[Stmt],
        path: &mut Vec<usize>,
        under_if: bool,
    ) -> Result<(), TransformError> {
        let mut annotated_if_write = false;
        for s in body {
            match s {
                Stmt::PragmaTls(c) => {
                    if c.target == self.var && c.kind == TlsClauseKind::IfWrite {
                        annotated_if_write = true;
                    }
                    continue;
                }
                Stmt::Assign {
                    target: LValue::Index(name, index),
                    ..
                } if name == self.var => {
                    if self.mentions_written(index) {
                        return Err(self.unsupported("index depends on values written in the loop"));
                    }
                    self.sites.push(Site {
                        path: path.clone(),
                        index: index.clone(),
                        if_write: annotated_if_write || under_if,
                    });
                }
                Stmt::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    self.visit_block(then_body, path, true)?;
                    self.visit_block(else_body, path, true)?;
                }
                Stmt::For(l) => self.visit_for(l, path, under_if)?,
                _ => {}
            }
            annotated_if_write = false;
        }
        Ok(())
    }
}

/// Redirects the writes of `var` to the private copies.
fn rewrite_for(l: &mut For, var: &str, keys: &[Key], ctx: &ArrayContext, next_id: &mut usize) {
    let id = *next_id;
    *next_id += 1;
    rewrite_block(&mut l.body, var, keys, ctx, id, next_id);
}

fn rewrite_block(
    body: &mut Vec<Stmt>,
    var: &str,
    keys: &[Key],
    ctx: &ArrayContext,
    for_id: usize,
    next_id: &mut usize,
) {
    let mut out = Vec::with_capacity(body.len());
    for mut s in std::mem::take(body) {
        match &mut s {
            Stmt::Assign {
                target: LValue::Index(name, index),
                ..
            } if name == var => {
                let key = keys
                    .iter()
                    .find(|k| k.for_id == for_id && k.index == *index)
                    .expect("site recorded in the first pass");
                let a = &ctx.arrays[key.array];
                let slot = Expr::var(a.counter.clone());
                if let Some(pred) = &a.pred {
                    out.push(Stmt::assign(
                        LValue::Index(pred.clone(), slot.clone()),
                        Expr::Int(1),
                    ));
                }
                *name = a.private.clone();
                *index = slot;
            }
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                rewrite_block(then_body, var, keys, ctx, for_id, next_id);
                rewrite_block(else_body, var, keys, ctx, for_id, next_id);
            }
            Stmt::For(l) => rewrite_for(l, var, keys, ctx, next_id),
            _ => {}
        }
        out.push(s);
    }
    *body = out;
}

/// Prepends `count_k++` to every counted loop. Runs once, after all arrays.
pub(crate) fn insert_counter_increments(inner: &mut For, ctx: &ArrayContext) {
    fn visit(l: &mut For, ctx: &ArrayContext, next_id: &mut usize) {
        let id = *next_id;
        *next_id += 1;
        visit_block(&mut l.body, ctx, next_id);
        if let Some(c) = ctx.counters.get(&id) {
            l.body.insert(0, increment(c));
        }
    }
    fn visit_block(body: &mut [Stmt], ctx: &ArrayContext, next_id: &mut usize) {
        for s in body {
            match s {
                Stmt::For(l) => visit(l, ctx, next_id),
                Stmt::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    visit_block(then_body, ctx, next_id);
                    visit_block(else_body, ctx, next_id);
                }
                _ => {}
            }
        }
    }
    visit(inner, ctx, &mut 1);
}

fn increment(counter: &str) -> Stmt {
    Stmt::assign_scalar(
        counter,
        Expr::bin(crate::ir::BinOp::Add, Expr::var(counter), Expr::Int(1)),
    )
}

/// Local declarations for the private copies and predicate arrays.
pub(crate) fn array_locals(ctx: &ArrayContext) -> Vec<LocalDecl> {
    let counters = ctx.counters.values().map(|c| LocalDecl {
        name: c.clone(),
        array: None,
        init: Some(Expr::Int(-1)),
    });
    let len = |a: &PrivateArray| Some(a.len.map_or(LocalLen::Dynamic, LocalLen::Fixed));
    let copies = ctx.arrays.iter().map(|a| LocalDecl {
        name: a.private.clone(),
        array: len(a),
        init: None,
    });
    let preds = ctx.arrays.iter().filter_map(|a| {
        a.pred.as_ref().map(|p| LocalDecl {
            name: p.clone(),
            array: len(a),
            init: None,
        })
    });
    counters.chain(copies).chain(preds).collect()
}

/// Rebuilds the loop nest that copies private arrays back after commit.
///
/// Loops are pushed on a stack as their `For` event arrives and attached to
/// the enclosing loop (or emitted) at the matching `EndFor`. Each write copies
/// the slot selected by the counter of the loop on top of the stack.
pub fn emit_copyback(events: &[CopybackEvent]) -> Vec<Stmt> {
    let mut out = Vec::new();
    let mut stack: Vec<(For, String)> = Vec::new();
    for ev in events {
        match ev {
            CopybackEvent::For {
                induction,
                init,
                cond,
                step,
                counter,
            } => {
                let l = For {
                    induction: induction.clone(),
                    init: init.clone(),
                    cond: cond.clone(),
                    step: step.clone(),
                    body: vec![increment(counter)],
                    directive: None,
                    span: Default::default(),
                };
                stack.push((l, counter.clone()));
            }
            CopybackEvent::EndFor => {
                let (l, _) = stack.pop().expect("unbalanced copy-back events");
                match stack.last_mut() {
                    Some((top, _)) => top.body.push(Stmt::For(l)),
                    None => out.push(Stmt::For(l)),
                }
            }
            CopybackEvent::Write(w) => {
                let (top, counter) = stack.last_mut().expect("write outside a loop");
                let copy = Stmt::assign(
                    LValue::Index(w.var.clone(), w.index.clone()),
                    Expr::index(w.private.clone(), Expr::var(counter.clone())),
                );
                let stmt = match (&w.kind, &w.pred) {
                    (WriteKind::IfWrite, Some(p)) => Stmt::if_then(
                        Expr::index(p.clone(), Expr::var(counter.clone())),
                        vec![copy],
                    ),
                    _ => copy,
                };
                top.body.push(stmt);
            }
        }
    }
    out
}

/// Counter reset statements that precede the copy-back nest.
pub(crate) fn counter_resets(ctx: &ArrayContext) -> Vec<Stmt> {
    ctx.counters
        .values()
        .map(|c| Stmt::assign_scalar(c.clone(), Expr::Int(-1)))
        .collect()
}

/// Induction name → counter name, the form expected by
/// [`collect_copyback_events`](crate::ir::collect_copyback_events).
pub(crate) fn counters_by_induction(
    ctx: &ArrayContext,
) -> std::collections::HashMap<String, String> {
    ctx.counters
        .iter()
        .map(|(id, c)| (ctx.inductions[id].clone(), c.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::events::is_balanced;
    use crate::ir::BinOp;

    fn for_ev(ind: &str, counter: &str) -> CopybackEvent {
        CopybackEvent::For {
            induction: ind.into(),
            init: Expr::Int(0),
            cond: Expr::bin(BinOp::Lt, Expr::var(ind), Expr::Int(3)),
            step: Expr::bin(BinOp::Add, Expr::var(ind), Expr::Int(1)),
            counter: counter.into(),
        }
    }

    fn write_ev(var: &str, private: &str, pred: Option<&str>) -> CopybackEvent {
        CopybackEvent::Write(WriteEvent {
            var: var.into(),
            private: private.into(),
            index: Expr::var("j"),
            kind: if pred.is_some() {
                WriteKind::IfWrite
            } else {
                WriteKind::Write
            },
            pred: pred.map(Into::into),
        })
    }

    #[test]
    fn empty_loop_is_still_emitted() {
        let events = [for_ev("ii", "count_1"), CopybackEvent::EndFor];
        let out = emit_copyback(&events);
        assert_eq!(out.len(), 1);
        let Stmt::For(l) = &out[0] else { panic!() };
        assert_eq!(l.body, vec![increment("count_1")]);
    }

    #[test]
    fn nested_write_lands_in_inner_loop() {
        let events = [
            for_ev("ii", "count_1"),
            for_ev("j", "count_2"),
            write_ev("A", "AL_2_1", Some("pred_A_1")),
            CopybackEvent::EndFor,
            CopybackEvent::EndFor,
        ];
        assert!(is_balanced(&events));
        let out = emit_copyback(&events);
        let Stmt::For(outer) = &out[0] else { panic!() };
        assert_eq!(outer.body.len(), 2);
        let Stmt::For(inner) = &outer.body[1] else {
            panic!()
        };
        assert_eq!(inner.induction, "j");
        let Stmt::If {
            cond, then_body, ..
        } = &inner.body[1]
        else {
            panic!()
        };
        assert_eq!(*cond, Expr::index("pred_A_1", Expr::var("count_2")));
        assert_eq!(
            then_body[0],
            Stmt::assign(
                LValue::Index("A".into(), Expr::var("j")),
                Expr::index("AL_2_1", Expr::var("count_2"))
            )
        );
    }
}
