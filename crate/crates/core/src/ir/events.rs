//! Statement-event list driving the copy-back of privatized arrays.

use std::collections::HashMap;

use super::{Expr, For, LValue, Stmt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteKind {
    Write,
    IfWrite,
}

/// One rewritten write site of a privatized array.
#[derive(Clone, Debug, PartialEq)]
pub struct WriteEvent {
    /// Shared array.
    pub var: String,
    /// Strip-local copy the site now writes.
    pub private: String,
    /// Index into the shared array, in terms of the strip-mined loop's inductions.
    pub index: Expr,
    pub kind: WriteKind,
    /// Predicate array, for `IfWrite` sites.
    pub pred: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CopybackEvent {
    For {
        induction: String,
        init: Expr,
        cond: Expr,
        step: Expr,
        counter: String,
    },
    EndFor,
    Write(WriteEvent),
}

/// Builds the event list for a rewritten strip loop.
///
/// `counters` maps each counted loop's induction variable to its counter name;
/// only counted loops produce `For`/`EndFor` events. `sites` maps private copy
/// names to the write they replace. Events follow source order.
pub fn collect_copyback_events(
    inner: &For,
    counters: &HashMap<String, String>,
    sites: &HashMap<String, WriteEvent>,
) -> Vec<CopybackEvent> {
    let mut out = Vec::new();
    visit_for(inner, counters, sites, &mut out);
    out
}

fn visit_for(
    l: &For,
    counters: &HashMap<String, String>,
    sites: &HashMap<String, WriteEvent>,
    out: &mut Vec<CopybackEvent>,
) {
    let counted = counters.get(&l.induction);
    if let Some(counter) = counted {
        out.push(CopybackEvent::For {
            induction: l.induction.clone(),
            init: l.init.clone(),
            cond: l.cond.clone(),
            step: l.step.clone(),
            counter: counter.clone(),
        });
    }
    visit_block(&l.body, counters, sites, out);
    if counted.is_some() {
        out.push(CopybackEvent::EndFor);
    }
}

fn visit_block(
    body: &[Stmt],
    counters: &HashMap<String, String>,
    sites: &HashMap<String, WriteEvent>,
    out: &mut Vec<CopybackEvent>,
) {
    for s in body {
        match s {
            Stmt::For(l) => visit_for(l, counters, sites, out),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                visit_block(then_body, counters, sites, out);
                visit_block(else_body, counters, sites, out);
            }
            Stmt::Assign {
                target: LValue::Index(name, _),
                ..
            } => {
                if let Some(ev) = sites.get(name) {
                    out.push(CopybackEvent::Write(ev.clone()));
                }
            }
            _ => {}
        }
    }
}

/// Checks the nesting discipline: balanced, never pops an empty stack, and
/// writes only appear inside a `For`.
pub fn is_balanced(events: &[CopybackEvent]) -> bool {
    let mut depth = 0usize;
    for e in events {
        match e {
            CopybackEvent::For { .. } => depth += 1,
            CopybackEvent::EndFor => {
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
            CopybackEvent::Write(_) => {
                if depth == 0 {
                    return false;
                }
            }
        }
    }
    depth == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_checks() {
        let f = CopybackEvent::For {
            induction: "ii".into(),
            init: Expr::Int(0),
            cond: Expr::Int(0),
            step: Expr::Int(0),
            counter: "count_1".into(),
        };
        assert!(is_balanced(&[f.clone(), CopybackEvent::EndFor]));
        assert!(!is_balanced(&[CopybackEvent::EndFor]));
        assert!(!is_balanced(&[f]));
        assert!(is_balanced(&[]));
    }
}
