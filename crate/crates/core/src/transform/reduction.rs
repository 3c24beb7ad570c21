use super::naming::Namer;
use super::{StripParts, TransformError};
use crate::ir::{
    stmt_exprs, walk_stmts, walk_stmts_mut, BinOp, Expr, For, LValue, LocalDecl, ReductionOp, Stmt,
};

/// Strip-local accumulator for one `spec_reduction` variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionPlan {
    pub op: ReductionOp,
    pub var: String,
    pub private: String,
    pub identity: i64,
}

/// Returns the operand `e` of an update `var = var <op> e`.
fn update_operand<'a>(target: &LValue, value: &'a Expr, var: &str, op: BinOp) -> Option<&'a Expr> {
    if !matches!(target, LValue::Scalar(n) if n == var) {
        return None;
    }
    match value {
        Expr::Binary(o, l, r) if *o == op && matches!(&**l, Expr::Var(v) if v == var) => {
            (!r.mentions(var)).then_some(&**r)
        }
        _ => None,
    }
}

pub(crate) fn spec_reduction(
    inner: &mut For,
    var: &str,
    op: ReductionOp,
    namer: &mut Namer,
    parts: &mut StripParts,
) -> Result<ReductionPlan, TransformError> {
    let bin = op.bin_op();
    let mut bad = None;
    walk_stmts(&inner.body, &mut |s| {
        if bad.is_some() {
            return;
        }
        if let Stmt::Assign { target, value, .. } = s {
            if update_operand(target, value, var, bin).is_some() {
                return;
            }
            if target.name() == var {
                bad = Some(s.span());
                return;
            }
        }
        if stmt_exprs(s).iter().any(|e| e.mentions(var)) {
            bad = Some(s.span());
        }
    });
    if let Some(span) = bad {
        return Err(TransformError::PatternMismatch {
            var: var.to_string(),
            op,
            span,
        });
    }

    let private = namer.fresh(&format!("{var}L"));
    walk_stmts_mut(&mut inner.body, &mut |s| {
        if let Stmt::Assign { target, value, .. } = s {
            if let Some(e) = update_operand(target, value, var, bin) {
                *value = Expr::bin(bin, Expr::var(private.clone()), e.clone());
                *target = LValue::Scalar(private.clone());
            }
        }
    });

    let identity = op.identity();
    parts.reduction_locals.push(LocalDecl {
        name: private.clone(),
        array: None,
        init: Some(Expr::Int(identity)),
    });
    // `-` accumulates the subtracted amounts, so the merge adds them.
    let merge_op = if op == ReductionOp::Sub {
        BinOp::Add
    } else {
        bin
    };
    parts.merges.push(Stmt::assign_scalar(
        var,
        Expr::bin(merge_op, Expr::var(var), Expr::var(private.clone())),
    ));
    Ok(ReductionPlan {
        op,
        var: var.to_string(),
        private,
        identity,
    })
}
