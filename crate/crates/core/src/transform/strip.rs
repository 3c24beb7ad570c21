use super::TransformError;
use crate::ir::{rename_in_body, BinOp, Expr, For, SourceSpan, Stmt};

/// Lower and upper bound of a canonical `for (i = lo; i < hi; i++)` loop.
pub fn canonical_bounds(l: &For) -> Result<(&Expr, &Expr), TransformError> {
    let non_canonical = |why: &str| TransformError::NonCanonicalLoop {
        span: l.span.clone(),
        reason: why.to_string(),
    };
    if l.unit_stride() != Some(1) {
        return Err(non_canonical("step must be `i++`"));
    }
    let Expr::Binary(BinOp::Lt, lhs, hi) = &l.cond else {
        return Err(non_canonical("condition must be `i < bound`"));
    };
    if !matches!(&**lhs, Expr::Var(v) if *v == l.induction) || hi.mentions(&l.induction) {
        return Err(non_canonical("condition must be `i < bound`"));
    }
    if l.init.mentions(&l.induction) {
        return Err(non_canonical(
            "initial value refers to the induction variable",
        ));
    }
    Ok((&l.init, hi))
}

/// Splits a canonical loop into strips of `strip_size` iterations.
///
/// The result is `for (i = lo; i < hi; i += S) { for (ii = i; ii < hi && ii - i < S; ii++) body }`
/// with `i` renamed to `inner` inside `body`. The outer loop keeps the original directive.
pub fn strip_mine(l: &For, strip_size: i64, inner: &str) -> Result<For, TransformError> {
    let (lo, hi) = canonical_bounds(l)?;
    let i = l.induction.as_str();
    let mut body = l.body.clone();
    rename_in_body(&mut body, i, inner);
    let inner_loop = For {
        induction: inner.to_string(),
        init: Expr::var(i),
        cond: Expr::bin(
            BinOp::And,
            Expr::bin(BinOp::Lt, Expr::var(inner), hi.clone()),
            Expr::bin(
                BinOp::Lt,
                Expr::bin(BinOp::Sub, Expr::var(inner), Expr::var(i)),
                Expr::Int(strip_size),
            ),
        ),
        step: Expr::bin(BinOp::Add, Expr::var(inner), Expr::Int(1)),
        body,
        directive: None,
        span: SourceSpan::synthetic(),
    };
    Ok(For {
        induction: i.to_string(),
        init: lo.clone(),
        cond: l.cond.clone(),
        step: Expr::bin(BinOp::Add, Expr::var(i), Expr::Int(strip_size)),
        body: vec![Stmt::For(inner_loop)],
        directive: l.directive.clone(),
        span: l.span.clone(),
    })
}
