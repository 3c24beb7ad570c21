use super::naming::{Namer, PrivateScalar};
use super::{StripParts, TransformError};
use crate::ir::{
    rename_in_body, writes_var, Expr, For, LValue, LocalDecl, Stmt, TlsClauseKind, UnOp,
};

/// Speculative privatization of one scalar.
///
/// Replaces `var` by a strip-local copy in the strip loop, wires up the read
/// and written flags requested by the clauses and queues the copy-back that
/// runs after the strip commits.
pub(crate) fn spec_private_scalar(
    inner: &mut For,
    var: &str,
    clauses: &[TlsClauseKind],
    namer: &mut Namer,
    parts: &mut StripParts,
) -> Result<PrivateScalar, TransformError> {
    let has = |k: TlsClauseKind| clauses.contains(&k);
    let (read, if_read) = (has(TlsClauseKind::Read), has(TlsClauseKind::IfRead));
    let (write, if_write) = (has(TlsClauseKind::Write), has(TlsClauseKind::IfWrite));
    if clauses.is_empty() {
        return Err(TransformError::MissingAccessClause {
            var: var.to_string(),
            reason: "no read/if_read or write/if_write clause".into(),
        });
    }
    if writes_var(&inner.body, var) && !write && !if_write {
        return Err(TransformError::MissingAccessClause {
            var: var.to_string(),
            reason: "written in the loop without a write/if_write clause".into(),
        });
    }

    let private = namer.fresh(&format!("{var}L"));
    let read_flag = if_read.then(|| namer.fresh(&format!("flag_r_{var}")));
    let write_flag = (if_write && !write).then(|| namer.fresh(&format!("flag_w_{var}")));

    rename_in_body(&mut inner.body, var, &private);
    let ctx = Rewrite {
        var,
        private: &private,
        read_flag: read_flag.as_deref(),
        write_flag: write_flag.as_deref(),
    };
    inner.body = ctx.block(std::mem::take(&mut inner.body));

    parts.locals.push(LocalDecl {
        name: private.clone(),
        array: None,
        init: None,
    });
    for flag in read_flag.iter().chain(&write_flag) {
        parts.locals.push(LocalDecl {
            name: flag.clone(),
            array: None,
            init: Some(Expr::Int(0)),
        });
    }
    if read {
        parts
            .entry
            .push(Stmt::assign_scalar(private.clone(), Expr::var(var)));
        if let Some(f) = &read_flag {
            parts
                .entry
                .push(Stmt::assign_scalar(f.clone(), Expr::Int(1)));
        }
    }
    let copy_back = Stmt::assign_scalar(var, Expr::var(private.clone()));
    if write {
        parts.after_end.push(copy_back);
    } else if let Some(f) = &write_flag {
        parts
            .after_end
            .push(Stmt::if_then(Expr::var(f.clone()), vec![copy_back]));
    }

    Ok(PrivateScalar {
        var: var.to_string(),
        private,
        read_flag,
        write_flag,
    })
}

struct Rewrite<'a> {
    var: &'a str,
    private: &'a str,
    read_flag: Option<&'a str>,
    write_flag: Option<&'a str>,
}

impl Rewrite<'_> {
    /// Rewrites a block whose tls pragmas already name the private copy.
    fn block(&self, body: Vec<Stmt>) -> Vec<Stmt> {
        let mut out = Vec::with_capacity(body.len());
        // Set when an `if_read` block directly precedes the next statement.
        let mut flag_set = false;
        for s in body {
            match s {
                Stmt::PragmaTls(c) if c.target == self.private => {
                    if c.kind == TlsClauseKind::IfRead {
                        if let Some(flag) = self.read_flag {
                            out.push(self.lazy_read(flag));
                            flag_set = true;
                        }
                    }
                }
                Stmt::PragmaTls(_) => out.push(s),
                Stmt::Assign { ref target, .. } => {
                    let writes = matches!(target, LValue::Scalar(n) if n == self.private);
                    out.push(s);
                    if writes {
                        self.after_write(&mut out, flag_set);
                    }
                    flag_set = false;
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                } => {
                    out.push(Stmt::If {
                        cond,
                        then_body: self.block(then_body),
                        else_body: self.block(else_body),
                        span,
                    });
                    flag_set = false;
                }
                Stmt::For(mut l) => {
                    l.body = self.block(l.body);
                    out.push(Stmt::For(l));
                    flag_set = false;
                }
                other => {
                    out.push(other);
                    flag_set = false;
                }
            }
        }
        out
    }

    fn lazy_read(&self, flag: &str) -> Stmt {
        Stmt::if_then(
            Expr::un(UnOp::Not, Expr::var(flag)),
            vec![
                Stmt::assign_scalar(flag, Expr::Int(1)),
                Stmt::assign_scalar(self.private, Expr::var(self.var)),
            ],
        )
    }

    fn after_write(&self, out: &mut Vec<Stmt>, read_flag_set: bool) {
        if let Some(f) = self.read_flag.filter(|_| !read_flag_set) {
            out.push(Stmt::assign_scalar(f, Expr::Int(1)));
        }
        if let Some(f) = self.write_flag {
            out.push(Stmt::assign_scalar(f, Expr::Int(1)));
        }
    }
}
