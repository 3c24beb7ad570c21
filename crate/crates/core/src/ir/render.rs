//! Deterministic STE-C text output.

use std::fmt::Write;

use super::{
    BinOp, Expr, For, Intrinsic, LValue, LocalDecl, LocalLen, LoopDirective, OrderedDepend,
    Program, Stmt, UnOp, VarKind,
};

const INDENT: &str = "    ";

pub fn render_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        match g.kind {
            VarKind::Scalar => {
                let _ = write!(out, "int {}", g.name);
                if let Some(v) = g.init.first() {
                    let _ = write!(out, " = {v}");
                }
            }
            VarKind::Array(n) => {
                let _ = write!(out, "int {}[{n}]", g.name);
                if !g.init.is_empty() {
                    let vals: Vec<String> = g.init.iter().map(|v| v.to_string()).collect();
                    let _ = write!(out, " = {{{}}}", vals.join(", "));
                }
            }
        }
        out.push_str(";\n");
    }
    if !p.globals.is_empty() && !p.body.is_empty() {
        out.push('\n');
    }
    render_block(&mut out, &p.body, 0);
    out
}

pub fn render_block(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        render_stmt(out, s, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn render_stmt(out: &mut String, s: &Stmt, depth: usize) {
    match s {
        Stmt::For(l) => render_for(out, l, depth),
        Stmt::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            indent(out, depth);
            let _ = writeln!(out, "if ({}) {{", render_expr(cond));
            render_block(out, then_body, depth + 1);
            indent(out, depth);
            if else_body.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                render_block(out, else_body, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
        }
        Stmt::Assign { target, value, .. } => {
            indent(out, depth);
            let _ = writeln!(out, "{};", render_assign(target, value));
        }
        Stmt::PragmaTls(c) => {
            indent(out, depth);
            let _ = writeln!(out, "#pragma omp tls {}({})", c.kind.keyword(), c.target);
        }
        Stmt::Ordered(dep, _) => {
            indent(out, depth);
            match dep {
                OrderedDepend::Sink(e) => {
                    let _ = writeln!(out, "#pragma omp ordered depend(sink: {})", render_expr(e));
                }
                OrderedDepend::Source => out.push_str("#pragma omp ordered depend(source)\n"),
            }
        }
        Stmt::Local(d) => {
            indent(out, depth);
            let _ = writeln!(out, "{};", render_local(d));
        }
        Stmt::Intrinsic(i) => {
            indent(out, depth);
            let _ = writeln!(out, "{};", render_intrinsic(i));
        }
    }
}

fn render_for(out: &mut String, l: &For, depth: usize) {
    if let Some(d) = &l.directive {
        indent(out, depth);
        out.push_str(&render_directive(d));
        out.push('\n');
    }
    indent(out, depth);
    let _ = writeln!(
        out,
        "for ({} = {}; {}; {}) {{",
        l.induction,
        render_expr(&l.init),
        render_expr(&l.cond),
        render_assign(&LValue::Scalar(l.induction.clone()), &l.step)
    );
    render_block(out, &l.body, depth + 1);
    indent(out, depth);
    out.push_str("}\n");
}

pub fn render_directive(d: &LoopDirective) -> String {
    let mut s = String::new();
    match d {
        LoopDirective::Taskloop(t) => {
            s.push_str("#pragma omp taskloop");
            if let Some(n) = t.strip_size {
                let _ = write!(s, " tls({n})");
            }
            if let Some(g) = t.grainsize {
                let _ = write!(s, " grainsize({g})");
            }
            push_list(&mut s, "firstprivate", &t.firstprivate);
            push_list(&mut s, "shared", &t.shared);
            push_list(&mut s, "spec_private", &t.spec_private);
            for r in &t.spec_reduction {
                let _ = write!(
                    s,
                    " spec_reduction({}: {})",
                    r.op.symbol(),
                    r.names.join(", ")
                );
            }
        }
        LoopDirective::OrderedFor(o) => {
            s.push_str("#pragma omp parallel for ordered(1)");
            push_list(&mut s, "private", &o.private);
            push_list(&mut s, "shared", &o.shared);
        }
    }
    s
}

fn push_list(s: &mut String, clause: &str, names: &[String]) {
    if !names.is_empty() {
        let _ = write!(s, " {clause}({})", names.join(", "));
    }
}

fn render_assign(target: &LValue, value: &Expr) -> String {
    let lhs = match target {
        LValue::Scalar(n) => n.clone(),
        LValue::Index(n, i) => format!("{n}[{}]", render_expr(i)),
    };
    if let (LValue::Scalar(n), Expr::Binary(BinOp::Add, l, r)) = (target, value) {
        if matches!(&**l, Expr::Var(v) if v == n) {
            if let Expr::Int(k) = **r {
                return if k == 1 {
                    format!("{lhs}++")
                } else {
                    format!("{lhs} += {k}")
                };
            }
        }
    }
    format!("{lhs} = {}", render_expr(value))
}

fn render_local(d: &LocalDecl) -> String {
    match (d.array, &d.init) {
        (Some(LocalLen::Fixed(n)), _) => format!("int {}[{n}]", d.name),
        (Some(LocalLen::Dynamic), _) => format!("int {}[]", d.name),
        (None, Some(e)) => format!("int {} = {}", d.name, render_expr(e)),
        (None, None) => format!("int {}", d.name),
    }
}

fn render_intrinsic(i: &Intrinsic) -> String {
    match i {
        Intrinsic::CursorInit { cursor, value } => {
            format!("__cursor_init({cursor}, {})", render_expr(value))
        }
        Intrinsic::Begin {
            flag,
            cursor,
            strip_start,
        } => format!("__begin({flag}, {cursor}, {})", render_expr(strip_start)),
        Intrinsic::End {
            flag,
            cursor,
            strip_start,
        } => format!("__end({flag}, {cursor}, {})", render_expr(strip_start)),
        Intrinsic::CursorAdvance { cursor, step } => format!("__cursor_advance({cursor}, {step})"),
    }
}

pub fn render_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(s: &mut String, e: &Expr, min_prec: u8) {
    match e {
        Expr::Int(v) => {
            let _ = write!(s, "{v}");
        }
        Expr::Var(n) => s.push_str(n),
        Expr::Index(n, i) => {
            let _ = write!(s, "{n}[");
            write_expr(s, i, 0);
            s.push(']');
        }
        Expr::Rnd(a) => {
            s.push_str("rnd(");
            write_expr(s, a, 0);
            s.push(')');
        }
        Expr::Unary(op, a) => {
            s.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
                UnOp::BitNot => '~',
            });
            // Literal and nested-unary operands get parentheses so the text
            // re-parses to the same tree (`-5` alone is a negative literal).
            let wrap = matches!(**a, Expr::Int(_) | Expr::Unary(..) | Expr::Binary(..));
            if wrap {
                s.push('(');
                write_expr(s, a, 0);
                s.push(')');
            } else {
                write_expr(s, a, 11);
            }
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            let wrap = p < min_prec;
            if wrap {
                s.push('(');
            }
            write_expr(s, l, p);
            let _ = write!(s, " {} ", op.symbol());
            write_expr(s, r, p + 1);
            if wrap {
                s.push(')');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_parenthesization() {
        let e = Expr::bin(
            BinOp::Mul,
            Expr::bin(BinOp::Add, Expr::var("a"), Expr::Int(1)),
            Expr::var("b"),
        );
        assert_eq!(render_expr(&e), "(a + 1) * b");
        let e = Expr::bin(
            BinOp::Sub,
            Expr::var("a"),
            Expr::bin(BinOp::Sub, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(render_expr(&e), "a - (b - c)");
        let e = Expr::un(UnOp::Neg, Expr::Int(5));
        assert_eq!(render_expr(&e), "-(5)");
    }

    #[test]
    fn empty_program_renders_empty() {
        assert_eq!(render_program(&Program::default()), "");
    }

    #[test]
    fn increments_render_compactly() {
        let s = Stmt::assign_scalar("n", Expr::bin(BinOp::Add, Expr::var("n"), Expr::Int(1)));
        let mut out = String::new();
        render_block(&mut out, &[s], 0);
        assert_eq!(out, "n++;\n");
    }
}
