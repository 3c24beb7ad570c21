//! Static checks on parsed programs. Violations are collected, never raised.

use std::collections::HashMap;
use std::fmt;

use super::{
    stmt_exprs, writes_var, Expr, For, LValue, LoopDirective, Program, SourceSpan, Stmt,
    TaskloopDirective, TlsClauseKind, VarKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Undeclared,
    DuplicateDeclaration,
    ScalarIndexed,
    ArrayWithoutIndex,
    InductionAssigned,
    MutuallyExclusive,
    StripSize,
    SpecClauseWithoutTls,
    TlsTargetNotSpecPrivate,
    TlsReadOfArray,
    DanglingPragma,
    PragmaOutsideTls,
    PrivateReductionOverlap,
    ReductionTargetNotScalar,
    NestedTaskloop,
    LoopInvariantWritten,
    ConditionalArrayWrite,
    OrderedOutsideLoop,
    IntrinsicInSource,
    EmptyArray,
}

impl Rule {
    pub fn message(self) -> &'static str {
        match self {
            Rule::Undeclared => "undeclared identifier",
            Rule::DuplicateDeclaration => "identifier declared more than once",
            Rule::ScalarIndexed => "scalar used with an index",
            Rule::ArrayWithoutIndex => "array used without an index",
            Rule::InductionAssigned => "loop induction variable assigned in loop body",
            Rule::MutuallyExclusive => "tls and grainsize are mutually exclusive",
            Rule::StripSize => "strip_size must be >= 1",
            Rule::SpecClauseWithoutTls => "spec_private/spec_reduction require the tls clause",
            Rule::TlsTargetNotSpecPrivate => "tls target not spec_private",
            Rule::TlsReadOfArray => "read/if_read target must be a scalar",
            Rule::DanglingPragma => "tls pragma must precede an assignment or if statement",
            Rule::PragmaOutsideTls => "tls pragma outside a taskloop tls loop",
            Rule::PrivateReductionOverlap => "variable in both spec_private and spec_reduction",
            Rule::ReductionTargetNotScalar => "spec_reduction target must be a scalar",
            Rule::NestedTaskloop => "nested taskloop",
            Rule::LoopInvariantWritten => "loop bound or firstprivate variable written in loop",
            Rule::ConditionalArrayWrite => "write(...) on a conditional array write; use if_write",
            Rule::OrderedOutsideLoop => "ordered depend outside a parallel for ordered loop",
            Rule::IntrinsicInSource => "runtime intrinsic in source program",
            Rule::EmptyArray => "array length must be >= 1",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
    pub span: SourceSpan,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.rule.message())?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate(program: &Program) -> ValidationReport {
    let mut v = Validator {
        globals: HashMap::new(),
        inductions: Vec::new(),
        taskloop: None,
        if_depth: 0,
        ordered: 0,
        out: Vec::new(),
    };
    for g in &program.globals {
        if v.globals.insert(g.name.as_str(), g.kind).is_some() {
            v.report(Rule::DuplicateDeclaration, &g.name, &g.span);
        }
        if g.kind == VarKind::Array(0) {
            v.report(Rule::EmptyArray, &g.name, &g.span);
        }
    }
    v.block(&program.body);
    ValidationReport { violations: v.out }
}

struct Validator<'a> {
    globals: HashMap<&'a str, VarKind>,
    inductions: Vec<&'a str>,
    taskloop: Option<&'a TaskloopDirective>,
    /// Nesting depth of `if` statements inside the current taskloop.
    if_depth: usize,
    ordered: usize,
    out: Vec<Violation>,
}

impl<'a> Validator<'a> {
    fn report(&mut self, rule: Rule, detail: &str, span: &SourceSpan) {
        self.out.push(Violation {
            rule,
            detail: detail.to_string(),
            span: span.clone(),
        });
    }

    fn block(&mut self, body: &'a [Stmt]) {
        for (i, s) in body.iter().enumerate() {
            if let Stmt::PragmaTls(c) = s {
                let attached = body[i + 1..]
                    .iter()
                    .find(|s| !matches!(s, Stmt::PragmaTls(_)));
                match attached {
                    Some(Stmt::Assign { .. }) | Some(Stmt::If { .. }) => {}
                    _ => self.report(Rule::DanglingPragma, &c.target, &c.span),
                }
                self.tls_clause(c.kind, &c.target, &c.span, attached);
            }
            self.stmt(s);
        }
    }

    fn tls_clause(
        &mut self,
        kind: TlsClauseKind,
        target: &str,
        span: &SourceSpan,
        attached: Option<&Stmt>,
    ) {
        let Some(d) = self.taskloop.filter(|d| d.is_tls()) else {
            self.report(Rule::PragmaOutsideTls, target, span);
            return;
        };
        match self.globals.get(target) {
            None => self.report(Rule::Undeclared, target, span),
            Some(VarKind::Array(_)) if kind.is_read() => {
                self.report(Rule::TlsReadOfArray, target, span)
            }
            Some(VarKind::Array(_))
                if kind == TlsClauseKind::Write
                    && (self.if_depth > 0 || matches!(attached, Some(Stmt::If { .. }))) =>
            {
                self.report(Rule::ConditionalArrayWrite, target, span)
            }
            _ => {}
        }
        if !d.spec_private.iter().any(|n| n == target) {
            self.report(Rule::TlsTargetNotSpecPrivate, target, span);
        }
    }

    fn stmt(&mut self, s: &'a Stmt) {
        if !matches!(s, Stmt::For(_)) {
            for e in stmt_exprs(s) {
                self.expr(e, &s.span());
            }
        }
        match s {
            Stmt::For(l) => self.for_loop(l),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                self.if_depth += 1;
                self.block(then_body);
                self.block(else_body);
                self.if_depth -= 1;
            }
            Stmt::Assign { target, span, .. } => {
                let name = target.name();
                if self.inductions.contains(&name) {
                    self.report(Rule::InductionAssigned, name, span);
                    return;
                }
                match (self.globals.get(name), target) {
                    (None, _) => self.report(Rule::Undeclared, name, span),
                    (Some(VarKind::Scalar), LValue::Index(..)) => {
                        self.report(Rule::ScalarIndexed, name, span)
                    }
                    (Some(VarKind::Array(_)), LValue::Scalar(_)) => {
                        self.report(Rule::ArrayWithoutIndex, name, span)
                    }
                    _ => {}
                }
            }
            Stmt::PragmaTls(_) => {}
            Stmt::Ordered(_, span) => {
                if self.ordered == 0 {
                    self.report(Rule::OrderedOutsideLoop, "", span);
                }
            }
            Stmt::Local(d) => {
                self.report(Rule::IntrinsicInSource, &d.name, &SourceSpan::synthetic())
            }
            Stmt::Intrinsic(_) => {
                self.report(Rule::IntrinsicInSource, "", &SourceSpan::synthetic())
            }
        }
    }

    fn for_loop(&mut self, l: &'a For) {
        let name = l.induction.as_str();
        if self.globals.contains_key(name) || self.inductions.contains(&name) {
            self.report(Rule::DuplicateDeclaration, name, &l.span);
        }
        let saved = (self.taskloop, self.if_depth);
        let mut ordered = false;
        match &l.directive {
            Some(LoopDirective::Taskloop(d)) => {
                if self.taskloop.is_some() {
                    self.report(Rule::NestedTaskloop, name, &l.span);
                }
                self.taskloop_directive(d, l);
                self.taskloop = Some(d);
                self.if_depth = 0;
            }
            Some(LoopDirective::OrderedFor(d)) => {
                ordered = true;
                for n in &d.private {
                    if self.globals.get(n.as_str()) != Some(&VarKind::Scalar) {
                        self.report(Rule::Undeclared, n, &d.span);
                    }
                }
            }
            None => {}
        }
        self.expr(&l.init, &l.span);
        self.inductions.push(name);
        self.expr(&l.cond, &l.span);
        self.expr(&l.step, &l.span);
        if ordered {
            self.ordered += 1;
        }
        self.block(&l.body);
        if ordered {
            self.ordered -= 1;
        }
        self.inductions.pop();
        (self.taskloop, self.if_depth) = saved;
    }

    fn taskloop_directive(&mut self, d: &'a TaskloopDirective, l: &'a For) {
        let span = &d.span;
        if d.strip_size.is_some() && d.grainsize.is_some() {
            self.report(Rule::MutuallyExclusive, "", span);
        }
        if matches!(d.strip_size, Some(s) if s < 1) {
            self.report(Rule::StripSize, "", span);
        }
        if !d.is_tls() && (!d.spec_private.is_empty() || !d.spec_reduction.is_empty()) {
            self.report(Rule::SpecClauseWithoutTls, "", span);
        }
        for n in d
            .spec_private
            .iter()
            .chain(&d.firstprivate)
            .chain(&d.shared)
        {
            if !self.globals.contains_key(n.as_str()) {
                self.report(Rule::Undeclared, n, span);
            }
        }
        for r in &d.spec_reduction {
            for n in &r.names {
                match self.globals.get(n.as_str()) {
                    None => self.report(Rule::Undeclared, n, span),
                    Some(VarKind::Array(_)) => self.report(Rule::ReductionTargetNotScalar, n, span),
                    _ => {}
                }
                if d.spec_private.contains(n) {
                    self.report(Rule::PrivateReductionOverlap, n, span);
                }
            }
        }
        let mut invariant: Vec<&str> = d.firstprivate.iter().map(String::as_str).collect();
        l.cond.for_each_var(&mut |v| {
            if v != l.induction {
                invariant.push(v)
            }
        });
        for n in invariant {
            if writes_var(&l.body, n) {
                self.report(Rule::LoopInvariantWritten, n, span);
            }
        }
    }

    fn expr(&mut self, e: &Expr, span: &SourceSpan) {
        match e {
            Expr::Int(_) => {}
            Expr::Var(n) => {
                if self.inductions.contains(&n.as_str()) {
                    return;
                }
                match self.globals.get(n.as_str()) {
                    None => self.report(Rule::Undeclared, n, span),
                    Some(VarKind::Array(_)) => self.report(Rule::ArrayWithoutIndex, n, span),
                    _ => {}
                }
            }
            Expr::Index(n, i) => {
                match self.globals.get(n.as_str()) {
                    None => self.report(Rule::Undeclared, n, span),
                    Some(VarKind::Scalar) => self.report(Rule::ScalarIndexed, n, span),
                    _ => {}
                }
                self.expr(i, span);
            }
            Expr::Unary(_, a) | Expr::Rnd(a) => self.expr(a, span),
            Expr::Binary(_, a, b) => {
                self.expr(a, span);
                self.expr(b, span);
            }
        }
    }
}
