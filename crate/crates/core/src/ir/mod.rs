//! Loop-language intermediate representation.
//!
//! A [`Program`] is a list of global integer declarations followed by a list
//! of statements. Loops may carry a directive (`taskloop tls` or
//! `parallel for ordered`); statements inside a `taskloop tls` loop may be
//! preceded by `tls` access clauses. The transformer adds local declarations
//! and runtime intrinsics, which never come out of the parser.

pub mod events;
pub mod render;
pub mod validate;

use std::fmt;
use std::sync::Arc;

pub use events::{collect_copyback_events, CopybackEvent, WriteEvent, WriteKind};
pub use validate::{validate, Rule, ValidationReport, Violation};

/// Position of a construct in its source file.
///
/// Spans are diagnostic metadata: two spans always compare equal so that IR
/// built from different texts can be compared structurally.
#[derive(Clone, Debug, Eq)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
    pub length: u32,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, line: u32, column: u32, length: u32) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        Self {
            file,
            line,
            column,
            length,
        }
    }

    /// Span for generated code.
    pub fn synthetic() -> Self {
        Self {
            file: Arc::from("<generated>"),
            line: 1,
            column: 1,
            length: 0,
        }
    }
}

impl Default for SourceSpan {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl PartialEq for SourceSpan {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Array(usize),
}

/// A global variable. `init` holds the initial values; missing cells are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub init: Vec<i64>,
    pub span: SourceSpan,
}

impl VarDecl {
    pub fn scalar(name: impl Into<String>, init: Option<i64>) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Scalar,
            init: init.into_iter().collect(),
            span: SourceSpan::synthetic(),
        }
    }

    pub fn array(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Array(len),
            init: Vec::new(),
            span: SourceSpan::synthetic(),
        }
    }

    /// Number of memory cells.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        match self.kind {
            VarKind::Scalar => 1,
            VarKind::Array(n) => n,
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self.kind, VarKind::Array(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// C binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::BitAnd => 5,
            BinOp::BitXor => 4,
            BinOp::BitOr => 3,
            BinOp::And => 2,
            BinOp::Or => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Var(String),
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Deterministic pseudo-random value derived from the run seed and the argument.
    Rnd(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn index(name: impl Into<String>, idx: Expr) -> Self {
        Expr::Index(name.into(), Box::new(idx))
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn un(op: UnOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    /// Calls `f` for every variable name read by the expression, array names included.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(v) => f(v),
            Expr::Index(a, i) => {
                f(a);
                i.for_each_var(f);
            }
            Expr::Unary(_, e) | Expr::Rnd(e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        let mut hit = false;
        self.for_each_var(&mut |v| hit |= v == name);
        hit
    }

    /// Renames every occurrence of a variable (scalar or array name).
    pub fn rename(&mut self, from: &str, to: &str) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(v) => {
                if v == from {
                    *v = to.to_string();
                }
            }
            Expr::Index(a, i) => {
                if a == from {
                    *a = to.to_string();
                }
                i.rename(from, to);
            }
            Expr::Unary(_, e) | Expr::Rnd(e) => e.rename(from, to),
            Expr::Binary(_, l, r) => {
                l.rename(from, to);
                r.rename(from, to);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LValue {
    Scalar(String),
    Index(String, Expr),
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Scalar(n) | LValue::Index(n, _) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReductionOp {
    Add,
    Sub,
    Mul,
    BitAnd,
    BitOr,
    BitXor,
    LogAnd,
    LogOr,
}

impl ReductionOp {
    pub const ALL: [ReductionOp; 8] = [
        ReductionOp::Add,
        ReductionOp::Sub,
        ReductionOp::Mul,
        ReductionOp::BitAnd,
        ReductionOp::BitOr,
        ReductionOp::BitXor,
        ReductionOp::LogAnd,
        ReductionOp::LogOr,
    ];

    pub fn symbol(self) -> &'static str {
        self.bin_op().symbol()
    }

    pub fn bin_op(self) -> BinOp {
        match self {
            ReductionOp::Add => BinOp::Add,
            ReductionOp::Sub => BinOp::Sub,
            ReductionOp::Mul => BinOp::Mul,
            ReductionOp::BitAnd => BinOp::BitAnd,
            ReductionOp::BitOr => BinOp::BitOr,
            ReductionOp::BitXor => BinOp::BitXor,
            ReductionOp::LogAnd => BinOp::And,
            ReductionOp::LogOr => BinOp::Or,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.symbol() == s)
    }

    pub fn identity(self) -> i64 {
        match self {
            ReductionOp::Add
            | ReductionOp::Sub
            | ReductionOp::BitOr
            | ReductionOp::BitXor
            | ReductionOp::LogOr => 0,
            ReductionOp::Mul | ReductionOp::LogAnd => 1,
            ReductionOp::BitAnd => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionClause {
    pub op: ReductionOp,
    pub names: Vec<String>,
}

/// Clauses of a `#pragma omp taskloop` directive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskloopDirective {
    /// Iterations per speculative task, from `tls(n)`.
    pub strip_size: Option<i64>,
    pub grainsize: Option<i64>,
    pub spec_private: Vec<String>,
    pub spec_reduction: Vec<ReductionClause>,
    pub firstprivate: Vec<String>,
    pub shared: Vec<String>,
    pub span: SourceSpan,
}

impl TaskloopDirective {
    pub fn is_tls(&self) -> bool {
        self.strip_size.is_some()
    }

    pub fn reduction_of(&self, name: &str) -> Option<ReductionOp> {
        self.spec_reduction
            .iter()
            .find(|r| r.names.iter().any(|n| n == name))
            .map(|r| r.op)
    }
}

/// `#pragma omp parallel for ordered(1)` on the DOACROSS baseline loops.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderedForDirective {
    pub private: Vec<String>,
    pub shared: Vec<String>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LoopDirective {
    Taskloop(TaskloopDirective),
    OrderedFor(OrderedForDirective),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TlsClauseKind {
    Read,
    Write,
    IfRead,
    IfWrite,
}

impl TlsClauseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TlsClauseKind::Read => "read",
            TlsClauseKind::Write => "write",
            TlsClauseKind::IfRead => "if_read",
            TlsClauseKind::IfWrite => "if_write",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "read" => TlsClauseKind::Read,
            "write" => TlsClauseKind::Write,
            "if_read" => TlsClauseKind::IfRead,
            "if_write" => TlsClauseKind::IfWrite,
            _ => return None,
        })
    }

    pub fn is_read(self) -> bool {
        matches!(self, TlsClauseKind::Read | TlsClauseKind::IfRead)
    }
}

/// `#pragma omp tls <kind>(<target>)`; applies to the statement that follows it.
#[derive(Clone, Debug, PartialEq)]
pub struct TlsDirectiveClause {
    pub kind: TlsClauseKind,
    pub target: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrderedDepend {
    /// Wait until iteration `induction - distance` has passed its source.
    Sink(Expr),
    Source,
}

#[derive(Clone, Debug, PartialEq)]
pub struct For {
    pub induction: String,
    pub init: Expr,
    pub cond: Expr,
    /// New value of the induction variable after each iteration.
    pub step: Expr,
    pub body: Vec<Stmt>,
    pub directive: Option<LoopDirective>,
    pub span: SourceSpan,
}

impl For {
    pub fn taskloop(&self) -> Option<&TaskloopDirective> {
        match &self.directive {
            Some(LoopDirective::Taskloop(d)) => Some(d),
            _ => None,
        }
    }

    pub fn ordered(&self) -> Option<&OrderedForDirective> {
        match &self.directive {
            Some(LoopDirective::OrderedFor(d)) => Some(d),
            _ => None,
        }
    }

    /// Step amount when the step has the form `i = i + k`.
    pub fn unit_stride(&self) -> Option<i64> {
        match &self.step {
            Expr::Binary(BinOp::Add, l, r) => match (&**l, &**r) {
                (Expr::Var(v), Expr::Int(k)) if *v == self.induction => Some(*k),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalLen {
    Fixed(usize),
    /// Grows on demand; used for private copies written in nested loops.
    Dynamic,
}

/// Block-scoped declaration emitted by the transformer.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalDecl {
    pub name: String,
    pub array: Option<LocalLen>,
    /// Scalar initializer; arrays are always zero-filled.
    pub init: Option<Expr>,
}

/// Runtime plumbing inserted by the transformer.
#[derive(Clone, Debug, PartialEq)]
pub enum Intrinsic {
    CursorInit {
        cursor: String,
        value: Expr,
    },
    Begin {
        flag: String,
        cursor: String,
        strip_start: Expr,
    },
    End {
        flag: String,
        cursor: String,
        strip_start: Expr,
    },
    CursorAdvance {
        cursor: String,
        step: i64,
    },
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Stmt {
    For(For),
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
        span: SourceSpan,
    },
    Assign {
        target: LValue,
        value: Expr,
        span: SourceSpan,
    },
    PragmaTls(TlsDirectiveClause),
    Ordered(OrderedDepend, SourceSpan),
    Local(LocalDecl),
    Intrinsic(Intrinsic),
}

impl Stmt {
    pub fn assign(target: LValue, value: Expr) -> Self {
        Stmt::Assign {
            target,
            value,
            span: SourceSpan::synthetic(),
        }
    }

    pub fn assign_scalar(name: impl Into<String>, value: Expr) -> Self {
        Self::assign(LValue::Scalar(name.into()), value)
    }

    pub fn if_then(cond: Expr, then_body: Vec<Stmt>) -> Self {
        Stmt::If {
            cond,
            then_body,
            else_body: Vec::new(),
            span: SourceSpan::synthetic(),
        }
    }

    pub fn span(&self) -> SourceSpan {
        match self {
            Stmt::For(f) => f.span.clone(),
            Stmt::If { span, .. } | Stmt::Assign { span, .. } | Stmt::Ordered(_, span) => {
                span.clone()
            }
            Stmt::PragmaTls(c) => c.span.clone(),
            Stmt::Local(_) | Stmt::Intrinsic(_) => SourceSpan::synthetic(),
        }
    }
}

/// Calls `f` on every statement of `body`, outer statements before inner ones.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in body {
        f(s);
        match s {
            Stmt::For(l) => walk_stmts(&l.body, f),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                walk_stmts(then_body, f);
                walk_stmts(else_body, f);
            }
            _ => {}
        }
    }
}

pub fn walk_stmts_mut(body: &mut [Stmt], f: &mut impl FnMut(&mut Stmt)) {
    for s in body.iter_mut() {
        f(s);
        match s {
            Stmt::For(l) => walk_stmts_mut(&mut l.body, f),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                walk_stmts_mut(then_body, f);
                walk_stmts_mut(else_body, f);
            }
            _ => {}
        }
    }
}

/// Every expression directly owned by a statement (not its children).
pub fn stmt_exprs(s: &Stmt) -> Vec<&Expr> {
    match s {
        Stmt::For(l) => vec![&l.init, &l.cond, &l.step],
        Stmt::If { cond, .. } => vec![cond],
        Stmt::Assign { target, value, .. } => match target {
            LValue::Scalar(_) => vec![value],
            LValue::Index(_, i) => vec![i, value],
        },
        Stmt::Ordered(OrderedDepend::Sink(e), _) => vec![e],
        Stmt::Local(LocalDecl { init: Some(e), .. }) => vec![e],
        Stmt::Intrinsic(Intrinsic::CursorInit { value, .. }) => vec![value],
        Stmt::Intrinsic(Intrinsic::Begin { strip_start, .. })
        | Stmt::Intrinsic(Intrinsic::End { strip_start, .. }) => vec![strip_start],
        _ => Vec::new(),
    }
}

/// True if any statement in `body` assigns to `name` (scalar or array element).
pub fn writes_var(body: &[Stmt], name: &str) -> bool {
    let mut hit = false;
    walk_stmts(body, &mut |s| {
        if let Stmt::Assign { target, .. } = s {
            hit |= target.name() == name;
        }
    });
    hit
}

/// True if any expression in `body` reads `name`.
pub fn reads_var(body: &[Stmt], name: &str) -> bool {
    let mut hit = false;
    walk_stmts(body, &mut |s| {
        for e in stmt_exprs(s) {
            hit |= e.mentions(name);
        }
    });
    hit
}

/// Renames a variable everywhere in `body`: reads, assignment targets and tls targets.
pub fn rename_in_body(body: &mut [Stmt], from: &str, to: &str) {
    walk_stmts_mut(body, &mut |s| match s {
        Stmt::For(l) => {
            l.init.rename(from, to);
            l.cond.rename(from, to);
            l.step.rename(from, to);
            if l.induction == from {
                l.induction = to.to_string();
            }
        }
        Stmt::If { cond, .. } => cond.rename(from, to),
        Stmt::Assign { target, value, .. } => {
            value.rename(from, to);
            match target {
                LValue::Scalar(n) => {
                    if n == from {
                        *n = to.to_string();
                    }
                }
                LValue::Index(n, i) => {
                    if n == from {
                        *n = to.to_string();
                    }
                    i.rename(from, to);
                }
            }
        }
        Stmt::PragmaTls(c) => {
            if c.target == from {
                c.target = to.to_string();
            }
        }
        Stmt::Ordered(OrderedDepend::Sink(e), _) => e.rename(from, to),
        Stmt::Local(d) => {
            if let Some(e) = &mut d.init {
                e.rename(from, to);
            }
        }
        Stmt::Intrinsic(i) => match i {
            Intrinsic::CursorInit { value, .. } => value.rename(from, to),
            Intrinsic::Begin { strip_start, .. } | Intrinsic::End { strip_start, .. } => {
                strip_start.rename(from, to)
            }
            Intrinsic::CursorAdvance { .. } => {}
        },
        Stmt::Ordered(OrderedDepend::Source, _) => {}
    });
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub globals: Vec<VarDecl>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn global(&self, name: &str) -> Option<&VarDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    /// All identifiers used anywhere: globals, inductions, locals, tls targets.
    pub fn identifiers(&self) -> std::collections::BTreeSet<String> {
        let mut out: std::collections::BTreeSet<String> =
            self.globals.iter().map(|g| g.name.clone()).collect();
        walk_stmts(&self.body, &mut |s| {
            match s {
                Stmt::For(l) => {
                    out.insert(l.induction.clone());
                }
                Stmt::Assign { target, .. } => {
                    out.insert(target.name().to_string());
                }
                Stmt::Local(d) => {
                    out.insert(d.name.clone());
                }
                Stmt::PragmaTls(c) => {
                    out.insert(c.target.clone());
                }
                _ => {}
            }
            for e in stmt_exprs(s) {
                e.for_each_var(&mut |v| {
                    out.insert(v.to_string());
                });
            }
        });
        out
    }
}
