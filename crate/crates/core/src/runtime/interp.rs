use std::sync::Arc;

use crate::htm::{Layout, MemoryImage, VarSlot};
use crate::ir::{
    Expr, For, Intrinsic, LValue, LocalDecl, LocalLen, OrderedDepend, Program, SourceSpan, Stmt,
};

use super::{apply_bin, apply_un, rnd, RuntimeError};

/// Global memory as seen by the serial interpreter.
pub trait Store {
    fn layout(&self) -> &Layout;
    fn load(&mut self, addr: usize) -> i64;
    fn store(&mut self, addr: usize, value: i64);
}

impl Store for MemoryImage {
    fn layout(&self) -> &Layout {
        MemoryImage::layout(self)
    }

    fn load(&mut self, addr: usize) -> i64 {
        self.cells()[addr]
    }

    fn store(&mut self, addr: usize, value: i64) {
        self.cells_mut()[addr] = value;
    }
}

/// Takes over loops and ordered regions the interpreter meets.
pub trait LoopHook {
    /// Returns `Ok(true)` if the loop was executed by the hook.
    fn run_loop(
        &mut self,
        l: &For,
        env: &mut Env,
        store: &mut dyn Store,
    ) -> Result<bool, RuntimeError>;

    /// `sink` is the evaluated iteration for `depend(sink: ..)`.
    fn ordered(&mut self, _sink: Option<i64>, _span: &SourceSpan) -> Result<(), RuntimeError> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Local {
    Scalar(i64),
    Array { data: Vec<i64>, dynamic: bool },
}

/// Block-scoped locals (loop inductions, transformer locals) and commit cursors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    locals: Vec<(String, Local)>,
    cursors: Vec<(String, i64)>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: i64) {
        self.locals.push((name.into(), Local::Scalar(value)));
    }

    /// Innermost scalar local called `name`.
    pub fn scalar(&self, name: &str) -> Option<i64> {
        self.locals.iter().rev().find_map(|(n, l)| match l {
            Local::Scalar(v) if n == name => Some(*v),
            _ => None,
        })
    }

    /// All visible scalar locals, innermost binding only.
    pub fn scalars(&self) -> Vec<(String, i64)> {
        let mut out: Vec<(String, i64)> = Vec::new();
        for (n, l) in self.locals.iter().rev() {
            if let Local::Scalar(v) = l {
                if !out.iter().any(|(m, _)| m == n) {
                    out.push((n.clone(), *v));
                }
            }
        }
        out
    }

    pub fn cursor(&self, name: &str) -> Option<i64> {
        self.cursors.iter().find(|(n, _)| n == name).map(|c| c.1)
    }

    fn find(&mut self, name: &str) -> Option<&mut Local> {
        self.locals
            .iter_mut()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, l)| l)
    }

    fn set_cursor(&mut self, name: &str, value: i64) {
        match self.cursors.iter_mut().find(|(n, _)| n == name) {
            Some(c) => c.1 = value,
            None => self.cursors.push((name.to_string(), value)),
        }
    }
}

/// Runs `program` serially on `image`. Parallel directives are ignored and
/// runtime intrinsics take their single-threaded meaning.
pub fn interpret(
    program: &Program,
    image: &mut MemoryImage,
    seed: u64,
) -> Result<(), RuntimeError> {
    interpret_with(&program.body, &mut Env::new(), image, seed, None)
}

pub fn interpret_with(
    body: &[Stmt],
    env: &mut Env,
    store: &mut dyn Store,
    seed: u64,
    hook: Option<&mut dyn LoopHook>,
) -> Result<(), RuntimeError> {
    Interp {
        seed,
        hook,
        store,
        env,
    }
    .block(body)
}

/// Copies the whole store into an image.
pub(crate) fn image_of(store: &mut dyn Store) -> MemoryImage {
    let layout = Arc::new(store.layout().clone());
    let cells = (0..layout.cells()).map(|a| store.load(a)).collect();
    MemoryImage::from_cells(layout, cells)
}

pub(crate) fn write_back(store: &mut dyn Store, image: &MemoryImage) {
    for (a, &v) in image.cells().iter().enumerate() {
        store.store(a, v);
    }
}

/// Evaluates one expression against `env` and `store`.
pub fn eval_expr(
    e: &Expr,
    env: &mut Env,
    store: &mut dyn Store,
    seed: u64,
) -> Result<i64, RuntimeError> {
    Interp {
        seed,
        hook: None,
        store,
        env,
    }
    .eval(e, &SourceSpan::synthetic())
}

struct Interp<'a, 'h> {
    seed: u64,
    hook: Option<&'h mut dyn LoopHook>,
    store: &'a mut dyn Store,
    env: &'a mut Env,
}

impl Interp<'_, '_> {
    fn block(&mut self, body: &[Stmt]) -> Result<(), RuntimeError> {
        let mark = self.env.locals.len();
        let r = body.iter().try_for_each(|s| self.stmt(s));
        self.env.locals.truncate(mark);
        r
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), RuntimeError> {
        match s {
            Stmt::For(l) => self.for_loop(l),
            Stmt::If {
                cond,
                then_body,
                else_body,
                span,
            } => {
                if self.eval(cond, span)? != 0 {
                    self.block(then_body)
                } else {
                    self.block(else_body)
                }
            }
            Stmt::Assign {
                target,
                value,
                span,
            } => {
                let v = self.eval(value, span)?;
                match target {
                    LValue::Scalar(n) => self.assign_scalar(n, v),
                    LValue::Index(n, i) => {
                        let i = self.eval(i, span)?;
                        self.assign_index(n, i, v, span)
                    }
                }
            }
            Stmt::PragmaTls(_) => Ok(()),
            Stmt::Ordered(dep, span) => {
                let sink = match dep {
                    OrderedDepend::Sink(e) => Some(self.eval(e, span)?),
                    OrderedDepend::Source => None,
                };
                match self.hook.as_deref_mut() {
                    Some(h) => h.ordered(sink, span),
                    None => Ok(()),
                }
            }
            Stmt::Local(d) => self.declare(d),
            Stmt::Intrinsic(i) => self.intrinsic(i),
        }
    }

    fn for_loop(&mut self, l: &For) -> Result<(), RuntimeError> {
        if l.directive.is_some() {
            if let Some(h) = self.hook.as_deref_mut() {
                if h.run_loop(l, self.env, self.store)? {
                    return Ok(());
                }
            }
        }
        let private: &[String] = l.ordered().map_or(&[], |d| &d.private);
        let mut i = self.eval(&l.init, &l.span)?;
        let mark = self.env.locals.len();
        self.env.push_scalar(&l.induction, i);
        let r = (|| loop {
            if self.eval(&l.cond, &l.span)? == 0 {
                return Ok(());
            }
            for p in private {
                self.env.push_scalar(p, 0);
            }
            self.block(&l.body)?;
            self.env.locals.truncate(mark + 1);
            i = self.eval(&l.step, &l.span)?;
            self.assign_scalar(&l.induction, i)?;
        })();
        self.env.locals.truncate(mark);
        r
    }

    fn declare(&mut self, d: &LocalDecl) -> Result<(), RuntimeError> {
        let local = match d.array {
            None => {
                let v = match &d.init {
                    Some(e) => self.eval(e, &SourceSpan::synthetic())?,
                    None => 0,
                };
                Local::Scalar(v)
            }
            Some(LocalLen::Fixed(n)) => Local::Array {
                data: vec![0; n],
                dynamic: false,
            },
            Some(LocalLen::Dynamic) => Local::Array {
                data: Vec::new(),
                dynamic: true,
            },
        };
        self.env.locals.push((d.name.clone(), local));
        Ok(())
    }

    fn intrinsic(&mut self, i: &Intrinsic) -> Result<(), RuntimeError> {
        let span = SourceSpan::synthetic();
        match i {
            Intrinsic::CursorInit { cursor, value } => {
                let v = self.eval(value, &span)?;
                self.env.set_cursor(cursor, v);
            }
            Intrinsic::Begin { flag, .. } => self.assign_scalar(flag, 0)?,
            Intrinsic::End { .. } => {}
            Intrinsic::CursorAdvance { cursor, step } => {
                let c = self.env.cursor(cursor).unwrap_or(0);
                self.env.set_cursor(cursor, c.wrapping_add(*step));
            }
        }
        Ok(())
    }

    fn global(&self, name: &str) -> Result<VarSlot, RuntimeError> {
        self.store
            .layout()
            .slot(name)
            .cloned()
            .ok_or_else(|| RuntimeError::Unbound(name.to_string()))
    }

    fn assign_scalar(&mut self, name: &str, v: i64) -> Result<(), RuntimeError> {
        if let Some(l) = self.env.find(name) {
            *l = Local::Scalar(v);
            return Ok(());
        }
        let slot = self.global(name)?;
        self.store.store(slot.base, v);
        Ok(())
    }

    fn assign_index(
        &mut self,
        name: &str,
        index: i64,
        v: i64,
        span: &SourceSpan,
    ) -> Result<(), RuntimeError> {
        let oob = |len| RuntimeError::IndexOutOfBounds {
            var: name.to_string(),
            index,
            len,
            span: span.clone(),
        };
        if let Some(Local::Array { data, dynamic }) = self.env.find(name) {
            let len = data.len();
            let i = usize::try_from(index).map_err(|_| oob(len))?;
            if i >= len {
                if !*dynamic {
                    return Err(oob(len));
                }
                data.resize(i + 1, 0);
            }
            data[i] = v;
            return Ok(());
        }
        let slot = self.global(name)?;
        match usize::try_from(index) {
            Ok(i) if i < slot.len => {
                self.store.store(slot.base + i, v);
                Ok(())
            }
            _ => Err(oob(slot.len)),
        }
    }

    fn eval(&mut self, e: &Expr, span: &SourceSpan) -> Result<i64, RuntimeError> {
        Ok(match e {
            Expr::Int(v) => *v,
            Expr::Var(n) => match self.env.find(n) {
                Some(Local::Scalar(v)) => *v,
                Some(Local::Array { .. }) => return Err(RuntimeError::Unbound(n.clone())),
                None => {
                    let slot = self.global(n)?;
                    self.store.load(slot.base)
                }
            },
            Expr::Index(n, i) => {
                let index = self.eval(i, span)?;
                let oob = |len| RuntimeError::IndexOutOfBounds {
                    var: n.clone(),
                    index,
                    len,
                    span: span.clone(),
                };
                if let Some(Local::Array { data, dynamic }) = self.env.find(n) {
                    return match usize::try_from(index) {
                        Ok(i) if i < data.len() => Ok(data[i]),
                        Ok(_) if *dynamic => Ok(0),
                        _ => Err(oob(data.len())),
                    };
                }
                let slot = self.global(n)?;
                match usize::try_from(index) {
                    Ok(i) if i < slot.len => self.store.load(slot.base + i),
                    _ => return Err(oob(slot.len)),
                }
            }
            Expr::Unary(op, a) => apply_un(*op, self.eval(a, span)?),
            Expr::Binary(op, a, b) => {
                use crate::ir::BinOp;
                let a = self.eval(a, span)?;
                match op {
                    BinOp::And if a == 0 => 0,
                    BinOp::Or if a != 0 => 1,
                    _ => {
                        let b = self.eval(b, span)?;
                        apply_bin(*op, a, b)
                            .ok_or_else(|| RuntimeError::DivisionByZero { span: span.clone() })?
                    }
                }
            }
            Expr::Rnd(a) => rnd(self.seed, self.eval(a, span)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    fn run(src: &str) -> Result<MemoryImage, RuntimeError> {
        let p = parse_str(src).unwrap();
        let mut m = MemoryImage::initial(&p);
        interpret(&p, &mut m, 1)?;
        Ok(m)
    }

    #[test]
    fn sums_a_loop() {
        let m = run("int s = 0; int A[4];\nfor (i = 0; i < 4; i++) { A[i] = i * i; s += A[i]; }")
            .unwrap();
        assert_eq!(m.scalar("s"), Some(14));
        assert_eq!(m.get("A"), Some(&[0, 1, 4, 9][..]));
    }

    #[test]
    fn short_circuit_skips_division() {
        let m = run("int z = 0; int r = 5;\nif (z != 0 && r / z > 1) r = 1;").unwrap();
        assert_eq!(m.scalar("r"), Some(5));
    }

    #[test]
    fn errors_carry_positions() {
        let e = run("int z = 0; int r;\nr = 4 / z;").unwrap_err();
        assert!(matches!(e, RuntimeError::DivisionByZero { .. }));
        assert!(e.to_string().contains(":2:"), "{e}");
        let e = run("int A[2];\nfor (i = 0; i < 3; i++) A[i] = 1;").unwrap_err();
        assert!(matches!(
            e,
            RuntimeError::IndexOutOfBounds {
                index: 2,
                len: 2,
                ..
            }
        ));
    }
}
