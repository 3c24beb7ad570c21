//! Stack bytecode for strip bodies.
//!
//! A strip body is compiled once per loop execution. Scalars that are local
//! to the task (transformer locals, inductions, snapshot and captured values)
//! live in numbered slots; globals are resolved to fixed cell addresses and
//! accessed through the HTM.

use std::collections::HashMap;

use crate::htm::{AbortReason, Htm, Layout, TxHandle};
use crate::ir::{
    walk_stmts, BinOp, Expr, For, Intrinsic, LValue, LocalLen, SourceSpan, Stmt, UnOp,
};

use super::{apply_bin, apply_un, rnd, RuntimeError};

/// Runtime plumbing reached by a strip body.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// The VM expects the flag slot to be filled before it resumes.
    Begin {
        flag_slot: u32,
    },
    End,
    Advance,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(i64),
    LoadL(u32),
    StoreL(u32),
    LoadG(u32),
    StoreG(u32),
    LoadGI { base: u32, len: u32, var: u32 },
    StoreGI { base: u32, len: u32, var: u32 },
    LoadLA(u32),
    StoreLA(u32),
    DeclArr { arr: u32, len: Option<u32> },
    Un(UnOp),
    Bin(BinOp),
    Bool,
    Rnd,
    Jmp(u32),
    Jz(u32),
    Jnz(u32),
    Event(Event),
    Halt,
}

/// Outcome of running a strip body until it needs attention.
#[derive(Debug, PartialEq)]
pub enum Step {
    Event(Event),
    /// The instruction budget ran out; call `run` again to continue.
    Budget,
    Halt,
    Abort(AbortReason),
    Error(RuntimeError),
}

/// Execution state of one attempt.
#[derive(Clone, Debug, Default)]
pub struct Frame {
    pc: usize,
    locals: Vec<i64>,
    arrays: Vec<(Vec<i64>, bool)>,
    stack: Vec<i64>,
}

impl Frame {
    pub fn local(&self, slot: u32) -> i64 {
        self.locals[slot as usize]
    }

    pub fn set_local(&mut self, slot: u32, v: i64) {
        self.locals[slot as usize] = v;
    }
}

#[derive(Clone, Debug)]
pub struct StripCode {
    code: Vec<Op>,
    spans: Vec<SourceSpan>,
    names: Vec<String>,
    template: Vec<i64>,
    arrays: usize,
    induction: u32,
}

enum Name {
    Local(u32),
    LocalArray(u32),
    Global { base: u32, len: u32, array: bool },
}

struct Compiler<'a> {
    layout: &'a Layout,
    slots: HashMap<String, Name>,
    template: Vec<i64>,
    arrays: u32,
    names: Vec<String>,
    code: Vec<Op>,
    spans: Vec<SourceSpan>,
    span: SourceSpan,
}

/// Compiles the body of a strip-mined outer loop. `preset` holds the values
/// each task starts with (snapshot and enclosing scalars).
pub fn compile_strip(
    outer: &For,
    layout: &Layout,
    preset: &[(String, i64)],
) -> Result<StripCode, RuntimeError> {
    let mut c = Compiler {
        layout,
        slots: HashMap::new(),
        template: Vec::new(),
        arrays: 0,
        names: Vec::new(),
        code: Vec::new(),
        spans: Vec::new(),
        span: outer.span.clone(),
    };
    for (name, v) in preset {
        c.scalar_slot(name, *v);
    }
    let induction = c.scalar_slot(&outer.induction, 0);
    walk_stmts(&outer.body, &mut |s| match s {
        Stmt::For(l) => {
            c.scalar_slot(&l.induction, 0);
        }
        Stmt::Local(d) => match d.array {
            None => {
                c.scalar_slot(&d.name, 0);
            }
            Some(_) => {
                let a = c.arrays;
                c.arrays += 1;
                c.slots.insert(d.name.clone(), Name::LocalArray(a));
            }
        },
        _ => {}
    });
    c.block(&outer.body)?;
    c.emit(Op::Halt);
    Ok(StripCode {
        code: c.code,
        spans: c.spans,
        names: c.names,
        template: c.template,
        arrays: c.arrays as usize,
        induction,
    })
}

impl Compiler<'_> {
    fn scalar_slot(&mut self, name: &str, init: i64) -> u32 {
        if let Some(Name::Local(s)) = self.slots.get(name) {
            self.template[*s as usize] = init;
            return *s;
        }
        let s = self.template.len() as u32;
        self.template.push(init);
        self.slots.insert(name.to_string(), Name::Local(s));
        s
    }

    fn resolve(&self, name: &str) -> Result<Name, RuntimeError> {
        if let Some(n) = self.slots.get(name) {
            return Ok(match n {
                Name::Local(s) => Name::Local(*s),
                Name::LocalArray(a) => Name::LocalArray(*a),
                Name::Global { .. } => unreachable!("globals are not cached"),
            });
        }
        let slot = self
            .layout
            .slot(name)
            .ok_or_else(|| RuntimeError::Unbound(name.to_string()))?;
        Ok(Name::Global {
            base: slot.base as u32,
            len: slot.len as u32,
            array: slot.array,
        })
    }

    fn emit(&mut self, op: Op) -> usize {
        self.code.push(op);
        self.spans.push(self.span.clone());
        self.code.len() - 1
    }

    fn patch(&mut self, at: usize) {
        let to = self.code.len() as u32;
        match &mut self.code[at] {
            Op::Jmp(t) | Op::Jz(t) | Op::Jnz(t) => *t = to,
            _ => unreachable!("patching a non-jump"),
        }
    }

    fn var_id(&mut self, name: &str) -> u32 {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i as u32,
            None => {
                self.names.push(name.to_string());
                self.names.len() as u32 - 1
            }
        }
    }

    fn unsupported(what: &str) -> RuntimeError {
        RuntimeError::Unsupported(format!("{what} inside a speculative task"))
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), RuntimeError> {
        body.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), RuntimeError> {
        if !matches!(s, Stmt::Local(_) | Stmt::Intrinsic(_)) {
            self.span = s.span();
        }
        match s {
            Stmt::For(l) => {
                if l.directive.is_some() {
                    return Err(Self::unsupported("a nested parallel loop"));
                }
                let Name::Local(ind) = self.resolve(&l.induction)? else {
                    unreachable!("inductions have slots")
                };
                self.expr(&l.init)?;
                self.emit(Op::StoreL(ind));
                let top = self.code.len() as u32;
                self.expr(&l.cond)?;
                let exit = self.emit(Op::Jz(0));
                self.block(&l.body)?;
                self.span = l.span.clone();
                self.expr(&l.step)?;
                self.emit(Op::StoreL(ind));
                self.emit(Op::Jmp(top));
                self.patch(exit);
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
                ..
            } => {
                self.expr(cond)?;
                let skip = self.emit(Op::Jz(0));
                self.block(then_body)?;
                if else_body.is_empty() {
                    self.patch(skip);
                } else {
                    let end = self.emit(Op::Jmp(0));
                    self.patch(skip);
                    self.block(else_body)?;
                    self.patch(end);
                }
            }
            Stmt::Assign { target, value, .. } => match target {
                LValue::Scalar(n) => {
                    self.expr(value)?;
                    match self.resolve(n)? {
                        Name::Local(s) => self.emit(Op::StoreL(s)),
                        Name::Global {
                            base, array: false, ..
                        } => self.emit(Op::StoreG(base)),
                        _ => return Err(RuntimeError::Unbound(n.clone())),
                    };
                }
                LValue::Index(n, i) => {
                    self.expr(i)?;
                    self.expr(value)?;
                    match self.resolve(n)? {
                        Name::LocalArray(a) => self.emit(Op::StoreLA(a)),
                        Name::Global {
                            base,
                            len,
                            array: true,
                        } => {
                            let var = self.var_id(n);
                            self.emit(Op::StoreGI { base, len, var })
                        }
                        _ => return Err(RuntimeError::Unbound(n.clone())),
                    };
                }
            },
            Stmt::PragmaTls(_) => {}
            Stmt::Ordered(..) => return Err(Self::unsupported("an ordered region")),
            Stmt::Local(d) => match self.resolve(&d.name)? {
                Name::Local(s) => {
                    match &d.init {
                        Some(e) => self.expr(e)?,
                        None => {
                            self.emit(Op::Const(0));
                        }
                    }
                    self.emit(Op::StoreL(s));
                }
                Name::LocalArray(arr) => {
                    let len = match d.array {
                        Some(LocalLen::Fixed(n)) => Some(n as u32),
                        _ => None,
                    };
                    self.emit(Op::DeclArr { arr, len });
                }
                Name::Global { .. } => unreachable!("locals have slots"),
            },
            Stmt::Intrinsic(i) => match i {
                Intrinsic::Begin { flag, .. } => {
                    let Name::Local(flag_slot) = self.resolve(flag)? else {
                        return Err(RuntimeError::Unbound(flag.clone()));
                    };
                    self.emit(Op::Event(Event::Begin { flag_slot }));
                }
                Intrinsic::End { .. } => {
                    self.emit(Op::Event(Event::End));
                }
                Intrinsic::CursorAdvance { .. } => {
                    self.emit(Op::Event(Event::Advance));
                }
                Intrinsic::CursorInit { .. } => {
                    return Err(Self::unsupported("cursor initialization"))
                }
            },
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<(), RuntimeError> {
        match e {
            Expr::Int(v) => {
                self.emit(Op::Const(*v));
            }
            Expr::Var(n) => {
                match self.resolve(n)? {
                    Name::Local(s) => self.emit(Op::LoadL(s)),
                    Name::Global {
                        base, array: false, ..
                    } => self.emit(Op::LoadG(base)),
                    _ => return Err(RuntimeError::Unbound(n.clone())),
                };
            }
            Expr::Index(n, i) => {
                self.expr(i)?;
                match self.resolve(n)? {
                    Name::LocalArray(a) => self.emit(Op::LoadLA(a)),
                    Name::Global {
                        base,
                        len,
                        array: true,
                    } => {
                        let var = self.var_id(n);
                        self.emit(Op::LoadGI { base, len, var })
                    }
                    _ => return Err(RuntimeError::Unbound(n.clone())),
                };
            }
            Expr::Unary(op, a) => {
                self.expr(a)?;
                self.emit(Op::Un(*op));
            }
            Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                self.expr(a)?;
                let short = if *op == BinOp::And {
                    self.emit(Op::Jz(0))
                } else {
                    self.emit(Op::Jnz(0))
                };
                self.expr(b)?;
                self.emit(Op::Bool);
                let end = self.emit(Op::Jmp(0));
                self.patch(short);
                self.emit(Op::Const((*op == BinOp::Or) as i64));
                self.patch(end);
            }
            Expr::Binary(op, a, b) => {
                self.expr(a)?;
                self.expr(b)?;
                self.emit(Op::Bin(*op));
            }
            Expr::Rnd(a) => {
                self.expr(a)?;
                self.emit(Op::Rnd);
            }
        }
        Ok(())
    }
}

impl StripCode {
    pub fn frame(&self, strip_start: i64) -> Frame {
        let mut f = Frame {
            pc: 0,
            locals: self.template.clone(),
            arrays: vec![(Vec::new(), false); self.arrays],
            stack: Vec::with_capacity(16),
        };
        f.locals[self.induction as usize] = strip_start;
        f
    }

    /// Rewinds `f` for a fresh attempt, keeping its allocations.
    pub fn reset(&self, f: &mut Frame, strip_start: i64) {
        f.pc = 0;
        f.locals.clone_from(&self.template);
        f.locals[self.induction as usize] = strip_start;
        f.arrays.resize(self.arrays, (Vec::new(), false));
        f.stack.clear();
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    fn oob(&self, f: &Frame, var: String, index: i64, len: usize) -> Step {
        Step::Error(RuntimeError::IndexOutOfBounds {
            var,
            index,
            len,
            span: self.spans[f.pc - 1].clone(),
        })
    }

    /// Executes at most `*budget` instructions, decrementing it.
    pub fn run(
        &self,
        f: &mut Frame,
        htm: &Htm,
        tx: &mut TxHandle,
        seed: u64,
        budget: &mut u64,
    ) -> Step {
        macro_rules! pop {
            () => {
                f.stack.pop().expect("balanced stack")
            };
        }
        while *budget > 0 {
            *budget -= 1;
            let op = self.code[f.pc];
            f.pc += 1;
            match op {
                Op::Const(v) => f.stack.push(v),
                Op::LoadL(s) => f.stack.push(f.locals[s as usize]),
                Op::StoreL(s) => f.locals[s as usize] = pop!(),
                Op::LoadG(a) => match htm.tx_read(tx, a as usize) {
                    Ok(v) => f.stack.push(v),
                    Err(r) => return Step::Abort(r),
                },
                Op::StoreG(a) => {
                    let v = pop!();
                    if let Err(r) = htm.tx_write(tx, a as usize, v) {
                        return Step::Abort(r);
                    }
                }
                Op::LoadGI { base, len, var } => {
                    let i = pop!();
                    if i < 0 || i >= len as i64 {
                        return self.oob(f, self.names[var as usize].clone(), i, len as usize);
                    }
                    match htm.tx_read(tx, base as usize + i as usize) {
                        Ok(v) => f.stack.push(v),
                        Err(r) => return Step::Abort(r),
                    }
                }
                Op::StoreGI { base, len, var } => {
                    let v = pop!();
                    let i = pop!();
                    if i < 0 || i >= len as i64 {
                        return self.oob(f, self.names[var as usize].clone(), i, len as usize);
                    }
                    if let Err(r) = htm.tx_write(tx, base as usize + i as usize, v) {
                        return Step::Abort(r);
                    }
                }
                Op::LoadLA(a) => {
                    let i = pop!();
                    let (data, dynamic) = &f.arrays[a as usize];
                    let v = match usize::try_from(i) {
                        Ok(i) if i < data.len() => data[i],
                        Ok(_) if *dynamic => 0,
                        _ => {
                            let len = data.len();
                            return self.oob(f, format!("local array #{a}"), i, len);
                        }
                    };
                    f.stack.push(v);
                }
                Op::StoreLA(a) => {
                    let v = pop!();
                    let i = pop!();
                    let (data, dynamic) = &mut f.arrays[a as usize];
                    match usize::try_from(i) {
                        Ok(i) if i < data.len() => data[i] = v,
                        Ok(i) if *dynamic => {
                            data.resize(i + 1, 0);
                            data[i] = v;
                        }
                        _ => {
                            let len = data.len();
                            return self.oob(f, format!("local array #{a}"), i, len);
                        }
                    }
                }
                Op::DeclArr { arr, len } => {
                    let (data, dynamic) = &mut f.arrays[arr as usize];
                    data.clear();
                    match len {
                        Some(n) => {
                            data.resize(n as usize, 0);
                            *dynamic = false;
                        }
                        None => *dynamic = true,
                    }
                }
                Op::Un(op) => {
                    let a = pop!();
                    f.stack.push(apply_un(op, a));
                }
                Op::Bin(op) => {
                    let b = pop!();
                    let a = pop!();
                    match apply_bin(op, a, b) {
                        Some(v) => f.stack.push(v),
                        None => {
                            return Step::Error(RuntimeError::DivisionByZero {
                                span: self.spans[f.pc - 1].clone(),
                            })
                        }
                    }
                }
                Op::Bool => {
                    let a = pop!();
                    f.stack.push((a != 0) as i64);
                }
                Op::Rnd => {
                    let a = pop!();
                    f.stack.push(rnd(seed, a));
                }
                Op::Jmp(t) => f.pc = t as usize,
                Op::Jz(t) => {
                    if pop!() == 0 {
                        f.pc = t as usize;
                    }
                }
                Op::Jnz(t) => {
                    if pop!() != 0 {
                        f.pc = t as usize;
                    }
                }
                Op::Event(e) => return Step::Event(e),
                Op::Halt => {
                    f.pc -= 1;
                    return Step::Halt;
                }
            }
        }
        Step::Budget
    }
}
