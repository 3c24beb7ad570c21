use super::lexer::{Keyword, Token, TokenKind};
use super::{FrontendError, FrontendErrorKind};
use crate::ir::{
    BinOp, Expr, For, LValue, LoopDirective, OrderedDepend, OrderedForDirective, Program,
    ReductionClause, ReductionOp, SourceSpan, Stmt, TaskloopDirective, TlsClauseKind,
    TlsDirectiveClause, UnOp, VarDecl, VarKind,
};

type PResult<T> = Result<T, FrontendError>;

/// Recursive-descent parse of a token stream from [`tokenize`](super::tokenize).
pub fn parse(tokens: Vec<Token>) -> PResult<Program> {
    let mut p = Parser::new(tokens);
    let mut program = Program::default();
    loop {
        match p.peek() {
            TokenKind::Eof => break,
            TokenKind::Kw(Keyword::Int) => program.globals.push(p.decl()?),
            TokenKind::Punct("}") => {
                return Err(p.error(FrontendErrorKind::UnexpectedToken, "unmatched `}`"))
            }
            _ => p.stmt(&mut program.body)?,
        }
    }
    Ok(program)
}

/// What a pragma line turned out to be.
enum Pragma {
    Loop(LoopDirective),
    Tls(TlsDirectiveClause),
    Ordered(OrderedDepend),
    Ignored,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        let mut toks = toks;
        if !matches!(toks.last().map(|t| &t.kind), Some(TokenKind::Eof)) {
            let span = toks.last().map(|t| t.span.clone()).unwrap_or_default();
            toks.push(Token {
                kind: TokenKind::Eof,
                span,
            });
        }
        Self { toks, pos: 0 }
    }

    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, off: usize) -> &TokenKind {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span.clone()
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        matches!(self.peek(), TokenKind::Eof)
    }

    fn error(&self, kind: FrontendErrorKind, msg: impl Into<String>) -> FrontendError {
        FrontendError::new(kind, self.span(), msg)
    }

    fn unexpected(&self, wanted: &str) -> FrontendError {
        let found = match self.peek() {
            TokenKind::Eof => "end of input".to_string(),
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Int(v) => format!("`{v}`"),
            TokenKind::Punct(p) => format!("`{p}`"),
            TokenKind::Kw(k) => format!("keyword `{}`", format!("{k:?}").to_lowercase()),
            TokenKind::Pragma(_) => "pragma".to_string(),
        };
        self.error(
            FrontendErrorKind::UnexpectedToken,
            format!("expected {wanted}, found {found}"),
        )
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), TokenKind::Punct(q) if *q == p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat("-");
        match *self.peek() {
            TokenKind::Int(v) => {
                let span = self.span();
                self.next();
                fold_literal(v, neg).ok_or_else(|| {
                    FrontendError::new(
                        FrontendErrorKind::UnexpectedToken,
                        span,
                        "integer literal out of range",
                    )
                })
            }
            _ => Err(self.unexpected("integer literal")),
        }
    }

    fn decl(&mut self) -> PResult<VarDecl> {
        let span = self.span();
        self.next();
        let name = self.ident()?;
        let mut kind = VarKind::Scalar;
        if self.eat("[") {
            let len = match *self.peek() {
                TokenKind::Int(v) => {
                    self.next();
                    v as usize
                }
                _ => return Err(self.unexpected("array length")),
            };
            self.expect("]")?;
            kind = VarKind::Array(len);
        }
        let mut init = Vec::new();
        if self.eat("=") {
            match kind {
                VarKind::Scalar => init.push(self.signed_int()?),
                VarKind::Array(len) => {
                    self.expect("{")?;
                    loop {
                        init.push(self.signed_int()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                    self.expect("}")?;
                    if init.len() > len {
                        return Err(FrontendError::new(
                            FrontendErrorKind::InvalidClauseValue,
                            span,
                            "too many initializers",
                        ));
                    }
                }
            }
        }
        self.expect(";")?;
        Ok(VarDecl {
            name,
            kind,
            init,
            span,
        })
    }

    fn stmt(&mut self, out: &mut Vec<Stmt>) -> PResult<()> {
        let span = self.span();
        match self.peek().clone() {
            TokenKind::Pragma(inner) => {
                self.next();
                match parse_pragma(inner, span.clone())? {
                    Pragma::Loop(d) => {
                        while let TokenKind::Pragma(inner) = self.peek().clone() {
                            let sp = self.span();
                            if !matches!(parse_pragma(inner, sp)?, Pragma::Ignored) {
                                break;
                            }
                            self.next();
                        }
                        if !matches!(self.peek(), TokenKind::Kw(Keyword::For)) {
                            return Err(self.unexpected("`for` after loop directive"));
                        }
                        let mut l = self.for_loop()?;
                        l.directive = Some(d);
                        out.push(Stmt::For(l));
                    }
                    Pragma::Tls(c) => out.push(Stmt::PragmaTls(c)),
                    Pragma::Ordered(d) => out.push(Stmt::Ordered(d, span)),
                    Pragma::Ignored => {}
                }
            }
            TokenKind::Kw(Keyword::For) => {
                let l = self.for_loop()?;
                out.push(Stmt::For(l));
            }
            TokenKind::Kw(Keyword::If) => {
                self.next();
                self.expect("(")?;
                let cond = self.expr()?;
                self.expect(")")?;
                let then_body = self.body()?;
                let else_body = if matches!(self.peek(), TokenKind::Kw(Keyword::Else)) {
                    self.next();
                    self.body()?
                } else {
                    Vec::new()
                };
                out.push(Stmt::If {
                    cond,
                    then_body,
                    else_body,
                    span,
                });
            }
            TokenKind::Ident(_) => {
                let (target, value) = self.assignment()?;
                self.expect(";")?;
                out.push(Stmt::Assign {
                    target,
                    value,
                    span,
                });
            }
            TokenKind::Kw(Keyword::Int) => {
                return Err(self.error(
                    FrontendErrorKind::UnexpectedToken,
                    "declarations are only allowed at top level",
                ))
            }
            _ => return Err(self.unexpected("statement")),
        }
        Ok(())
    }

    fn body(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        if matches!(self.peek(), TokenKind::Punct("{")) {
            let open = self.span();
            self.next();
            loop {
                match self.peek() {
                    TokenKind::Punct("}") => {
                        self.next();
                        return Ok(out);
                    }
                    TokenKind::Eof => {
                        return Err(FrontendError::new(
                            FrontendErrorKind::UnterminatedBlock,
                            open,
                            "unterminated block",
                        ))
                    }
                    _ => self.stmt(&mut out)?,
                }
            }
        }
        // Unbraced body: leading tls pragmas belong to the single statement.
        loop {
            let before = out.len();
            let is_pragma = matches!(self.peek(), TokenKind::Pragma(_));
            self.stmt(&mut out)?;
            let attached = out.len() > before && matches!(out.last(), Some(Stmt::PragmaTls(_)));
            if !(is_pragma && (attached || out.len() == before)) || self.at_end() {
                return Ok(out);
            }
        }
    }

    fn for_loop(&mut self) -> PResult<For> {
        let span = self.span();
        self.next();
        self.expect("(")?;
        let induction = self.ident()?;
        self.expect("=")?;
        let init = self.expr()?;
        self.expect(";")?;
        let cond = self.expr()?;
        self.expect(";")?;
        let step_span = self.span();
        let (target, step) = self.assignment()?;
        if target != LValue::Scalar(induction.clone()) {
            return Err(FrontendError::new(
                FrontendErrorKind::UnexpectedToken,
                step_span,
                "loop step must update the induction variable",
            ));
        }
        self.expect(")")?;
        let body = self.body()?;
        Ok(For {
            induction,
            init,
            cond,
            step,
            body,
            directive: None,
            span,
        })
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let name = self.ident()?;
        if self.eat("[") {
            let idx = self.expr()?;
            self.expect("]")?;
            Ok(LValue::Index(name, idx))
        } else {
            Ok(LValue::Scalar(name))
        }
    }

    fn assignment(&mut self) -> PResult<(LValue, Expr)> {
        let target = self.lvalue()?;
        let current = match &target {
            LValue::Scalar(n) => Expr::Var(n.clone()),
            LValue::Index(n, i) => Expr::Index(n.clone(), Box::new(i.clone())),
        };
        let op = match self.peek().clone() {
            TokenKind::Punct("=") => {
                self.next();
                return Ok((target, self.expr()?));
            }
            TokenKind::Punct("++") => {
                self.next();
                return Ok((target, Expr::bin(BinOp::Add, current, Expr::Int(1))));
            }
            TokenKind::Punct("--") => {
                self.next();
                return Ok((target, Expr::bin(BinOp::Sub, current, Expr::Int(1))));
            }
            TokenKind::Punct(p) => match p {
                "+=" => BinOp::Add,
                "-=" => BinOp::Sub,
                "*=" => BinOp::Mul,
                "/=" => BinOp::Div,
                "%=" => BinOp::Rem,
                "&=" => BinOp::BitAnd,
                "|=" => BinOp::BitOr,
                "^=" => BinOp::BitXor,
                "<<=" => BinOp::Shl,
                ">>=" => BinOp::Shr,
                _ => return Err(self.unexpected("assignment operator")),
            },
            _ => return Err(self.unexpected("assignment operator")),
        };
        self.next();
        let rhs = self.expr()?;
        Ok((target, Expr::bin(op, current, rhs)))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.next();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let TokenKind::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "<<" => BinOp::Shl,
            ">>" => BinOp::Shr,
            "&" => BinOp::BitAnd,
            "|" => BinOp::BitOr,
            "^" => BinOp::BitXor,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            TokenKind::Punct("-") => UnOp::Neg,
            TokenKind::Punct("!") => UnOp::Not,
            TokenKind::Punct("~") => UnOp::BitNot,
            _ => return self.primary(),
        };
        self.next();
        if op == UnOp::Neg {
            if let TokenKind::Int(v) = *self.peek() {
                let span = self.span();
                self.next();
                return fold_literal(v, true).map(Expr::Int).ok_or_else(|| {
                    FrontendError::new(
                        FrontendErrorKind::UnexpectedToken,
                        span,
                        "integer literal out of range",
                    )
                });
            }
        }
        Ok(Expr::un(op, self.unary()?))
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            TokenKind::Int(v) => {
                let span = self.span();
                self.next();
                fold_literal(v, false).map(Expr::Int).ok_or_else(|| {
                    FrontendError::new(
                        FrontendErrorKind::UnexpectedToken,
                        span,
                        "integer literal out of range",
                    )
                })
            }
            TokenKind::Ident(name) => {
                self.next();
                if name == "rnd" && matches!(self.peek(), TokenKind::Punct("(")) {
                    self.next();
                    let a = self.expr()?;
                    self.expect(")")?;
                    return Ok(Expr::Rnd(Box::new(a)));
                }
                if self.eat("[") {
                    let idx = self.expr()?;
                    self.expect("]")?;
                    return Ok(Expr::Index(name, Box::new(idx)));
                }
                Ok(Expr::Var(name))
            }
            TokenKind::Punct("(") => {
                self.next();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn fold_literal(magnitude: u64, negative: bool) -> Option<i64> {
    let v = magnitude as i128;
    let v = if negative { -v } else { v };
    i64::try_from(v).ok()
}

fn parse_pragma(inner: Vec<Token>, span: SourceSpan) -> PResult<Pragma> {
    let mut p = Parser::new(inner);
    // `#pragma tls ...` (without `omp`) is accepted as well.
    if matches!(p.peek(), TokenKind::Ident(s) if s == "omp") {
        p.next();
    }
    let word = match p.peek().clone() {
        TokenKind::Ident(s) => s,
        TokenKind::Kw(Keyword::For) => "for".to_string(),
        _ => {
            return Err(FrontendError::new(
                FrontendErrorKind::UnknownClause,
                span,
                "unknown pragma",
            ))
        }
    };
    let pragma = match word.as_str() {
        "taskloop" => {
            p.next();
            Pragma::Loop(LoopDirective::Taskloop(taskloop_clauses(&mut p, span)?))
        }
        "tls" => {
            p.next();
            let clause_span = p.span();
            let kw = p.ident()?;
            let kind = TlsClauseKind::from_keyword(&kw).ok_or_else(|| {
                FrontendError::new(
                    FrontendErrorKind::UnknownClause,
                    clause_span.clone(),
                    format!("unknown tls clause `{kw}`"),
                )
            })?;
            p.expect("(")?;
            let target = p.ident()?;
            p.expect(")")?;
            Pragma::Tls(TlsDirectiveClause { kind, target, span })
        }
        "ordered" => {
            p.next();
            let kw = p.ident()?;
            if kw != "depend" {
                return Err(FrontendError::new(
                    FrontendErrorKind::UnknownClause,
                    span,
                    format!("unknown ordered clause `{kw}`"),
                ));
            }
            p.expect("(")?;
            let kind = p.ident()?;
            let dep = match kind.as_str() {
                "source" => OrderedDepend::Source,
                "sink" => {
                    p.expect(":")?;
                    OrderedDepend::Sink(p.expr()?)
                }
                _ => {
                    return Err(FrontendError::new(
                        FrontendErrorKind::UnknownClause,
                        span,
                        format!("unknown depend type `{kind}`"),
                    ))
                }
            };
            p.expect(")")?;
            Pragma::Ordered(dep)
        }
        "parallel" | "for" => {
            if word == "parallel" {
                p.next();
            }
            if matches!(p.peek(), TokenKind::Kw(Keyword::For)) {
                p.next();
                Pragma::Loop(LoopDirective::OrderedFor(ordered_clauses(&mut p, span)?))
            } else {
                // `parallel [num_threads(..)]` just opens the team; nothing to record.
                return Ok(Pragma::Ignored);
            }
        }
        "single" => return Ok(Pragma::Ignored),
        _ => {
            return Err(FrontendError::new(
                FrontendErrorKind::UnknownClause,
                span,
                format!("unknown pragma `{word}`"),
            ))
        }
    };
    if !p.at_end() {
        return Err(p.unexpected("end of pragma"));
    }
    Ok(pragma)
}

fn name_list(p: &mut Parser) -> PResult<Vec<String>> {
    p.expect("(")?;
    let mut names = vec![p.ident()?];
    while p.eat(",") {
        names.push(p.ident()?);
    }
    p.expect(")")?;
    Ok(names)
}

fn positive_arg(p: &mut Parser, clause: &str) -> PResult<i64> {
    p.expect("(")?;
    let span = p.span();
    let v = p.signed_int()?;
    p.expect(")")?;
    if v < 1 {
        let what = if clause == "tls" {
            "strip_size"
        } else {
            clause
        };
        return Err(FrontendError::new(
            FrontendErrorKind::InvalidClauseValue,
            span,
            format!("{what} must be ≥ 1"),
        ));
    }
    Ok(v)
}

fn taskloop_clauses(p: &mut Parser, span: SourceSpan) -> PResult<TaskloopDirective> {
    let mut d = TaskloopDirective {
        span,
        ..Default::default()
    };
    while !p.at_end() {
        let clause_span = p.span();
        let name = p.ident()?;
        match name.as_str() {
            "tls" => d.strip_size = Some(positive_arg(p, "tls")?),
            "grainsize" => d.grainsize = Some(positive_arg(p, "grainsize")?),
            "spec_private" => d.spec_private.extend(name_list(p)?),
            "firstprivate" => d.firstprivate.extend(name_list(p)?),
            "shared" => d.shared.extend(name_list(p)?),
            "spec_reduction" => {
                p.expect("(")?;
                let op_span = p.span();
                let sym = match p.next().kind {
                    TokenKind::Punct(s) => s,
                    _ => "",
                };
                let op = ReductionOp::from_symbol(sym).ok_or_else(|| {
                    FrontendError::new(
                        FrontendErrorKind::UnknownClause,
                        op_span,
                        format!("unknown spec_reduction operator `{sym}`"),
                    )
                })?;
                p.expect(":")?;
                let mut names = vec![p.ident()?];
                while p.eat(",") {
                    names.push(p.ident()?);
                }
                p.expect(")")?;
                d.spec_reduction.push(ReductionClause { op, names });
            }
            _ => {
                return Err(FrontendError::new(
                    FrontendErrorKind::UnknownClause,
                    clause_span,
                    format!("unknown taskloop clause `{name}`"),
                ))
            }
        }
    }
    Ok(d)
}

fn ordered_clauses(p: &mut Parser, span: SourceSpan) -> PResult<OrderedForDirective> {
    let mut d = OrderedForDirective {
        span,
        ..Default::default()
    };
    let mut saw_ordered = false;
    while !p.at_end() {
        let clause_span = p.span();
        let name = p.ident()?;
        match name.as_str() {
            "ordered" => {
                if p.peek_at(0) == &TokenKind::Punct("(") {
                    let depth = positive_arg(p, "ordered")?;
                    if depth != 1 {
                        return Err(FrontendError::new(
                            FrontendErrorKind::InvalidClauseValue,
                            clause_span,
                            "only ordered(1) is supported",
                        ));
                    }
                }
                saw_ordered = true;
            }
            "private" => d.private.extend(name_list(p)?),
            "shared" => d.shared.extend(name_list(p)?),
            _ => {
                return Err(FrontendError::new(
                    FrontendErrorKind::UnknownClause,
                    clause_span,
                    format!("unknown loop clause `{name}`"),
                ))
            }
        }
    }
    if !saw_ordered {
        return Err(FrontendError::new(
            FrontendErrorKind::UnknownClause,
            d.span,
            "parallel for without ordered is not supported",
        ));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_str, tokenize};
    use super::*;

    #[test]
    fn strip_size_zero_rejected() {
        let err = parse_str("int n;\n#pragma omp taskloop tls(0)\nfor (i = 0; i < n; i++) {}")
            .unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::InvalidClauseValue);
        assert!(
            err.message.contains("strip_size must be ≥ 1"),
            "{}",
            err.message
        );
        assert_eq!(err.span.line, 2);
    }

    #[test]
    fn compound_assignment_desugars() {
        let p = parse_str("int x; int A[4];\nx += 3; A[x] -= 1; x++;").unwrap();
        assert_eq!(
            p.body[0],
            Stmt::assign_scalar("x", Expr::bin(BinOp::Add, Expr::var("x"), Expr::Int(3)))
        );
        assert_eq!(
            p.body[1],
            Stmt::assign(
                LValue::Index("A".into(), Expr::var("x")),
                Expr::bin(BinOp::Sub, Expr::index("A", Expr::var("x")), Expr::Int(1))
            )
        );
    }

    #[test]
    fn negative_literals_fold() {
        let p = parse_str("int x = -9223372036854775808;\nx = 2 - -3;").unwrap();
        assert_eq!(p.globals[0].init, vec![i64::MIN]);
        assert_eq!(
            p.body[0],
            Stmt::assign_scalar("x", Expr::bin(BinOp::Sub, Expr::Int(2), Expr::Int(-3)))
        );
    }

    #[test]
    fn precedence_is_c_like() {
        let p = parse_str("int x;\nx = 1 + 2 * 3 << 1 & 7 || 0 && 1;").unwrap();
        let Stmt::Assign { value, .. } = &p.body[0] else {
            panic!()
        };
        let mul = Expr::bin(BinOp::Mul, Expr::Int(2), Expr::Int(3));
        let add = Expr::bin(BinOp::Add, Expr::Int(1), mul);
        let shl = Expr::bin(BinOp::Shl, add, Expr::Int(1));
        let and = Expr::bin(BinOp::BitAnd, shl, Expr::Int(7));
        let land = Expr::bin(BinOp::And, Expr::Int(0), Expr::Int(1));
        assert_eq!(*value, Expr::bin(BinOp::Or, and, land));
    }

    #[test]
    fn unterminated_block() {
        let err = parse_str("int x;\nif (x) {\n x = 1;").unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::UnterminatedBlock);
        assert_eq!((err.span.line, err.span.column), (2, 8));
    }

    #[test]
    fn unknown_reduction_operator() {
        let err = parse_str("int n;\n#pragma omp taskloop tls(4) spec_reduction(max: n)\nfor (i = 0; i < 4; i++) { n = n + 1; }")
            .unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::UnknownClause);
        let err = parse_str("int n;\n#pragma omp taskloop tls(4) spec_reduction(/: n)\nfor (i = 0; i < 4; i++) { n = n + 1; }")
            .unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::UnknownClause);
    }

    #[test]
    fn all_eight_reduction_operators_accepted() {
        for op in ReductionOp::ALL {
            let src = format!(
                "int n;\n#pragma omp taskloop tls(2) spec_reduction({}: n)\nfor (i = 0; i < 4; i++) {{ n = n {} 1; }}",
                op.symbol(),
                op.symbol()
            );
            let p = parse_str(&src).unwrap();
            let Stmt::For(l) = &p.body[0] else { panic!() };
            assert_eq!(l.taskloop().unwrap().spec_reduction[0].op, op);
        }
    }

    #[test]
    fn unknown_clause_and_unexpected_token() {
        let err = parse_str(
            "int n;\n#pragma omp taskloop tls(2) collapse(2)\nfor (i = 0; i < 4; i++) {}",
        )
        .unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::UnknownClause);
        let err = parse_str("int n;\nn = ;").unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::UnexpectedToken);
        assert_eq!(
            err.to_string(),
            "<input>:2:5: expected expression, found `;`"
        );
    }

    #[test]
    fn pragma_attaches_in_unbraced_body() {
        let p = parse_str(
            "int B[4]; int c;\n#pragma omp taskloop tls(2) spec_private(B)\nfor (i = 0; i < 4; i++) {\n if (c)\n  #pragma omp tls if_write(B)\n  B[i] = 1;\n c = 0;\n}",
        )
        .unwrap();
        let Stmt::For(l) = &p.body[0] else { panic!() };
        let Stmt::If { then_body, .. } = &l.body[0] else {
            panic!()
        };
        assert_eq!(then_body.len(), 2);
        assert!(matches!(then_body[0], Stmt::PragmaTls(_)));
        assert_eq!(l.body.len(), 2);
    }

    #[test]
    fn tokens_feed_parser() {
        let toks = tokenize("int a;\na = 1;").unwrap();
        let p = parse(toks).unwrap();
        assert_eq!(p.globals.len(), 1);
        assert_eq!(p.body.len(), 1);
    }
}
