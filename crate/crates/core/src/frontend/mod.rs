//! STE-C text to [`Program`](crate::ir::Program).
//!
//! The grammar is a small C subset:
//!
//! ```text
//! program   := { decl | stmt }
//! decl      := "int" IDENT [ "[" INT "]" ] [ "=" ( sint | "{" sint { "," sint } "}" ) ] ";"
//! stmt      := for | if | assign ";" | PRAGMA
//! for       := [ loop-pragma ] "for" "(" IDENT "=" expr ";" expr ";" step ")" body
//! if        := "if" "(" expr ")" body [ "else" body ]
//! body      := "{" { stmt } "}" | { tls-pragma } stmt
//! assign    := lvalue ( "=" | "+=" | "-=" | "*=" | ... ) expr | lvalue ( "++" | "--" )
//! expr      := C precedence over + - * / % << >> & | ^ < <= > >= == != && || ! ~ -
//!              with primaries INT, IDENT, IDENT "[" expr "]", "rnd" "(" expr ")", "(" expr ")"
//! ```
//!
//! Pragmas are line-scoped:
//!
//! ```text
//! #pragma omp taskloop tls(S) [spec_private(l)] [spec_reduction(op: l)] [firstprivate(l)] [shared(l)]
//! #pragma omp taskloop grainsize(G) ...
//! #pragma omp tls read(x) | write(x) | if_read(x) | if_write(x)
//! #pragma omp [parallel] for ordered(1) [private(l)] [shared(l)]
//! #pragma omp ordered depend(sink: i - 1) | depend(source)
//! #pragma omp parallel ... | #pragma omp single     (accepted and ignored)
//! ```

mod lexer;
mod parser;

use std::fmt;

pub use lexer::{tokenize, tokenize_file, Keyword, Token, TokenKind};
pub use parser::parse;

use crate::ir::{validate, Program, SourceSpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrontendErrorKind {
    IllegalCharacter,
    UnexpectedToken,
    UnterminatedBlock,
    UnknownClause,
    InvalidClauseValue,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct FrontendError {
    pub kind: FrontendErrorKind,
    pub span: SourceSpan,
    pub message: String,
}

impl FrontendError {
    pub fn new(kind: FrontendErrorKind, span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }
}

impl fmt::Display for FrontendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// Tokenizes, parses and validates one source file.
pub fn load(file: &str, text: &str) -> Result<Program, FrontendError> {
    let program = parse(tokenize_file(file, text)?)?;
    let report = validate(&program);
    if let Some(v) = report.violations.first() {
        let mut message = v.rule.message().to_string();
        if !v.detail.is_empty() {
            message = format!("{message}: `{}`", v.detail);
        }
        return Err(FrontendError::new(
            FrontendErrorKind::Invalid,
            v.span.clone(),
            message,
        ));
    }
    Ok(program)
}

/// Tokenize + parse without validation.
pub fn parse_str(text: &str) -> Result<Program, FrontendError> {
    parse(tokenize(text)?)
}
