use std::sync::Arc;

use super::{FrontendError, FrontendErrorKind};
use crate::ir::SourceSpan;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keyword {
    Int,
    For,
    If,
    Else,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Kw(Keyword),
    Ident(String),
    /// Magnitude only; the parser folds a leading minus.
    Int(u64),
    Punct(&'static str),
    /// A whole `#pragma` line, lexed with the ordinary rules.
    Pragma(Vec<Token>),
    Eof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

// Longest match first.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "(", ")", "{", "}", "[", "]", ";", ",", "=", "+", "-", "*", "/",
    "%", "&", "|", "^", "~", "!", "<", ">", ":",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, FrontendError> {
    tokenize_file("<input>", text)
}

pub fn tokenize_file(file: &str, text: &str) -> Result<Vec<Token>, FrontendError> {
    let mut lx = Lexer {
        file: Arc::from(file),
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia(true);
        if lx.pos >= lx.chars.len() {
            out.push(Token {
                kind: TokenKind::Eof,
                span: lx.span_here(0),
            });
            return Ok(out);
        }
        if lx.peek() == Some('#') {
            out.push(lx.pragma()?);
        } else {
            out.push(lx.token()?);
        }
    }
}

struct Lexer {
    file: Arc<str>,
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_here(&self, len: u32) -> SourceSpan {
        SourceSpan::new(self.file.clone(), self.line, self.col, len)
    }

    fn skip_trivia(&mut self, newlines: bool) {
        while let Some(c) = self.peek() {
            if c == '\n' && !newlines {
                return;
            }
            if c.is_whitespace() {
                self.bump();
            } else if c == '/' && self.peek_at(1) == Some('/') {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                return;
            }
        }
    }

    fn pragma(&mut self) -> Result<Token, FrontendError> {
        let span = self.span_here(1);
        self.bump();
        self.skip_trivia(false);
        let word: String = self.ident_chars();
        if word != "pragma" {
            return Err(FrontendError::new(
                FrontendErrorKind::IllegalCharacter,
                span,
                "expected `#pragma`",
            ));
        }
        let mut inner = Vec::new();
        loop {
            self.skip_trivia(false);
            match self.peek() {
                None | Some('\n') => break,
                _ => inner.push(self.token()?),
            }
        }
        let mut span = span;
        span.length = self.col.saturating_sub(span.column);
        Ok(Token {
            kind: TokenKind::Pragma(inner),
            span,
        })
    }

    fn ident_chars(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn token(&mut self) -> Result<Token, FrontendError> {
        let (line, col) = (self.line, self.col);
        let c = self.peek().expect("token() called at end of input");
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            let s = self.ident_chars();
            match s.as_str() {
                "int" => TokenKind::Kw(Keyword::Int),
                "for" => TokenKind::Kw(Keyword::For),
                "if" => TokenKind::Kw(Keyword::If),
                "else" => TokenKind::Kw(Keyword::Else),
                _ => TokenKind::Ident(s),
            }
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(d) = self.peek().filter(|d| d.is_ascii_digit()) {
                s.push(d);
                self.bump();
            }
            let v = s.parse::<u64>().map_err(|_| {
                FrontendError::new(
                    FrontendErrorKind::UnexpectedToken,
                    SourceSpan::new(self.file.clone(), line, col, s.len() as u32),
                    "integer literal out of range",
                )
            })?;
            TokenKind::Int(v)
        } else {
            let rest: String = self.chars[self.pos..(self.pos + 3).min(self.chars.len())]
                .iter()
                .collect();
            match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    for _ in 0..p.len() {
                        self.bump();
                    }
                    TokenKind::Punct(p)
                }
                None => {
                    return Err(FrontendError::new(
                        FrontendErrorKind::IllegalCharacter,
                        SourceSpan::new(self.file.clone(), line, col, 1),
                        format!("illegal character `{c}`"),
                    ))
                }
            }
        };
        let len = self.col.saturating_sub(col).max(1);
        Ok(Token {
            kind,
            span: SourceSpan::new(self.file.clone(), line, col, len),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text)
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn declaration_tokens() {
        assert_eq!(
            kinds("int n;"),
            vec![
                TokenKind::Kw(Keyword::Int),
                TokenKind::Ident("n".into()),
                TokenKind::Punct(";"),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn pragma_is_one_token() {
        let toks = tokenize("#pragma omp tls if_write(n)\nn = 1;").unwrap();
        let TokenKind::Pragma(inner) = &toks[0].kind else {
            panic!("expected pragma, got {:?}", toks[0]);
        };
        let inner: Vec<_> = inner.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(
            inner,
            vec![
                TokenKind::Ident("omp".into()),
                TokenKind::Ident("tls".into()),
                TokenKind::Ident("if_write".into()),
                TokenKind::Punct("("),
                TokenKind::Ident("n".into()),
                TokenKind::Punct(")"),
            ]
        );
        assert_eq!(toks[1].kind, TokenKind::Ident("n".into()));
        assert_eq!(toks[1].span.line, 2);
    }

    #[test]
    fn illegal_character_position() {
        let err = tokenize("@").unwrap_err();
        assert_eq!(err.kind, FrontendErrorKind::IllegalCharacter);
        assert_eq!((err.span.line, err.span.column), (1, 1));
        let err = tokenize("int x;\n  x = $;").unwrap_err();
        assert_eq!((err.span.line, err.span.column), (2, 7));
    }

    #[test]
    fn comments_and_longest_match() {
        assert_eq!(
            kinds("a <<= b // trailing\n"),
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Punct("<<="),
                TokenKind::Ident("b".into()),
                TokenKind::Eof
            ]
        );
    }
}
