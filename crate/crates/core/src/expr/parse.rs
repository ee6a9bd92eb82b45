//! Pratt parser for the expression grammar.
//!
//! Binding powers: `+ -` (1) < `* /` (2) < unary `-` (3) < `^` (4). All binary
//! operators are left-associative; the exponent of `^` must be a non-negative
//! integer literal.

use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownToken(String),
    BadNumber(String),
    NonIntegerExponent(String),
    UnclosedParen,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => f.write_str("empty expression"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::UnknownToken(t) => write!(f, "unknown token `{t}`"),
            ParseErrorKind::BadNumber(t) => write!(f, "malformed number `{t}`"),
            ParseErrorKind::NonIntegerExponent(t) => {
                write!(
                    f,
                    "exponent must be a non-negative integer literal, found `{t}`"
                )
            }
            ParseErrorKind::UnclosedParen => f.write_str("unclosed parenthesis"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Var(usize),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lexer.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            b'x' => {
                self.pos += 1;
                let digits = self.take_while(|b| b.is_ascii_digit());
                let index: usize = digits.parse().unwrap_or(0);
                if digits.is_empty() || index == 0 || self.peek_ident() {
                    let word = self.finish_word(start);
                    return Err(ParseError {
                        kind: ParseErrorKind::UnknownToken(word),
                        offset: start,
                    });
                }
                Tok::Var(index - 1)
            }
            _ => {
                let word = if c.is_ascii_alphabetic() || c == b'_' {
                    self.finish_word(start)
                } else {
                    self.src[start..]
                        .chars()
                        .next()
                        .map(String::from)
                        .unwrap_or_default()
                };
                return Err(ParseError {
                    kind: ParseErrorKind::UnknownToken(word),
                    offset: start,
                });
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        self.take_while(|b| b.is_ascii_digit() || b == b'.');
        let bytes = self.src.as_bytes();
        if matches!(bytes.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.take_while(|b| b.is_ascii_digit()).is_empty() {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(|v| Tok::Num(v, text.to_string()))
            .map_err(|_| ParseError {
                kind: ParseErrorKind::BadNumber(text.to_string()),
                offset: start,
            })
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        while self.pos < bytes.len() && pred(bytes[self.pos]) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn peek_ident(&self) -> bool {
        self.src
            .as_bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
    }

    fn finish_word(&mut self, start: usize) -> String {
        self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
        self.src[start..self.pos].to_string()
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

const NEG_BP: u8 = 3;
const POW_BP: u8 = 4;

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(tok: &Tok, offset: usize) -> ParseError {
        let kind = match tok {
            Tok::End => ParseErrorKind::UnexpectedEnd,
            Tok::Num(_, text) => ParseErrorKind::UnexpectedToken(text.clone()),
            Tok::Var(i) => ParseErrorKind::UnexpectedToken(format!("x{}", i + 1)),
            Tok::Op(c) => ParseErrorKind::UnexpectedToken(c.to_string()),
            Tok::LParen => ParseErrorKind::UnexpectedToken("(".into()),
            Tok::RParen => ParseErrorKind::UnexpectedToken(")".into()),
        };
        ParseError { kind, offset }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let (tok, at) = self.bump();
        let mut lhs = match tok {
            Tok::Num(v, _) => Expr::Const(v),
            Tok::Var(i) => Expr::Var(i),
            Tok::Op('-') => Expr::Neg(Box::new(self.expr(NEG_BP)?)),
            Tok::LParen => {
                let inner = self.expr(0)?;
                match self.bump() {
                    (Tok::RParen, _) => inner,
                    (Tok::End, _) => {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnclosedParen,
                            offset: at,
                        })
                    }
                    (t, o) => return Err(Self::unexpected(&t, o)),
                }
            }
            other => return Err(Self::unexpected(&other, at)),
        };

        loop {
            let (tok, at) = self.peek().clone();
            let (bp, op) = match tok {
                Tok::Op('^') => (POW_BP, None),
                Tok::Op('+') => (1, Some(BinOp::Add)),
                Tok::Op('-') => (1, Some(BinOp::Sub)),
                Tok::Op('*') => (2, Some(BinOp::Mul)),
                Tok::Op('/') => (2, Some(BinOp::Div)),
                Tok::End | Tok::RParen => break,
                other => return Err(Self::unexpected(&other, at)),
            };
            if bp <= min_bp {
                break;
            }
            self.bump();
            lhs = match op {
                None => Expr::Pow(Box::new(lhs), self.exponent()?),
                Some(op) => Expr::binary(op, lhs, self.expr(bp)?),
            };
        }
        Ok(lhs)
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v, text) => {
                let integral = !text.contains(['.', 'e', 'E']);
                if integral && v >= 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(ParseError {
                        kind: ParseErrorKind::NonIntegerExponent(text),
                        offset: at,
                    })
                }
            }
            Tok::Op('-') => Err(ParseError {
                kind: ParseErrorKind::NonIntegerExponent("-".into()),
                offset: at,
            }),
            Tok::Var(i) => Err(ParseError {
                kind: ParseErrorKind::NonIntegerExponent(format!("x{}", i + 1)),
                offset: at,
            }),
            Tok::LParen => Err(ParseError {
                kind: ParseErrorKind::NonIntegerExponent("(".into()),
                offset: at,
            }),
            other => Err(Self::unexpected(&other, at)),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            offset: 0,
        });
    }
    let tokens = Lexer::tokens(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr(0)?;
    match parser.peek() {
        (Tok::End, _) => Ok(expr),
        (tok, at) => Err(Parser::unexpected(tok, *at)),
    }
}
