//! Recursive-descent parser for the infix expression grammar.
//!
//! Grammar (whitespace-insensitive):
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | name '(' expr ')' | name | '(' expr ')'
//! ```
//! Known functions: `sin cos exp log sqrt abs`. Any other name must be a
//! declared coordinate. Errors report byte offsets into the input.

use super::Expression;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            lx.skip_ws();
            if lx.pos >= lx.src.len() {
                return Ok(out);
            }
            let start = lx.pos;
            let c = lx.src[lx.pos];
            let tok = match c {
                b'+' => {
                    lx.pos += 1;
                    Tok::Plus
                }
                b'-' => {
                    lx.pos += 1;
                    Tok::Minus
                }
                b'*' => {
                    lx.pos += 1;
                    Tok::Star
                }
                b'/' => {
                    lx.pos += 1;
                    Tok::Slash
                }
                b'^' => {
                    lx.pos += 1;
                    Tok::Caret
                }
                b'(' => {
                    lx.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    lx.pos += 1;
                    Tok::RParen
                }
                b'0'..=b'9' | b'.' => lx.number(start)?,
                c if c.is_ascii_alphabetic() || c == b'_' => lx.name(start),
                other => {
                    return Err(Error::Syntax {
                        offset: start,
                        msg: format!("unexpected character `{}`", other as char),
                    })
                }
            };
            out.push((tok, start));
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok> {
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| Error::Syntax {
                offset: start,
                msg: format!("malformed number `{text}`"),
            })
    }

    fn name(&mut self, start: usize) -> Tok {
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        Tok::Name(
            std::str::from_utf8(&self.src[start..self.pos])
                .expect("ascii slice")
                .to_string(),
        )
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    coords: &'a [&'a str],
    end: usize,
}

const FUNCTIONS: [&str; 6] = ["sin", "cos", "exp", "log", "sqrt", "abs"];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.idx).map(|&(_, o)| o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.idx).cloned();
        self.idx += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some((t, _)) if t == tok => Ok(()),
            Some((_, o)) => Err(Error::Syntax {
                offset: o,
                msg: format!("expected {what}"),
            }),
            None => Err(Error::Syntax {
                offset: self.end,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expression> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = lhs.add(&rhs);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = lhs.sub(&rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expression> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = lhs.mul(&rhs);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = lhs.div(&rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(base.pow(&exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expression::constant(v)),
            Some((Tok::LParen, _)) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some((Tok::Name(name), off)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    if !FUNCTIONS.contains(&name.as_str()) {
                        return Err(Error::UnknownSymbol { name, offset: off });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(match name.as_str() {
                        "sin" => arg.sin(),
                        "cos" => arg.cos(),
                        "exp" => arg.exp(),
                        "log" => arg.log(),
                        "sqrt" => arg.sqrt(),
                        "abs" => arg.abs(),
                        _ => unreachable!(),
                    })
                } else {
                    match self.coords.iter().position(|c| *c == name) {
                        Some(i) => Ok(Expression::coord(i)),
                        None => Err(Error::UnknownSymbol { name, offset: off }),
                    }
                }
            }
            Some((_, o)) => Err(Error::Syntax {
                offset: o,
                msg: "expected a value".into(),
            }),
            None => Err(Error::Syntax {
                offset: self.end,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses `text` over the coordinate names `coords`.
pub fn parse(text: &str, coords: &[&str]) -> Result<Expression> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            msg: "empty expression".into(),
        });
    }
    let toks = Lexer::tokens(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        coords,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.idx < p.toks.len() {
        return Err(Error::Syntax {
            offset: p.offset(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}
