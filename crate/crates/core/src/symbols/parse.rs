//! Text format for symbols.
//!
//! A symbol is a sum of terms, each a `*`-separated product of factors:
//! numbers, `x<i>` or `xi<i>` variables with optional `^<power>`, and the
//! shorthand `|xi|^2` for `xi1^2 + ... + xin^2`. Whitespace is ignored.
//!
//! Examples: `3.5 * x2^2 * xi1`, `|xi|^2 - 1`, `xi1 + 2*xi2 + x2^2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Symbol;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    XVar(usize),
    XiVar(usize),
    XiNormSq,
    Caret,
    Star,
    Plus,
    Minus,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, at: usize, message: &str) -> Error {
        Error::Parse {
            position: at,
            message: String::from(message),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn tokenize(&mut self) -> Result<Vec<(usize, Token)>> {
        let mut tokens = Vec::new();
        loop {
            self.skip_ws();
            if self.pos >= self.src.len() {
                break;
            }
            let start = self.pos;
            let c = self.src[self.pos];
            match c {
                b'+' => {
                    self.pos += 1;
                    tokens.push((start, Token::Plus));
                }
                b'-' => {
                    self.pos += 1;
                    tokens.push((start, Token::Minus));
                }
                b'*' => {
                    self.pos += 1;
                    tokens.push((start, Token::Star));
                }
                b'^' => {
                    self.pos += 1;
                    tokens.push((start, Token::Caret));
                }
                b'|' => {
                    tokens.push((start, self.lex_xi_norm()?));
                }
                b'x' => {
                    tokens.push((start, self.lex_variable()?));
                }
                b'0'..=b'9' | b'.' => {
                    tokens.push((start, self.lex_number()?));
                }
                _ => {
                    return Err(self.error(start, "unexpected character"));
                }
            }
        }
        Ok(tokens)
    }

    fn lex_xi_norm(&mut self) -> Result<Token> {
        let start = self.pos;
        // "|xi|" then "^2", whitespace allowed around the caret.
        let lit = b"|xi|";
        if self.src.len() < self.pos + lit.len() || &self.src[self.pos..self.pos + lit.len()] != lit
        {
            return Err(self.error(start, "expected |xi|^2"));
        }
        self.pos += lit.len();
        self.skip_ws();
        if self.pos >= self.src.len() || self.src[self.pos] != b'^' {
            return Err(self.error(self.pos, "expected ^2 after |xi|"));
        }
        self.pos += 1;
        self.skip_ws();
        if self.pos >= self.src.len() || self.src[self.pos] != b'2' {
            return Err(self.error(self.pos, "only |xi|^2 is supported"));
        }
        self.pos += 1;
        Ok(Token::XiNormSq)
    }

    fn lex_variable(&mut self) -> Result<Token> {
        let start = self.pos;
        self.pos += 1; // consume 'x'
        let is_xi = self.pos < self.src.len() && self.src[self.pos] == b'i';
        if is_xi {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return Err(self.error(start, "variable needs an index, e.g. x2 or xi1"));
        }
        let text = core::str::from_utf8(&self.src[digits_start..self.pos]).unwrap();
        let index: usize = text
            .parse()
            .map_err(|_| self.error(digits_start, "bad variable index"))?;
        if index == 0 {
            return Err(self.error(digits_start, "variable indices start at 1"));
        }
        Ok(if is_xi {
            Token::XiVar(index)
        } else {
            Token::XVar(index)
        })
    }

    fn lex_number(&mut self) -> Result<Token> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // Optional exponent part.
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E')
        {
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
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(start, "malformed number"))?;
        Ok(Token::Number(value))
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    dim: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map(|(p, _)| *p)
            .unwrap_or(self.len)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.cursor).map(|(_, t)| t.clone());
        self.cursor += 1;
        t
    }

    fn error(&self, message: String) -> Error {
        Error::Parse {
            position: self.position(),
            message,
        }
    }

    fn parse_expr(&mut self) -> Result<Symbol> {
        let mut sign = 1.0;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Plus => {
                    self.cursor += 1;
                }
                Token::Minus => {
                    sign = -sign;
                    self.cursor += 1;
                }
                _ => break,
            }
        }
        let mut acc = self.parse_term()?.scale(sign);
        while let Some(tok) = self.peek() {
            let term_sign = match tok {
                Token::Plus => 1.0,
                Token::Minus => -1.0,
                _ => {
                    return Err(self.error(String::from("expected + or - between terms")));
                }
            };
            self.cursor += 1;
            let mut sign = term_sign;
            while let Some(Token::Minus) = self.peek() {
                sign = -sign;
                self.cursor += 1;
            }
            let term = self.parse_term()?;
            acc = acc.add(&term.scale(sign));
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<Symbol> {
        let mut acc = self.parse_factor()?;
        while let Some(Token::Star) = self.peek() {
            self.cursor += 1;
            let f = self.parse_factor()?;
            acc = acc.mul(&f);
        }
        Ok(acc)
    }

    fn parse_factor(&mut self) -> Result<Symbol> {
        let tok = self
            .advance()
            .ok_or_else(|| self.error(String::from("expected a factor")))?;
        let base = match tok {
            Token::Number(v) => return Ok(Symbol::constant(self.dim, v)),
            Token::XiNormSq => return Ok(Symbol::xi_norm_sq(self.dim)),
            Token::XVar(i) => {
                self.check_index(i)?;
                Symbol::x(self.dim, i - 1)
            }
            Token::XiVar(i) => {
                self.check_index(i)?;
                Symbol::xi(self.dim, i - 1)
            }
            other => {
                return Err(self.error(format!("unexpected token {other:?} in factor")));
            }
        };
        if let Some(Token::Caret) = self.peek() {
            self.cursor += 1;
            match self.advance() {
                Some(Token::Number(v)) if v >= 0.0 && v == libm::floor(v) && v <= u32::MAX as f64 => {
                    Ok(base.pow(v as u32))
                }
                _ => Err(self.error(String::from("power must be a non-negative integer"))),
            }
        } else {
            Ok(base)
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i > self.dim {
            Err(self.error(format!(
                "variable index {i} exceeds the ambient dimension {}",
                self.dim
            )))
        } else {
            Ok(())
        }
    }
}

/// Parse the text format into a [`Symbol`] of ambient dimension `dim`.
pub fn parse_symbol(text: &str, dim: usize) -> Result<Symbol> {
    if dim == 0 {
        return Err(Error::InvalidParameter(String::from(
            "dimension must be at least 1",
        )));
    }
    let tokens = Lexer::new(text).tokenize()?;
    if tokens.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: String::from("empty symbol"),
        });
    }
    let len = text.len();
    let mut parser = Parser {
        tokens,
        cursor: 0,
        dim,
        len,
    };
    let sym = parser.parse_expr()?;
    if parser.cursor != parser.tokens.len() {
        return Err(parser.error(String::from("trailing input after symbol")));
    }
    Ok(sym)
}
