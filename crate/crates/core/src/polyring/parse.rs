//! Recursive-descent parser for the polynomial text grammar.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' INTEGER)?
//! atom   := NUMBER | IDENT | '(' expr ')'
//! ```
//!
//! Numbers are integer or decimal literals with an optional exponent
//! (`2.5e-3`). Whitespace is ignored.

use super::monomial::Monomial;
use super::polynomial::{default_names, Polynomial};
use super::PolyError;

impl Polynomial {
    /// Parses `text` in the ring with variables `x1..x{nvars}`.
    pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
        Self::parse_with_names(text, &default_names(nvars))
    }

    /// Parses `text` with the given variable names; `names[i]` is variable `i`.
    pub fn parse_with_names(text: &str, names: &[String]) -> Result<Polynomial, PolyError> {
        let mut p = Parser {
            src: text,
            pos: 0,
            names,
        };
        let poly = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(poly)
    }

    /// Parses `text` using `x<i>` variable names, sizing the ring by the largest
    /// index that appears (at least one variable).
    pub fn parse_infer(text: &str) -> Result<Polynomial, PolyError> {
        let mut max_idx = 1usize;
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let ident = &text[start..i];
                match ident.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    Some(k) if k >= 1 && !ident[1..].starts_with('0') => max_idx = max_idx.max(k),
                    _ => {
                        return Err(PolyError::UnknownVariable {
                            name: ident.to_string(),
                            pos: start,
                        })
                    }
                }
            } else if c.is_ascii_digit() || c == b'.' {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                    }
                }
            } else {
                i += 1;
            }
        }
        Self::parse(text, max_idx)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn nvars(&self) -> usize {
        self.names.len()
    }

    fn error(&self, message: &str) -> PolyError {
        PolyError::Parse {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.src[self.pos..].chars().next() {
            self.pos += c.len_utf8();
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.bump();
                    acc = acc + self.term()?;
                }
                Some('-') => {
                    self.bump();
                    acc = acc - self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while self.peek() == Some('*') {
            self.bump();
            acc = acc * self.unary()?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some('-') => {
                self.bump();
                Ok(-self.unary()?)
            }
            Some('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.bump();
            self.skip_ws();
            let start = self.pos;
            let digits = self.src[start..]
                .bytes()
                .take_while(u8::is_ascii_digit)
                .count();
            if digits == 0 {
                return Err(self.error("exponent must be a nonnegative integer"));
            }
            self.pos += digits;
            if matches!(self.src[self.pos..].chars().next(), Some('.')) {
                return Err(self.error("exponent must be a nonnegative integer"));
            }
            let k: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| PolyError::Parse {
                    pos: start,
                    message: "exponent too large".to_string(),
                })?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.bump();
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => self.variable(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        let rest = &self.src[start..];
        let int_len = rest.bytes().take_while(u8::is_ascii_digit).count();
        let mut len = int_len;
        if rest[len..].starts_with('.') {
            len += 1;
            len += rest[len..].bytes().take_while(u8::is_ascii_digit).count();
        }
        // optional exponent: e or E, optional sign, at least one digit
        let tail = &rest.as_bytes()[len..];
        if matches!(tail.first(), Some(b'e' | b'E')) {
            let sign = usize::from(matches!(tail.get(1), Some(b'+' | b'-')));
            let digits = tail[1 + sign..].iter().take_while(|b| b.is_ascii_digit()).count();
            if digits > 0 {
                len += 1 + sign + digits;
            }
        }
        let lit = &rest[..len];
        if lit == "." {
            return Err(self.error("malformed number"));
        }
        let v: f64 = lit.parse().map_err(|_| self.error("malformed number"))?;
        self.pos += len;
        Ok(Polynomial::constant(self.nvars(), v))
    }

    fn variable(&mut self) -> Result<Polynomial, PolyError> {
        let start = self.pos;
        let len = self.src[start..]
            .char_indices()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '_'))
            .map_or(self.src.len() - start, |(i, _)| i);
        let name = &self.src[start..start + len];
        self.pos += len;
        match self.names.iter().position(|n| n == name) {
            Some(idx) => Ok(Polynomial::monomial(
                self.nvars(),
                Monomial::var(idx),
                1.0,
            )),
            None => Err(PolyError::UnknownVariable {
                name: name.to_string(),
                pos: start,
            }),
        }
    }
}
