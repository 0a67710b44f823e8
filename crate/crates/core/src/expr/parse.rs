use super::{BinaryOp, Node, UnaryOp, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if !c.is_ascii() {
            return Err(Error::Syntax { offset: start, message: "non-ASCII character".into() });
        }
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            return Ok((Tok::Ident(name.to_string()), start));
        }
        Err(Error::Syntax { offset: start, message: format!("unexpected character `{}`", c as char) })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let digits = |lx: &mut Self| {
            let s = lx.pos;
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_digit() {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let int_digits = digits(self);
        let mut is_int = true;
        if self.src.get(self.pos) == Some(&b'.') {
            is_int = false;
            self.pos += 1;
            let frac = digits(self);
            if int_digits == 0 && frac == 0 {
                return Err(Error::Syntax { offset: start, message: "malformed number".into() });
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2e` followed by something else: treat `e...` as not part of the number
                self.pos = save;
            } else {
                is_int = false;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if is_int {
            if let Ok(v) = text.parse::<u64>() {
                return Ok((Tok::Int(v), start));
            }
        }
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Syntax { offset: start, message: format!("malformed number `{text}`") })?;
        if !v.is_finite() {
            return Err(Error::Syntax { offset: start, message: format!("number `{text}` overflows") });
        }
        Ok((Tok::Num(v), start))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    n: usize,
    m: usize,
}

pub(super) fn parse(text: &str, n: usize, m: usize) -> Result<Node> {
    let mut lex = Lexer { src: text.as_bytes(), pos: 0 };
    let (tok, at) = lex.next()?;
    let mut p = Parser { lex, tok, at, n, m };
    let node = p.expr()?;
    if p.tok != Tok::End {
        return Err(Error::Syntax { offset: p.at, message: format!("unexpected token {:?}", p.tok) });
    }
    Ok(node)
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<()> {
        let (tok, at) = self.lex.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.tok != want {
            return Err(Error::Syntax { offset: self.at, message: format!("expected {what}") });
        }
        self.bump()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        match self.tok {
            Tok::Minus => {
                self.bump()?;
                Ok(Node::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.bump()?;
        let parens = self.tok == Tok::LParen;
        if parens {
            self.bump()?;
        }
        let k = match self.tok {
            Tok::Int(k) if k <= u32::MAX as u64 => k as u32,
            _ => {
                return Err(Error::Syntax {
                    offset: self.at,
                    message: "exponent must be a non-negative integer literal".into(),
                })
            }
        };
        self.bump()?;
        if parens {
            self.expect(Tok::RParen, "`)`")?;
        }
        if self.tok == Tok::Caret {
            return Err(Error::Syntax { offset: self.at, message: "chained exponents need parentheses".into() });
        }
        Ok(Node::Pow(Box::new(base), k))
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Node::Const(v))
            }
            Tok::Int(v) => {
                self.bump()?;
                Ok(Node::Const(v as f64))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::LParen {
                    return self.call(&name, at);
                }
                self.variable(&name, at)
            }
            Tok::End => Err(Error::Syntax { offset: at, message: "unexpected end of input".into() }),
            other => Err(Error::Syntax { offset: at, message: format!("unexpected token {other:?}") }),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<Node> {
        let bad_range = || Error::VariableOutOfRange { name: name.to_string(), n: self.n, m: self.m, offset: at };
        match Var::from_name(name) {
            Some(Var::X(i)) if i >= self.n => Err(bad_range()),
            Some(Var::U(j)) if j >= self.m => Err(bad_range()),
            Some(v) => Ok(Node::Var(v)),
            None => {
                let looks_indexed = (name.starts_with('x') || name.starts_with('u'))
                    && name.len() > 1
                    && name[1..].bytes().all(|b| b.is_ascii_digit());
                if looks_indexed {
                    Err(bad_range())
                } else {
                    Err(Error::UnknownIdentifier { name: name.to_string(), offset: at })
                }
            }
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Node> {
        let arity = match name {
            "sin" | "cos" | "exp" | "log" | "abs" => 1,
            "max" | "min" => 2,
            _ => return Err(Error::UnknownIdentifier { name: name.to_string(), offset: at }),
        };
        self.bump()?;
        let mut args = vec![self.expr()?];
        while self.tok == Tok::Comma {
            self.bump()?;
            args.push(self.expr()?);
        }
        if args.len() != arity {
            return Err(Error::Syntax {
                offset: at,
                message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            });
        }
        self.expect(Tok::RParen, "`)`")?;
        let mut args = args.into_iter().map(Box::new);
        let a = args.next().expect("arity checked");
        Ok(match name {
            "sin" => Node::Unary(UnaryOp::Sin, a),
            "cos" => Node::Unary(UnaryOp::Cos, a),
            "exp" => Node::Unary(UnaryOp::Exp, a),
            "log" => Node::Unary(UnaryOp::Log, a),
            "abs" => Node::Unary(UnaryOp::Abs, a),
            "max" => Node::Binary(BinaryOp::Max, a, args.next().expect("arity checked")),
            _ => Node::Binary(BinaryOp::Min, a, args.next().expect("arity checked")),
        })
    }
}
