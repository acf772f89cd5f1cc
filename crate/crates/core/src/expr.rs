//! Classical expressions over measurement bits and named values.
//!
//! Text form: `0`, `1`, `name`, `not(e)`, `par(e, ...)` (xor; `xor` is
//! accepted as a synonym), `and(e, ...)`, `or(e, ...)`, `maj(e, ...)`,
//! `ite(c, a, b)`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr<V = String> {
    Const(bool),
    Var(V),
    Not(Box<Expr<V>>),
    Xor(Vec<Expr<V>>),
    And(Vec<Expr<V>>),
    Or(Vec<Expr<V>>),
    Maj(Vec<Expr<V>>),
    Ite(Box<Expr<V>>, Box<Expr<V>>, Box<Expr<V>>),
}

impl<V: Clone> Expr<V> {
    pub fn var(v: V) -> Self {
        Expr::Var(v)
    }

    pub fn vars(&self) -> Vec<V> {
        let mut out = Vec::new();
        self.walk(&mut |v| out.push(v.clone()));
        out
    }

    fn walk(&self, f: &mut impl FnMut(&V)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(v),
            Expr::Not(e) => e.walk(f),
            Expr::Xor(es) | Expr::And(es) | Expr::Or(es) | Expr::Maj(es) => es.iter().for_each(|e| e.walk(f)),
            Expr::Ite(c, a, b) => {
                c.walk(f);
                a.walk(f);
                b.walk(f);
            }
        }
    }

    pub fn map_vars<W, E>(&self, f: &mut dyn FnMut(&V) -> Result<W, E>) -> Result<Expr<W>, E> {
        let mut list = |es: &[Expr<V>]| -> Result<Vec<Expr<W>>, E> { es.iter().map(|e| e.map_vars(&mut *f)).collect() };
        Ok(match self {
            Expr::Const(b) => Expr::Const(*b),
            Expr::Var(v) => Expr::Var(f(v)?),
            Expr::Not(e) => Expr::Not(Box::new(e.map_vars(f)?)),
            Expr::Xor(es) => Expr::Xor(list(es)?),
            Expr::And(es) => Expr::And(list(es)?),
            Expr::Or(es) => Expr::Or(list(es)?),
            Expr::Maj(es) => Expr::Maj(list(es)?),
            Expr::Ite(c, a, b) => Expr::Ite(
                Box::new(c.map_vars(f)?),
                Box::new(a.map_vars(f)?),
                Box::new(b.map_vars(f)?),
            ),
        })
    }

    pub fn eval(&self, get: &impl Fn(&V) -> bool) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Var(v) => get(v),
            Expr::Not(e) => !e.eval(get),
            Expr::Xor(es) => es.iter().fold(false, |a, e| a ^ e.eval(get)),
            Expr::And(es) => es.iter().all(|e| e.eval(get)),
            Expr::Or(es) => es.iter().any(|e| e.eval(get)),
            Expr::Maj(es) => 2 * es.iter().filter(|e| e.eval(get)).count() > es.len(),
            Expr::Ite(c, a, b) => {
                if c.eval(get) {
                    a.eval(get)
                } else {
                    b.eval(get)
                }
            }
        }
    }
}

impl Expr<String> {
    pub fn name(s: impl Into<String>) -> Self {
        Expr::Var(s.into())
    }

    pub fn par(names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Expr::Xor(names.into_iter().map(|n| Expr::Var(n.into())).collect())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut p = Parser { s: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(format!("trailing input at column {}", p.pos + 1));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let id = self.ident().ok_or_else(|| format!("expected expression at column {}", self.pos + 1))?;
        if !self.eat(b'(') {
            return Ok(match id.as_str() {
                "0" => Expr::Const(false),
                "1" => Expr::Const(true),
                _ if id.as_bytes()[0].is_ascii_digit() => return Err(format!("bad name `{id}`")),
                _ => Expr::Var(id),
            });
        }
        let mut args = Vec::new();
        if !self.eat(b')') {
            loop {
                args.push(self.expr()?);
                if self.eat(b')') {
                    break;
                }
                if !self.eat(b',') {
                    return Err(format!("expected `,` or `)` at column {}", self.pos + 1));
                }
            }
        }
        let arity = |n: usize, args: Vec<Expr>| -> Result<Vec<Expr>, String> {
            if args.len() == n {
                Ok(args)
            } else {
                Err(format!("`{id}` takes {n} arguments"))
            }
        };
        Ok(match id.as_str() {
            "not" => Expr::Not(Box::new(arity(1, args)?.pop().unwrap())),
            "par" | "xor" => Expr::Xor(args),
            "and" => Expr::And(args),
            "or" => Expr::Or(args),
            "maj" => Expr::Maj(args),
            "ite" => {
                let mut a = arity(3, args)?;
                let e = a.pop().unwrap();
                let t = a.pop().unwrap();
                let c = a.pop().unwrap();
                Expr::Ite(Box::new(c), Box::new(t), Box::new(e))
            }
            _ => return Err(format!("unknown function `{id}`")),
        })
    }
}

impl<V: fmt::Display> fmt::Display for Expr<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, es: &[Expr<V>]| {
            write!(f, "{name}(")?;
            for (i, e) in es.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{e}")?;
            }
            f.write_str(")")
        };
        match self {
            Expr::Const(b) => write!(f, "{}", *b as u8),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Not(e) => write!(f, "not({e})"),
            Expr::Xor(es) => list(f, "par", es),
            Expr::And(es) => list(f, "and", es),
            Expr::Or(es) => list(f, "or", es),
            Expr::Maj(es) => list(f, "maj", es),
            Expr::Ite(c, a, b) => write!(f, "ite({c},{a},{b})"),
        }
    }
}
