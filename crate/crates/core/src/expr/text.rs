//! Prefix text form.
//!
//! ```text
//! (add e1 e2 ...)   (mul e1 e2 ...)   (sub a b)   (div a b)   (pow e k)
//! (neg e)  (sin e)  (cos e)  (tan e)  (atan e)  (sinc e)  (dsinc k e)
//! (var x 1 0)   (var z 2 -1)   (param T)   1.5   -2e-3
//! ```
//!
//! Parsing keeps the structure as written so that printing and re-parsing is
//! the identity. `(param NAME)` is replaced by its numeric value at load time.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Block, Expr, Node, ShiftedVar};
use crate::error::{Error, Result};

impl Expr {
    pub fn to_prefix(&self) -> String {
        let mut s = String::new();
        write_prefix(self, &mut s);
        s
    }

    /// Parses the prefix form. `(param ..)` is rejected; see [`parse_with_params`].
    pub fn parse(text: &str) -> Result<Expr> {
        parse_with_params(text, &HashMap::new())
    }
}

fn write_prefix(e: &Expr, s: &mut String) {
    let list = |s: &mut String, head: &str, kids: &[&Expr]| {
        s.push('(');
        s.push_str(head);
        for k in kids {
            s.push(' ');
            write_prefix(k, s);
        }
        s.push(')');
    };
    match e.node() {
        Node::Const(c) => {
            let _ = write!(s, "{c:?}");
        }
        Node::Var(v) => {
            let _ = write!(s, "(var {} {} {})", v.block.letter(), v.component, v.shift);
        }
        Node::Add(ts) => list(s, "add", &ts.iter().collect::<Vec<_>>()),
        Node::Mul(fs) => list(s, "mul", &fs.iter().collect::<Vec<_>>()),
        Node::Div(a, b) => list(s, "div", &[a, b]),
        Node::Pow(a, k) => {
            s.push_str("(pow ");
            write_prefix(a, s);
            let _ = write!(s, " {k})");
        }
        Node::Neg(a) => list(s, "neg", &[a]),
        Node::Sin(a) => list(s, "sin", &[a]),
        Node::Cos(a) => list(s, "cos", &[a]),
        Node::Tan(a) => list(s, "tan", &[a]),
        Node::Atan(a) => list(s, "atan", &[a]),
        Node::Sinc(0, a) => list(s, "sinc", &[a]),
        Node::Sinc(k, a) => {
            let _ = write!(s, "(dsinc {k} ");
            write_prefix(a, s);
            s.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')' {
                    i += 1;
                }
                out.push((start, Tok::Atom(&text[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
    params: &'a HashMap<String, f64>,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { offset, message: message.into() })
}

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<(usize, Tok<'a>)> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => err(self.end, "unexpected end of input"),
        }
    }

    fn atom(&mut self) -> Result<(usize, &'a str)> {
        match self.next()? {
            (o, Tok::Atom(a)) => Ok((o, a)),
            (o, _) => err(o, "expected an atom"),
        }
    }

    fn int<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (o, a) = self.atom()?;
        a.parse().or_else(|_| err(o, format!("expected {what}, found `{a}`")))
    }

    fn close(&mut self) -> Result<()> {
        match self.next()? {
            (_, Tok::Close) => Ok(()),
            (o, _) => err(o, "expected `)`"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let (o, tok) = self.next()?;
        match tok {
            Tok::Close => err(o, "unexpected `)`"),
            Tok::Atom(a) => match a.parse::<f64>() {
                Ok(c) => Ok(Expr::constant(c)),
                Err(_) => err(o, format!("expected a number or `(`, found `{a}`")),
            },
            Tok::Open => {
                let (ho, head) = self.atom()?;
                let e = match head {
                    "var" => {
                        let (bo, b) = self.atom()?;
                        let block = b
                            .chars()
                            .next()
                            .filter(|_| b.len() == 1)
                            .and_then(Block::from_letter)
                            .map_or_else(|| err(bo, format!("unknown variable block `{b}`")), Ok)?;
                        let comp: u16 = self.int("a component index")?;
                        let shift: i32 = self.int("a shift")?;
                        let v = ShiftedVar::try_new(block, comp, shift).or_else(|e| err(bo, e.to_string()))?;
                        Expr::var(v)
                    }
                    "param" => {
                        let (po, name) = self.atom()?;
                        match self.params.get(name) {
                            Some(&c) => Expr::constant(c),
                            None => return err(po, format!("unknown parameter `{name}`")),
                        }
                    }
                    "add" | "mul" => {
                        let mut kids = Vec::new();
                        while !matches!(self.toks.get(self.pos), Some((_, Tok::Close)) | None) {
                            kids.push(self.expr()?);
                        }
                        if kids.is_empty() {
                            return err(ho, format!("`{head}` needs at least one argument"));
                        }
                        Expr::from_node(if head == "add" { Node::Add(kids) } else { Node::Mul(kids) })
                    }
                    "sub" => {
                        let a = self.expr()?;
                        let b = self.expr()?;
                        Expr::from_node(Node::Add(vec![a, Expr::from_node(Node::Neg(b))]))
                    }
                    "div" => {
                        let a = self.expr()?;
                        let bo = self.offset();
                        let b = self.expr()?;
                        if b.as_const() == Some(0.0) {
                            return err(bo, "literal zero denominator");
                        }
                        Expr::from_node(Node::Div(a, b))
                    }
                    "pow" => {
                        let a = self.expr()?;
                        let k: i32 = self.int("an integer exponent")?;
                        Expr::from_node(Node::Pow(a, k))
                    }
                    "dsinc" => {
                        let k: u32 = self.int("a derivative order")?;
                        let a = self.expr()?;
                        Expr::from_node(Node::Sinc(k, a))
                    }
                    "neg" | "sin" | "cos" | "tan" | "atan" | "sinc" => {
                        let a = self.expr()?;
                        Expr::from_node(match head {
                            "neg" => Node::Neg(a),
                            "sin" => Node::Sin(a),
                            "cos" => Node::Cos(a),
                            "tan" => Node::Tan(a),
                            "atan" => Node::Atan(a),
                            _ => Node::Sinc(0, a),
                        })
                    }
                    other => return err(ho, format!("unknown operator `{other}`")),
                };
                self.close()?;
                Ok(e)
            }
        }
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_prefix())
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses the prefix form, resolving `(param NAME)` from `params`.
pub fn parse_with_params(text: &str, params: &HashMap<String, f64>) -> Result<Expr> {
    let mut p = Parser { toks: tokenize(text), pos: 0, end: text.len(), params };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return err(p.offset(), "trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let src = "(add (var x 1 0) (mul 2.5 (sin (var z 1 -1))) (div (var u 2 3) (add 1.0 (var y 1 2))) (pow (var v 1 0) -2) (dsinc 2 (var x 3 0)))";
        let e = Expr::parse(src).unwrap();
        assert_eq!(e.to_prefix(), src);
        assert_eq!(Expr::parse(&e.to_prefix()).unwrap(), e);
    }

    #[test]
    fn params_resolve() {
        let mut params = HashMap::new();
        params.insert("T".to_string(), 0.1);
        let e = parse_with_params("(mul (param T) (var u 1 0))", &params).unwrap();
        assert_eq!(e.to_prefix(), "(mul 0.1 (var u 1 0))");
        assert!(Expr::parse("(param T)").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Expr::parse("(div 1 0)"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("(div 1 0.0)"), Err(Error::Parse { .. })));
        assert!(Expr::parse("(var x 1 1)").is_err());
        assert!(Expr::parse("(var z 1 0)").is_err());
        assert!(Expr::parse("(foo 1)").is_err());
        assert!(Expr::parse("(add 1 2").is_err());
        assert!(Expr::parse("(add 1 2))").is_err());
        assert!(Expr::parse("(add)").is_err());
    }

    #[test]
    fn error_offset_points_at_token() {
        match Expr::parse("(add 1 (bogus 2))") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
    }
}
