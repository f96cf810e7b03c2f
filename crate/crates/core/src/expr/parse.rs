use thiserror::Error;

use super::{Context, Expr, Func, Node, Number};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("unknown function '{name}' at {pos}")]
    UnknownFunction { pos: usize, name: String },
    #[error("variable '{name}' at {pos} is out of range for this system")]
    OutOfRange { pos: usize, name: String },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Number),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (p, t) = lx.next()?;
            let end = t == Tok::End;
            out.push((p, t));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_digit() || c == '.' {
            return self.number().map(|n| (start, Tok::Num(n)));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = self.src[start..]
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(self.src.len() - start);
            self.pos += len;
            return Ok((start, Tok::Ident(self.src[start..self.pos].to_string())));
        }
        if self.src[start..].starts_with("**") {
            self.pos += 2;
            return Ok((start, Tok::Op('^')));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok((start, Tok::Op(c)));
        }
        Err(ParseError::Syntax {
            pos: start,
            msg: format!("unexpected character '{c}'"),
        })
    }

    fn number(&mut self) -> Result<Number, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let int_len = digits(&mut p);
        let mut frac = "";
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            let fs = p;
            digits(&mut p);
            frac = &self.src[fs..p];
        }
        if int_len == 0 && frac.is_empty() {
            return Err(ParseError::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        let mut scientific = false;
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) > 0 {
                p = q;
                scientific = true;
            }
        }
        let text = &self.src[start..p];
        self.pos = p;
        if scientific {
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                msg: format!("malformed number '{text}'"),
            })?;
            return Ok(Number::Float(v));
        }
        // decimal literals are exact: digits / 10^len(frac)
        let int_part = &self.src[start..start + int_len];
        let joined = format!("{int_part}{frac}");
        let exact = joined.parse::<i64>().ok().and_then(|num| {
            10i64
                .checked_pow(frac.len() as u32)
                .map(|den| Number::rational(num, den))
        });
        Ok(exact.unwrap_or_else(|| Number::Float(text.parse().unwrap_or(f64::NAN))))
    }
}

struct Parser<'c> {
    toks: Vec<(usize, Tok)>,
    i: usize,
    ctx: &'c Context,
}

/// Negation used by the parser: literals fold, everything else becomes a
/// product with a leading coefficient, so `a - 2*x` and `a + -2*x` (or `-x`
/// and `-1*x`) give the same tree.
fn negate(e: Expr) -> Expr {
    match e.node() {
        Node::Const(n) => Expr::number(n.neg()),
        Node::Product(fs) => {
            let mut v = fs.clone();
            match fs[0].node() {
                Node::Const(c) => v[0] = Expr::number(c.neg()),
                _ => v.insert(0, Expr::int(-1)),
            }
            Expr::from_node(Node::Product(v))
        }
        _ => Expr::from_node(Node::Product(vec![Expr::int(-1), e])),
    }
}

fn wrap(mut items: Vec<Expr>, sum: bool) -> Expr {
    if items.len() == 1 {
        return items.pop().unwrap();
    }
    Expr::from_node(if sum {
        Node::Sum(items)
    } else {
        Node::Product(items)
    })
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].1
    }

    fn pos(&self) -> usize {
        self.toks[self.i].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].1.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos(),
                msg: format!("expected '{c}'"),
            })
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(negate(t));
                }
                _ => return Ok(wrap(terms, true)),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    factors.push(self.unary()?);
                }
                Tok::Op('/') => {
                    self.bump();
                    let d = self.unary()?;
                    // literal fractions such as 1/2 become exact constants
                    if let ([lhs], Some(den)) = (factors.as_slice(), d.as_number()) {
                        if let (Some(num), Some(inv)) = (lhs.as_number(), den.recip()) {
                            factors[0] = Expr::number(num.mul(inv));
                            continue;
                        }
                    }
                    factors.push(Expr::from_node(Node::Pow(d, Expr::int(-1))));
                }
                _ => {
                    // `-x*y` reads as the single product (-1)*x*y
                    if factors.len() > 1 {
                        if let Node::Product(inner) = factors[0].node() {
                            if inner[0].as_number().is_some() {
                                let inner = inner.clone();
                                factors.splice(0..1, inner);
                            }
                        }
                    }
                    return Ok(wrap(factors, false));
                }
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(negate(inner));
        }
        if *self.peek() == Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::from_node(Node::Pow(base, exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::number(n)),
            Tok::Op('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    let f = Func::from_name(&name)
                        .ok_or(ParseError::UnknownFunction { pos, name: name.clone() })?;
                    self.bump();
                    let arg = self.sum()?;
                    self.expect(')')?;
                    return Ok(Expr::apply(f, arg));
                }
                self.identifier(pos, name)
            }
            Tok::End => Err(ParseError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            Tok::Op(c) => Err(ParseError::Syntax {
                pos,
                msg: format!("unexpected '{c}'"),
            }),
        }
    }

    fn identifier(&self, pos: usize, name: String) -> Result<Expr, ParseError> {
        if let Some(v) = self.ctx.lookup_var(&name) {
            return Ok(Expr::var(v));
        }
        if self.ctx.params.contains_key(&name) {
            return Ok(Expr::param(&name));
        }
        if self.ctx.is_reserved(&name) {
            return Err(ParseError::OutOfRange { pos, name });
        }
        Err(ParseError::UnknownIdentifier { pos, name })
    }
}

/// Parses infix text into an expression over the variables of `ctx`.
///
/// The tree is built verbatim (no simplification) apart from folding
/// literal negation and literal fractions.
pub fn parse(text: &str, ctx: &Context) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, i: 0, ctx };
    let e = p.sum()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(ParseError::Syntax {
            pos: p.pos(),
            msg: format!("unexpected trailing input {t:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ParamValue, VarId};

    fn ctx() -> Context {
        Context::scalar()
            .with_param("lambda", ParamValue::Symbolic)
            .unwrap()
    }

    #[test]
    fn literals() {
        assert_eq!(parse("0", &ctx()).unwrap(), Expr::int(0));
        assert_eq!(parse("1/2", &ctx()).unwrap(), Expr::rational(1, 2));
        assert_eq!(parse("0.25", &ctx()).unwrap(), Expr::rational(1, 4));
        assert_eq!(parse("-3", &ctx()).unwrap(), Expr::int(-3));
        assert_eq!(parse("1.5e0", &ctx()).unwrap(), Expr::float(1.5));
    }

    #[test]
    fn precedence() {
        let e = parse("-x^2", &ctx()).unwrap();
        match e.node() {
            Node::Product(fs) => assert!(matches!(fs[1].node(), Node::Pow(..))),
            _ => panic!("expected product"),
        }
        let e = parse("2^3^2", &ctx()).unwrap();
        match e.node() {
            Node::Pow(_, ex) => assert!(matches!(ex.node(), Node::Pow(..))),
            _ => panic!("expected power"),
        }
    }

    #[test]
    fn functions_and_params() {
        let e = parse("Ei(2/x)", &ctx()).unwrap();
        assert!(matches!(e.node(), Node::Apply(Func::Ei, _)));
        let e = parse("lambda*x", &ctx()).unwrap();
        assert!(e.depends_on(VarId::State(0)));
        assert_eq!(e.params().len(), 1);
    }

    #[test]
    fn errors_have_positions() {
        assert_eq!(
            parse("x + foo", &ctx()),
            Err(ParseError::UnknownIdentifier { pos: 4, name: "foo".into() })
        );
        assert!(matches!(parse("x +", &ctx()), Err(ParseError::Syntax { pos: 3, .. })));
        assert!(matches!(parse("x2", &ctx()), Err(ParseError::OutOfRange { .. })));
        assert!(matches!(parse("foo(x)", &ctx()), Err(ParseError::UnknownFunction { .. })));
        assert!(parse("(x", &ctx()).is_err());
        assert!(parse("x $ 1", &ctx()).is_err());
    }

    #[test]
    fn subtraction_normalises_coefficients() {
        assert_eq!(parse("x - 2*w", &ctx()), parse("x + -2*w", &ctx()));
        assert_eq!(parse("-x*w", &ctx()), parse("-1*x*w", &ctx()));
        assert_eq!(parse("-(x*w)", &ctx()), parse("-1*x*w", &ctx()));
    }
}
