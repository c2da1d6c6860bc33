//! Surface syntax for exp-log germs and its elaboration into tower series.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := base ('^' exponent)?
//! base   := 'x' | integer | '(' expr ')'
//!         | 'log' iter? '(' expr ')' | 'exp' iter? '(' expr ')'
//!         | 'phi' '(' int ')' | '@phi' '(' int ')' | '@theta' '(' int ')'
//!         | '@theta_hat' | '@prod' '(' int ';' rational (',' rational)* ')'
//! iter   := '^' integer | '^' '(' rational ')'
//! ```

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::constant::Constant;
use crate::elclosure::{Tower, TowerMonomial, TowerSeries};
use crate::error::{Error, Result};
use crate::monomial::Monomial;
use crate::rational::Q;
use crate::series::{Mono, Series};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var,
    Num(Q),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Q),
    Log(Box<Expr>),
    Exp(Box<Expr>),
    /// `exp^q(e)`; a fractional `q` names a chain element and needs `e = x`.
    ExpIter(Q, Box<Expr>),
    Phi(i64),
    Theta(i64),
    ThetaHat,
    Prod(i64, Vec<Q>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Alias(String),
    Sym(char),
    End,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() {
            let start = k;
            while k < chars.len() && chars[k].1.is_ascii_digit() {
                k += 1;
            }
            let s: String = chars[start..k].iter().map(|p| p.1).collect();
            out.push((pos, Tok::Num(s.parse().expect("digits"))));
        } else if c.is_ascii_alphabetic() || c == '@' || c == '_' {
            let start = k;
            k += 1;
            while k < chars.len() && (chars[k].1.is_ascii_alphanumeric() || chars[k].1 == '_') {
                k += 1;
            }
            let s: String = chars[start..k].iter().map(|p| p.1).collect();
            match s.strip_prefix('@') {
                Some("") => {
                    return Err(Error::Syntax {
                        pos,
                        msg: "empty alias".into(),
                    })
                }
                Some(a) => out.push((pos, Tok::Alias(a.to_string()))),
                None => out.push((pos, Tok::Ident(s))),
            }
        } else if "+-*/^();,".contains(c) {
            out.push((pos, Tok::Sym(c)));
            k += 1;
        } else {
            return Err(Error::Syntax {
                pos,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.error(format!("unexpected {}", describe(t)))),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(n) => format!("number {n}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Alias(s) => format!("`@{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if t != Tok::End {
            self.at += 1;
        }
        t
    }

    fn error(&self, msg: String) -> Error {
        Error::Syntax {
            pos: self.pos(),
            msg,
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat('+') {
                e = Expr::Add(Box::new(e), Box::new(self.term()?));
            } else if self.eat('-') {
                e = Expr::Sub(Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat('*') {
                e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
            } else if self.eat('/') {
                e = Expr::Div(Box::new(e), Box::new(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr> {
        let b = self.base()?;
        if self.eat('^') {
            let e = self.exponent()?;
            return Ok(Expr::Pow(Box::new(b), e));
        }
        Ok(b)
    }

    fn integer(&mut self) -> Result<BigInt> {
        let neg = self.eat('-');
        match self.bump() {
            Tok::Num(n) => Ok(if neg { -n } else { n }),
            t => {
                self.at -= usize::from(t != Tok::End);
                Err(self.error(format!("expected an integer, found {}", describe(&t))))
            }
        }
    }

    fn small(&mut self) -> Result<i64> {
        let pos = self.pos();
        self.integer()?.to_i64().ok_or(Error::Syntax {
            pos,
            msg: "integer out of range".into(),
        })
    }

    /// `int` or `int/int`, with an optional sign.
    fn rational(&mut self) -> Result<Q> {
        let n = self.integer()?;
        if self.eat('/') {
            let pos = self.pos();
            let d = self.integer()?;
            if d.is_zero() {
                return Err(Error::Syntax {
                    pos,
                    msg: "zero denominator".into(),
                });
            }
            return Ok(Q::new(n, d));
        }
        Ok(Q::from_integer(n))
    }

    fn exponent(&mut self) -> Result<Q> {
        if self.eat('(') {
            let q = self.rational()?;
            self.expect(')')?;
            return Ok(q);
        }
        Ok(Q::from_integer(self.integer()?))
    }

    fn paren(&mut self) -> Result<Expr> {
        self.expect('(')?;
        let e = self.expr()?;
        self.expect(')')?;
        Ok(e)
    }

    fn base(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::Num(Q::from_integer(n))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "x" => Ok(Expr::Var),
                "log" | "exp" => {
                    let iter = if self.eat('^') {
                        Some(self.exponent()?)
                    } else {
                        None
                    };
                    let arg = self.paren()?;
                    match (s.as_str(), iter) {
                        ("log", None) => Ok(Expr::Log(Box::new(arg))),
                        (_, None) => Ok(Expr::Exp(Box::new(arg))),
                        ("exp", Some(q)) => Ok(Expr::ExpIter(q, Box::new(arg))),
                        (_, Some(q)) => {
                            let n = q
                                .to_integer()
                                .to_i64()
                                .filter(|n| q.is_integer() && *n >= 0)
                                .ok_or(Error::Syntax {
                                    pos,
                                    msg: "log^n needs an integer n ≥ 0".into(),
                                })?;
                            Ok(Expr::ExpIter(Q::from_integer((-n).into()), Box::new(arg)))
                        }
                    }
                }
                "phi" => {
                    self.expect('(')?;
                    let i = self.small()?;
                    self.expect(')')?;
                    Ok(Expr::Phi(i))
                }
                _ => Err(Error::Syntax {
                    pos,
                    msg: format!("unknown name `{s}`"),
                }),
            },
            Tok::Alias(a) => match a.as_str() {
                "theta_hat" => Ok(Expr::ThetaHat),
                "theta" | "phi" => {
                    self.expect('(')?;
                    let i = self.small()?;
                    self.expect(')')?;
                    Ok(if a == "phi" {
                        Expr::Phi(i)
                    } else {
                        Expr::Theta(i)
                    })
                }
                "prod" => {
                    self.expect('(')?;
                    let top = self.small()?;
                    self.expect(';')?;
                    let mut pattern = vec![self.rational()?];
                    while self.eat(',') {
                        pattern.push(self.rational()?);
                    }
                    self.expect(')')?;
                    Ok(Expr::Prod(top, pattern))
                }
                _ => Err(Error::Syntax {
                    pos,
                    msg: format!("unknown alias `@{a}`"),
                }),
            },
            Tok::End => Err(Error::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            t => Err(Error::Syntax {
                pos,
                msg: format!("unexpected {}", describe(&t)),
            }),
        }
    }
}

/// A germ: a tower series plus a transcendental constant `Σ q_p·log p`.
#[derive(Clone, Debug)]
pub struct Value {
    pub series: TowerSeries,
    pub ledger: Constant,
}

impl Value {
    pub fn series(series: TowerSeries) -> Value {
        Value {
            series,
            ledger: Constant::zero(),
        }
    }

    /// The series alone; a nonzero ledger is an error.
    pub fn into_series(self, what: &str) -> Result<TowerSeries> {
        if !self.ledger.is_zero() {
            return Err(Error::UnsupportedConstant(format!(
                "{} in {what}",
                self.ledger
            )));
        }
        Ok(self.series)
    }

    /// The exact rational value when the germ is a rational constant.
    fn rational(&self) -> Option<Q> {
        if !self.ledger.is_zero() {
            return None;
        }
        let ts = self.series.exact_terms()?;
        match ts.as_slice() {
            [] => Some(Q::zero()),
            [t] if t.mono.is_one() => Some(t.coeff.clone()),
            _ => None,
        }
    }
}

/// Evaluates an expression in a tower.
pub fn elaborate(e: &Expr, tower: &Tower) -> Result<Value> {
    let lift = |m: Monomial| Value::series(Series::monomial(Q::one(), tower.lift_monomial(&m)));
    Ok(match e {
        Expr::Var => lift(Monomial::phi(0)),
        Expr::Num(q) => Value::series(Series::constant(q.clone())),
        Expr::Phi(i) => lift(Monomial::phi(*i)),
        Expr::Theta(i) => lift(tower.spec().theta(*i)),
        Expr::ThetaHat => lift(tower.spec().theta_hat().cloned().ok_or(Error::NoThetaHat)?),
        Expr::Prod(top, pattern) => lift(Monomial::tail_product(*top, pattern.clone())),
        Expr::Neg(a) => {
            let a = elaborate(a, tower)?;
            Value {
                series: a.series.neg(),
                ledger: a.ledger.neg(),
            }
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (a, b) = (elaborate(a, tower)?, elaborate(b, tower)?);
            if matches!(e, Expr::Add(..)) {
                Value {
                    series: a.series.add(&b.series),
                    ledger: a.ledger.add(&b.ledger),
                }
            } else {
                Value {
                    series: a.series.sub(&b.series),
                    ledger: a.ledger.sub(&b.ledger),
                }
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (elaborate(a, tower)?, elaborate(b, tower)?);
            if a.ledger.is_zero() && b.ledger.is_zero() {
                Value::series(a.series.mul(&b.series))
            } else if let Some(q) = b.rational() {
                Value {
                    series: a.series.scale(&q),
                    ledger: a.ledger.scale(&q),
                }
            } else if let Some(q) = a.rational() {
                Value {
                    series: b.series.scale(&q),
                    ledger: b.ledger.scale(&q),
                }
            } else {
                return Err(Error::UnsupportedConstant(format!(
                    "{} times a non-constant series",
                    if a.ledger.is_zero() {
                        &b.ledger
                    } else {
                        &a.ledger
                    }
                )));
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (elaborate(a, tower)?, elaborate(b, tower)?);
            if let Some(q) = b.rational() {
                if q.is_zero() {
                    return Err(Error::ZeroDivision);
                }
                let r = q.recip();
                Value {
                    series: a.series.scale(&r),
                    ledger: a.ledger.scale(&r),
                }
            } else {
                let b = b.into_series("a divisor")?;
                let a = a.into_series("a quotient")?;
                Value::series(a.div(&b)?)
            }
        }
        Expr::Pow(a, q) => {
            let a = elaborate(a, tower)?.into_series("a power")?;
            if a.is_zero()? {
                if q.is_positive() {
                    return Ok(Value::series(Series::zero()));
                }
                return Err(Error::ZeroDivision);
            }
            Value::series(a.pow(q, |m: &TowerMonomial, e: &Q| m.pow_q(e))?)
        }
        Expr::Log(a) => {
            let a = elaborate(a, tower)?.into_series("a log argument")?;
            let (s, c) = tower.log(&a).map_err(|e| match e {
                Error::NotPositive => Error::NotPositiveLogArg,
                e => e,
            })?;
            Value {
                series: s,
                ledger: c,
            }
        }
        Expr::Exp(a) => exp_value(elaborate(a, tower)?, tower)?,
        Expr::ExpIter(q, a) => {
            if !q.is_integer() {
                if **a != Expr::Var {
                    return Err(Error::Config("fractional iterates apply to x only".into()));
                }
                let label = format!("exp^({})(x)", crate::rational::fmt_q(q));
                let i = tower.chain().index_of_label(&label).ok_or_else(|| {
                    Error::Config(format!("{label} is not an element of the chain"))
                })?;
                return Ok(lift(Monomial::phi(i)));
            }
            let n = q
                .to_integer()
                .to_i64()
                .ok_or_else(|| Error::Config("iterate out of range".into()))?;
            let inner: &Expr = a;
            let mut e = inner.clone();
            for _ in 0..n.unsigned_abs() {
                e = if n > 0 {
                    Expr::Exp(Box::new(e))
                } else {
                    Expr::Log(Box::new(e))
                };
            }
            elaborate(&e, tower)?
        }
    })
}

fn exp_value(a: Value, tower: &Tower) -> Result<Value> {
    let factor = if a.ledger.is_zero() {
        Q::one()
    } else {
        a.ledger.exp_rational().ok_or(Error::ConstantInExpArg)?
    };
    Ok(Value::series(tower.exp(&a.series)?.scale(&factor)))
}

/// Parses and elaborates.
pub fn eval(src: &str, tower: &Tower) -> Result<Value> {
    elaborate(&parse(src)?, tower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::DerivationSpec;
    use crate::prelog::Prelog;
    use crate::rational::{q, qi};
    use crate::series::Term;

    fn tower() -> Tower {
        let d = DerivationSpec::logexp_ddx();
        Tower::new(&d, &Prelog::sigma(d.chain()), 3)
    }

    #[test]
    fn shapes() {
        let x = || Box::new(Expr::Var);
        assert_eq!(
            parse("1/log(x)").unwrap(),
            Expr::Div(Box::new(Expr::Num(qi(1))), Box::new(Expr::Log(x())))
        );
        assert_eq!(
            parse("x^(3/2)*exp(x^2)").unwrap(),
            Expr::Mul(
                Box::new(Expr::Pow(x(), q(3, 2))),
                Box::new(Expr::Exp(Box::new(Expr::Pow(x(), qi(2)))))
            )
        );
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(x(), qi(2))))
        );
        assert_eq!(parse("x^-1").unwrap(), Expr::Pow(x(), qi(-1)));
        assert_eq!(parse("@prod(0; -1)").unwrap(), Expr::Prod(0, vec![qi(-1)]));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse("log("), Err(Error::Syntax { pos: 4, .. })));
        assert!(matches!(parse("x +"), Err(Error::Syntax { pos: 3, .. })));
        assert!(matches!(parse("x $ 2"), Err(Error::Syntax { pos: 2, .. })));
        assert!(matches!(parse("y"), Err(Error::Syntax { pos: 0, .. })));
        assert!(matches!(parse("(x"), Err(Error::Syntax { pos: 2, .. })));
    }

    #[test]
    fn elaboration() {
        let t = tower();
        let v = eval("exp(x*log(x))", &t).unwrap();
        let lt = v.series.leading().unwrap();
        assert_eq!(lt.mono.level(), 1);
        let v = eval("exp(2*log(x))", &t).unwrap();
        assert_eq!(
            v.series.terms(3).unwrap(),
            vec![Term::new(
                qi(1),
                t.lift_monomial(&Monomial::phi_pow(0, qi(2)))
            )]
        );
        assert!(matches!(eval("exp(1+x)", &t), Err(Error::ConstantInExpArg)));
        assert!(matches!(eval("log(-x)", &t), Err(Error::NotPositiveLogArg)));
        let v = eval("log(3*x^2)", &t).unwrap();
        assert_eq!(v.ledger, Constant::log_of(&qi(3)).unwrap());
        let v = eval("exp(log(2) + x)", &t).unwrap();
        assert_eq!(v.series.lc().unwrap(), qi(2));
        let v = eval("log^2(x) - log(log(x))", &t).unwrap();
        assert!(v.series.is_zero().unwrap());
        assert!(eval("exp(exp(exp(exp(x))))", &tower()).is_ok());
    }
}
