//! Exact rational helpers shared by exponents and coefficients.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number used for both coefficients and exponents.
pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Renders `3`, `-2`, `3/2`.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Config(format!("not a rational number: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Q::new(n, d))
        }
        None => Ok(Q::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a.lcm(&b)
}

pub fn factorial(n: usize) -> Q {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Q::from_integer(acc)
}

/// Generalized binomial coefficient `binom(e, n)` for rational `e`.
pub fn binomial(e: &Q, n: usize) -> Q {
    let mut acc = Q::one();
    for k in 0..n {
        acc = acc * (e - qi(k as i64)) / qi(k as i64 + 1);
    }
    acc
}

/// Exact `x^e` for rational `e` when the result is rational.
pub fn pow_exact(x: &Q, e: &Q) -> Option<Q> {
    if e.is_integer() {
        let k = e.to_integer().to_i32()?;
        return Some(pow_int(x, k));
    }
    if x.is_negative() {
        return None;
    }
    let root = e.denom().to_u32()?;
    let rn = int_root(x.numer(), root)?;
    let rd = int_root(x.denom(), root)?;
    let base = Q::new(rn, rd);
    let k = e.numer().to_i32()?;
    Some(pow_int(&base, k))
}

pub fn pow_int(x: &Q, k: i32) -> Q {
    if k >= 0 {
        num_traits::pow(x.clone(), k as usize)
    } else {
        num_traits::pow(x.recip(), (-k) as usize)
    }
}

fn int_root(n: &BigInt, k: u32) -> Option<BigInt> {
    let r = n.nth_root(k);
    if num_traits::pow(r.clone(), k as usize) == *n {
        Some(r)
    } else {
        None
    }
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_q("3/2").unwrap(), q(3, 2));
        assert_eq!(parse_q("-4").unwrap(), qi(-4));
        assert_eq!(fmt_q(&q(6, 4)), "3/2");
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
    }

    #[test]
    fn exact_powers() {
        assert_eq!(pow_exact(&qi(4), &q(1, 2)), Some(qi(2)));
        assert_eq!(pow_exact(&q(8, 27), &q(2, 3)), Some(q(4, 9)));
        assert_eq!(pow_exact(&qi(2), &q(1, 2)), None);
        assert_eq!(pow_exact(&qi(2), &qi(-2)), Some(q(1, 4)));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(&qi(5), 2), qi(10));
        assert_eq!(binomial(&q(1, 2), 2), q(-1, 8));
    }
}
