//! The constants ledger: elements `q₀ + Σ q_p·log p` kept exactly.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{fmt_q, Q};

/// Trial division stops here; a remaining cofactor becomes its own atom.
const TRIAL_LIMIT: u64 = 1_000_000;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Constant {
    pub rat: Q,
    /// Coefficient of `log p`, keyed by `p` (a prime, or an unfactored
    /// cofactor above the trial-division limit). No zero entries.
    pub logs: BTreeMap<BigInt, Q>,
}

impl Constant {
    pub fn zero() -> Constant {
        Constant::default()
    }

    pub fn rational(q: Q) -> Constant {
        Constant {
            rat: q,
            logs: BTreeMap::new(),
        }
    }

    /// `log c` for a positive rational `c`.
    pub fn log_of(c: &Q) -> Result<Constant> {
        if !c.is_positive() {
            return Err(Error::NotPositive);
        }
        let mut logs = BTreeMap::new();
        for (p, k) in factorize(c.numer()) {
            *logs.entry(p).or_insert_with(Q::zero) += Q::from_integer(k.into());
        }
        for (p, k) in factorize(c.denom()) {
            *logs.entry(p).or_insert_with(Q::zero) -= Q::from_integer(k.into());
        }
        logs.retain(|_, v: &mut Q| !v.is_zero());
        Ok(Constant {
            rat: Q::zero(),
            logs,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.rat.is_zero() && self.logs.is_empty()
    }

    pub fn is_rational(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn add(&self, other: &Constant) -> Constant {
        let mut out = self.clone();
        out.rat += &other.rat;
        for (p, v) in &other.logs {
            *out.logs.entry(p.clone()).or_insert_with(Q::zero) += v;
        }
        out.logs.retain(|_, v| !v.is_zero());
        out
    }

    pub fn neg(&self) -> Constant {
        self.scale(&-Q::one())
    }

    pub fn sub(&self, other: &Constant) -> Constant {
        self.add(&other.neg())
    }

    pub fn scale(&self, q: &Q) -> Constant {
        if q.is_zero() {
            return Constant::zero();
        }
        Constant {
            rat: &self.rat * q,
            logs: self.logs.iter().map(|(p, v)| (p.clone(), v * q)).collect(),
        }
    }

    /// `exp` of the ledger element when it is a rational number, i.e. no
    /// rational part and integer log coefficients.
    pub fn exp_rational(&self) -> Option<Q> {
        if !self.rat.is_zero() {
            return None;
        }
        let mut acc = Q::one();
        for (p, v) in &self.logs {
            if !v.is_integer() {
                return None;
            }
            let k = v.to_integer().to_i32()?;
            acc *= crate::rational::pow_int(&Q::from_integer(p.clone()), k);
        }
        Some(acc)
    }

    /// Numeric value with about `bits` bits of precision after the point.
    pub fn approx(&self, bits: u32) -> Q {
        let mut acc = self.rat.clone();
        for (p, v) in &self.logs {
            acc += v * ln_fixed(p, bits);
        }
        acc
    }

    pub fn to_f64(&self) -> f64 {
        crate::rational::to_f64(&self.approx(64))
    }

    /// Real order. Distinct ledger elements are distinct reals, so the
    /// comparison only needs enough precision to separate them.
    pub fn cmp_real(&self, other: &Constant) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        let d = self.sub(other);
        if d.is_rational() {
            return d.rat.cmp(&Q::zero());
        }
        let mut bits = 96;
        loop {
            let v = d.approx(bits);
            // ln_fixed is accurate to a few units of 2^-bits per atom.
            let slack = Q::new(
                BigInt::from(8 * (d.logs.len() as i64 + 1)),
                BigInt::one() << bits as usize,
            );
            let mag: Q = d
                .logs
                .values()
                .map(|c| c.abs())
                .fold(Q::one(), |a, b| a + b);
            if v.abs() > slack * mag {
                return v.cmp(&Q::zero());
            }
            bits *= 2;
            if bits > 1 << 14 {
                return v.cmp(&Q::zero());
            }
        }
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<(bool, String)> = Vec::new();
        if !self.rat.is_zero() {
            parts.push((self.rat.is_negative(), fmt_q(&self.rat.abs())));
        }
        for (p, v) in &self.logs {
            let c = v.abs();
            let body = if c.is_one() {
                format!("log({p})")
            } else {
                format!("{}*log({p})", wrap(&c))
            };
            parts.push((v.is_negative(), body));
        }
        if parts.is_empty() {
            return f.write_str("0");
        }
        for (k, (neg, body)) in parts.iter().enumerate() {
            match (k, neg) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, " - {body}")?,
                (_, false) => write!(f, " + {body}")?,
            }
        }
        Ok(())
    }
}

fn wrap(c: &Q) -> String {
    if c.is_integer() {
        fmt_q(c)
    } else {
        format!("({})", fmt_q(c))
    }
}

impl Serialize for Constant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Json {
            rat: String,
            logs: BTreeMap<String, String>,
        }
        Json {
            rat: fmt_q(&self.rat),
            logs: self
                .logs
                .iter()
                .map(|(p, v)| (p.to_string(), fmt_q(v)))
                .collect(),
        }
        .serialize(s)
    }
}

/// Prime factorization by trial division; a cofactor left after the trial
/// limit is returned as a single factor.
fn factorize(n: &BigInt) -> Vec<(BigInt, u32)> {
    let mut n = n.abs();
    let mut out = Vec::new();
    let mut push = |p: BigInt, k: u32| {
        if k > 0 {
            out.push((p, k));
        }
    };
    let mut d = 2u64;
    while d <= TRIAL_LIMIT {
        let bd = BigInt::from(d);
        if &bd * &bd > n {
            break;
        }
        let mut k = 0;
        loop {
            let (q, r) = n.div_rem(&bd);
            if !r.is_zero() {
                break;
            }
            n = q;
            k += 1;
        }
        push(bd, k);
        d += if d == 2 { 1 } else { 2 };
    }
    if n > BigInt::one() {
        push(n, 1);
    }
    out
}

/// `ln n` as a rational within a few units of `2^-bits`, computed with
/// fixed-point integers: `ln n = k·ln 2 + 2·atanh((m−1)/(m+1))`.
fn ln_fixed(n: &BigInt, bits: u32) -> Q {
    assert_eq!(n.sign(), Sign::Plus);
    let guard = bits as usize + 32;
    let one = BigInt::one() << guard;
    let k = n.bits() as i64 - 1;
    // m = n / 2^k in [1, 2), as fixed point.
    let m = if k >= 0 {
        (n << guard) >> k as usize
    } else {
        n << guard
    };
    let atanh2 = |num: &BigInt, den: &BigInt| -> BigInt {
        // 2·atanh(num/den) = 2·Σ z^(2i+1)/(2i+1)
        let z = (num << guard) / den;
        let z2 = (&z * &z) >> guard;
        let mut term = z.clone();
        let mut acc = BigInt::zero();
        let mut i = 0u64;
        while !term.is_zero() {
            acc += &term / BigInt::from(2 * i + 1);
            term = (&term * &z2) >> guard;
            i += 1;
        }
        acc * 2
    };
    let ln2 = atanh2(&BigInt::one(), &BigInt::from(3));
    let lnm = atanh2(&(&m - &one), &(&m + &one));
    let total = ln2 * BigInt::from(k) + lnm;
    Q::new(total, one)
}
