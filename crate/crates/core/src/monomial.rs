//! Monomials of the Hahn group over Φ ≅ ℤ.
//!
//! An exponent function is stored as a finite window `lo..=hi` plus a
//! periodic tail covering every index below `lo`. The tail is read
//! downward: the exponent at `j < lo` is `tail[(lo - 1 - j) mod p]`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chain::{Chain, FundIndex};
use crate::error::{Error, Result};
use crate::rational::{fmt_q, lcm, parse_q, Q};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Arc<Repr>);

#[derive(PartialEq, Eq, Hash)]
struct Repr {
    lo: i64,
    window: Vec<Q>,
    tail: Vec<Q>,
}

/// Result of comparing two monomials, with the largest index where they
/// differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonomialComparison {
    pub result: Ordering,
    pub witness: Option<FundIndex>,
}

/// Relation used to select indices in [`Monomial::truncate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Arc::new(Repr {
            lo: 0,
            window: Vec::new(),
            tail: Vec::new(),
        }))
    }

    /// φ_i.
    pub fn phi(i: i64) -> Monomial {
        Monomial::phi_pow(i, Q::one())
    }

    /// φ_i^e.
    pub fn phi_pow(i: i64, e: Q) -> Monomial {
        canonical(i, vec![e], Vec::new())
    }

    /// Finite product of fundamental powers; repeated indices add up.
    pub fn from_exponents<I: IntoIterator<Item = (i64, Q)>>(it: I) -> Monomial {
        let mut map: BTreeMap<i64, Q> = BTreeMap::new();
        for (i, e) in it {
            *map.entry(i).or_insert_with(Q::zero) += e;
        }
        map.retain(|_, e| !e.is_zero());
        match (map.keys().next(), map.keys().next_back()) {
            (Some(&lo), Some(&hi)) => {
                let window = (lo..=hi)
                    .map(|j| map.get(&j).cloned().unwrap_or_else(Q::zero))
                    .collect();
                canonical(lo, window, Vec::new())
            }
            _ => Monomial::one(),
        }
    }

    /// Exponents from `window` at indices `≥ below`, and the periodic
    /// `pattern` read downward from `below - 1`.
    pub fn with_tail<I: IntoIterator<Item = (i64, Q)>>(
        window: I,
        below: i64,
        pattern: Vec<Q>,
    ) -> Result<Monomial> {
        let mut map: BTreeMap<i64, Q> = BTreeMap::new();
        for (i, e) in window {
            if i < below {
                return Err(Error::Config(format!(
                    "window index {i} lies below the tail start {below}"
                )));
            }
            *map.entry(i).or_insert_with(Q::zero) += e;
        }
        if pattern.is_empty() {
            return Err(Error::Config("tail pattern must be nonempty".into()));
        }
        let hi = map
            .keys()
            .next_back()
            .copied()
            .unwrap_or(below - 1)
            .max(below - 1);
        let window = (below..=hi)
            .map(|j| map.get(&j).cloned().unwrap_or_else(Q::zero))
            .collect();
        Ok(canonical(below, window, pattern))
    }

    /// ∏_{k ≥ 0} φ_{top−k}^{pattern[k mod p]}.
    pub fn tail_product(top: i64, pattern: Vec<Q>) -> Monomial {
        Monomial::with_tail(std::iter::empty(), top + 1, pattern).expect("nonempty pattern")
    }

    pub fn is_one(&self) -> bool {
        self.0.window.is_empty() && self.0.tail.is_empty()
    }

    pub fn has_tail(&self) -> bool {
        !self.0.tail.is_empty()
    }

    pub fn lo(&self) -> i64 {
        self.0.lo
    }

    /// Largest window index, or `lo - 1` when the window is empty.
    pub fn hi(&self) -> i64 {
        self.0.lo + self.0.window.len() as i64 - 1
    }

    pub fn window(&self) -> &[Q] {
        &self.0.window
    }

    pub fn tail(&self) -> &[Q] {
        &self.0.tail
    }

    fn period(&self) -> usize {
        self.0.tail.len().max(1)
    }

    pub fn exponent(&self, j: i64) -> Q {
        let r = &*self.0;
        if j >= r.lo {
            r.window
                .get((j - r.lo) as usize)
                .cloned()
                .unwrap_or_else(Q::zero)
        } else if r.tail.is_empty() {
            Q::zero()
        } else {
            let p = r.tail.len() as i64;
            r.tail[(r.lo - 1 - j).rem_euclid(p) as usize].clone()
        }
    }

    /// LF as a raw index; `None` stands for the sentinel LF(1).
    pub fn lf(&self) -> Option<i64> {
        if !self.0.window.is_empty() {
            Some(self.hi())
        } else if !self.0.tail.is_empty() {
            Some(self.0.lo - 1)
        } else {
            None
        }
    }

    pub fn leading_fundamental(&self) -> Result<FundIndex> {
        self.lf().map(FundIndex).ok_or(Error::IdentityMonomial)
    }

    pub fn leading_exponent(&self) -> Result<Q> {
        self.lf()
            .map(|j| self.exponent(j))
            .ok_or(Error::IdentityMonomial)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        let lo = self.0.lo.min(other.0.lo);
        let hi = self.hi().max(other.hi());
        let period = if self.has_tail() || other.has_tail() {
            Some(lcm(self.period(), other.period()))
        } else {
            None
        };
        from_fn(lo, hi, period, |j| self.exponent(j) + other.exponent(j))
    }

    pub fn inv(&self) -> Monomial {
        let r = &*self.0;
        let neg = |v: &Vec<Q>| v.iter().map(|e| -e).collect::<Vec<_>>();
        Monomial(Arc::new(Repr {
            lo: r.lo,
            window: neg(&r.window),
            tail: neg(&r.tail),
        }))
    }

    pub fn div(&self, other: &Monomial) -> Monomial {
        self.mul(&other.inv())
    }

    pub fn pow(&self, e: &Q) -> Monomial {
        if e.is_zero() || self.is_one() {
            return Monomial::one();
        }
        let period = self.has_tail().then(|| self.period());
        from_fn(self.0.lo, self.hi(), period, |j| self.exponent(j) * e)
    }

    pub fn compare(&self, other: &Monomial) -> MonomialComparison {
        let top = self.hi().max(other.hi());
        let bottom = self.0.lo.min(other.0.lo) - lcm(self.period(), other.period()) as i64;
        let mut j = top;
        while j >= bottom {
            let (a, b) = (self.exponent(j), other.exponent(j));
            if a != b {
                return MonomialComparison {
                    result: a.cmp(&b),
                    witness: Some(FundIndex(j)),
                };
            }
            j -= 1;
        }
        MonomialComparison {
            result: Ordering::Equal,
            witness: None,
        }
    }

    /// Keeps the exponents at indices `j` with `j rel pivot`.
    pub fn truncate(&self, rel: Rel, pivot: FundIndex) -> Monomial {
        let p = pivot.0;
        match rel {
            Rel::Ge => self.keep_from(p),
            Rel::Gt => self.keep_from(p + 1),
            Rel::Le => self.keep_upto(p),
            Rel::Lt => self.keep_upto(p - 1),
        }
    }

    fn keep_from(&self, p: i64) -> Monomial {
        let lo = if self.has_tail() { p } else { p.max(self.0.lo) };
        from_fn(lo, self.hi(), None, |j| self.exponent(j))
    }

    fn keep_upto(&self, p: i64) -> Monomial {
        if p >= self.hi() {
            return self.clone();
        }
        let lo = self.0.lo.min(p + 1);
        let period = self.has_tail().then(|| self.period());
        from_fn(lo, p, period, |j| self.exponent(j))
    }

    /// Nonzero exponents from LF downward. Infinite when there is a tail.
    pub fn support_desc(&self) -> SupportIter {
        SupportIter {
            m: self.clone(),
            next: self.hi(),
        }
    }

    /// Human-readable form using the chain's labels.
    pub fn render(&self, chain: &Chain) -> String {
        if self.is_one() {
            return "1".into();
        }
        let mut parts = Vec::new();
        for (k, e) in self.0.window.iter().enumerate().rev() {
            if !e.is_zero() {
                parts.push(power(&chain.label(self.0.lo + k as i64), e));
            }
        }
        if self.has_tail() {
            let pat: Vec<String> = self.0.tail.iter().map(fmt_q).collect();
            parts.push(format!("@prod({}; {})", self.0.lo - 1, pat.join(", ")));
        }
        parts.join("*")
    }
}

/// `label`, `label^-2`, `label^(3/2)`.
pub fn power(label: &str, e: &Q) -> String {
    if e.is_one() {
        label.to_string()
    } else if e.is_integer() {
        format!("{label}^{}", e.numer())
    } else {
        format!("{label}^({})", fmt_q(e))
    }
}

#[derive(Clone)]
pub struct SupportIter {
    m: Monomial,
    next: i64,
}

impl Iterator for SupportIter {
    type Item = (i64, Q);

    fn next(&mut self) -> Option<(i64, Q)> {
        loop {
            if self.next < self.m.0.lo && !self.m.has_tail() {
                return None;
            }
            let j = self.next;
            self.next -= 1;
            let e = self.m.exponent(j);
            if !e.is_zero() {
                return Some((j, e));
            }
        }
    }
}

fn from_fn(lo: i64, hi: i64, period: Option<usize>, f: impl Fn(i64) -> Q) -> Monomial {
    let window = if hi >= lo {
        (lo..=hi).map(&f).collect()
    } else {
        Vec::new()
    };
    let tail = match period {
        Some(p) => (0..p as i64).map(|k| f(lo - 1 - k)).collect(),
        None => Vec::new(),
    };
    canonical(lo, window, tail)
}

fn min_period(t: &[Q]) -> usize {
    let p = t.len();
    (1..=p)
        .find(|&d| p.is_multiple_of(d) && (0..p).all(|k| t[k] == t[k % d]))
        .unwrap_or(p)
}

fn canonical(mut lo: i64, mut window: Vec<Q>, mut tail: Vec<Q>) -> Monomial {
    if tail.iter().all(Zero::is_zero) {
        tail.clear();
    } else {
        let d = min_period(&tail);
        tail.truncate(d);
    }
    while window.last().is_some_and(Zero::is_zero) {
        window.pop();
    }
    // Absorb window entries that merely continue the tail.
    let mut start = 0;
    while start < window.len() {
        let ext = tail.last().cloned().unwrap_or_else(Q::zero);
        if window[start] != ext {
            break;
        }
        start += 1;
        lo += 1;
        if !tail.is_empty() {
            tail.rotate_right(1);
        }
    }
    window.drain(..start);
    if window.is_empty() {
        if tail.is_empty() {
            lo = 0;
        } else {
            while tail[0].is_zero() {
                lo -= 1;
                tail.rotate_left(1);
            }
        }
    }
    Monomial(Arc::new(Repr { lo, window, tail }))
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.compare(other).result
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&Chain::logexp()))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Monomial({self})")
    }
}

#[derive(Serialize, Deserialize)]
struct TailJson {
    period: usize,
    pattern: Vec<String>,
    below: i64,
}

#[derive(Serialize, Deserialize)]
struct MonomialJson {
    window: BTreeMap<String, String>,
    #[serde(default)]
    tail: Option<TailJson>,
}

impl Serialize for Monomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let window = self
            .0
            .window
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_zero())
            .map(|(k, e)| ((self.0.lo + k as i64).to_string(), fmt_q(e)))
            .collect();
        let pattern: Vec<String> = if self.has_tail() {
            self.0.tail.iter().map(fmt_q).collect()
        } else {
            vec!["0".into()]
        };
        let tail = TailJson {
            period: pattern.len(),
            pattern,
            below: self.0.lo,
        };
        MonomialJson {
            window,
            tail: Some(tail),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Monomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = MonomialJson::deserialize(d)?;
        let mut window = Vec::new();
        for (k, v) in &j.window {
            let i: i64 = k
                .parse()
                .map_err(|_| D::Error::custom(format!("bad index {k:?}")))?;
            window.push((i, parse_q(v).map_err(D::Error::custom)?));
        }
        match j.tail {
            None => Ok(Monomial::from_exponents(window)),
            Some(t) => {
                let pattern = t
                    .pattern
                    .iter()
                    .map(|v| parse_q(v))
                    .collect::<Result<Vec<_>>>()
                    .map_err(D::Error::custom)?;
                if pattern.len() != t.period {
                    return Err(D::Error::custom(
                        "tail period does not match pattern length",
                    ));
                }
                Monomial::with_tail(window, t.below, pattern).map_err(D::Error::custom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn x(e: i64) -> Monomial {
        Monomial::phi_pow(0, qi(e))
    }

    #[test]
    fn group_laws_and_examples() {
        assert!(x(2).mul(&x(-2)).is_one());
        let xlog = Monomial::from_exponents([(0, qi(1)), (-1, qi(1))]);
        assert_eq!(
            xlog.mul(&x(1)),
            Monomial::from_exponents([(0, qi(2)), (-1, qi(1))])
        );
        // (∏_{k≥1} φ_{−k}) · (∏_{k≥2} φ_{−k})⁻¹ = φ_{−1}
        let a = Monomial::tail_product(-1, vec![qi(1)]);
        let b = Monomial::tail_product(-2, vec![qi(1)]);
        let r = a.mul(&b.inv());
        assert_eq!(r, Monomial::phi(-1));
        for j in -20..=-1 {
            assert_eq!(r.exponent(j), a.exponent(j) - b.exponent(j));
        }
    }

    #[test]
    fn canonical_forms_coincide() {
        // the same exponent function written two ways
        let a = Monomial::with_tail([(0, qi(1)), (-1, qi(1))], -1, vec![qi(1)]).unwrap();
        let b = Monomial::tail_product(0, vec![qi(1)]);
        assert_eq!(a, b);
        let c = Monomial::tail_product(3, vec![qi(0), qi(2), qi(0), qi(2)]);
        assert_eq!(c.tail().len(), 2);
        assert_eq!(c.lf(), Some(2));
        assert_eq!(c.exponent(1), qi(0));
        assert_eq!(c.exponent(0), qi(2));
    }

    #[test]
    fn comparisons() {
        let expx = Monomial::phi(1);
        assert!(x(1) < expx);
        let log3 = Monomial::phi_pow(-1, qi(3));
        let c = log3.compare(&x(-1));
        assert_eq!(c.result, Ordering::Greater);
        assert_eq!(c.witness, Some(FundIndex(0)));
        assert_eq!(log3.compare(&log3).result, Ordering::Equal);
        // tails compared below both windows
        let t1 = Monomial::tail_product(-1, vec![qi(-1)]);
        let t2 = Monomial::tail_product(-1, vec![qi(-1), qi(-2)]);
        let c = t1.compare(&t2);
        assert_eq!(c.result, Ordering::Greater);
        assert_eq!(c.witness, Some(FundIndex(-2)));
    }

    #[test]
    fn leading_data() {
        let m = Monomial::from_exponents([(0, qi(2)), (-1, qi(5))]);
        assert_eq!(m.leading_fundamental().unwrap(), FundIndex(0));
        assert_eq!(m.leading_exponent().unwrap(), qi(2));
        let t = Monomial::tail_product(-1, vec![qi(1)]);
        assert_eq!(t.leading_fundamental().unwrap(), FundIndex(-1));
        let m = Monomial::from_exponents([(2, qi(1)), (0, qi(-7))]);
        assert_eq!(m.leading_fundamental().unwrap(), FundIndex(2));
        let m = Monomial::with_tail([(0, qi(-1))], 0, vec![qi(-1)]).unwrap();
        assert_eq!(m.leading_exponent().unwrap(), qi(-1));
        assert_eq!(
            Monomial::phi_pow(1, q(3, 2)).leading_exponent().unwrap(),
            q(3, 2)
        );
        assert!(matches!(
            Monomial::one().leading_fundamental(),
            Err(Error::IdentityMonomial)
        ));
    }

    #[test]
    fn truncation() {
        let m = Monomial::from_exponents([(0, qi(2)), (-1, qi(1))]);
        assert_eq!(m.truncate(Rel::Ge, FundIndex(0)), x(2));
        assert_eq!(m.truncate(Rel::Lt, FundIndex(0)), Monomial::phi(-1));
        assert!(x(1).truncate(Rel::Gt, FundIndex(1)).is_one());
        let t = Monomial::with_tail([(3, qi(1))], 0, vec![qi(1), qi(-2)]).unwrap();
        for p in -6..6 {
            let hi = t.truncate(Rel::Ge, FundIndex(p));
            let lo = t.truncate(Rel::Lt, FundIndex(p));
            assert_eq!(hi.mul(&lo), t);
        }
    }

    #[test]
    fn support_iteration() {
        let t = Monomial::with_tail([(1, qi(1))], 0, vec![qi(0), qi(-1)]).unwrap();
        let s: Vec<_> = t.support_desc().take(3).collect();
        assert_eq!(s, vec![(1, qi(1)), (-2, qi(-1)), (-4, qi(-1))]);
        assert_eq!(x(3).support_desc().count(), 1);
        assert_eq!(Monomial::one().support_desc().count(), 0);
    }

    #[test]
    fn rendering() {
        let m = Monomial::from_exponents([(0, qi(1)), (-1, qi(-3))]);
        assert_eq!(m.to_string(), "x*log(x)^-3");
        assert_eq!(Monomial::phi_pow(0, q(3, 2)).to_string(), "x^(3/2)");
        assert_eq!(Monomial::one().to_string(), "1");
        let t = Monomial::tail_product(0, vec![qi(-1)]);
        assert_eq!(t.to_string(), "@prod(0; -1)");
    }

    #[test]
    fn json_roundtrip() {
        let m = Monomial::with_tail([(0, qi(2)), (-1, qi(-1))], -1, vec![qi(0), qi(1)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: Monomial = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let v: serde_json::Value = serde_json::to_value(x(2)).unwrap();
        assert_eq!(v["window"]["0"], "2");
        assert_eq!(v["tail"]["pattern"][0], "0");
    }
}
