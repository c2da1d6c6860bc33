//! Lazy well-based series.
//!
//! A series is a memoized stream of `(coefficient, monomial)` terms in
//! strictly decreasing monomial order. Streams are produced by sources;
//! every emitted term is checked against the previous one so that a
//! non-summable family surfaces as [`Error::SummabilityViolation`] instead
//! of a silently wrong answer.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::hash::Hash;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::monomial::Monomial;
use crate::rational::{binomial, factorial, Q};

static DEFAULT_BUDGET: AtomicUsize = AtomicUsize::new(32);
static STALL_LIMIT: AtomicUsize = AtomicUsize::new(256);
const EAGER_PRODUCT_LIMIT: usize = 4096;
const EMPTY_MEMBER_LIMIT: usize = 100_000;

/// Default number of terms forced by [`Series::prefix_default`].
pub fn default_budget() -> usize {
    DEFAULT_BUDGET.load(AtomicOrdering::Relaxed)
}

pub fn set_default_budget(n: usize) {
    DEFAULT_BUDGET.store(n.max(1), AtomicOrdering::Relaxed);
}

/// Number of consecutive cancelling monomials a merge will inspect before
/// it reports a stall instead of searching further.
pub fn stall_limit() -> usize {
    STALL_LIMIT.load(AtomicOrdering::Relaxed)
}

pub fn set_stall_limit(n: usize) {
    STALL_LIMIT.store(n.max(1), AtomicOrdering::Relaxed);
}

/// Monomial group interface needed by the stream machinery.
pub trait Mono: Clone + Ord + Eq + Hash + fmt::Debug + Send + Sync + 'static {
    fn one() -> Self;
    fn is_one(&self) -> bool;
    fn mul(&self, other: &Self) -> Self;
    fn inv(&self) -> Self;
}

impl Mono for Monomial {
    fn one() -> Self {
        Monomial::one()
    }
    fn is_one(&self) -> bool {
        Monomial::is_one(self)
    }
    fn mul(&self, other: &Self) -> Self {
        Monomial::mul(self, other)
    }
    fn inv(&self) -> Self {
        Monomial::inv(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term<M = Monomial> {
    pub coeff: Q,
    pub mono: M,
}

impl<M> Term<M> {
    pub fn new(coeff: Q, mono: M) -> Self {
        Term { coeff, mono }
    }
}

/// Outcome of asking a series for its `k`-th term.
#[derive(Clone, Debug)]
pub enum Fetch<M> {
    Term(Term<M>),
    /// The stream is finished; fewer than `k + 1` terms exist.
    End,
    /// All terms above the given monomial are known, but the merge could
    /// not decide the next one within the stall limit.
    Stalled(M),
}

/// How a forced prefix ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrefixStatus<M> {
    /// Every term of the series is in the prefix.
    Complete,
    /// The budget was reached and more terms exist.
    Truncated,
    /// Terms below the monomial could not be decided.
    Stalled(M),
}

#[derive(Clone, Debug)]
pub struct Prefix<M = Monomial> {
    pub terms: Vec<Term<M>>,
    pub status: PrefixStatus<M>,
}

impl<M> Prefix<M> {
    pub fn is_complete(&self) -> bool {
        matches!(self.status, PrefixStatus::Complete)
    }
}

pub(crate) enum Pull<M> {
    Term(Term<M>),
    End,
    Stalled(M),
    /// Every remaining term is `≼` the monomial, which is `≼` the floor
    /// that was passed in. The source stays live.
    Below(M),
}

/// A source asked with a floor may stop early once everything it has left
/// lies at or below the floor. Without a floor it must make progress.
pub(crate) trait Source<M>: Send {
    fn pull(&mut self, floor: Option<&M>) -> Result<Pull<M>>;
}

/// Result of a floor-bounded fetch.
pub(crate) enum Got<M> {
    Fetch(Fetch<M>),
    Below(M),
}

fn lower<M: Mono>(floor: Option<&M>, by: &M) -> Option<M> {
    floor.map(|f| {
        if by.is_one() {
            f.clone()
        } else {
            f.mul(&by.inv())
        }
    })
}

enum Ending<M> {
    Complete,
    Stalled(M),
    Failed(Error),
}

struct State<M: Mono> {
    terms: Vec<Term<M>>,
    end: Option<Ending<M>>,
    source: Option<Box<dyn Source<M>>>,
}

struct Node<M: Mono> {
    state: Mutex<State<M>>,
    finite: bool,
}

pub struct Series<M: Mono = Monomial> {
    node: Arc<Node<M>>,
}

impl<M: Mono> Clone for Series<M> {
    fn clone(&self) -> Self {
        Series {
            node: self.node.clone(),
        }
    }
}

impl<M: Mono> Series<M> {
    fn finite_sorted(terms: Vec<Term<M>>) -> Self {
        Series {
            node: Arc::new(Node {
                state: Mutex::new(State {
                    terms,
                    end: Some(Ending::Complete),
                    source: None,
                }),
                finite: true,
            }),
        }
    }

    pub(crate) fn from_source(src: impl Source<M> + 'static) -> Self {
        Series {
            node: Arc::new(Node {
                state: Mutex::new(State {
                    terms: Vec::new(),
                    end: None,
                    source: Some(Box::new(src)),
                }),
                finite: false,
            }),
        }
    }

    pub fn zero() -> Self {
        Self::finite_sorted(Vec::new())
    }

    pub fn constant(c: Q) -> Self {
        Self::monomial(c, M::one())
    }

    pub fn one() -> Self {
        Self::constant(Q::one())
    }

    pub fn monomial(c: Q, m: M) -> Self {
        if c.is_zero() {
            Self::zero()
        } else {
            Self::finite_sorted(vec![Term::new(c, m)])
        }
    }

    /// Finite series from arbitrary terms; sorts, combines and drops zeros.
    pub fn from_terms<I: IntoIterator<Item = Term<M>>>(terms: I) -> Self {
        let mut v: Vec<Term<M>> = terms.into_iter().filter(|t| !t.coeff.is_zero()).collect();
        v.sort_by(|a, b| b.mono.cmp(&a.mono));
        let mut out: Vec<Term<M>> = Vec::with_capacity(v.len());
        for t in v {
            match out.last_mut() {
                Some(last) if last.mono == t.mono => last.coeff += t.coeff,
                _ => out.push(t),
            }
            if out.last().is_some_and(|l| l.coeff.is_zero()) {
                out.pop();
            }
        }
        Self::finite_sorted(out)
    }

    /// A stream taken verbatim from an iterator, without sorting. Order
    /// violations are reported when the stream is forced.
    pub fn from_iter_unchecked<I>(it: I) -> Self
    where
        I: Iterator<Item = Term<M>> + Send + 'static,
    {
        struct IterSource<I>(I);
        impl<M: Mono, I: Iterator<Item = Term<M>> + Send> Source<M> for IterSource<I> {
            fn pull(&mut self, _floor: Option<&M>) -> Result<Pull<M>> {
                Ok(match self.0.next() {
                    Some(t) => Pull::Term(t),
                    None => Pull::End,
                })
            }
        }
        Self::from_source(IterSource(it))
    }

    /// Forces the `k`-th term.
    pub fn get(&self, k: usize) -> Result<Fetch<M>> {
        match self.fetch(k, None)? {
            Got::Fetch(f) => Ok(f),
            Got::Below(_) => unreachable!("no floor given"),
        }
    }

    /// Forces the `k`-th term unless every remaining term is `≼ floor`.
    pub(crate) fn fetch(&self, k: usize, floor: Option<&M>) -> Result<Got<M>> {
        let mut st = self.node.state.lock();
        while st.terms.len() <= k && st.end.is_none() {
            let pulled = st.source.as_mut().expect("live source").pull(floor);
            match pulled {
                Ok(Pull::Term(t)) => {
                    if t.coeff.is_zero() {
                        continue;
                    }
                    if let Some(last) = st.terms.last() {
                        if t.mono >= last.mono {
                            let e = Error::SummabilityViolation(format!(
                                "term {:?} emitted after {:?}",
                                t.mono, last.mono
                            ));
                            st.end = Some(Ending::Failed(e));
                            st.source = None;
                            break;
                        }
                    }
                    st.terms.push(t);
                }
                Ok(Pull::Below(m)) => return Ok(Got::Below(m)),
                Ok(Pull::End) => {
                    st.end = Some(Ending::Complete);
                    st.source = None;
                }
                Ok(Pull::Stalled(m)) => {
                    st.end = Some(Ending::Stalled(m));
                    st.source = None;
                }
                Err(e) => {
                    st.end = Some(Ending::Failed(e));
                    st.source = None;
                }
            }
        }
        if let Some(t) = st.terms.get(k) {
            return Ok(Got::Fetch(Fetch::Term(t.clone())));
        }
        match st.end.as_ref().expect("finished") {
            Ending::Complete => Ok(Got::Fetch(Fetch::End)),
            Ending::Stalled(m) => Ok(Got::Fetch(Fetch::Stalled(m.clone()))),
            Ending::Failed(e) => Err(e.clone()),
        }
    }

    /// All terms strictly above `bound`, at most `max` of them. Work below
    /// the bound is skipped, so exact cancellation there costs nothing.
    pub fn terms_above(&self, bound: &M, max: usize) -> Result<Vec<Term<M>>> {
        let mut out = Vec::new();
        for k in 0..max {
            match self.fetch(k, Some(bound))? {
                Got::Fetch(Fetch::Term(t)) if t.mono > *bound => out.push(t),
                Got::Fetch(Fetch::Stalled(m)) if m > *bound => {
                    return Err(Error::Undetermined(format!(
                        "terms above {bound:?} stalled at {m:?}"
                    )))
                }
                _ => break,
            }
        }
        Ok(out)
    }

    /// Agreement of all terms strictly above `bound`.
    pub fn agrees_above(&self, other: &Self, bound: &M) -> Result<bool> {
        Ok(self.sub(other).terms_above(bound, 1)?.is_empty())
    }

    /// Forces up to `n` terms.
    pub fn prefix(&self, n: usize) -> Result<Prefix<M>> {
        let mut terms = Vec::with_capacity(n.min(64));
        for k in 0..n {
            match self.get(k)? {
                Fetch::Term(t) => terms.push(t),
                Fetch::End => {
                    return Ok(Prefix {
                        terms,
                        status: PrefixStatus::Complete,
                    })
                }
                Fetch::Stalled(m) => {
                    return Ok(Prefix {
                        terms,
                        status: PrefixStatus::Stalled(m),
                    })
                }
            }
        }
        let status = match self.get(n)? {
            Fetch::Term(_) => PrefixStatus::Truncated,
            Fetch::End => PrefixStatus::Complete,
            Fetch::Stalled(m) => PrefixStatus::Stalled(m),
        };
        Ok(Prefix { terms, status })
    }

    pub fn prefix_default(&self) -> Result<Prefix<M>> {
        self.prefix(default_budget())
    }

    /// Terms forced so far plus up to `n`; convenience for tests.
    pub fn terms(&self, n: usize) -> Result<Vec<Term<M>>> {
        Ok(self.prefix(n)?.terms)
    }

    /// True when the series was built finite or its stream has ended.
    pub fn is_exact(&self) -> bool {
        if self.node.finite {
            return true;
        }
        matches!(self.node.state.lock().end, Some(Ending::Complete))
    }

    /// Tries to materialize the whole series within `limit` terms.
    pub fn materialize(&self, limit: usize) -> Result<Option<Vec<Term<M>>>> {
        let p = self.prefix(limit)?;
        Ok(p.is_complete().then_some(p.terms))
    }

    /// The full term list, when the series is exact.
    pub fn exact_terms(&self) -> Option<Vec<Term<M>>> {
        let st = self.node.state.lock();
        matches!(st.end, Some(Ending::Complete)).then(|| st.terms.clone())
    }

    pub fn is_zero(&self) -> Result<bool> {
        match self.get(0)? {
            Fetch::Term(_) => Ok(false),
            Fetch::End => Ok(true),
            Fetch::Stalled(m) => Err(Error::Undetermined(format!("zero test stalled at {m:?}"))),
        }
    }

    pub fn leading(&self) -> Result<Term<M>> {
        match self.get(0)? {
            Fetch::Term(t) => Ok(t),
            Fetch::End => Err(Error::ZeroSeries),
            Fetch::Stalled(m) => Err(Error::Undetermined(format!("leading term below {m:?}"))),
        }
    }

    pub fn lm(&self) -> Result<M> {
        Ok(self.leading()?.mono)
    }

    pub fn lc(&self) -> Result<Q> {
        Ok(self.leading()?.coeff)
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Q::one())
    }

    pub fn scale(&self, c: &Q) -> Self {
        self.mul_term(c, &M::one())
    }

    /// `c·m·self`.
    pub fn mul_term(&self, c: &Q, m: &M) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        if c.is_one() && m.is_one() {
            return self.clone();
        }
        if let Some(ts) = self.exact_terms() {
            return Self::finite_sorted(
                ts.into_iter()
                    .map(|t| Term::new(t.coeff * c, t.mono.mul(m)))
                    .collect(),
            );
        }
        let (c, m) = (c.clone(), m.clone());
        Self::from_source(MapSource {
            inner: self.clone(),
            cursor: 0,
            f: move |t: Term<M>| Term::new(t.coeff * &c, t.mono.mul(&m)),
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.exact_terms(), other.exact_terms()) {
            return Self::from_terms(a.into_iter().chain(b));
        }
        Self::from_source(Merge::new(
            vec![
                (Q::one(), M::one(), self.clone()),
                (Q::one(), M::one(), other.clone()),
            ],
            None,
        ))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Sum of several series.
    pub fn sum<I: IntoIterator<Item = Self>>(items: I) -> Self {
        let items: Vec<Self> = items.into_iter().collect();
        if items.iter().all(|s| s.exact_terms().is_some()) {
            return Self::from_terms(items.iter().flat_map(|s| s.exact_terms().unwrap()));
        }
        Self::from_source(Merge::new(
            items.into_iter().map(|s| (Q::one(), M::one(), s)).collect(),
            None,
        ))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (ea, eb) = (self.exact_terms(), other.exact_terms());
        if let (Some(a), Some(b)) = (&ea, &eb) {
            if a.len() * b.len() <= EAGER_PRODUCT_LIMIT {
                return Self::from_terms(a.iter().flat_map(|s| {
                    b.iter()
                        .map(move |t| Term::new(&s.coeff * &t.coeff, s.mono.mul(&t.mono)))
                }));
            }
        }
        // Iterate over the exact factor when there is one.
        let (outer, inner) = if ea.is_none() && eb.is_some() {
            (other, self)
        } else {
            (self, other)
        };
        Self::from_source(Merge::new(
            Vec::new(),
            Some(Box::new(ProductFamily {
                outer: outer.clone(),
                inner: inner.clone(),
                cursor: 0,
            })),
        ))
    }

    /// The series without its first `n` terms.
    pub fn skip(&self, n: usize) -> Self {
        if let Some(ts) = self.exact_terms() {
            return Self::finite_sorted(ts.into_iter().skip(n).collect());
        }
        Self::from_source(MapSource {
            inner: self.clone(),
            cursor: n,
            f: |t| t,
        })
    }

    /// The first `n` terms as a finite series.
    pub fn take(&self, n: usize) -> Result<Self> {
        Ok(Self::finite_sorted(self.terms(n)?))
    }

    /// Writes `self = lc·lm·(1 + eps)` with `eps ≺ 1`.
    pub fn decompose(&self) -> Result<UnitDecomposition<M>> {
        let lead = self.leading()?;
        let eps = self.skip(1).mul_term(&lead.coeff.recip(), &lead.mono.inv());
        Ok(UnitDecomposition {
            lc: lead.coeff,
            lm: lead.mono,
            eps,
        })
    }

    pub fn invert(&self) -> Result<Self> {
        let d = self.decompose().map_err(|e| match e {
            Error::ZeroSeries => Error::ZeroDivision,
            e => e,
        })?;
        let geo = power_series(&d.eps.neg(), |_| Q::one())?;
        Ok(geo.mul_term(&d.lc.recip(), &d.lm.inv()))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.invert()?))
    }

    /// `self^e` for rational `e`, when the leading coefficient allows an
    /// exact rational power.
    pub fn pow(&self, e: &Q, mono_pow: impl Fn(&M, &Q) -> M) -> Result<Self> {
        if e.is_zero() {
            return Ok(Self::one());
        }
        // the binomial family is finite here and would never run dry lazily
        if e.is_integer() && e.is_positive() {
            let mut k = e
                .to_integer()
                .to_u64()
                .ok_or_else(|| Error::UnsupportedConstant(format!("exponent {e} too large")))?;
            let (mut base, mut acc) = (self.clone(), Self::one());
            while k > 0 {
                if k & 1 == 1 {
                    acc = acc.mul(&base);
                }
                k >>= 1;
                if k > 0 {
                    base = base.mul(&base);
                }
            }
            return Ok(acc);
        }
        let d = self.decompose()?;
        let c = crate::rational::pow_exact(&d.lc, e)
            .ok_or_else(|| Error::UnsupportedConstant(format!("({})^({})", d.lc, e)))?;
        let e2 = e.clone();
        let unit = power_series(&d.eps, move |n| binomial(&e2, n))?;
        Ok(unit.mul_term(&c, &mono_pow(&d.lm, e)))
    }

    /// Three-way split into the parts above, at and below 1.
    pub fn split(&self) -> Result<(Self, Q, Self)> {
        let one = M::one();
        let big = Self::from_source(FilterSource {
            inner: self.clone(),
            cursor: 0,
            keep: move |m: &M| m.cmp(&M::one()),
            want: Ordering::Greater,
            zero_run: 0,
        });
        let small = Self::from_source(FilterSource {
            inner: self.clone(),
            cursor: 0,
            keep: move |m: &M| m.cmp(&M::one()),
            want: Ordering::Less,
            zero_run: 0,
        });
        let mut c = Q::zero();
        let limit = stall_limit();
        let mut k = 0;
        loop {
            if k >= limit {
                return Err(Error::Undetermined("constant term".into()));
            }
            match self.get(k)? {
                Fetch::Term(t) => match t.mono.cmp(&one) {
                    Ordering::Greater => k += 1,
                    Ordering::Equal => {
                        c = t.coeff;
                        break;
                    }
                    Ordering::Less => break,
                },
                Fetch::End => break,
                Fetch::Stalled(m) => {
                    if m >= one {
                        return Err(Error::Undetermined("constant term".into()));
                    }
                    break;
                }
            }
        }
        Ok((big, c, small))
    }

    /// Exact equality; both sides must be exact.
    pub fn eq_exact(&self, other: &Self) -> Result<bool> {
        match (self.exact_terms(), other.exact_terms()) {
            (Some(a), Some(b)) => Ok(a == b),
            _ => Err(Error::NotExact),
        }
    }

    /// Equality of the first `n` terms and of how each prefix ended.
    pub fn eq_to_budget(&self, other: &Self, n: usize) -> Result<bool> {
        let (a, b) = (self.prefix(n)?, other.prefix(n)?);
        if a.terms != b.terms {
            return Ok(false);
        }
        Ok(a.is_complete() == b.is_complete() || a.terms.len() == n)
    }

    /// Agreement with `reference` on its first `n` terms, including that
    /// `self` has nothing extra above the `n`-th one. When the reference is
    /// shorter, `self` must end where it ends.
    pub fn agrees_to_budget(&self, reference: &Self, n: usize) -> Result<bool> {
        let p = reference.prefix(n)?;
        match (&p.status, p.terms.last()) {
            (PrefixStatus::Truncated, Some(last)) => {
                let mine = self.terms_above(&last.mono, n + 1)?;
                if mine.len() + 1 != p.terms.len() || mine[..] != p.terms[..p.terms.len() - 1] {
                    return Ok(false);
                }
                Ok(self.fetch(p.terms.len() - 1, None).map(|g| match g {
                    Got::Fetch(Fetch::Term(t)) => t == *last,
                    _ => false,
                })?)
            }
            (PrefixStatus::Stalled(m), _) => Err(Error::Undetermined(format!(
                "reference stalled below {m:?}"
            ))),
            _ => {
                let q = self.prefix(p.terms.len())?;
                Ok(q.terms == p.terms && q.is_complete())
            }
        }
    }

    /// Agreement on every monomial above `LM·LM(ε)^n`, where `self` (or
    /// failing that `other`) is written `c·LM·(1 + ε)`. Suited to identities
    /// where one side is finite and the other cancels down to it lazily.
    pub fn agrees_within(&self, other: &Self, n: usize) -> Result<bool> {
        let a = match self.decompose() {
            Err(Error::ZeroSeries) => return other.is_zero(),
            r => r?,
        };
        let (lm, eps) = if !a.eps.is_zero()? {
            (a.lm, a.eps.lm()?)
        } else {
            let b = match other.decompose() {
                Err(Error::ZeroSeries) => return Ok(false),
                r => r?,
            };
            if b.eps.is_zero()? {
                return Ok(a.lc == b.lc && a.lm == b.lm);
            }
            (b.lm, b.eps.lm()?)
        };
        let d = self.sub(other);
        let mut bound = lm;
        for _ in 0..n {
            bound = bound.mul(&eps);
        }
        Ok(d.terms_above(&bound, 1)?.is_empty())
    }

    /// Maps every monomial through a strictly increasing map.
    pub fn map_monomials<N: Mono>(&self, f: impl Fn(&M) -> N + Send + 'static) -> Series<N> {
        Series::from_source(LiftSource {
            inner: self.clone(),
            cursor: 0,
            f,
        })
    }
}

impl<M: Mono> fmt::Debug for Series<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let st = self.node.state.lock();
        write!(f, "Series[")?;
        for (k, t) in st.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}·{:?}", t.coeff, t.mono)?;
        }
        let tail = match st.end {
            Some(Ending::Complete) => "",
            _ => " + …",
        };
        write!(f, "{tail}]")
    }
}

impl Series<Monomial> {
    pub fn x() -> Self {
        Self::monomial(Q::one(), Monomial::phi(0))
    }

    pub fn lf(&self) -> Result<i64> {
        self.lm()?.lf().ok_or(Error::IdentityMonomial)
    }

    pub fn le(&self) -> Result<Q> {
        self.lm()?.leading_exponent()
    }

    pub fn pow_q(&self, e: &Q) -> Result<Self> {
        self.pow(e, |m, e| m.pow(e))
    }
}

#[derive(Clone, Debug)]
pub struct UnitDecomposition<M: Mono = Monomial> {
    pub lc: Q,
    pub lm: M,
    pub eps: Series<M>,
}

/// Dominance relation between two nonzero series.
pub fn dominance<M: Mono>(a: &Series<M>, b: &Series<M>) -> Result<Ordering> {
    Ok(a.lm()?.cmp(&b.lm()?))
}

/// `a ∼ b`: same leading term.
pub fn asymptotic<M: Mono>(a: &Series<M>, b: &Series<M>) -> Result<bool> {
    Ok(a.leading()? == b.leading()?)
}

/// Same leading fundamental monomial.
pub fn comparable(a: &Series, b: &Series) -> Result<bool> {
    Ok(a.lm()?.lf() == b.lm()?.lf())
}

/// Sign of a series as a real number: the sign of its leading coefficient.
pub fn sign<M: Mono>(a: &Series<M>) -> Result<Ordering> {
    match a.get(0)? {
        Fetch::End => Ok(Ordering::Equal),
        Fetch::Term(t) => Ok(if t.coeff.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        }),
        Fetch::Stalled(m) => Err(Error::Undetermined(format!("sign below {m:?}"))),
    }
}

/// Real order `a < b` decided on the leading term of `a − b`.
pub fn order<M: Mono>(a: &Series<M>, b: &Series<M>) -> Result<Ordering> {
    sign(&a.sub(b))
}

fn check_infinitesimal<M: Mono>(eps: &Series<M>) -> Result<()> {
    match eps.get(0)? {
        Fetch::Term(t) if t.mono >= M::one() => Err(Error::NotInfinitesimal),
        Fetch::Stalled(m) if m >= M::one() => Err(Error::NotInfinitesimal),
        _ => Ok(()),
    }
}

/// `Σ_{n≥0} c(n)·eps^n` for `eps ≺ 1`.
pub fn power_series<M: Mono>(
    eps: &Series<M>,
    coeff: impl Fn(usize) -> Q + Send + 'static,
) -> Result<Series<M>> {
    check_infinitesimal(eps)?;
    if eps.is_zero()? {
        return Ok(Series::constant(coeff(0)));
    }
    Ok(Series::from_source(Merge::new(
        Vec::new(),
        Some(Box::new(PowerFamily {
            eps: eps.clone(),
            power: None,
            n: 0,
            coeff,
        })),
    )))
}

/// The logarithm of the 1-unit `1 + eps`: `Σ_{n≥1} (−1)^{n−1} eps^n / n`.
pub fn log1<M: Mono>(eps: &Series<M>) -> Result<Series<M>> {
    power_series(eps, |n| {
        if n == 0 {
            Q::zero()
        } else {
            let s = if n % 2 == 1 { 1 } else { -1 };
            Q::new(s.into(), n.into())
        }
    })
}

/// `Σ_{n≥0} eps^n / n!`.
pub fn exp1<M: Mono>(eps: &Series<M>) -> Result<Series<M>> {
    power_series(eps, |n| factorial(n).recip())
}

// ---------------------------------------------------------------------------
// Sources

struct MapSource<M: Mono, F> {
    inner: Series<M>,
    cursor: usize,
    f: F,
}

impl<M: Mono, F: Fn(Term<M>) -> Term<M> + Send> Source<M> for MapSource<M, F> {
    fn pull(&mut self, floor: Option<&M>) -> Result<Pull<M>> {
        let shift = (self.f)(Term::new(Q::one(), M::one())).mono;
        let fl = lower(floor, &shift);
        Ok(match self.inner.fetch(self.cursor, fl.as_ref())? {
            Got::Fetch(Fetch::Term(t)) => {
                self.cursor += 1;
                Pull::Term((self.f)(t))
            }
            Got::Fetch(Fetch::End) => Pull::End,
            Got::Fetch(Fetch::Stalled(m)) => Pull::Stalled(m.mul(&shift)),
            Got::Below(m) => Pull::Below(m.mul(&shift)),
        })
    }
}

struct LiftSource<M: Mono, F> {
    inner: Series<M>,
    cursor: usize,
    f: F,
}

impl<M: Mono, N: Mono, F: Fn(&M) -> N + Send> Source<N> for LiftSource<M, F> {
    fn pull(&mut self, _floor: Option<&N>) -> Result<Pull<N>> {
        Ok(match self.inner.get(self.cursor)? {
            Fetch::Term(t) => {
                self.cursor += 1;
                Pull::Term(Term::new(t.coeff, (self.f)(&t.mono)))
            }
            Fetch::End => Pull::End,
            Fetch::Stalled(m) => Pull::Stalled((self.f)(&m)),
        })
    }
}

struct FilterSource<M: Mono, F> {
    inner: Series<M>,
    cursor: usize,
    keep: F,
    want: Ordering,
    zero_run: usize,
}

impl<M: Mono, F: Fn(&M) -> Ordering + Send> Source<M> for FilterSource<M, F> {
    fn pull(&mut self, floor: Option<&M>) -> Result<Pull<M>> {
        loop {
            let f = match self.inner.fetch(self.cursor, floor)? {
                Got::Below(m) => return Ok(Pull::Below(m)),
                Got::Fetch(f) => f,
            };
            match f {
                Fetch::Term(t) => {
                    self.cursor += 1;
                    let rel = (self.keep)(&t.mono);
                    if rel == self.want {
                        return Ok(Pull::Term(t));
                    }
                    // Terms come in decreasing order: once below the wanted
                    // region nothing more can match.
                    if self.want == Ordering::Greater {
                        return Ok(Pull::End);
                    }
                    self.zero_run += 1;
                    if self.zero_run > stall_limit() {
                        return Ok(Pull::Stalled(t.mono));
                    }
                }
                Fetch::End => return Ok(Pull::End),
                Fetch::Stalled(m) => return Ok(Pull::Stalled(m)),
            }
        }
    }
}

/// Source of summands for a [`Merge`]; members must arrive with
/// non-increasing leading monomials.
pub(crate) trait Family<M: Mono>: Send {
    /// `floor` is a hint: a family may answer `Pending` once every
    /// remaining member lies at or below it.
    fn next(&mut self, floor: Option<&M>) -> Result<FamilyItem<M>>;
}

pub(crate) enum FamilyItem<M: Mono> {
    /// The summand `coeff·mono·series`.
    Member {
        coeff: Q,
        mono: M,
        series: Series<M>,
    },
    /// Nothing above the monomial remains; below it is unknown.
    Barrier(M),
    /// Every remaining member is `≼` the monomial; ask again later.
    Pending(M),
    Done,
}

struct Member<M: Mono> {
    coeff: Q,
    mono: M,
    series: Series<M>,
    cursor: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Kind {
    Head,
    /// Upper bound for a member (or the family) not yet refined.
    Pending,
    Barrier,
}

const FAMILY: usize = usize::MAX;
/// Partial sum parked on the heap while a bound at the same monomial is
/// refined.
const PARKED: usize = usize::MAX - 1;

struct Entry<M> {
    mono: M,
    kind: Kind,
    coeff: Q,
    member: usize,
}

impl<M: Ord> PartialEq for Entry<M> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<M: Ord> Eq for Entry<M> {}
impl<M: Ord> PartialOrd for Entry<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M: Ord> Ord for Entry<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mono
            .cmp(&other.mono)
            .then(self.kind.cmp(&other.kind))
            .then(other.member.cmp(&self.member))
    }
}

/// K-way merge of a summable family with combination of equal monomials.
pub(crate) struct Merge<M: Mono> {
    members: Vec<Member<M>>,
    heap: BinaryHeap<Entry<M>>,
    rest: Option<Box<dyn Family<M>>>,
    initial: Vec<(Q, M, Series<M>)>,
    started: bool,
    last_rest: Option<usize>,
    zero_run: usize,
}

impl<M: Mono> Merge<M> {
    pub(crate) fn new(initial: Vec<(Q, M, Series<M>)>, rest: Option<Box<dyn Family<M>>>) -> Self {
        Merge {
            members: Vec::new(),
            heap: BinaryHeap::new(),
            rest,
            initial,
            started: false,
            last_rest: None,
            zero_run: 0,
        }
    }

    /// Pushes the member's current head, or a bound for it. `None` when
    /// the member is exhausted.
    fn push_head(&mut self, idx: usize, floor: Option<&M>) -> Result<Option<Kind>> {
        let mem = &self.members[idx];
        let fl = lower(floor, &mem.mono);
        let entry = match mem.series.fetch(mem.cursor, fl.as_ref())? {
            Got::Fetch(Fetch::Term(t)) => Entry {
                mono: t.mono.mul(&mem.mono),
                kind: Kind::Head,
                coeff: t.coeff * &mem.coeff,
                member: idx,
            },
            Got::Fetch(Fetch::End) => return Ok(None),
            Got::Fetch(Fetch::Stalled(m)) => Entry {
                mono: m.mul(&mem.mono),
                kind: Kind::Barrier,
                coeff: Q::zero(),
                member: idx,
            },
            Got::Below(m) => Entry {
                mono: m.mul(&mem.mono),
                kind: Kind::Pending,
                coeff: Q::zero(),
                member: idx,
            },
        };
        let kind = entry.kind;
        self.heap.push(entry);
        Ok(Some(kind))
    }

    fn add_member(&mut self, coeff: Q, mono: M, series: Series<M>) -> usize {
        self.members.push(Member {
            coeff,
            mono,
            series,
            cursor: 0,
        });
        self.members.len() - 1
    }

    fn introduce_rest(&mut self, floor: Option<&M>) -> Result<()> {
        self.last_rest = None;
        let mut empties = 0usize;
        while let Some(fam) = self.rest.as_mut() {
            match fam.next(floor)? {
                FamilyItem::Member {
                    coeff,
                    mono,
                    series,
                } => {
                    if coeff.is_zero() {
                        continue;
                    }
                    let idx = self.add_member(coeff, mono, series);
                    match self.push_head(idx, floor)? {
                        // Later members lie below this one, so the barrier
                        // covers them too.
                        Some(Kind::Barrier) => {
                            self.rest = None;
                            return Ok(());
                        }
                        Some(_) => {
                            self.last_rest = Some(idx);
                            return Ok(());
                        }
                        None => {}
                    }
                    empties += 1;
                    if empties > EMPTY_MEMBER_LIMIT {
                        return Err(Error::Undetermined("family of empty summands".into()));
                    }
                }
                FamilyItem::Barrier(m) => {
                    self.heap.push(Entry {
                        mono: m,
                        kind: Kind::Barrier,
                        coeff: Q::zero(),
                        member: FAMILY,
                    });
                    self.rest = None;
                }
                FamilyItem::Pending(m) => {
                    self.heap.push(Entry {
                        mono: m,
                        kind: Kind::Pending,
                        coeff: Q::zero(),
                        member: FAMILY,
                    });
                    return Ok(());
                }
                FamilyItem::Done => self.rest = None,
            }
        }
        Ok(())
    }
}

impl<M: Mono> Source<M> for Merge<M> {
    fn pull(&mut self, floor: Option<&M>) -> Result<Pull<M>> {
        if !self.started {
            self.started = true;
            for (c, m, s) in std::mem::take(&mut self.initial) {
                if !c.is_zero() {
                    let idx = self.add_member(c, m, s);
                    self.push_head(idx, floor)?;
                }
            }
            self.introduce_rest(floor)?;
        }
        loop {
            let (top, kind, member) = match self.heap.peek() {
                None => return Ok(Pull::End),
                Some(e) => (e.mono.clone(), e.kind, e.member),
            };
            if floor.is_some_and(|f| top <= *f) {
                return Ok(Pull::Below(top));
            }
            match kind {
                Kind::Barrier => return Ok(Pull::Stalled(top)),
                Kind::Pending => {
                    self.heap.pop();
                    if member == FAMILY {
                        self.introduce_rest(floor)?;
                    } else {
                        self.push_head(member, floor)?;
                    }
                    continue;
                }
                Kind::Head => {}
            }
            let mut sum = Q::zero();
            while self
                .heap
                .peek()
                .is_some_and(|e| e.mono == top && e.kind == Kind::Head)
            {
                let e = self.heap.pop().expect("peeked");
                sum += e.coeff;
                let idx = e.member;
                if idx == PARKED {
                    continue;
                }
                let was_head = self.members[idx].cursor == 0;
                self.members[idx].cursor += 1;
                self.push_head(idx, floor)?;
                if was_head && self.last_rest == Some(idx) {
                    self.introduce_rest(floor)?;
                }
            }
            if self.heap.peek().is_some_and(|e| e.mono == top) {
                // A bound at the same monomial still has to be refined;
                // keep the partial sum on the heap.
                if !sum.is_zero() {
                    self.heap.push(Entry {
                        mono: top,
                        kind: Kind::Head,
                        coeff: sum,
                        member: PARKED,
                    });
                }
                continue;
            }
            if !sum.is_zero() {
                self.zero_run = 0;
                return Ok(Pull::Term(Term::new(sum, top)));
            }
            self.zero_run += 1;
            if self.zero_run > stall_limit() {
                return Ok(Pull::Stalled(top));
            }
        }
    }
}

/// The family `{a_i·α_i·inner}` over the terms of `outer`.
struct ProductFamily<M: Mono> {
    outer: Series<M>,
    inner: Series<M>,
    cursor: usize,
}

impl<M: Mono> Family<M> for ProductFamily<M> {
    fn next(&mut self, floor: Option<&M>) -> Result<FamilyItem<M>> {
        let lead = match self.inner.get(0)? {
            Fetch::Term(t) => t.mono,
            Fetch::End => return Ok(FamilyItem::Done),
            Fetch::Stalled(b) => b,
        };
        let fl = lower(floor, &lead);
        match self.outer.fetch(self.cursor, fl.as_ref())? {
            Got::Fetch(Fetch::Term(t)) => {
                self.cursor += 1;
                Ok(FamilyItem::Member {
                    coeff: t.coeff,
                    mono: t.mono,
                    series: self.inner.clone(),
                })
            }
            Got::Fetch(Fetch::End) => Ok(FamilyItem::Done),
            Got::Fetch(Fetch::Stalled(m)) => Ok(FamilyItem::Barrier(m.mul(&lead))),
            Got::Below(m) => Ok(FamilyItem::Pending(m.mul(&lead))),
        }
    }
}

/// The family `{c(n)·eps^n}`.
struct PowerFamily<M: Mono, F> {
    eps: Series<M>,
    power: Option<Series<M>>,
    n: usize,
    coeff: F,
}

impl<M: Mono, F: Fn(usize) -> Q + Send> Family<M> for PowerFamily<M, F> {
    fn next(&mut self, _floor: Option<&M>) -> Result<FamilyItem<M>> {
        let p = match &self.power {
            None => Series::one(),
            Some(prev) => prev.mul(&self.eps),
        };
        self.power = Some(p.clone());
        let c = (self.coeff)(self.n);
        self.n += 1;
        Ok(FamilyItem::Member {
            coeff: c,
            mono: M::one(),
            series: p,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn xp(e: i64) -> Monomial {
        Monomial::phi_pow(0, qi(e))
    }

    fn poly(ts: &[(i64, i64)]) -> Series {
        Series::from_terms(ts.iter().map(|&(c, e)| Term::new(qi(c), xp(e))))
    }

    fn coeffs(s: &Series, n: usize) -> Vec<(Q, i64)> {
        s.terms(n)
            .unwrap()
            .into_iter()
            .map(|t| (t.coeff, t.mono.exponent(0).to_integer().try_into().unwrap()))
            .collect()
    }

    #[test]
    fn addition() {
        let a = poly(&[(1, 1), (1, 0)]);
        assert!(a.add(&poly(&[(-1, 1)])).eq_exact(&Series::one()).unwrap());
        let b = poly(&[(1, 1), (1, -1)]).add(&poly(&[(1, -1)]));
        assert_eq!(coeffs(&b, 5), vec![(qi(1), 1), (qi(2), -1)]);
        assert!(a.add(&Series::zero()).eq_exact(&a).unwrap());
    }

    #[test]
    fn products() {
        let p = poly(&[(1, 1), (1, 0)]).mul(&poly(&[(1, 1), (-1, 0)]));
        assert_eq!(coeffs(&p, 5), vec![(qi(1), 2), (qi(-1), 0)]);
        let u = poly(&[(1, 0), (1, -1)]);
        assert_eq!(
            coeffs(&u.mul(&u), 5),
            vec![(qi(1), 0), (qi(2), -1), (qi(1), -2)]
        );
    }

    #[test]
    fn inversion() {
        assert_eq!(
            coeffs(&poly(&[(1, 1)]).invert().unwrap(), 3),
            vec![(qi(1), -1)]
        );
        let g = poly(&[(1, 0), (-1, -1)]).invert().unwrap();
        assert_eq!(coeffs(&g, 3), vec![(qi(1), 0), (qi(1), -1), (qi(1), -2)]);
        let h = poly(&[(2, 1), (2, 0)]).invert().unwrap();
        assert_eq!(
            coeffs(&h, 3),
            vec![(q(1, 2), -1), (q(-1, 2), -2), (q(1, 2), -3)]
        );
        assert!(matches!(
            Series::<Monomial>::zero().invert(),
            Err(Error::ZeroDivision)
        ));
        // a · a⁻¹ = 1 to budget
        let a = poly(&[(3, 2), (-1, 1), (5, -3)]);
        let one = a.mul(&a.invert().unwrap());
        assert_eq!(
            one.terms_above(&xp(-40), 10).unwrap(),
            vec![Term::new(qi(1), Monomial::one())]
        );
    }

    #[test]
    fn leading_terms() {
        let a = poly(&[(3, 2), (1, 1)]);
        assert_eq!(a.leading().unwrap(), Term::new(qi(3), xp(2)));
        let b = poly(&[(-5, 0), (1, -1)]);
        assert_eq!(b.leading().unwrap(), Term::new(qi(-5), Monomial::one()));
        assert!(matches!(
            Series::<Monomial>::zero().leading(),
            Err(Error::ZeroSeries)
        ));
        let l = log1(&poly(&[(1, -1)])).unwrap();
        assert_eq!(l.leading().unwrap(), Term::new(qi(1), xp(-1)));
    }

    #[test]
    fn dominance_relations() {
        let x2 = poly(&[(1, 2)]);
        let xlog = Series::monomial(qi(1), Monomial::from_exponents([(0, qi(1)), (-1, qi(1))]));
        assert_eq!(dominance(&x2, &xlog).unwrap(), Ordering::Greater);
        let a = poly(&[(2, 1)]);
        let b = a.add(&Series::monomial(qi(1), Monomial::phi(-1)));
        assert!(asymptotic(&a, &b).unwrap());
        assert!(!comparable(&x2, &Series::monomial(qi(1), Monomial::phi(1))).unwrap());
    }

    #[test]
    fn unit_logs() {
        assert!(log1(&Series::<Monomial>::zero())
            .unwrap()
            .is_zero()
            .unwrap());
        let l = log1(&poly(&[(1, -1)])).unwrap();
        assert_eq!(
            coeffs(&l, 3),
            vec![(qi(1), -1), (q(-1, 2), -2), (q(1, 3), -3)]
        );
        assert!(matches!(
            log1(&poly(&[(1, 0)])),
            Err(Error::NotInfinitesimal)
        ));
        assert!(exp1(&Series::<Monomial>::zero())
            .unwrap()
            .eq_exact(&Series::one())
            .unwrap());
        let e = exp1(&poly(&[(1, -1)])).unwrap();
        assert_eq!(coeffs(&e, 3), vec![(qi(1), 0), (qi(1), -1), (q(1, 2), -2)]);
        let back = exp1(&l).unwrap();
        assert!(back
            .agrees_above(&poly(&[(1, 0), (1, -1)]), &xp(-20))
            .unwrap());
        let t = back.terms_above(&xp(-20), 5).unwrap();
        assert_eq!(t, vec![Term::new(qi(1), xp(0)), Term::new(qi(1), xp(-1))]);
    }

    #[test]
    fn decomposition_and_split() {
        let d = poly(&[(3, 2), (3, 1)]).decompose().unwrap();
        assert_eq!((d.lc.clone(), d.lm.clone()), (qi(3), xp(2)));
        assert_eq!(coeffs(&d.eps, 3), vec![(qi(1), -1)]);
        let d = poly(&[(-1, -1)]).decompose().unwrap();
        assert_eq!(d.lc, qi(-1));
        assert!(d.eps.is_zero().unwrap());
        let (big, c, small) = poly(&[(1, 1), (2, 0), (1, -1)]).split().unwrap();
        assert_eq!(coeffs(&big, 3), vec![(qi(1), 1)]);
        assert_eq!(c, qi(2));
        assert_eq!(coeffs(&small, 3), vec![(qi(1), -1)]);
        let (big, c, small) = Series::<Monomial>::constant(qi(5)).split().unwrap();
        assert!(big.is_zero().unwrap() && small.is_zero().unwrap());
        assert_eq!(c, qi(5));
        let m = Monomial::from_exponents([(1, qi(1)), (0, qi(-1))]);
        let (big, c, _) = Series::monomial(qi(1), m.clone()).split().unwrap();
        assert_eq!(big.lm().unwrap(), m);
        assert!(c.is_zero());
    }

    #[test]
    fn bad_stream_is_rejected() {
        let bad = Series::from_iter_unchecked(
            vec![Term::new(qi(1), xp(-1)), Term::new(qi(1), xp(1))].into_iter(),
        );
        assert!(matches!(bad.prefix(5), Err(Error::SummabilityViolation(_))));
        // also when it feeds a merge
        let bad = Series::from_iter_unchecked(
            vec![Term::new(qi(1), xp(-1)), Term::new(qi(1), xp(1))].into_iter(),
        );
        let s = bad.add(&poly(&[(1, 5)]));
        assert!(matches!(s.prefix(5), Err(Error::SummabilityViolation(_))));
    }

    #[test]
    fn lazy_geometric_stays_lazy() {
        let g = poly(&[(1, 0), (-1, -1)]).invert().unwrap();
        let p = g.prefix(40).unwrap();
        assert_eq!(p.terms.len(), 40);
        assert_eq!(p.status, PrefixStatus::Truncated);
        assert!(!g.is_exact());
    }

    #[test]
    fn rational_powers() {
        let a = poly(&[(4, 2), (4, 1)]);
        let r = a.pow_q(&q(1, 2)).unwrap();
        assert_eq!(coeffs(&r, 3), vec![(qi(2), 1), (qi(1), 0), (q(-1, 4), -1)]);
        assert!(poly(&[(2, 1)]).pow_q(&q(1, 2)).is_err());
    }
}
