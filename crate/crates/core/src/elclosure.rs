//! The exponential closure tower `K ⊂ K^♯ ⊂ K^♯² ⊂ …`.
//!
//! A tower monomial is stored flat as `γ·e^{r_0}·e^{r_1}·…` with `γ ∈ Γ`,
//! `r_0` a purely infinite finite series over `Γ` from which every part of
//! the form `l(γ')` has been extracted, and `r_k` (k ≥ 1) a purely infinite
//! finite series whose monomials all have level exactly `k`. The level of
//! the monomial is the number of argument slots. Its logarithm is
//! `l(γ) + Σ r_k`, and monomials are ordered by the sign of the difference
//! of logarithms.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::ser::SerializeMap;
use serde::Serialize;
use serde_json::json;

use crate::asympint;
use crate::chain::{Chain, FundIndex};
use crate::constant::Constant;
use crate::derivation::DerivationSpec;
use crate::error::{Error, Result};
use crate::monomial::Monomial;
use crate::prelog::Prelog;
use crate::random::Sampler;
use crate::rational::{fmt_q, Q};
use crate::series::{exp1, log1, Family, FamilyItem, Fetch, Merge, Mono, Series, Term};

pub const DEFAULT_DEPTH: usize = 3;
/// Terms forced from an exponent argument before it is declared
/// non-terminating.
pub const EXP_ARG_LIMIT: usize = 256;
const AI_ITERATIONS: usize = 64;
const EXTRACT_STEPS: usize = 10_000;

pub type TowerSeries = Series<TowerMonomial>;

pub struct TowerCtx {
    pub prelog: Prelog,
    pub depth: usize,
}

#[derive(Clone)]
pub struct TowerMonomial {
    base: Monomial,
    exps: Arc<Vec<Vec<Term<TowerMonomial>>>>,
    ctx: Option<Arc<TowerCtx>>,
}

impl TowerMonomial {
    /// A monomial of `Γ` with no context; enough for level-0 arithmetic.
    pub fn plain(base: Monomial) -> TowerMonomial {
        TowerMonomial {
            base,
            exps: Arc::new(Vec::new()),
            ctx: None,
        }
    }

    pub fn base(&self) -> &Monomial {
        &self.base
    }

    /// Argument slots `r_0, r_1, …`.
    pub fn exps(&self) -> &[Vec<Term<TowerMonomial>>] {
        &self.exps
    }

    pub fn level(&self) -> usize {
        self.exps.len()
    }

    pub fn is_plain(&self) -> bool {
        self.exps.is_empty()
    }

    /// `Σ r_k` as one sorted term list.
    pub fn exp_argument(&self) -> Vec<Term<TowerMonomial>> {
        let all: Vec<Term<TowerMonomial>> = self.exps.iter().flatten().cloned().collect();
        sorted(all)
    }

    /// Same exponential part, different base.
    pub fn with_base(&self, base: Monomial) -> TowerMonomial {
        TowerMonomial {
            base,
            exps: self.exps.clone(),
            ctx: self.ctx.clone(),
        }
    }

    /// `μ^e`: the base is raised and every argument slot scaled.
    pub fn pow_q(&self, e: &Q) -> TowerMonomial {
        if e.is_zero() {
            return TowerMonomial::plain(Monomial::one());
        }
        let exps = self
            .exps
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| Term::new(&t.coeff * e, t.mono.clone()))
                    .collect()
            })
            .collect();
        TowerMonomial::from_parts(self.base.pow(e), exps, self.ctx.clone())
    }

    fn ctx_with(&self, other: &TowerMonomial) -> Option<Arc<TowerCtx>> {
        self.ctx.clone().or_else(|| other.ctx.clone())
    }

    fn from_parts(
        base: Monomial,
        mut exps: Vec<Vec<Term<TowerMonomial>>>,
        ctx: Option<Arc<TowerCtx>>,
    ) -> Self {
        while exps.last().is_some_and(|r| r.is_empty()) {
            exps.pop();
        }
        let ctx = if exps.is_empty() {
            ctx
        } else {
            ctx.or_else(|| find_ctx(&exps))
        };
        TowerMonomial {
            base,
            exps: Arc::new(exps),
            ctx,
        }
    }
}

fn find_ctx(exps: &[Vec<Term<TowerMonomial>>]) -> Option<Arc<TowerCtx>> {
    exps.iter().flatten().find_map(|t| t.mono.ctx.clone())
}

fn sorted(terms: Vec<Term<TowerMonomial>>) -> Vec<Term<TowerMonomial>> {
    Series::from_terms(terms).exact_terms().expect("finite")
}

fn combine(
    a: &[Term<TowerMonomial>],
    b: &[Term<TowerMonomial>],
    sign: &Q,
) -> Vec<Term<TowerMonomial>> {
    sorted(
        a.iter()
            .cloned()
            .chain(b.iter().map(|t| Term::new(&t.coeff * sign, t.mono.clone())))
            .collect(),
    )
}

impl PartialEq for TowerMonomial {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && (Arc::ptr_eq(&self.exps, &other.exps) || self.exps == other.exps)
    }
}

impl Eq for TowerMonomial {}

impl Hash for TowerMonomial {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.base.hash(h);
        self.exps.hash(h);
    }
}

impl Ord for TowerMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.exps, &other.exps) || self.exps == other.exps {
            return self.base.cmp(&other.base);
        }
        let ctx = self
            .ctx_with(other)
            .expect("tower monomials carry their context");
        log_ratio_sign(&ctx, self, other)
    }
}

impl PartialOrd for TowerMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sign of `l^♯(a) − l^♯(b)`: the leading term over all argument slots.
fn log_ratio_sign(ctx: &TowerCtx, a: &TowerMonomial, b: &TowerMonomial) -> Ordering {
    let empty = Vec::new();
    let slot = |m: &TowerMonomial, k: usize| -> Vec<Term<TowerMonomial>> {
        m.exps.get(k).cloned().unwrap_or_else(|| empty.clone())
    };
    let mut candidates: Vec<Term<TowerMonomial>> = Vec::new();
    let low =
        |ts: Vec<Term<TowerMonomial>>| ts.into_iter().map(|t| Term::new(t.coeff, t.mono.base));
    let d0 = ctx
        .prelog
        .log_monomial(&a.base.div(&b.base))
        .expect("prelog defined on the bases")
        .add(&Series::from_terms(
            low(slot(a, 0)).chain(low(slot(b, 0)).map(|t| Term::new(-t.coeff, t.mono))),
        ));
    match d0.get(0).expect("log of a monomial ratio") {
        Fetch::Term(t) => candidates.push(Term::new(t.coeff, TowerMonomial::plain(t.mono))),
        Fetch::End => {}
        Fetch::Stalled(m) => panic!("leading term of a log ratio stalled below {m}"),
    }
    for k in 1..a.exps.len().max(b.exps.len()) {
        if let Some(t) = combine(&slot(a, k), &slot(b, k), &-Q::one())
            .into_iter()
            .next()
        {
            candidates.push(t);
        }
    }
    match candidates.into_iter().max_by(|x, y| x.mono.cmp(&y.mono)) {
        Some(t) if t.coeff.is_positive() => Ordering::Greater,
        Some(_) => Ordering::Less,
        None => a.base.cmp(&b.base),
    }
}

impl Mono for TowerMonomial {
    fn one() -> Self {
        TowerMonomial::plain(Monomial::one())
    }

    fn is_one(&self) -> bool {
        self.exps.is_empty() && self.base.is_one()
    }

    fn mul(&self, other: &Self) -> Self {
        if other.exps.is_empty() && self.exps.is_empty() {
            return TowerMonomial {
                base: self.base.mul(&other.base),
                exps: self.exps.clone(),
                ctx: self.ctx_with(other),
            };
        }
        let n = self.exps.len().max(other.exps.len());
        let empty = Vec::new();
        let exps = (0..n)
            .map(|k| {
                combine(
                    self.exps.get(k).unwrap_or(&empty),
                    other.exps.get(k).unwrap_or(&empty),
                    &Q::one(),
                )
            })
            .collect();
        TowerMonomial::from_parts(self.base.mul(&other.base), exps, self.ctx_with(other))
    }

    fn inv(&self) -> Self {
        let exps = self
            .exps
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| Term::new(-t.coeff.clone(), t.mono.clone()))
                    .collect()
            })
            .collect();
        TowerMonomial {
            base: self.base.inv(),
            exps: Arc::new(exps),
            ctx: self.ctx.clone(),
        }
    }
}

impl fmt::Debug for TowerMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render_monomial(self, &Chain::logexp()))
    }
}

impl Serialize for TowerMonomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("base", &self.base)?;
        if !self.is_plain() {
            let arg: Vec<serde_json::Value> = self.exp_argument().iter().map(term_json).collect();
            m.serialize_entry("exp", &arg)?;
            m.serialize_entry("level", &self.level())?;
        }
        m.end()
    }
}

/// `{coeff, monomial}`.
pub fn term_json(t: &Term<TowerMonomial>) -> serde_json::Value {
    json!({"coeff": fmt_q(&t.coeff), "monomial": t.mono})
}

// ---------------------------------------------------------------------------
// Rendering

pub fn render_monomial(m: &TowerMonomial, chain: &Chain) -> String {
    let mut parts = Vec::new();
    if !m.base.is_one() {
        parts.push(m.base.render(chain));
    }
    if !m.is_plain() {
        parts.push(format!(
            "exp({})",
            render_terms(&m.exp_argument(), chain, None)
        ));
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

fn term_text(c: &Q, mono: &str) -> String {
    if mono == "1" {
        fmt_q(c)
    } else if c.is_one() {
        mono.to_string()
    } else {
        format!("{}*{mono}", fmt_q(c))
    }
}

/// Joins signed summands as `a + b - c`.
fn join(summands: &[(bool, String)]) -> String {
    if summands.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, (neg, body)) in summands.iter().enumerate() {
        match (k, neg) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        out.push_str(body);
    }
    out
}

/// Renders a sum; terms sharing an exponential part are grouped as
/// `(Σ c·γ)*exp(…)`. A ledger constant goes where the monomial 1 would.
pub fn render_terms(
    terms: &[Term<TowerMonomial>],
    chain: &Chain,
    ledger: Option<&Constant>,
) -> String {
    let mut summands: Vec<(bool, String)> = Vec::new();
    let mut done: Vec<usize> = Vec::new();
    let one = TowerMonomial::one();
    let mut ledger = ledger.filter(|c| !c.is_zero());
    fn push_ledger(ledger: &mut Option<&Constant>, summands: &mut Vec<(bool, String)>) {
        if let Some(c) = ledger.take() {
            let s = c.to_string();
            match s.strip_prefix('-') {
                Some(rest) => summands.push((true, rest.to_string())),
                None => summands.push((false, s)),
            }
        }
    }
    for (k, t) in terms.iter().enumerate() {
        if ledger.is_some() && t.mono < one {
            push_ledger(&mut ledger, &mut summands);
        }
        if t.mono.is_plain() {
            summands.push((
                t.coeff.is_negative(),
                term_text(&t.coeff.abs(), &t.mono.base.render(chain)),
            ));
            continue;
        }
        if done.contains(&k) {
            continue;
        }
        let group: Vec<usize> = (k..terms.len())
            .filter(|&j| !terms[j].mono.is_plain() && terms[j].mono.exps == t.mono.exps)
            .collect();
        done.extend(&group);
        if group.len() == 1 {
            summands.push((
                t.coeff.is_negative(),
                term_text(&t.coeff.abs(), &render_monomial(&t.mono, chain)),
            ));
        } else {
            let inner: Vec<(bool, String)> = group
                .iter()
                .map(|&j| {
                    (
                        terms[j].coeff.is_negative(),
                        term_text(&terms[j].coeff.abs(), &terms[j].mono.base.render(chain)),
                    )
                })
                .collect();
            let e = render_terms(&t.mono.exp_argument(), chain, None);
            summands.push((false, format!("({})*exp({e})", join(&inner))));
        }
    }
    push_ledger(&mut ledger, &mut summands);
    join(&summands)
}

// ---------------------------------------------------------------------------
// The tower

#[derive(Clone)]
pub struct Tower {
    spec: DerivationSpec,
    ctx: Arc<TowerCtx>,
}

impl fmt::Debug for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tower({}, {:?}, depth {})",
            self.spec.name(),
            self.ctx.prelog,
            self.ctx.depth
        )
    }
}

/// A non-monic monomial `c·ν` with `(c·ν)′ ∼ a`.
#[derive(Clone, Debug)]
pub struct TowerIntegral {
    pub coeff: Q,
    pub mono: TowerMonomial,
    /// The ψ witness when the input lies in `K`.
    pub psi: Option<FundIndex>,
}

impl TowerIntegral {
    pub fn series(&self) -> TowerSeries {
        Series::monomial(self.coeff.clone(), self.mono.clone())
    }
}

#[derive(Clone, Debug)]
pub struct TowerIntegration {
    pub antiderivative: TowerSeries,
    pub exact: bool,
    pub residual: TowerSeries,
    pub steps: usize,
}

impl Tower {
    pub fn new(spec: &DerivationSpec, prelog: &Prelog, depth: usize) -> Tower {
        Tower {
            spec: spec.clone(),
            ctx: Arc::new(TowerCtx {
                prelog: prelog.clone(),
                depth,
            }),
        }
    }

    pub fn spec(&self) -> &DerivationSpec {
        &self.spec
    }

    pub fn prelog(&self) -> &Prelog {
        &self.ctx.prelog
    }

    pub fn depth(&self) -> usize {
        self.ctx.depth
    }

    pub fn chain(&self) -> &Chain {
        self.spec.chain()
    }

    pub fn lift_monomial(&self, m: &Monomial) -> TowerMonomial {
        TowerMonomial {
            base: m.clone(),
            exps: Arc::new(Vec::new()),
            ctx: Some(self.ctx.clone()),
        }
    }

    pub fn lift(&self, s: &Series) -> TowerSeries {
        match s.exact_terms() {
            Some(ts) => Series::from_terms(
                ts.into_iter()
                    .map(|t| Term::new(t.coeff, self.lift_monomial(&t.mono))),
            ),
            None => {
                let ctx = self.ctx.clone();
                s.map_monomials(move |m| TowerMonomial {
                    base: m.clone(),
                    exps: Arc::new(Vec::new()),
                    ctx: Some(ctx.clone()),
                })
            }
        }
    }

    /// The series as an element of `K`, when it is exact and has no
    /// exponential monomials.
    pub fn lower(&self, s: &TowerSeries) -> Option<Series> {
        let ts = s.exact_terms()?;
        ts.iter()
            .all(|t| t.mono.is_plain())
            .then(|| Series::from_terms(ts.into_iter().map(|t| Term::new(t.coeff, t.mono.base))))
    }

    fn with_ctx(&self, m: TowerMonomial) -> TowerMonomial {
        if m.ctx.is_some() {
            m
        } else {
            TowerMonomial {
                ctx: Some(self.ctx.clone()),
                ..m
            }
        }
    }

    /// `l^♯(μ) = l(γ) + Σ r_k`.
    pub fn log_monomial(&self, mu: &TowerMonomial) -> Result<TowerSeries> {
        let base = self.lift(&self.ctx.prelog.log_monomial(&mu.base)?);
        if mu.is_plain() {
            return Ok(base);
        }
        Ok(base.add(&Series::from_terms(mu.exp_argument())))
    }

    /// Logarithm of a positive tower series: series part and ledger.
    pub fn log(&self, a: &TowerSeries) -> Result<(TowerSeries, Constant)> {
        let d = a.decompose().map_err(|e| match e {
            Error::ZeroSeries => Error::NotPositive,
            e => e,
        })?;
        if !d.lc.is_positive() {
            return Err(Error::NotPositive);
        }
        let s = self.log_monomial(&d.lm)?.add(&log1(&d.eps)?);
        Ok((s, Constant::log_of(&d.lc)?))
    }

    /// `e^h` for a purely infinite exact `h`, in reduced form.
    pub fn normalize(&self, h: &[Term<TowerMonomial>]) -> Result<TowerMonomial> {
        let one = TowerMonomial::one();
        let mut slots: BTreeMap<usize, Vec<Term<TowerMonomial>>> = BTreeMap::new();
        let mut level0 = Vec::new();
        for t in h {
            if t.coeff.is_zero() {
                continue;
            }
            if t.mono <= one {
                return Err(Error::NotPurelyInfinite);
            }
            if t.mono.is_plain() {
                level0.push(Term::new(t.coeff.clone(), t.mono.base.clone()));
            } else {
                slots.entry(t.mono.level()).or_default().push(t.clone());
            }
        }
        let (gamma, rest) = self.extract(level0)?;
        let top = slots.keys().next_back().copied().unwrap_or(0);
        let mut exps = vec![Vec::new(); top + 1];
        exps[0] = rest
            .into_iter()
            .map(|t| Term::new(t.coeff, self.lift_monomial(&t.mono)))
            .collect();
        for (k, ts) in slots {
            exps[k] = sorted(ts);
        }
        let m = TowerMonomial::from_parts(gamma, exps, Some(self.ctx.clone()));
        if m.level() > self.ctx.depth {
            return Err(Error::TowerDepthExceeded {
                needed: m.level(),
                max: self.ctx.depth,
            });
        }
        Ok(m)
    }

    /// Splits a level-0 argument as `l(γ) + r` with no term of `r` the
    /// leading monomial of some `l(φ)`.
    fn extract(&self, h: Vec<Term<Monomial>>) -> Result<(Monomial, Vec<Term<Monomial>>)> {
        let mut rest: Vec<Term<Monomial>> = Series::from_terms(h).exact_terms().expect("finite");
        let mut gamma = Monomial::one();
        let mut reduced = Vec::new();
        let mut steps = 0;
        while !rest.is_empty() {
            steps += 1;
            if steps > EXTRACT_STEPS {
                return Err(Error::NonTerminatingExponent);
            }
            let t = rest[0].clone();
            match self.preimage(&t.mono)? {
                Some((k, l)) => {
                    let c = &t.coeff / &l[0].coeff;
                    gamma = gamma.mul(&Monomial::phi_pow(k, c.clone()));
                    rest = Series::from_terms(
                        rest.into_iter()
                            .chain(l.into_iter().map(|u| Term::new(-(&c * u.coeff), u.mono))),
                    )
                    .exact_terms()
                    .expect("finite");
                }
                None => {
                    reduced.push(t);
                    rest.remove(0);
                }
            }
        }
        Ok((gamma, reduced))
    }

    /// `φ_k` with `LM(l(φ_k)) = m`, with `l(φ_k)`'s terms.
    fn preimage(&self, m: &Monomial) -> Result<Option<(i64, Vec<Term<Monomial>>)>> {
        let Some(j) = m.lf() else { return Ok(None) };
        let s = self.chain().step();
        let mut candidates = vec![j + s, j];
        candidates.extend((j - 8..=j + s + 8).filter(|k| *k != j && *k != j + s));
        for k in candidates {
            let l = match self.ctx.prelog.fundamental(k) {
                Ok(l) => l,
                Err(Error::MissingTableEntry(_)) => continue,
                Err(e) => return Err(e),
            };
            if let Some(ts) = l.exact_terms() {
                if ts.first().is_some_and(|t| t.mono == *m) {
                    return Ok(Some((k, ts)));
                }
            }
        }
        Ok(None)
    }

    /// `exp(a)` when `a` has no constant term and a terminating infinite
    /// part.
    pub fn exp(&self, a: &TowerSeries) -> Result<TowerSeries> {
        let (big, c, small) = a.split()?;
        if !c.is_zero() {
            return Err(Error::ConstantInExpArg);
        }
        let big = big
            .materialize(EXP_ARG_LIMIT)?
            .ok_or(Error::NonTerminatingExponent)?;
        let mu = self.normalize(&big)?;
        Ok(exp1(&small)?.mul_term(&Q::one(), &mu))
    }

    /// `μ′/μ = γ′/γ + Σ r_k′`.
    pub fn log_derivative_monomial(&self, mu: &TowerMonomial) -> TowerSeries {
        let base = self.lift(&self.spec.log_derivative_monomial(&mu.base));
        if mu.is_plain() {
            return base;
        }
        Series::sum(
            std::iter::once(base).chain(
                mu.exps
                    .iter()
                    .map(|r| self.derive(&Series::from_terms(r.clone()))),
            ),
        )
    }

    pub fn derive_monomial(&self, c: &Q, mu: &TowerMonomial) -> TowerSeries {
        self.log_derivative_monomial(mu)
            .mul_term(c, &self.with_ctx(mu.clone()))
    }

    /// The derivation extended through the tower.
    pub fn derive(&self, a: &TowerSeries) -> TowerSeries {
        if let Some(ts) = a.exact_terms() {
            if ts.len() <= 8 {
                return Series::sum(
                    ts.iter()
                        .filter(|t| !t.mono.is_one())
                        .map(|t| self.derive_monomial(&t.coeff, &t.mono)),
                );
            }
        }
        Series::from_source(Merge::new(
            Vec::new(),
            Some(Box::new(TowerDeriveFamily {
                tower: self.clone(),
                a: a.clone(),
                cursor: 0,
            })),
        ))
    }

    pub fn log_derivative(&self, a: &TowerSeries) -> Result<TowerSeries> {
        let d = a.decompose()?;
        let head = self.log_derivative_monomial(&d.lm);
        if d.eps.is_zero()? {
            return Ok(head);
        }
        Ok(head.add(&self.derive(&d.eps).div(&Series::one().add(&d.eps))?))
    }

    /// An asymptotic integral of the leading term of `a`.
    pub fn ai(&self, a: &TowerSeries) -> Result<TowerIntegral> {
        let lt = a.leading()?;
        if lt.mono.is_plain() {
            let v = asympint::ai_term(&self.spec, &lt.coeff, &lt.mono.base)?;
            return Ok(TowerIntegral {
                coeff: v.coeff,
                mono: self.lift_monomial(&v.mono),
                psi: Some(v.psi),
            });
        }
        let alpha = self.with_ctx(lt.mono.clone());
        let mut nu = alpha.clone();
        for _ in 0..AI_ITERATIONS {
            let ld = self.log_derivative_monomial(&nu).leading()?;
            let next = alpha.mul(&ld.mono.inv());
            if next == nu {
                let coeff = &lt.coeff / &ld.coeff;
                let got = self
                    .derive(&Series::monomial(coeff.clone(), nu.clone()))
                    .leading()?;
                if got != lt {
                    return Err(Error::AiPostcondition(format!(
                        "LT(derivative) = {got:?}, expected {lt:?}"
                    )));
                }
                return Ok(TowerIntegral {
                    coeff,
                    mono: nu,
                    psi: None,
                });
            }
            nu = next;
        }
        Err(Error::AiPostcondition(format!(
            "no fixed point for {alpha:?}"
        )))
    }

    /// Greedy iterated asymptotic integration in the tower.
    pub fn integrate(&self, a: &TowerSeries, max_terms: usize) -> Result<TowerIntegration> {
        if let Some(low) = self.lower(a) {
            let r = asympint::integrate(&self.spec, &low, max_terms)?;
            return Ok(TowerIntegration {
                antiderivative: self.lift(&r.antiderivative),
                exact: r.exact,
                residual: self.lift(&r.residual),
                steps: r.steps,
            });
        }
        let mut l: TowerSeries = Series::zero();
        let mut residual = a.clone();
        let mut steps = 0;
        let mut last: Option<TowerMonomial> = None;
        loop {
            let t = match residual.get(0)? {
                Fetch::End => {
                    return Ok(TowerIntegration {
                        antiderivative: l,
                        exact: true,
                        residual,
                        steps,
                    })
                }
                Fetch::Stalled(m) => {
                    return Err(Error::Undetermined(format!("residual stalled below {m:?}")))
                }
                Fetch::Term(t) => t,
            };
            if steps >= max_terms {
                return Ok(TowerIntegration {
                    antiderivative: l,
                    exact: false,
                    residual,
                    steps,
                });
            }
            if last.as_ref().is_some_and(|m| t.mono >= *m) {
                return Err(Error::AiPostcondition("residual did not decrease".into()));
            }
            let v = self.ai(&Series::monomial(t.coeff.clone(), t.mono.clone()))?;
            last = Some(t.mono);
            l = l.add(&v.series());
            residual = a.sub(&self.derive(&l));
            steps += 1;
        }
    }

    /// Whether `K^EL` is closed under asymptotic integration: it is not
    /// when `θ̂` exists in `Γ`.
    pub fn closure_report(&self) -> crate::report::Report {
        let hat = self.spec.theta_hat();
        let mut rep = crate::report::Report::new("closure")
            .with("derivation", self.spec.name())
            .with(
                "theta_hat",
                hat.map(|m| json!(m.render(self.chain())))
                    .unwrap_or(serde_json::Value::Null),
            )
            .with("theta_hat_in_gamma", hat.is_some())
            .with("closed_under_integration", hat.is_none());
        if let Some(h) = hat {
            let obstructed = matches!(
                self.ai(&Series::monomial(Q::one(), self.lift_monomial(h))),
                Err(Error::AtThetaHat)
            );
            rep.note("theta_hat_obstructed", obstructed);
            if !obstructed {
                rep.fail(
                    json!(h.render(self.chain())),
                    "θ̂ admits an asymptotic integral",
                );
            }
        }
        rep
    }

    /// A random monomial of level at most `max_level`.
    pub fn random_monomial(&self, rng: &mut Sampler, max_level: usize) -> Result<TowerMonomial> {
        let base = self.lift_monomial(&rng.monomial(-2, 1, 2));
        if max_level == 0 {
            return Ok(base);
        }
        let mut arg: Vec<Term<TowerMonomial>> = rng
            .purely_infinite(2, -2, 1, 2)
            .exact_terms()
            .expect("finite")
            .into_iter()
            .map(|t| Term::new(t.coeff, self.lift_monomial(&t.mono)))
            .collect();
        if max_level >= 2 && rng.chance(0.6) {
            let inner = self.random_monomial(rng, max_level - 1)?;
            if !inner.is_plain() {
                let inner = if inner > TowerMonomial::one() {
                    inner
                } else {
                    inner.inv()
                };
                arg.push(Term::new(rng.rational(3, 2, true), inner));
            }
        }
        Ok(base.mul(&self.normalize(&arg)?))
    }

    /// A random positive finite series of monomials of level at most
    /// `max_level`.
    pub fn random_positive(
        &self,
        rng: &mut Sampler,
        max_level: usize,
        terms: usize,
    ) -> Result<TowerSeries> {
        loop {
            let n = rng.range(1, terms.max(1) as i64) as usize;
            let mut ts = Vec::new();
            for _ in 0..n {
                ts.push(Term::new(
                    rng.rational(5, 3, true),
                    self.random_monomial(rng, max_level)?,
                ));
            }
            let s = Series::from_terms(ts);
            match s.lc() {
                Ok(c) if c.is_positive() => return Ok(s),
                Ok(_) => return Ok(s.neg()),
                Err(_) => continue,
            }
        }
    }
}

struct TowerDeriveFamily {
    tower: Tower,
    a: TowerSeries,
    cursor: usize,
}

impl Family<TowerMonomial> for TowerDeriveFamily {
    fn next(&mut self, _floor: Option<&TowerMonomial>) -> Result<FamilyItem<TowerMonomial>> {
        loop {
            match self.a.get(self.cursor)? {
                Fetch::Term(t) => {
                    self.cursor += 1;
                    if t.mono.is_one() {
                        continue;
                    }
                    let series = self.tower.log_derivative_monomial(&t.mono);
                    return Ok(FamilyItem::Member {
                        coeff: t.coeff,
                        mono: self.tower.with_ctx(t.mono),
                        series,
                    });
                }
                Fetch::End => return Ok(FamilyItem::Done),
                Fetch::Stalled(b) => {
                    let lead = self.tower.log_derivative_monomial(&b).lm()?;
                    return Ok(FamilyItem::Barrier(b.mul(&lead)));
                }
            }
        }
    }
}
