//! Pre-logarithmic sections `l: Φ → K^{≻1}`, their extension to monomials
//! by strong linearity, the logarithm of positive series, and the checks
//! (HL1)–(HL4).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use parking_lot::Mutex;
use serde_json::json;

use crate::asympint::prelog_entry;
use crate::chain::Chain;
use crate::constant::Constant;
use crate::derivation::DerivationSpec;
use crate::error::{Error, Result};
use crate::monomial::{Monomial, SupportIter};
use crate::random::Sampler;
use crate::report::Report;
use crate::series::{self, log1, Family, FamilyItem, Merge, Series};

/// Terms of an integrated table entry forced before it is frozen.
pub const TABLE_TERMS: usize = 16;

#[derive(Clone)]
pub enum PrelogKind {
    /// `l(φ_i) = φ_{i−s}`.
    Sigma,
    /// Explicit entries; indices outside the map are an error.
    Table(Arc<BTreeMap<i64, Series>>),
    /// Entries `∫ φ′/φ` computed on demand from a derivation.
    Integrated(DerivationSpec, Arc<Mutex<BTreeMap<i64, Series>>>),
    /// `l(φ) = φ`; a section without (GA).
    Basic,
}

#[derive(Clone)]
pub struct Prelog {
    name: String,
    chain: Chain,
    kind: PrelogKind,
}

impl fmt::Debug for Prelog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prelog({})", self.name)
    }
}

impl Prelog {
    pub fn sigma(chain: &Chain) -> Prelog {
        Prelog {
            name: "sigma".into(),
            chain: *chain,
            kind: PrelogKind::Sigma,
        }
    }

    pub fn basic(chain: &Chain) -> Prelog {
        Prelog {
            name: "basic".into(),
            chain: *chain,
            kind: PrelogKind::Basic,
        }
    }

    pub fn table(chain: &Chain, entries: BTreeMap<i64, Series>) -> Prelog {
        Prelog {
            name: "table".into(),
            chain: *chain,
            kind: PrelogKind::Table(Arc::new(entries)),
        }
    }

    pub fn integrated(spec: &DerivationSpec) -> Prelog {
        Prelog {
            name: "integrated".into(),
            chain: *spec.chain(),
            kind: PrelogKind::Integrated(spec.clone(), Arc::new(Mutex::new(BTreeMap::new()))),
        }
    }

    /// `"sigma"`, `"integrated"` or `"basic"`.
    pub fn from_preset(name: &str, spec: &DerivationSpec) -> Result<Prelog> {
        match name {
            "sigma" => Ok(Prelog::sigma(spec.chain())),
            "integrated" => Ok(Prelog::integrated(spec)),
            "basic" => Ok(Prelog::basic(spec.chain())),
            _ => Err(Error::Config(format!("unknown prelog `{name}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn kind(&self) -> &PrelogKind {
        &self.kind
    }

    /// `l(φ_i)`.
    pub fn fundamental(&self, i: i64) -> Result<Series> {
        match &self.kind {
            PrelogKind::Sigma => Ok(Series::monomial(
                One::one(),
                Monomial::phi(i - self.chain.step()),
            )),
            PrelogKind::Basic => Ok(Series::monomial(One::one(), Monomial::phi(i))),
            PrelogKind::Table(t) => t.get(&i).cloned().ok_or(Error::MissingTableEntry(i)),
            PrelogKind::Integrated(spec, cache) => {
                if let Some(s) = cache.lock().get(&i) {
                    return Ok(s.clone());
                }
                let s = prelog_entry(spec, i, TABLE_TERMS)?;
                // Freeze the forced prefix so later reads are cheap.
                let s = Series::from_terms(s.terms(TABLE_TERMS)?);
                cache.lock().insert(i, s.clone());
                Ok(s)
            }
        }
    }

    /// `l(α) = Σ α_φ·l(φ)`.
    pub fn log_monomial(&self, alpha: &Monomial) -> Result<Series> {
        if !alpha.has_tail() {
            let parts = alpha
                .support_desc()
                .map(|(j, e)| Ok(self.fundamental(j)?.scale(&e)))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Series::sum(parts));
        }
        Ok(Series::from_source(Merge::new(
            Vec::new(),
            Some(Box::new(LogFamily {
                prelog: self.clone(),
                support: alpha.support_desc(),
            })),
        )))
    }

    /// `l(a) = log LC(a) + l(LM(a)) + log(1 + ε)` for `a > 0`.
    pub fn log(&self, a: &Series) -> Result<PrelogValue> {
        let d = a.decompose().map_err(|e| match e {
            Error::ZeroSeries => Error::NotPositive,
            e => e,
        })?;
        if !d.lc.is_positive() {
            return Err(Error::NotPositive);
        }
        let series = self.log_monomial(&d.lm)?.add(&log1(&d.eps)?);
        Ok(PrelogValue {
            series,
            constant: Constant::log_of(&d.lc)?,
        })
    }
}

struct LogFamily {
    prelog: Prelog,
    support: SupportIter,
}

impl Family<Monomial> for LogFamily {
    fn next(&mut self, _floor: Option<&Monomial>) -> Result<FamilyItem<Monomial>> {
        Ok(match self.support.next() {
            Some((j, e)) => FamilyItem::Member {
                coeff: e,
                mono: Monomial::one(),
                series: self.prelog.fundamental(j)?,
            },
            None => FamilyItem::Done,
        })
    }
}

/// A logarithm: a series part with no constant term plus a ledger constant.
#[derive(Clone, Debug)]
pub struct PrelogValue {
    pub series: Series,
    pub constant: Constant,
}

impl PrelogValue {
    pub fn add(&self, other: &PrelogValue) -> PrelogValue {
        PrelogValue {
            series: self.series.add(&other.series),
            constant: self.constant.add(&other.constant),
        }
    }

    /// Real order. An infinite difference of the series parts decides,
    /// then the constants, then the infinitesimal difference.
    pub fn cmp_real(&self, other: &PrelogValue) -> Result<Ordering> {
        let d = match self.series.sub(&other.series).leading() {
            Err(Error::ZeroSeries) => return Ok(self.constant.cmp_real(&other.constant)),
            r => r?,
        };
        let sign = if d.coeff.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        };
        if d.mono > Monomial::one() {
            return Ok(sign);
        }
        Ok(self.constant.cmp_real(&other.constant).then(sign))
    }

    /// Agreement of both parts, the series part to `n` terms.
    pub fn agrees_to_budget(&self, other: &PrelogValue, n: usize) -> Result<bool> {
        Ok(self.constant == other.constant && self.series.agrees_to_budget(&other.series, n)?)
    }
}

/// Chain length at which a bounded (HL1) search reports a witness.
pub fn hl1_threshold(lo: i64, hi: i64) -> usize {
    ((hi - lo + 1).max(0) as usize).div_ceil(3)
}

/// (HL1): looks for strictly decreasing indices `i_1 > i_2 > …` with
/// `λ_n ∈ Supp l(φ_{i_n})` and `λ_1 ≼ λ_2 ≼ …`, over the first `depth`
/// terms of each `l(φ_i)`. A chain of [`hl1_threshold`] links is taken as
/// a witness.
pub fn check_hl1(p: &Prelog, lo: i64, hi: i64, depth: usize) -> Report {
    let mut rep = Report::new("HL1")
        .with("window", json!([lo, hi]))
        .with("depth", depth)
        .with("prelog", p.name());
    let mut nodes: Vec<(i64, Monomial)> = Vec::new();
    for i in (lo..=hi).rev() {
        match p.fundamental(i).and_then(|s| s.terms(depth)) {
            Ok(ts) => nodes.extend(ts.into_iter().map(|t| (i, t.mono))),
            Err(e) => rep.fail(json!(i), format!("HL1: l(φ_{i}) unavailable: {e}")),
        }
    }
    // Longest chain ending at each node, nodes sorted by index descending.
    let mut best = vec![1usize; nodes.len()];
    let mut prev = vec![usize::MAX; nodes.len()];
    for k in 0..nodes.len() {
        for j in 0..k {
            if nodes[j].0 > nodes[k].0 && nodes[j].1 <= nodes[k].1 && best[j] + 1 > best[k] {
                best[k] = best[j] + 1;
                prev[k] = j;
            }
        }
    }
    let (end, len) = best
        .iter()
        .enumerate()
        .max_by_key(|(_, b)| **b)
        .map(|(k, b)| (k, *b))
        .unwrap_or((0, 0));
    rep.note("longest_chain", len);
    let threshold = hl1_threshold(lo, hi);
    rep.note("threshold", threshold);
    if len >= threshold && len > 1 {
        let mut chain = Vec::new();
        let mut k = end;
        while k != usize::MAX {
            chain.push(json!({"index": nodes[k].0, "lambda": nodes[k].1.render(p.chain())}));
            k = prev[k];
        }
        chain.reverse();
        rep.fail(
            json!(chain),
            format!("HL1: increasing λ-chain of length {len} over decreasing φ"),
        );
    }
    rep
}

/// (HL2) positivity and monotonicity of `l` on the window; (HL3)
/// `LF(l(φ)) ≺ φ`.
pub fn check_hl2_hl3(p: &Prelog, lo: i64, hi: i64) -> Report {
    let mut rep = Report::new("HL2_HL3")
        .with("window", json!([lo, hi]))
        .with("prelog", p.name());
    let mut last: Option<(i64, Series)> = None;
    for i in lo..=hi {
        let l = match p.fundamental(i) {
            Ok(l) => l,
            Err(e) => {
                rep.fail(json!(i), format!("HL2: l(φ_{i}) unavailable: {e}"));
                continue;
            }
        };
        match series::sign(&l) {
            Ok(Ordering::Greater) => {}
            Ok(_) => rep.fail(json!(i), format!("HL2: l(φ_{i}) is not positive")),
            Err(e) => rep.fail(json!(i), format!("HL2: sign of l(φ_{i}) undecided: {e}")),
        }
        if let Some((j, lj)) = &last {
            match series::order(lj, &l) {
                Ok(Ordering::Less) => {}
                Ok(_) => rep.fail(json!([j, i]), format!("HL2: l(φ_{j}) ≮ l(φ_{i})")),
                Err(e) => rep.fail(json!([j, i]), format!("HL2: order undecided: {e}")),
            }
        }
        match l.lf() {
            Ok(f) if f < i => {}
            Ok(f) => rep.fail(
                json!(i),
                format!("HL3: LF(l(φ_{i})) = φ_{f} is not ≺ φ_{i}"),
            ),
            Err(e) => rep.fail(json!(i), format!("HL3: no leading fundamental: {e}")),
        }
        last = Some((i, l));
    }
    rep
}

/// (HL4) `l(φ)′ = φ′/φ` on the window, to `budget` terms, then a spot check
/// of `l(a)′ = a′/a` on `samples` random positive series.
pub fn check_hl4(
    p: &Prelog,
    spec: &DerivationSpec,
    lo: i64,
    hi: i64,
    budget: usize,
    samples: usize,
) -> Report {
    let mut rep = Report::new("HL4")
        .with("window", json!([lo, hi]))
        .with("budget", budget)
        .with("prelog", p.name())
        .with("derivation", spec.name());
    for i in lo..=hi {
        let ok = p.fundamental(i).and_then(|l| {
            spec.derive(&l)
                .agrees_to_budget(&spec.log_deriv_fundamental(i), budget)
        });
        match ok {
            Ok(true) => {}
            Ok(false) => rep.fail(json!(i), format!("HL4: l(φ_{i})′ ≠ φ_{i}′/φ_{i}")),
            Err(e) => rep.fail(json!(i), format!("HL4: l(φ_{i})′ undecided: {e}")),
        }
    }
    if !rep.passed {
        return rep;
    }
    let mut rng = Sampler::new(0x4c4f47);
    let (a, b) = (lo.max(-3), hi.min(3).max(lo.max(-3)));
    for _ in 0..samples {
        let s = rng.positive_series(3, a, b, 2);
        let ok = p.log(&s).and_then(|l| {
            let rhs = spec.log_derivative(&s)?;
            spec.derive(&l.series).agrees_to_budget(&rhs, budget.min(8))
        });
        match ok {
            Ok(true) => {}
            Ok(false) => rep.fail(json!(format!("{s:?}")), "HL4: l(a)′ ≠ a′/a"),
            Err(e) => rep.fail(json!(format!("{s:?}")), format!("HL4: undecided: {e}")),
        }
    }
    rep.note("samples", samples);
    rep
}

/// Termwise comparison of two sections on a window.
pub fn coincide(p: &Prelog, q: &Prelog, lo: i64, hi: i64, budget: usize) -> Result<Vec<i64>> {
    let mut differ = Vec::new();
    for i in lo..=hi {
        if !p
            .fundamental(i)?
            .agrees_to_budget(&q.fundamental(i)?, budget)?
        {
            differ.push(i);
        }
    }
    Ok(differ)
}

/// Sign of `l(a) − l(b)` as reals; `Equal` when `a = b`.
pub fn compare_logs(p: &Prelog, a: &Series, b: &Series) -> Result<Ordering> {
    p.log(a)?.cmp_real(&p.log(b)?)
}

/// Whether a section value is purely infinite: no constant or
/// infinitesimal term among the first `n`.
pub fn purely_infinite(s: &Series, n: usize) -> Result<bool> {
    Ok(s.terms(n)?
        .iter()
        .all(|t| t.mono > Monomial::one() && !t.coeff.is_zero()))
}
