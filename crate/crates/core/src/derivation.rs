//! Hardy-type series derivations given on a fundamental domain of σ.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::json;

use crate::chain::{Chain, Labels};
use crate::error::{Error, Result};
use crate::monomial::{Monomial, SupportIter};
use crate::random::Sampler;
use crate::rational::{fmt_q, parse_q, qi, Q};
use crate::report::Report;
use crate::series::{default_budget, Family, FamilyItem, Fetch, Merge, Series};

/// `φ′/φ = t·θ + lower` on one orbit representative.
#[derive(Clone, Debug)]
pub struct BaseEntry {
    pub t: Q,
    pub theta: Monomial,
    pub lower: Series,
}

impl BaseEntry {
    pub fn monomial(t: Q, theta: Monomial) -> BaseEntry {
        BaseEntry {
            t,
            theta,
            lower: Series::zero(),
        }
    }

    fn series(&self) -> Series {
        Series::monomial(self.t.clone(), self.theta.clone()).add(&self.lower)
    }
}

struct Inner {
    name: String,
    chain: Chain,
    base: Vec<BaseEntry>,
    theta_hat: Option<Monomial>,
    overrides: BTreeMap<i64, BaseEntry>,
    cache: Mutex<HashMap<i64, Series>>,
}

/// A derivation specified by `φ_r′/φ_r` for `r` in the fundamental domain,
/// extended to every index by the σ-propagation rule.
#[derive(Clone)]
pub struct DerivationSpec(Arc<Inner>);

impl fmt::Debug for DerivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DerivationSpec({})", self.0.name)
    }
}

impl DerivationSpec {
    pub fn new(
        name: &str,
        chain: Chain,
        base: Vec<BaseEntry>,
        theta_hat: Option<Monomial>,
    ) -> Result<DerivationSpec> {
        if base.len() as i64 != chain.step() {
            return Err(Error::Config(format!(
                "derivation needs {} base entries, got {}",
                chain.step(),
                base.len()
            )));
        }
        for (r, e) in base.iter().enumerate() {
            if e.t.is_zero() {
                return Err(Error::Config(format!("t for orbit {r} must be nonzero")));
            }
            if !e.lower.is_exact() {
                return Err(Error::Config(format!(
                    "lower terms for orbit {r} must be finite"
                )));
            }
            if let Ok(l) = e.lower.lm() {
                if l >= e.theta {
                    return Err(Error::Config(format!(
                        "lower terms for orbit {r} must be ≺ θ"
                    )));
                }
            }
        }
        Ok(DerivationSpec(Arc::new(Inner {
            name: name.into(),
            chain,
            base,
            theta_hat,
            overrides: BTreeMap::new(),
            cache: Mutex::new(HashMap::new()),
        })))
    }

    /// d/dx on the log-exp chain: x′/x = x⁻¹.
    pub fn logexp_ddx() -> DerivationSpec {
        let base = vec![BaseEntry::monomial(Q::one(), Monomial::phi_pow(0, qi(-1)))];
        let theta_hat = Monomial::tail_product(0, vec![qi(-1)]);
        DerivationSpec::new("logexp-ddx", Chain::logexp(), base, Some(theta_hat)).expect("preset")
    }

    /// σ(φ_i) = φ_{i−n}, θ^(φ_0) = 1, and for 0 < j < n
    /// θ^(φ_j) = ∏_{l≥1} φ_{j−ln}/φ_{−ln}.
    pub fn interleaved(n: u32) -> Result<DerivationSpec> {
        let chain = Chain::interleaved(n)?;
        let n = n as i64;
        let pattern = |j: i64| {
            let mut p = vec![Q::zero(); n as usize];
            p[0] += Q::one();
            p[j as usize] -= Q::one();
            p
        };
        let mut base = vec![BaseEntry::monomial(Q::one(), Monomial::one())];
        for j in 1..n {
            base.push(BaseEntry::monomial(
                Q::one(),
                Monomial::tail_product(j - n, pattern(j)),
            ));
        }
        let mut hat = vec![Q::zero(); n as usize];
        hat[0] = -Q::one();
        let theta_hat = Monomial::tail_product(-n, hat);
        DerivationSpec::new(&format!("interleaved({n})"), chain, base, Some(theta_hat))
    }

    /// θ^(φ) = ∏_{k≥1} σ^k(φ), t = 1; the greatest lower bound of Θ is 1.
    pub fn sigma_geometric(step: i64) -> Result<DerivationSpec> {
        let chain = if step == 1 {
            Chain::logexp()
        } else {
            Chain::new(step, Labels::Plain)?
        };
        let mut pattern = vec![Q::zero(); step as usize];
        pattern[0] = Q::one();
        let base = (0..step)
            .map(|r| {
                BaseEntry::monomial(Q::one(), Monomial::tail_product(r - step, pattern.clone()))
            })
            .collect();
        DerivationSpec::new("sigma-geometric", chain, base, Some(Monomial::one()))
    }

    pub fn from_preset(name: &str, chain: &Chain) -> Result<DerivationSpec> {
        match name {
            "logexp-ddx" => {
                if chain.step() != 1 {
                    return Err(Error::Config("logexp-ddx needs a chain with step 1".into()));
                }
                Ok(DerivationSpec::logexp_ddx())
            }
            "interleaved" => DerivationSpec::interleaved(chain.step() as u32),
            "sigma-geometric" => DerivationSpec::sigma_geometric(chain.step()),
            other => Err(Error::Config(format!(
                "unknown derivation preset {other:?}"
            ))),
        }
    }

    /// Explicit spec from config data: `base.<r> = {t, theta}` plus an
    /// optional `theta_hat`.
    pub fn from_config(chain: Chain, cfg: &DerivationConfig) -> Result<DerivationSpec> {
        let mut base = Vec::new();
        for r in 0..chain.step() {
            let e = cfg
                .base
                .get(&r.to_string())
                .ok_or_else(|| Error::Config(format!("missing derivation.base.{r}")))?;
            base.push(BaseEntry::monomial(parse_q(&e.t)?, e.theta.clone()));
        }
        DerivationSpec::new("explicit", chain, base, cfg.theta_hat.clone())
    }

    /// A copy with φ_i′/φ_i replaced outright, bypassing propagation.
    /// Only useful to build corrupted specs for negative tests.
    pub fn with_override(&self, i: i64, entry: BaseEntry) -> DerivationSpec {
        let mut overrides = self.0.overrides.clone();
        overrides.insert(i, entry);
        DerivationSpec(Arc::new(Inner {
            name: format!("{}+override({i})", self.0.name),
            chain: self.0.chain,
            base: self.0.base.clone(),
            theta_hat: self.0.theta_hat.clone(),
            overrides,
            cache: Mutex::new(HashMap::new()),
        }))
    }

    pub fn with_theta_hat(&self, theta_hat: Option<Monomial>) -> DerivationSpec {
        DerivationSpec(Arc::new(Inner {
            name: self.0.name.clone(),
            chain: self.0.chain,
            base: self.0.base.clone(),
            theta_hat,
            overrides: self.0.overrides.clone(),
            cache: Mutex::new(HashMap::new()),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn chain(&self) -> &Chain {
        &self.0.chain
    }

    pub fn theta_hat(&self) -> Option<&Monomial> {
        self.0.theta_hat.as_ref()
    }

    pub fn base(&self) -> &[BaseEntry] {
        &self.0.base
    }

    /// The monomial ∏ relating φ_i′/φ_i to its orbit representative.
    fn propagation(&self, i: i64) -> (usize, Monomial) {
        let s = self.0.chain.step();
        let r = i.rem_euclid(s);
        let k = (r - i) / s;
        let factor = if k >= 0 {
            Monomial::from_exponents((1..=k).map(|j| (r - j * s, -Q::one())))
        } else {
            Monomial::from_exponents((0..-k).map(|j| (r + j * s, Q::one())))
        };
        (r as usize, factor)
    }

    fn entry(&self, i: i64) -> BaseEntry {
        if let Some(e) = self.0.overrides.get(&i) {
            return e.clone();
        }
        let (r, f) = self.propagation(i);
        let b = &self.0.base[r];
        BaseEntry {
            t: b.t.clone(),
            theta: b.theta.mul(&f),
            lower: b.lower.mul_term(&Q::one(), &f),
        }
    }

    /// θ^(φ_i) = LM(φ_i′/φ_i).
    pub fn theta(&self, i: i64) -> Monomial {
        self.entry(i).theta
    }

    pub fn t(&self, i: i64) -> Q {
        self.entry(i).t
    }

    /// φ_i′/φ_i as an exact series.
    pub fn log_deriv_fundamental(&self, i: i64) -> Series {
        if let Some(s) = self.0.cache.lock().get(&i) {
            return s.clone();
        }
        let s = self.entry(i).series();
        self.0.cache.lock().insert(i, s.clone());
        s
    }

    /// α′/α = Σ_φ α_φ·φ′/φ.
    pub fn log_derivative_monomial(&self, alpha: &Monomial) -> Series {
        if !alpha.has_tail() {
            return Series::sum(
                alpha
                    .support_desc()
                    .map(|(j, e)| self.log_deriv_fundamental(j).scale(&e)),
            );
        }
        Series::from_source(Merge::new(
            Vec::new(),
            Some(Box::new(LogDerivFamily {
                spec: self.clone(),
                support: alpha.support_desc(),
            })),
        ))
    }

    pub fn derive_monomial(&self, c: &Q, alpha: &Monomial) -> Series {
        self.log_derivative_monomial(alpha).mul_term(c, alpha)
    }

    /// Strongly linear extension of the Leibniz rule to series.
    pub fn derive(&self, a: &Series) -> Series {
        if let Some(ts) = a.exact_terms() {
            if ts.len() <= 8 {
                return Series::sum(ts.iter().map(|t| self.derive_monomial(&t.coeff, &t.mono)));
            }
        }
        Series::from_source(Merge::new(
            Vec::new(),
            Some(Box::new(DeriveFamily {
                spec: self.clone(),
                a: a.clone(),
                cursor: 0,
            })),
        ))
    }

    /// a′/a, computed as `LM′/LM + ε′/(1 + ε)` for `a = c·LM·(1 + ε)` so
    /// that the leading block never has to cancel lazily.
    pub fn log_derivative(&self, a: &Series) -> Result<Series> {
        let d = a.decompose()?;
        let head = self.log_derivative_monomial(&d.lm);
        if d.eps.is_zero()? {
            return Ok(head);
        }
        Ok(head.add(&self.derive(&d.eps).div(&Series::one().add(&d.eps))?))
    }
}

struct LogDerivFamily {
    spec: DerivationSpec,
    support: SupportIter,
}

impl Family<Monomial> for LogDerivFamily {
    fn next(&mut self, _floor: Option<&Monomial>) -> Result<FamilyItem<Monomial>> {
        Ok(match self.support.next() {
            Some((j, e)) => FamilyItem::Member {
                coeff: e,
                mono: Monomial::one(),
                series: self.spec.log_deriv_fundamental(j),
            },
            None => FamilyItem::Done,
        })
    }
}

struct DeriveFamily {
    spec: DerivationSpec,
    a: Series,
    cursor: usize,
}

impl Family<Monomial> for DeriveFamily {
    fn next(&mut self, _floor: Option<&Monomial>) -> Result<FamilyItem<Monomial>> {
        loop {
            match self.a.get(self.cursor)? {
                Fetch::Term(t) => {
                    self.cursor += 1;
                    if t.mono.is_one() {
                        continue;
                    }
                    let series = self.spec.log_derivative_monomial(&t.mono);
                    return Ok(FamilyItem::Member {
                        coeff: t.coeff,
                        mono: t.mono,
                        series,
                    });
                }
                Fetch::End => return Ok(FamilyItem::Done),
                Fetch::Stalled(b) => {
                    // Unknown terms lie below b, so their derivatives lie
                    // below LM(b′) = b·θ^(LF b).
                    let lf = b.lf().ok_or_else(|| {
                        Error::Undetermined("derivative of a series stalled at 1".into())
                    })?;
                    return Ok(FamilyItem::Barrier(b.mul(&self.spec.theta(lf))));
                }
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct BaseConfig {
    pub t: String,
    pub theta: Monomial,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct DerivationConfig {
    #[serde(default)]
    pub base: BTreeMap<String, BaseConfig>,
    #[serde(default)]
    pub theta_hat: Option<Monomial>,
}

// ---------------------------------------------------------------------------
// Validators

/// θ^(φ_i) ≺ θ^(φ_j) and LF(θ^(φ_i)/θ^(φ_j)) ≺ φ_j for i < j.
pub fn validate_h3prime(spec: &DerivationSpec, lo: i64, hi: i64, samples: usize) -> Report {
    let mut rep = Report::new("h3prime")
        .with("window", json!([lo, hi]))
        .with("derivation", spec.name());
    let mut pairs = 0usize;
    let mut check = |i: i64, j: i64, rep: &mut Report| {
        pairs += 1;
        let (ti, tj) = (spec.theta(i), spec.theta(j));
        if ti >= tj {
            rep.fail(
                json!([i, j]),
                format!("θ^(φ_{i}) = {ti} is not ≺ θ^(φ_{j}) = {tj}"),
            );
            return;
        }
        if let Some(lf) = ti.div(&tj).lf() {
            if lf >= j {
                rep.fail(
                    json!([i, j]),
                    format!("LF(θ^(φ_{i})/θ^(φ_{j})) = φ_{lf} is not ≺ φ_{j}"),
                );
            }
        }
    };
    for i in lo..=hi {
        for j in i + 1..=hi {
            check(i, j, &mut rep);
        }
    }
    let w = (hi - lo).max(1);
    let mut rng = Sampler::new(0x4833);
    for _ in 0..samples {
        let i = rng.range(lo - 4 * w, hi + 4 * w);
        let j = rng.range(lo - 4 * w, hi + 4 * w);
        if i != j {
            check(i.min(j), i.max(j), &mut rep);
        }
    }
    rep.note("pairs", pairs);
    rep
}

/// θ^(ψ)/θ^(φ) = ∏_{k≥1} σ^k(ψ)/σ^k(φ) on window pairs φ ≺ ψ.
///
/// On a ℤ-indexed chain with a shift, the convex hull of any σ-orbit is the
/// whole chain, so the truncation to that hull keeps every exponent and the
/// identity is checked on full monomials.
pub fn validate_m(spec: &DerivationSpec, lo: i64, hi: i64, depth: usize) -> Report {
    let mut rep = Report::new("m")
        .with("window", json!([lo, hi]))
        .with("depth", depth)
        .with("derivation", spec.name());
    let s = spec.chain().step();
    let mut pattern = vec![Q::zero(); s as usize];
    pattern[0] = Q::one();
    let orbit_product = |i: i64| {
        let d = depth as i64;
        let head = Monomial::from_exponents((1..=d).map(|k| (i - k * s, Q::one())));
        head.mul(&Monomial::tail_product(i - (d + 1) * s, pattern.clone()))
    };
    let mut pairs = 0usize;
    for i in lo..=hi {
        for j in i + 1..=hi {
            pairs += 1;
            let lhs = spec.theta(j).div(&spec.theta(i));
            let rhs = orbit_product(j).div(&orbit_product(i));
            if lhs != rhs {
                rep.fail(
                    json!([i, j]),
                    format!("θ^(φ_{j})/θ^(φ_{i}) = {lhs} but the σ-product is {rhs}"),
                );
            }
        }
    }
    rep.note("pairs", pairs);
    rep
}

/// Sampled (HD1)–(HD3) on random finite series.
pub fn validate_hardy(spec: &DerivationSpec, samples: usize, seed: u64) -> Report {
    let mut rep = Report::new("hardy")
        .with("samples", samples)
        .with("seed", seed)
        .with("derivation", spec.name())
        .with("budget", default_budget());
    let mut rng = Sampler::new(seed);
    let one = Monomial::one();
    for n in 0..samples {
        let a = rng.nonzero_series(3, -3, 2, 3);
        let b = rng.nonzero_series(3, -3, 2, 3);
        let res: Result<()> = (|| {
            let (la, lb) = (a.lm()?, b.lm()?);
            let (da, db) = (spec.derive(&a), spec.derive(&b));
            if la != one && lb != one {
                let (lda, ldb) = (da.lm()?, db.lm()?);
                if (la <= lb) != (lda <= ldb) {
                    rep.fail(
                        json!(n),
                        format!(
                            "HD2: LM(a) = {la}, LM(b) = {lb} but LM(a′) = {lda}, LM(b′) = {ldb}"
                        ),
                    );
                }
            }
            let (big, small) = if la > lb { (&a, &b) } else { (&b, &a) };
            let (lbig, lsmall) = (big.lm()?, small.lm()?);
            if lbig > lsmall && lsmall > one {
                let qa = spec.log_derivative(big)?.lm()?;
                let qb = spec.log_derivative(small)?.lm()?;
                let same_lf = lbig.lf() == lsmall.lf();
                if qa < qb || ((qa == qb) != same_lf) {
                    rep.fail(
                        json!(n),
                        format!("HD3: LM(a′/a) = {qa}, LM(b′/b) = {qb}, comparable = {same_lf}"),
                    );
                }
            }
            let p = da.prefix(default_budget())?;
            if p.terms.is_empty() && p.is_complete() {
                let ta = a.exact_terms().unwrap_or_default();
                if ta.iter().any(|t| !t.mono.is_one()) {
                    rep.fail(json!(n), "HD1: derivative vanishes on a non-constant");
                }
            }
            Ok(())
        })();
        if let Err(e) = res {
            rep.fail(json!(n), format!("error: {e}"));
        }
    }
    rep
}

/// JSON-friendly description of φ_i′/φ_i, for reports.
pub fn describe_entry(spec: &DerivationSpec, i: i64) -> serde_json::Value {
    json!({"index": i, "t": fmt_q(&spec.t(i)), "theta": spec.theta(i).to_string()})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Term;

    fn phi(i: i64, e: i64) -> Monomial {
        Monomial::phi_pow(i, qi(e))
    }

    fn single(s: &Series) -> Term {
        let ts = s.terms(4).unwrap();
        assert_eq!(ts.len(), 1, "{s:?}");
        ts[0].clone()
    }

    #[test]
    fn logexp_fundamentals() {
        let d = DerivationSpec::logexp_ddx();
        assert_eq!(
            single(&d.log_deriv_fundamental(0)),
            Term::new(qi(1), phi(0, -1))
        );
        let m = Monomial::from_exponents([(0, qi(-1)), (-1, qi(-1)), (-2, qi(-1))]);
        assert_eq!(single(&d.log_deriv_fundamental(-2)), Term::new(qi(1), m));
        assert_eq!(d.theta(1), Monomial::one());
        assert_eq!(
            d.theta(3),
            Monomial::from_exponents([(1, qi(1)), (2, qi(1))])
        );
    }

    #[test]
    fn interleaved_one_matches_positive_products() {
        let d = DerivationSpec::interleaved(1).unwrap();
        for k in 1..6 {
            let want = Monomial::from_exponents((0..k).map(|l| (l, qi(1))));
            assert_eq!(d.theta(k), want);
        }
    }

    #[test]
    fn interleaved_two_odd_thetas() {
        let d = DerivationSpec::interleaved(2).unwrap();
        // θ^(φ_1) = ∏_{l≥1} φ_{1−2l}/φ_{−2l}
        let t1 = d.theta(1);
        for l in 1..10 {
            assert_eq!(t1.exponent(1 - 2 * l), qi(1));
            assert_eq!(t1.exponent(-2 * l), qi(-1));
        }
        assert_eq!(t1.exponent(0), qi(0));
        // θ^(φ_{1+2k}) = ∏_{l≥−k+1} φ_{1−2l} / ∏_{l≥1} φ_{−2l}
        let t5 = d.theta(5);
        for l in -1..10 {
            assert_eq!(t5.exponent(1 - 2 * l), qi(1), "l = {l}");
        }
        assert_eq!(t5.exponent(4), qi(0));
        assert_eq!(t5.exponent(-2), qi(-1));
    }

    #[test]
    fn derivatives_of_monomials() {
        let d = DerivationSpec::logexp_ddx();
        let x3 = Series::monomial(qi(1), phi(0, 3));
        assert_eq!(single(&d.derive(&x3)), Term::new(qi(3), phi(0, 2)));
        let xlog = Series::monomial(qi(1), Monomial::from_exponents([(0, qi(1)), (-1, qi(1))]));
        let got = d.derive(&xlog).terms(5).unwrap();
        assert_eq!(
            got,
            vec![
                Term::new(qi(1), phi(-1, 1)),
                Term::new(qi(1), Monomial::one())
            ]
        );
        assert!(d.derive(&Series::constant(qi(7))).is_zero().unwrap());
    }

    #[test]
    fn log_derivatives() {
        let d = DerivationSpec::logexp_ddx();
        let x2 = Series::monomial(qi(1), phi(0, 2));
        assert_eq!(
            single(&d.log_derivative(&x2).unwrap()),
            Term::new(qi(2), phi(0, -1))
        );
        let ex3 = Series::monomial(qi(1), Monomial::from_exponents([(1, qi(1)), (0, qi(3))]));
        let got = d.log_derivative(&ex3).unwrap().terms(5).unwrap();
        assert_eq!(
            got,
            vec![
                Term::new(qi(1), Monomial::one()),
                Term::new(qi(3), phi(0, -1))
            ]
        );
        assert!(matches!(
            d.log_derivative(&Series::zero()),
            Err(Error::ZeroSeries)
        ));
    }

    #[test]
    fn infinite_support_derivative_is_lazy() {
        let d = DerivationSpec::sigma_geometric(1).unwrap();
        let m = Monomial::tail_product(-1, vec![qi(1)]);
        let s = d.log_derivative_monomial(&m);
        let p = s.prefix(6).unwrap();
        assert_eq!(p.terms.len(), 6);
        for w in p.terms.windows(2) {
            assert!(w[0].mono > w[1].mono);
        }
    }

    #[test]
    fn presets_validate() {
        for d in [
            DerivationSpec::logexp_ddx(),
            DerivationSpec::interleaved(2).unwrap(),
            DerivationSpec::interleaved(3).unwrap(),
            DerivationSpec::sigma_geometric(1).unwrap(),
            DerivationSpec::sigma_geometric(2).unwrap(),
        ] {
            let r = validate_h3prime(&d, -8, 8, 50);
            assert!(r.passed, "{}", r.summary());
            let r = validate_m(&d, -6, 6, 12);
            assert!(r.passed, "{}", r.summary());
        }
    }

    #[test]
    fn corrupted_specs_fail() {
        let d = DerivationSpec::logexp_ddx();
        let bad = d.with_override(1, BaseEntry::monomial(qi(1), d.theta(0)));
        let r = validate_h3prime(&bad, -8, 8, 0);
        assert!(!r.passed);
        assert!(r.failures.iter().any(|f| f.witness == json!([0, 1])));
        let bad = d.with_override(
            1,
            BaseEntry::monomial(qi(1), d.theta(1).mul(&Monomial::phi(1))),
        );
        assert!(!validate_m(&bad, -6, 6, 12).passed);
        let flipped = d.with_override(1, BaseEntry::monomial(qi(-1), d.theta(1)));
        assert!(validate_m(&flipped, -6, 6, 12).passed);
    }

    #[test]
    fn hardy_samples() {
        let r = validate_hardy(&DerivationSpec::logexp_ddx(), 60, 7);
        assert!(r.passed, "{}", r.summary());
    }
}
