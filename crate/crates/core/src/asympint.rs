//! Asymptotic integration: the ψ search, monomial asymptotic integrals and
//! iterated anti-differentiation.

use std::collections::{BTreeMap, HashSet};

use num_traits::Zero;
use serde_json::json;

use crate::chain::FundIndex;
use crate::derivation::DerivationSpec;
use crate::error::{Error, Result};
use crate::monomial::Monomial;
use crate::rational::Q;
use crate::report::Report;
use crate::series::{Fetch, Series, Term};

/// Default half-width of the ψ scan around LF(α).
pub const PSI_SCAN_RADIUS: i64 = 64;
const PSI_ITERATIONS: usize = 64;

/// A monomial asymptotic integral `coeff·mono` with its ψ witness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsymptoticIntegral {
    pub coeff: Q,
    pub mono: Monomial,
    pub psi: FundIndex,
}

impl AsymptoticIntegral {
    pub fn term(&self) -> Term {
        Term::new(self.coeff.clone(), self.mono.clone())
    }

    pub fn series(&self) -> Series {
        Series::monomial(self.coeff.clone(), self.mono.clone())
    }
}

#[derive(Clone, Debug)]
pub struct IntegrationResult {
    pub antiderivative: Series,
    /// True when the residual reached zero.
    pub exact: bool,
    /// `target − derive(antiderivative)`.
    pub residual: Series,
    pub steps: usize,
}

fn is_psi(spec: &DerivationSpec, alpha: &Monomial, psi: i64) -> bool {
    alpha.div(&spec.theta(psi)).lf() == Some(psi)
}

/// The unique ψ with LF(α/θ^(ψ)) = ψ.
pub fn find_psi(spec: &DerivationSpec, alpha: &Monomial) -> Result<FundIndex> {
    find_psi_within(spec, alpha, PSI_SCAN_RADIUS)
}

pub fn find_psi_within(spec: &DerivationSpec, alpha: &Monomial, radius: i64) -> Result<FundIndex> {
    if spec.theta_hat() == Some(alpha) {
        return Err(Error::AtThetaHat);
    }
    let seed = alpha.lf().unwrap_or(0);
    let mut psi = seed;
    let mut seen = HashSet::new();
    for _ in 0..PSI_ITERATIONS {
        if !seen.insert(psi) {
            break;
        }
        match alpha.div(&spec.theta(psi)).lf() {
            Some(next) if next == psi => return Ok(FundIndex(psi)),
            Some(next) => psi = next,
            None => break,
        }
    }
    for d in 0..=radius {
        for cand in [seed + d, seed - d] {
            if is_psi(spec, alpha, cand) {
                return Ok(FundIndex(cand));
            }
        }
    }
    Err(Error::NoPsiFound {
        monomial: alpha.to_string(),
        radius,
    })
}

/// a.i.(c·α) = c·α / (LE(α/θ^(ψ))·t_ψ·θ^(ψ)).
pub fn ai_term(spec: &DerivationSpec, c: &Q, alpha: &Monomial) -> Result<AsymptoticIntegral> {
    if c.is_zero() {
        return Err(Error::ZeroSeries);
    }
    let psi = find_psi(spec, alpha)?;
    let quotient = alpha.div(&spec.theta(psi.0));
    let le = quotient.leading_exponent()?;
    let coeff = c / (le * spec.t(psi.0));
    let out = AsymptoticIntegral {
        coeff,
        mono: quotient,
        psi,
    };
    let lt = spec.derive(&out.series()).leading()?;
    if lt.coeff != *c || lt.mono != *alpha {
        return Err(Error::AiPostcondition(format!(
            "derivative of {}·{} leads with {}·{}, expected {}·{}",
            out.coeff, out.mono, lt.coeff, lt.mono, c, alpha
        )));
    }
    Ok(out)
}

pub fn ai(spec: &DerivationSpec, a: &Series) -> Result<AsymptoticIntegral> {
    let lt = a.leading()?;
    ai_term(spec, &lt.coeff, &lt.mono)
}

/// Iterated asymptotic integration with the constant of integration 0.
pub fn integrate(spec: &DerivationSpec, a: &Series, max_terms: usize) -> Result<IntegrationResult> {
    if a.is_zero()? {
        return Err(Error::ZeroSeries);
    }
    let mut terms: Vec<Term> = Vec::new();
    let mut residual = a.clone();
    let mut last_lm: Option<Monomial> = None;
    loop {
        let lead = match residual.get(0)? {
            Fetch::End => {
                return Ok(IntegrationResult {
                    antiderivative: Series::from_terms(terms.clone()),
                    exact: true,
                    residual,
                    steps: terms.len(),
                })
            }
            Fetch::Stalled(m) => {
                return Err(Error::Undetermined(format!("residual stalled below {m}")));
            }
            Fetch::Term(t) => t,
        };
        if let Some(prev) = &last_lm {
            if lead.mono >= *prev {
                return Err(Error::AiPostcondition(format!(
                    "residual did not decrease: {} after {}",
                    lead.mono, prev
                )));
            }
        }
        if terms.len() >= max_terms {
            return Ok(IntegrationResult {
                antiderivative: Series::from_terms(terms),
                exact: false,
                residual,
                steps: max_terms,
            });
        }
        let step = match ai_term(spec, &lead.coeff, &lead.mono) {
            Ok(v) => v,
            Err(cause) => {
                let partial = IntegrationResult {
                    antiderivative: Series::from_terms(terms.clone()),
                    exact: false,
                    residual,
                    steps: terms.len(),
                };
                return Err(Error::IntegrationObstructed {
                    cause: Box::new(cause),
                    partial: Box::new(partial),
                });
            }
        };
        terms.push(step.term());
        last_lm = Some(lead.mono);
        let l = Series::from_terms(terms.clone());
        residual = a.sub(&spec.derive(&l));
    }
}

/// [`integrate`] plus a constant of integration.
pub fn integrate_with_constant(
    spec: &DerivationSpec,
    a: &Series,
    max_terms: usize,
    c: &Q,
) -> Result<IntegrationResult> {
    let mut r = integrate(spec, a, max_terms)?;
    r.antiderivative = r.antiderivative.add(&Series::constant(c.clone()));
    Ok(r)
}

/// Termwise asymptotic integral of a finite series.
pub fn ai_sum(spec: &DerivationSpec, a: &Series, max_terms: usize) -> Result<Series> {
    let ts = a.terms(max_terms)?;
    let parts = ts
        .iter()
        .map(|t| ai_term(spec, &t.coeff, &t.mono).map(|v| v.term()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Series::from_terms(parts))
}

/// One step `l ↦ l + A.I.(target − l′)` of the fixed-point map.
pub fn contraction_step(
    spec: &DerivationSpec,
    target: &Series,
    l: &Series,
    max_terms: usize,
) -> Result<Series> {
    let residual = target.sub(&spec.derive(l));
    Ok(l.add(&ai_sum(spec, &residual, max_terms)?))
}

/// l(φ_i) := ∫ φ_i′/φ_i with constant 0, for each requested index.
pub fn build_prelog_table(
    spec: &DerivationSpec,
    indices: impl IntoIterator<Item = i64>,
    max_terms: usize,
) -> Result<BTreeMap<i64, Series>> {
    let mut out = BTreeMap::new();
    for i in indices {
        out.insert(i, prelog_entry(spec, i, max_terms)?);
    }
    Ok(out)
}

pub(crate) fn prelog_entry(spec: &DerivationSpec, i: i64, max_terms: usize) -> Result<Series> {
    let r = integrate(spec, &spec.log_deriv_fundamental(i), max_terms)?;
    Ok(r.antiderivative)
}

/// Hypothesis 1: θ̂ ∉ Supp φ′/φ. Hypothesis 2: a.i.(τ) ≻ 1 for τ ∈ Supp φ′/φ.
pub fn check_hypotheses(spec: &DerivationSpec, lo: i64, hi: i64) -> Report {
    let mut rep = Report::new("hypotheses")
        .with("window", json!([lo, hi]))
        .with("derivation", spec.name());
    let one = Monomial::one();
    let mut supports = 0usize;
    for i in lo..=hi {
        let d = spec.log_deriv_fundamental(i);
        let ts = match d.exact_terms() {
            Some(ts) => ts,
            None => {
                rep.fail(json!(i), "φ′/φ is not an exact series");
                continue;
            }
        };
        for t in ts {
            supports += 1;
            if spec.theta_hat() == Some(&t.mono) {
                rep.fail(
                    json!(i),
                    format!("hypothesis 1: θ̂ = {} lies in Supp φ_{i}′/φ_{i}", t.mono),
                );
                continue;
            }
            match ai_term(spec, &Q::from_integer(1.into()), &t.mono) {
                Ok(v) if v.mono > one => {}
                Ok(v) => rep.fail(
                    json!(i),
                    format!("hypothesis 2: a.i.({}) = {} is not ≻ 1", t.mono, v.mono),
                ),
                Err(e) => rep.fail(
                    json!(i),
                    format!("hypothesis 2: a.i.({}) failed: {e}", t.mono),
                ),
            }
        }
    }
    rep.note("support_monomials", supports);
    rep
}
