//! The fundamental chain Φ ≅ ℤ and its shift automorphism σ(φ_i) = φ_{i−s}.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index `i` of the fundamental monomial φ_i. φ_i ≺ φ_j iff i < j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FundIndex(pub i64);

impl FundIndex {
    pub fn get(self) -> i64 {
        self.0
    }
}

impl fmt::Display for FundIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i64> for FundIndex {
    fn from(i: i64) -> Self {
        FundIndex(i)
    }
}

/// Display naming scheme for fundamental monomials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Labels {
    /// 0 ↦ x, n ↦ exp^n(x), −n ↦ log^n(x).
    LogExp,
    /// Orbit representatives r ∈ {0..n−1} are fractional iterates between x
    /// and exp(x); index q·n + r is shown as `exp^(q+r/n)(x)`.
    Interleaved(u32),
    /// `phi(i)`.
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Chain {
    step: i64,
    labels: Labels,
}

impl Chain {
    pub fn new(step: i64, labels: Labels) -> Result<Chain> {
        if step < 1 {
            return Err(Error::Config(format!("chain step must be ≥ 1, got {step}")));
        }
        if let Labels::Interleaved(n) = labels {
            if n as i64 != step {
                return Err(Error::Config("interleaved labels need step = n".into()));
            }
        }
        Ok(Chain { step, labels })
    }

    pub fn logexp() -> Chain {
        Chain {
            step: 1,
            labels: Labels::LogExp,
        }
    }

    pub fn interleaved(n: u32) -> Result<Chain> {
        if n == 1 {
            return Ok(Chain::logexp());
        }
        Chain::new(n as i64, Labels::Interleaved(n))
    }

    /// Builds a chain from a preset name, as in the config key `chain`.
    pub fn from_preset(name: &str, step: Option<i64>) -> Result<Chain> {
        match name {
            "logexp" => match step {
                None | Some(1) => Ok(Chain::logexp()),
                Some(s) => Err(Error::Config(format!("chain logexp has step 1, not {s}"))),
            },
            "interleaved" => {
                let n = step.unwrap_or(2);
                if n < 1 || n > u32::MAX as i64 {
                    return Err(Error::Config(format!("bad interleaving step {n}")));
                }
                Chain::interleaved(n as u32)
            }
            "plain" => Chain::new(step.unwrap_or(1), Labels::Plain),
            other => Err(Error::Config(format!("unknown chain preset {other:?}"))),
        }
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn labels(&self) -> Labels {
        self.labels
    }

    /// σ^k(φ_i) = φ_{i − k·s}.
    pub fn sigma(&self, i: FundIndex, k: i64) -> FundIndex {
        FundIndex(i.0 - k * self.step)
    }

    /// Canonical orbit representative `i mod s` in `0..s`.
    pub fn z_orbit_rep(&self, i: FundIndex) -> FundIndex {
        FundIndex(i.0.rem_euclid(self.step))
    }

    /// The fundamental domain {φ_0, …, φ_{s−1}}.
    pub fn fundamental_domain(&self) -> Vec<FundIndex> {
        (0..self.step).map(FundIndex).collect()
    }

    pub fn label(&self, i: i64) -> String {
        match self.labels {
            Labels::LogExp => iterate_label(i, None),
            Labels::Interleaved(n) => {
                let n = n as i64;
                let (qt, r) = (i.div_euclid(n), i.rem_euclid(n));
                if r == 0 {
                    iterate_label(qt, None)
                } else {
                    iterate_label(qt, Some((r, n)))
                }
            }
            Labels::Plain => format!("phi({i})"),
        }
    }

    /// Inverse of [`Chain::label`]; used by the expression parser.
    pub fn index_of_label(&self, label: &str) -> Option<i64> {
        (-64..=64).find(|&i| self.label(i) == label)
    }
}

fn iterate_label(k: i64, frac: Option<(i64, i64)>) -> String {
    match (k, frac) {
        (0, None) => "x".into(),
        (1, None) => "exp(x)".into(),
        (-1, None) => "log(x)".into(),
        (k, None) if k > 0 => format!("exp^{k}(x)"),
        (k, None) => format!("log^{}(x)", -k),
        (k, Some((r, n))) => {
            // q + r/n written as a single fraction in lowest terms.
            let num = k * n + r;
            let g = gcd(num.abs(), n);
            format!("exp^({}/{})(x)", num / g, n / g)
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_examples() {
        let c1 = Chain::logexp();
        let c2 = Chain::new(2, Labels::Plain).unwrap();
        assert_eq!(c1.sigma(FundIndex(0), 1), FundIndex(-1));
        assert_eq!(c2.sigma(FundIndex(3), -2), FundIndex(7));
        assert_eq!(c1.sigma(FundIndex(5), 0), FundIndex(5));
    }

    #[test]
    fn orbit_reps() {
        let c2 = Chain::new(2, Labels::Plain).unwrap();
        let c3 = Chain::new(3, Labels::Plain).unwrap();
        assert_eq!(c2.z_orbit_rep(FundIndex(7)), FundIndex(1));
        assert_eq!(Chain::logexp().z_orbit_rep(FundIndex(-4)), FundIndex(0));
        assert_eq!(c3.z_orbit_rep(FundIndex(-5)), FundIndex(1));
        assert_eq!(c3.fundamental_domain().len(), 3);
    }

    #[test]
    fn sigma_is_a_decreasing_automorphism() {
        for s in 1..4 {
            let c = Chain::new(s, Labels::Plain).unwrap();
            for i in -20..20 {
                for k in -3..3 {
                    for l in -3..3 {
                        assert_eq!(
                            c.sigma(c.sigma(FundIndex(i), k), l),
                            c.sigma(FundIndex(i), k + l)
                        );
                    }
                }
                assert!(c.sigma(FundIndex(i), 1) < FundIndex(i));
                assert!(c.sigma(FundIndex(i), 1) < c.sigma(FundIndex(i + 1), 1));
            }
            // orbits are the residue classes, a single class when s = 1
            let reps: std::collections::BTreeSet<_> =
                (-20..20).map(|i| c.z_orbit_rep(FundIndex(i))).collect();
            assert_eq!(reps.len() as i64, s);
        }
    }

    #[test]
    fn labels() {
        let c = Chain::logexp();
        assert_eq!(c.label(0), "x");
        assert_eq!(c.label(-1), "log(x)");
        assert_eq!(c.label(2), "exp^2(x)");
        assert_eq!(c.label(-3), "log^3(x)");
        assert_eq!(c.index_of_label("log^3(x)"), Some(-3));
        let h = Chain::interleaved(2).unwrap();
        assert_eq!(h.label(1), "exp^(1/2)(x)");
        assert_eq!(h.label(-1), "exp^(-1/2)(x)");
        assert_eq!(h.label(2), "exp(x)");
    }

    #[test]
    fn presets() {
        assert_eq!(
            Chain::from_preset("interleaved", Some(3)).unwrap().step(),
            3
        );
        assert!(Chain::from_preset("logexp", Some(2)).is_err());
        assert!(Chain::new(0, Labels::Plain).is_err());
    }
}
