//! Test oracles that share no code with the series engine.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::{One, Pow, ToPrimitive, Zero};
use transserial::{Monomial, Q};

/// Expressions in `x` built from exp, log, rational powers, products and
/// sums.
#[derive(Clone, Debug)]
pub enum Sym {
    X,
    Num(Q),
    Exp(Box<Sym>),
    Log(Box<Sym>),
    Pow(Box<Sym>, Q),
    Mul(Vec<Sym>),
    Add(Vec<Sym>),
}

/// `exp^k(x)` for `k > 0`, `x` for `k = 0`, `log^{-k}(x)` for `k < 0`.
pub fn atom(k: i64) -> Sym {
    let mut e = Sym::X;
    for _ in 0..k.unsigned_abs() {
        e = if k > 0 {
            Sym::Exp(Box::new(e))
        } else {
            Sym::Log(Box::new(e))
        };
    }
    e
}

fn atom_index(e: &Sym) -> Option<i64> {
    match e {
        Sym::X => Some(0),
        Sym::Exp(a) => atom_index(a).filter(|k| *k >= 0).map(|k| k + 1),
        Sym::Log(a) => atom_index(a).filter(|k| *k <= 0).map(|k| k - 1),
        _ => None,
    }
}

/// d/dx by the textbook rules.
pub fn d(e: &Sym) -> Sym {
    match e {
        Sym::X => Sym::Num(Q::one()),
        Sym::Num(_) => Sym::Num(Q::zero()),
        Sym::Exp(u) => Sym::Mul(vec![e.clone(), d(u)]),
        Sym::Log(u) => Sym::Mul(vec![d(u), Sym::Pow(u.clone(), -Q::one())]),
        Sym::Pow(u, q) => Sym::Mul(vec![
            Sym::Num(q.clone()),
            Sym::Pow(u.clone(), q - Q::one()),
            d(u),
        ]),
        Sym::Mul(fs) => Sym::Add(
            (0..fs.len())
                .map(|i| {
                    Sym::Mul(
                        fs.iter()
                            .enumerate()
                            .map(|(j, f)| if i == j { d(f) } else { f.clone() })
                            .collect(),
                    )
                })
                .collect(),
        ),
        Sym::Add(ts) => Sym::Add(ts.iter().map(d).collect()),
    }
}

/// Exponents of the atoms, keyed by atom index.
pub type Prod = BTreeMap<i64, Q>;
/// A sum of products with rational coefficients.
pub type Poly = BTreeMap<Prod, Q>;

fn mul_prod(a: &Prod, b: &Prod) -> Prod {
    let mut out = a.clone();
    for (k, e) in b {
        *out.entry(*k).or_insert_with(Q::zero) += e;
    }
    out.retain(|_, e| !e.is_zero());
    out
}

fn add_into(p: &mut Poly, m: Prod, c: Q) {
    let slot = p.entry(m.clone()).or_insert_with(Q::zero);
    *slot += c;
    if slot.is_zero() {
        p.remove(&m);
    }
}

/// Expands into a sum of atom products. Panics outside the supported shape.
pub fn expand(e: &Sym) -> Poly {
    let mut out = Poly::new();
    match e {
        Sym::Num(q) => {
            if !q.is_zero() {
                out.insert(Prod::new(), q.clone());
            }
        }
        Sym::X | Sym::Exp(_) | Sym::Log(_) => {
            let k = atom_index(e).expect("only iterated exp/log of x are atoms");
            out.insert(Prod::from([(k, Q::one())]), Q::one());
        }
        Sym::Pow(u, q) => {
            let inner = expand(u);
            assert_eq!(inner.len(), 1, "power of a sum");
            let (m, c) = inner.into_iter().next().unwrap();
            let c = if q.is_integer() {
                Pow::pow(&c, q.to_integer().to_i32().expect("small exponent"))
            } else {
                assert!(c.is_one(), "fractional power of a non-unit coefficient");
                c
            };
            let m: Prod = m
                .into_iter()
                .map(|(k, e)| (k, e * q))
                .filter(|(_, e)| !e.is_zero())
                .collect();
            out.insert(m, c);
        }
        Sym::Mul(fs) => {
            out.insert(Prod::new(), Q::one());
            for f in fs {
                let g = expand(f);
                let mut next = Poly::new();
                for (m1, c1) in &out {
                    for (m2, c2) in &g {
                        add_into(&mut next, mul_prod(m1, m2), c1 * c2);
                    }
                }
                out = next;
            }
        }
        Sym::Add(ts) => {
            for t in ts {
                for (m, c) in expand(t) {
                    add_into(&mut out, m, c);
                }
            }
        }
    }
    out
}

/// Growth order of atom products: the larger exponent at the highest atom
/// where they differ wins.
pub fn cmp_prod(a: &Prod, b: &Prod) -> Ordering {
    let keys: std::collections::BTreeSet<i64> = a.keys().chain(b.keys()).copied().collect();
    for k in keys.into_iter().rev() {
        let (x, y) = (
            a.get(&k).cloned().unwrap_or_default(),
            b.get(&k).cloned().unwrap_or_default(),
        );
        if x != y {
            return x.cmp(&y);
        }
    }
    Ordering::Equal
}

/// Leading term of a nonzero poly.
pub fn leading(p: &Poly) -> (Prod, Q) {
    let (m, c) = p.iter().max_by(|a, b| cmp_prod(a.0, b.0)).expect("nonzero");
    (m.clone(), c.clone())
}

/// A finite chain monomial as atom exponents (logexp labels).
pub fn prod_of(m: &Monomial) -> Prod {
    assert!(!m.has_tail(), "oracle handles finite monomials only");
    (-40..=40)
        .map(|j| (j, m.exponent(j)))
        .filter(|(_, e)| !e.is_zero())
        .collect()
}

pub fn sym_of(p: &Prod) -> Sym {
    Sym::Mul(
        p.iter()
            .map(|(k, e)| Sym::Pow(Box::new(atom(*k)), e.clone()))
            .collect(),
    )
}

pub fn poly_of_terms(ts: &[transserial::Term]) -> Poly {
    let mut p = Poly::new();
    for t in ts {
        add_into(&mut p, prod_of(&t.mono), t.coeff.clone());
    }
    p
}

/// d/dx of `Σ c·m` by the oracle.
pub fn oracle_derivative(ts: &[transserial::Term]) -> Poly {
    let sum = Sym::Add(
        ts.iter()
            .map(|t| Sym::Mul(vec![Sym::Num(t.coeff.clone()), sym_of(&prod_of(&t.mono))]))
            .collect(),
    );
    expand(&d(&sum))
}
