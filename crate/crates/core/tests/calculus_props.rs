use std::cmp::Ordering;

use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use transserial::asympint::{ai, build_prelog_table, find_psi, find_psi_within};
use transserial::derivation::DerivationSpec;
use transserial::prelog::Prelog;
use transserial::series::{order, set_stall_limit};
use transserial::{Error, Monomial, Series, Term, Q};

/// Fixed seed so suite timing does not depend on the run.
fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn rational() -> impl Strategy<Value = Q> {
    (-6i64..=6, 1i64..=4).prop_map(|(n, d)| Q::new(n.into(), d.into()))
}

fn nonzero_rational() -> impl Strategy<Value = Q> {
    rational().prop_filter("nonzero", |q| !q.is_zero())
}

fn monomial() -> impl Strategy<Value = Monomial> {
    prop::collection::vec((-3i64..=3, nonzero_rational()), 0..4).prop_map(Monomial::from_exponents)
}

fn nonunit() -> impl Strategy<Value = Monomial> {
    monomial().prop_filter("nonunit", |m| !m.is_one())
}

fn series() -> impl Strategy<Value = Series> {
    prop::collection::vec((nonzero_rational(), monomial()), 1..4)
        .prop_map(|ts| Series::from_terms(ts.into_iter().map(|(c, m)| Term::new(c, m))))
        .prop_filter("nonzero", |s| !s.is_zero().unwrap())
}

fn positive() -> impl Strategy<Value = Series> {
    series().prop_map(|s| {
        if s.lc().unwrap() < Q::zero() {
            s.neg()
        } else {
            s
        }
    })
}

fn preset(k: usize) -> DerivationSpec {
    match k {
        0 => DerivationSpec::logexp_ddx(),
        1 => DerivationSpec::interleaved(2).unwrap(),
        _ => DerivationSpec::sigma_geometric(1).unwrap(),
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn leibniz(k in 0usize..3, a in series(), b in series()) {
        let d = preset(k);
        let lhs = d.derive(&a.mul(&b));
        let rhs = d.derive(&a).mul(&b).add(&a.mul(&d.derive(&b)));
        prop_assert!(lhs.sub(&rhs).is_zero().unwrap());
    }

    #[test]
    fn derivation_is_linear(k in 0usize..3, a in series(), b in series(), c in rational()) {
        let d = preset(k);
        let lhs = d.derive(&a.scale(&c).add(&b));
        prop_assert!(lhs.sub(&d.derive(&a).scale(&c).add(&d.derive(&b))).is_zero().unwrap());
        prop_assert!(d.derive(&Series::constant(c)).is_zero().unwrap());
    }

    #[test]
    fn log_derivative_leading_term(k in 0usize..3, a in series().prop_filter("nonunit", |s| !s.lm().unwrap().is_one())) {
        let d = preset(k);
        let lf = a.lf().unwrap();
        let lt = d.log_derivative(&a).unwrap().leading().unwrap();
        prop_assert_eq!(lt.mono, d.theta(lf));
        prop_assert_eq!(lt.coeff, a.le().unwrap() * d.t(lf));
    }

    #[test]
    fn asymptotic_integrals_differentiate_back(k in 0usize..3, c in nonzero_rational(), alpha in monomial()) {
        let d = preset(k);
        let a = Series::monomial(c.clone(), alpha.clone());
        match ai(&d, &a) {
            Ok(r) => {
                let lt = d.derive(&r.series()).leading().unwrap();
                prop_assert_eq!((lt.coeff, lt.mono), (c, alpha.clone()));
                prop_assert_eq!(&r.mono, &alpha.div(&d.theta(r.psi.0)));
                prop_assert_eq!(r.mono.lf(), Some(r.psi.0));
            }
            Err(Error::AtThetaHat) => prop_assert_eq!(d.theta_hat(), Some(&alpha)),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn psi_is_the_unique_fixed_point(k in 0usize..3, alpha in monomial()) {
        let d = preset(k);
        prop_assume!(d.theta_hat() != Some(&alpha));
        let psi = find_psi(&d, &alpha).unwrap().0;
        let centre = alpha.lf().unwrap_or(0);
        let hits: Vec<i64> = (centre - 24..=centre + 24).filter(|&j| alpha.div(&d.theta(j)).lf() == Some(j)).collect();
        prop_assert_eq!(hits, vec![psi]);
        prop_assert_eq!(find_psi_within(&d, &alpha, 64).unwrap().0, psi);
    }

    #[test]
    fn integrals_of_derivatives_recover_the_leading_index(k in 0usize..3, alpha in nonunit()) {
        // every monomial of α′ has ψ = LF(α), and dividing by θ^(ψ) keeps LE(α)
        let d = preset(k);
        let lf = alpha.lf().unwrap();
        let da = d.derive(&Series::monomial(Q::one(), alpha.clone()));
        for t in da.exact_terms().unwrap() {
            prop_assert_eq!(find_psi(&d, &t.mono).unwrap().0, lf);
            prop_assert_eq!(t.mono.div(&d.theta(lf)).leading_exponent().unwrap(), alpha.leading_exponent().unwrap());
        }
    }

    #[test]
    fn logs_are_additive(a in positive(), b in positive()) {
        set_stall_limit(32);
        let p = Prelog::sigma(&transserial::Chain::logexp());
        let lhs = p.log(&a.mul(&b)).unwrap();
        let rhs = p.log(&a).unwrap().add(&p.log(&b).unwrap());
        prop_assert!(lhs.agrees_to_budget(&rhs, 10).unwrap());
    }

    #[test]
    fn logs_preserve_order(a in positive(), b in positive()) {
        set_stall_limit(32);
        let p = Prelog::sigma(&transserial::Chain::logexp());
        let o = order(&a, &b).unwrap();
        prop_assume!(o != Ordering::Equal);
        prop_assert_eq!(p.log(&a).unwrap().cmp_real(&p.log(&b).unwrap()).unwrap(), o);
    }

    #[test]
    fn logs_differentiate_to_log_derivatives(k in 0usize..3, a in positive()) {
        set_stall_limit(32);
        let d = preset(k);
        let p = Prelog::sigma(d.chain());
        let l = p.log(&a).unwrap();
        prop_assert!(d.derive(&l.series).agrees_to_budget(&d.log_derivative(&a).unwrap(), 8).unwrap());
    }
}

#[test]
fn fundamental_logs_propagate_along_the_shift() {
    // t·θ at σ(φ) equals t·θ at φ divided by σ(φ)
    for k in 0..3 {
        let d = preset(k);
        let s = d.chain().step();
        for i in -8..=8 {
            let lhs = Series::monomial(d.t(i - s), d.theta(i - s));
            let rhs = Series::monomial(d.t(i), d.theta(i).div(&Monomial::phi(i - s)));
            assert!(lhs.eq_exact(&rhs).unwrap(), "{} at {i}", d.name());
        }
    }
}

#[test]
fn integrated_logs_lie_below_their_fundamentals() {
    for k in [0, 2] {
        let d = preset(k);
        for (i, l) in build_prelog_table(&d, -6..=6, 8).unwrap() {
            let lf = l.lf().unwrap();
            assert!(lf < i, "{}: LF(l(φ_{i})) = {lf}", d.name());
        }
    }
}
