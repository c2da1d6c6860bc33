use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use transserial::derivation::DerivationSpec;
use transserial::elclosure::{render_terms, Tower};
use transserial::expr::{eval, parse};
use transserial::prelog::Prelog;
use transserial::random::Sampler;
use transserial::series::{default_budget, set_default_budget, set_stall_limit};

/// Fixed seed so suite timing does not depend on the run.
fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn tower() -> Tower {
    let spec = DerivationSpec::logexp_ddx();
    Tower::new(&spec, &Prelog::sigma(spec.chain()), 3)
}

/// Expressions from the surface grammar; not all of them are defined.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        (1i64..9, 1i64..4).prop_map(|(n, d)| if d == 1 {
            n.to_string()
        } else {
            format!("{n}/{d}")
        }),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}/({b})")),
            (inner.clone(), -3i64..4).prop_map(|(a, e)| format!("({a})^{e}")),
            inner.clone().prop_map(|a| format!("log({a})")),
            inner.prop_map(|a| format!("exp({a})")),
        ]
    })
}

fn outcome(src: &str, t: &Tower) -> Result<(Vec<String>, String), String> {
    let v = eval(src, t).map_err(|e| e.kind().to_string())?;
    let ts = v.series.terms(4).map_err(|e| e.kind().to_string())?;
    Ok((
        ts.iter().map(|t| format!("{t:?}")).collect(),
        v.ledger.to_string(),
    ))
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn rendered_series_parse_back(seed in any::<u64>(), level in 0usize..=2) {
        let t = tower();
        let mut rng = Sampler::new(seed);
        let s = t.random_positive(&mut rng, level, 3).unwrap();
        let ts = s.exact_terms().unwrap();
        let text = render_terms(&ts, t.chain(), None);
        let back = eval(&text, &t).unwrap();
        prop_assert!(back.ledger.is_zero());
        prop_assert!(back.series.sub(&s).is_zero().unwrap(), "{text}");
    }

    #[test]
    fn elaboration_is_deterministic(src in source()) {
        set_stall_limit(24);
        let t = tower();
        prop_assert_eq!(parse(&src).is_ok(), true);
        prop_assert_eq!(outcome(&src, &t), outcome(&src, &tower()));
    }
}

#[test]
fn exact_results_do_not_depend_on_the_budget() {
    let t = tower();
    let inputs = [
        "x^2*log(x) + 3",
        "exp(x*log(x))",
        "exp(2*log(x))",
        "(x + 1)*(x - 1)",
        "log(4*x^3)",
        "exp(x^2)/exp(x)",
    ];
    let saved = default_budget();
    let at = |n: usize| {
        set_default_budget(n);
        inputs.map(|s| {
            let v = eval(s, &t).unwrap();
            (v.series.exact_terms().expect(s), v.ledger.to_string())
        })
    };
    let (small, large) = (at(4), at(64));
    set_default_budget(saved);
    assert_eq!(small, large);
}
