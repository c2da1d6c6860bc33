//! Seeded samplers for monomials and series, used by validators and tests.

use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::monomial::Monomial;
use crate::rational::{q, Q};
use crate::series::{Series, Term};

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// `n/d` with `|n| ≤ max_num`, `1 ≤ d ≤ max_den`.
    pub fn rational(&mut self, max_num: i64, max_den: i64, nonzero: bool) -> Q {
        loop {
            let n = self.rng.gen_range(-max_num..=max_num);
            let d = self.rng.gen_range(1..=max_den);
            if !(nonzero && n == 0) {
                return q(n, d);
            }
        }
    }

    pub fn positive_rational(&mut self, max_num: i64, max_den: i64) -> Q {
        let n = self.rng.gen_range(1..=max_num);
        let d = self.rng.gen_range(1..=max_den);
        q(n, d)
    }

    /// Finite monomial with up to `factors` fundamental factors drawn from
    /// `lo..=hi`.
    pub fn monomial(&mut self, lo: i64, hi: i64, factors: usize) -> Monomial {
        let k = self.rng.gen_range(0..=factors);
        let mut ex = Vec::with_capacity(k);
        for _ in 0..k {
            let i = self.range(lo, hi);
            ex.push((i, self.rational(3, 2, true)));
        }
        Monomial::from_exponents(ex)
    }

    pub fn nonunit_monomial(&mut self, lo: i64, hi: i64, factors: usize) -> Monomial {
        loop {
            let m = self.monomial(lo, hi, factors.max(1));
            if !m.is_one() {
                return m;
            }
        }
    }

    /// Monomial with a periodic tail below a random window.
    pub fn tail_monomial(
        &mut self,
        lo: i64,
        hi: i64,
        factors: usize,
        max_period: usize,
    ) -> Monomial {
        let below = self.range(lo, hi);
        let p = self.rng.gen_range(1..=max_period);
        let mut pattern: Vec<Q> = (0..p).map(|_| self.rational(2, 2, false)).collect();
        if pattern.iter().all(Zero::is_zero) {
            pattern[0] = Q::one();
        }
        let mut window = Vec::new();
        for _ in 0..self.rng.gen_range(0..=factors) {
            let i = self.range(below, hi.max(below));
            window.push((i, self.rational(3, 2, true)));
        }
        Monomial::with_tail(window, below, pattern).expect("window above tail")
    }

    /// Finite series with up to `terms` terms.
    pub fn series(&mut self, terms: usize, lo: i64, hi: i64, factors: usize) -> Series {
        let n = self.rng.gen_range(1..=terms.max(1));
        Series::from_terms(
            (0..n).map(|_| Term::new(self.rational(5, 3, true), self.monomial(lo, hi, factors))),
        )
    }

    pub fn nonzero_series(&mut self, terms: usize, lo: i64, hi: i64, factors: usize) -> Series {
        loop {
            let s = self.series(terms, lo, hi, factors);
            if !s.is_zero().expect("finite") {
                return s;
            }
        }
    }

    /// Finite series with positive leading coefficient.
    pub fn positive_series(&mut self, terms: usize, lo: i64, hi: i64, factors: usize) -> Series {
        let s = self.nonzero_series(terms, lo, hi, factors);
        if s.lc().expect("nonzero") < Q::zero() {
            s.neg()
        } else {
            s
        }
    }

    /// Finite series whose monomials are all ≻ 1.
    pub fn purely_infinite(&mut self, terms: usize, lo: i64, hi: i64, factors: usize) -> Series {
        loop {
            let n = self.rng.gen_range(1..=terms.max(1));
            let mut ts = Vec::new();
            for _ in 0..n {
                let m = self.nonunit_monomial(lo, hi, factors);
                if m > Monomial::one() {
                    ts.push(Term::new(self.rational(5, 3, true), m));
                }
            }
            let s = Series::from_terms(ts);
            if !s.is_zero().expect("finite") {
                return s;
            }
        }
    }
}
