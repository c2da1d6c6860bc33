//! Generalized series fields over a ℤ-indexed chain with a shift
//! automorphism: Hardy-type derivations, pre-logarithms, asymptotic
//! integration and the exponential closure tower.

pub mod asympint;
pub mod chain;
pub mod cli;
pub mod constant;
pub mod derivation;
pub mod elclosure;
pub mod error;
pub mod expr;
pub mod monomial;
pub mod prelog;
pub mod random;
pub mod rational;
pub mod report;
pub mod series;

pub use chain::{Chain, FundIndex};
pub use error::{Error, Result};
pub use monomial::Monomial;
pub use rational::Q;
pub use series::{Series, Term};
