use thiserror::Error;

use crate::asympint::IntegrationResult;

/// Errors raised by the series engine.
///
/// Every error is cheap to clone so that a failed lazy stream can hand the
/// same error to every later reader.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("the series is zero")]
    ZeroSeries,
    #[error("division by zero")]
    ZeroDivision,
    #[error("the monomial is 1 and has no leading fundamental monomial")]
    IdentityMonomial,
    #[error("argument is not infinitesimal (must be ≺ 1)")]
    NotInfinitesimal,
    #[error("argument is not positive")]
    NotPositive,
    #[error("argument is not purely infinite")]
    NotPurelyInfinite,
    #[error("summability violation: {0}")]
    SummabilityViolation(String),
    #[error("undetermined within budget: {0}")]
    Undetermined(String),
    #[error("series is not known to be exact")]
    NotExact,
    #[error("no asymptotic integral: input ≍ θ̂")]
    AtThetaHat,
    #[error("no ψ found for {monomial} within ±{radius} of its leading index")]
    NoPsiFound { monomial: String, radius: i64 },
    #[error("asymptotic integral postcondition failed: {0}")]
    AiPostcondition(String),
    #[error("integration obstructed after {} steps: {cause}", partial.steps)]
    IntegrationObstructed {
        cause: Box<Error>,
        partial: Box<IntegrationResult>,
    },
    #[error("tower depth {needed} exceeds the configured maximum {max}")]
    TowerDepthExceeded { needed: usize, max: usize },
    #[error("exponent argument does not terminate within the budget")]
    NonTerminatingExponent,
    #[error("no pre-logarithm table entry for index {0}")]
    MissingTableEntry(i64),
    #[error("exp of a nonzero constant term is unsupported")]
    ConstantInExpArg,
    #[error("log argument must be positive")]
    NotPositiveLogArg,
    #[error("transcendental constant {0} cannot be multiplied into a series")]
    UnsupportedConstant(String),
    #[error("no θ̂ is known for this derivation")]
    NoThetaHat,
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// The variant name, used as a stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroSeries => "ZeroSeries",
            Error::ZeroDivision => "ZeroDivision",
            Error::IdentityMonomial => "IdentityMonomial",
            Error::NotInfinitesimal => "NotInfinitesimal",
            Error::NotPositive => "NotPositive",
            Error::NotPurelyInfinite => "NotPurelyInfinite",
            Error::SummabilityViolation(_) => "SummabilityViolation",
            Error::Undetermined(_) => "Undetermined",
            Error::NotExact => "NotExact",
            Error::AtThetaHat => "AtThetaHat",
            Error::NoPsiFound { .. } => "NoPsiFound",
            Error::AiPostcondition(_) => "AiPostcondition",
            Error::IntegrationObstructed { .. } => "IntegrationObstructed",
            Error::TowerDepthExceeded { .. } => "TowerDepthExceeded",
            Error::NonTerminatingExponent => "NonTerminatingExponent",
            Error::MissingTableEntry(_) => "MissingTableEntry",
            Error::ConstantInExpArg => "ConstantInExpArg",
            Error::NotPositiveLogArg => "NotPositiveLogArg",
            Error::UnsupportedConstant(_) => "UnsupportedConstant",
            Error::NoThetaHat => "NoThetaHat",
            Error::Syntax { .. } => "Syntax",
            Error::Config(_) => "Config",
        }
    }

    /// True for errors that express a mathematical obstruction rather than a
    /// usage mistake.
    pub fn is_obstruction(&self) -> bool {
        matches!(
            self,
            Error::AtThetaHat
                | Error::IntegrationObstructed { .. }
                | Error::NoPsiFound { .. }
                | Error::AiPostcondition(_)
                | Error::SummabilityViolation(_)
                | Error::NotPositive
                | Error::NotPositiveLogArg
                | Error::ConstantInExpArg
                | Error::ZeroDivision
                | Error::ZeroSeries
                | Error::NoThetaHat
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
