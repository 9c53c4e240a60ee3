use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("quadrature did not converge (estimate {value}, error {abs_error})")]
    Quadrature { value: f64, abs_error: f64 },

    #[error("utility {utility} is not concave on [{lo}, {hi}]")]
    NotConcave { utility: String, lo: f64, hi: f64 },

    #[error("{operation} is not available for utility {utility}")]
    Unsupported { operation: &'static str, utility: String },

    #[error("X takes the value {value} on more than one scenario; supply a tie-breaking order")]
    TiedValues { value: f64 },

    #[error("random variables are not defined on the same scenarios: {0}")]
    ScenarioMismatch(String),

    #[error("price is undefined: both the positive and negative parts diverge")]
    UndefinedPrice,

    #[error("{0} is undefined: both the positive and negative parts diverge")]
    UndefinedExpectation(&'static str),

    #[error("price is +inf: payoff cannot be purchased")]
    UnboundedPrice,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("tail certificate fails at x = {at}: u(x) = {value}, bound = {bound}")]
    CertificateFailed { at: f64, value: f64, bound: f64 },

    #[error("target {target} is not below sup u = {sup}")]
    TargetUnreachable { target: f64, sup: f64 },

    #[error(
        "alpha reached its floor {alpha:e} before feasibility (budget slack {budget_slack}, objective {objective})"
    )]
    AlphaUnderflow {
        alpha: f64,
        budget_slack: f64,
        objective: f64,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
