use thiserror::Error;

/// Errors produced by the numerical library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weight e^(alpha*n) overflows f64 (alpha = {alpha}, n = {index})")]
    RangeOverflow { alpha: f64, index: usize },

    #[error("invalid scale pair: need alpha' < alpha, got alpha' = {alpha_prime}, alpha = {alpha}")]
    InvalidScalePair { alpha_prime: f64, alpha: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time order violated: t = {t} < s = {s}")]
    TimeOrderViolation { s: f64, t: f64 },

    #[error("oracle integration failed: {0}")]
    OracleFailure(String),

    #[error("existence horizon exceeded: t - s = {span} >= T = {horizon}")]
    ExistenceHorizonExceeded { span: f64, horizon: f64 },

    #[error("horizon too tight: rho = {rho} exceeds rho_max = {rho_max}")]
    HorizonTooTight { rho: f64, rho_max: f64 },

    #[error("horizon exhausted: requested t = {requested}, maximal reachable t = {max_reachable}")]
    HorizonExhausted { requested: f64, max_reachable: f64 },

    #[error("contraction certificate failed: sampled propagator norm {sampled} > {limit}")]
    ContractionCertificateFailed { sampled: f64, limit: f64 },

    #[error("hierarchy closure unsound: defect {defect} exceeds tolerance {tolerance}")]
    ClosureUnsound { defect: f64, tolerance: f64 },

    #[error("majorant evaluated outside its fitted range: alpha = {alpha}, range = ({lo}, {hi}]")]
    MajorantOutOfRange { alpha: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
