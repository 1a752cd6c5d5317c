use thiserror::Error;

/// Crate-wide error type. Each variant maps to a distinct CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("k = {k} lies in the guard band of threshold {threshold} (mode {mode})")]
    Threshold { k: f64, threshold: f64, mode: i64 },
    #[error("mode cutoff {cutoff} is below the propagating count {propagating}")]
    ModeCutoff { cutoff: usize, propagating: usize },
    #[error("modal basis built at k = {basis_k} but requested k = {k}")]
    BasisMismatch { basis_k: f64, k: f64 },
    #[error("near-singular system: condition estimate {cond:.3e}")]
    SingularSystem { cond: f64 },
    #[error("S_T indicator: near-singular lower-domain solve (condition estimate {cond:.3e})")]
    StCondition { cond: f64 },
    #[error("(m+alpha)^2 + E - V is not strictly positive at x2 = {x2}")]
    Positivity { x2: f64 },
    #[error("no bound state within 1e-6 of E = {e}; nearest computed eigenvalue {nearest}")]
    NoBoundState { e: f64, nearest: f64 },
    #[error("eigensolver failed to converge: {0}")]
    Convergence(String),
    #[error("rational fit needs at least 12 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("approximant pole at {re} + {im}i inside the fit window")]
    PoleInWindow { re: f64, im: f64 },
    #[error("k = {k} outside the trust region [{lo}, {hi}]")]
    ExtrapolationRange { k: f64, lo: f64, hi: f64 },
    #[error("missing propagating amplitudes for (n = {n}, k = {k})")]
    IncompleteData { n: i64, k: f64 },
    #[error("trace expansion residual {residual:.3e} exceeds 0.05 for basis index {index}")]
    IllConditionedSpan { residual: f64, index: i64 },
    #[error("input spectrum leaks {fraction:.3e} of its energy outside the provided k-band")]
    BandCoverage { fraction: f64 },
    #[error("time step {dt} violates the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("k = {k} collides with threshold {threshold} (mode {mode}); nearest safe k = {suggestion}")]
    ThresholdCollision {
        k: f64,
        threshold: f64,
        mode: i64,
        suggestion: f64,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Json(_) => 2,
            Error::Threshold { .. } | Error::ThresholdCollision { .. } => 3,
            Error::SingularSystem { .. } | Error::StCondition { .. } => 4,
            Error::BandCoverage { .. } | Error::CflViolation { .. } => 5,
            Error::ModeCutoff { .. } | Error::BasisMismatch { .. } => 6,
            Error::Positivity { .. } | Error::NoBoundState { .. } => 7,
            Error::InsufficientSamples(_)
            | Error::PoleInWindow { .. }
            | Error::ExtrapolationRange { .. } => 8,
            Error::IncompleteData { .. } | Error::IllConditionedSpan { .. } => 9,
            Error::Convergence(_) => 10,
            Error::Io(_) => 11,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
