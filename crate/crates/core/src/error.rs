use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode of the toolkit. Variants carry enough context to tell
/// which operation failed and where.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize, state: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no sign change on [{lo}, {hi}] (f = {f_lo:e}, {f_hi:e})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("trajectory did not reach the section at c = {c}: {reason}")]
    NoHit { c: f64, reason: String, turn_sign: f64 },

    #[error("spectrum error: {0}")]
    Spectrum(String),

    #[error("resonant order-{order} solve (condition number {cond:e})")]
    Resonance { order: usize, cond: f64 },

    #[error("no s with invariance error below {threshold:e} (min error {min_error:e})")]
    OrderTooLow { threshold: f64, min_error: f64 },

    #[error("stable manifold escaped before the section at c = {c}: state {state:?}")]
    ManifoldEscape { c: f64, state: Vec<f64> },

    #[error("near-singular derivative in {op}: |{which}| = {value:e}")]
    NearSingular {
        op: &'static str,
        which: &'static str,
        value: f64,
    },

    #[error("singular jet: {0}")]
    SingularJet(&'static str),

    #[error("cell {cell} never crossed {threshold} mV")]
    NoWave { cell: usize, threshold: f64 },

    #[error("parse error on line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("simulation failed at t = {t}: {detail}")]
    Simulation { t: f64, detail: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
