use thiserror::Error;

use crate::expr::ShiftedVar;
use crate::multi_index::MultiIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbound variable(s): {}", list_vars(.0))]
    UnboundVariable(Vec<ShiftedVar>),

    #[error("division by zero in `{0}`")]
    DivisionByZero(String),

    #[error("invalid variable: {0}")]
    InvalidVariable(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("invariant `{which}` violated at {at}")]
    InvariantViolation { which: String, at: String },

    #[error("rank deficient at {point}: rank {rank}, required {required}")]
    RankDeficient { point: String, rank: usize, required: usize },

    #[error("Newton iteration diverged at {point} (residual {residual:e})")]
    NewtonDivergence { point: String, residual: f64 },

    #[error("singular Jacobian at {point}")]
    SingularJacobian { point: String },

    #[error("no closed-form inverse of the extended map is available")]
    NoClosedFormPsi,

    #[error("flat output depends on future inputs: {0}")]
    NotInputIndependentFlatOutput(String),

    #[error("no component selection achieves the required rank: {0}")]
    RankSelectionFailure(String),

    #[error("minimality violated: A = {0} is feasible with #A < #kappa")]
    MinimalityViolated(MultiIndex),

    #[error("controller state selection incomplete: rank {found}, required {required}")]
    SelectionIncomplete { found: usize, required: usize },

    #[error("feedback synthesis failed: {equations} equations vs {unknowns} unknowns ({detail})")]
    SynthesisMismatch { equations: usize, unknowns: usize, detail: String },

    #[error("eigenvalue {0} is not strictly inside the unit circle")]
    UnstableEigenvalue(String),

    #[error("complex eigenvalue {0} has no conjugate partner")]
    NonConjugatePair(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step { step, source: Box::new(self) }
    }
}

fn list_vars(vars: &[ShiftedVar]) -> String {
    vars.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}
