use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("case parse error: {0}")]
    Parse(String),

    #[error("case validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power flow did not converge after {iterations} iterations (worst mismatch {mismatch:.3e} pu at bus {bus})")]
    PowerFlowDiverged {
        iterations: usize,
        bus: u32,
        mismatch: f64,
    },

    #[error("singular power-flow Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("initialization of {unit} failed: {reason}")]
    Initialization { unit: String, reason: String },

    #[error("singular network matrix: {0}")]
    SingularNetwork(String),

    #[error("degenerate sequence network: {0}")]
    DegenerateSequence(String),

    #[error("undefined index: {0}")]
    UndefinedIndex(String),

    #[error("Monte Carlo run failed: {0}")]
    MonteCarlo(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("power flow fails at load scale {factor}: {source}")]
    LoadScalePowerFlow {
        factor: f64,
        #[source]
        source: Box<Error>,
    },
}
