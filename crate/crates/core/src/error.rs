use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error(
        "transition at t={t}, leader action {leader_action}, state {state}, action {action} \
         is not a distribution at simplex vertex {vertex}: {detail}"
    )]
    VertexValidation {
        t: usize,
        leader_action: usize,
        state: usize,
        action: usize,
        vertex: usize,
        detail: String,
    },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} has {requested} entries, above the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("normalisation drift {drift:e} at t={t} exceeds tolerance")]
    NormalizationDrift { t: usize, drift: f64 },

    #[error("KKT certificate residual {residual:e} in {condition} above tolerance {tol:e}")]
    CertificateResidual {
        condition: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("no feasible equilibrium candidate found for leader action {leader_action} at epsilon {epsilon}")]
    NoFeasibleCandidate { leader_action: usize, epsilon: f64 },

    #[error("perturbation infeasible after {attempts} attempts: {detail}")]
    InfeasiblePerturbation { attempts: usize, detail: String },

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("premise violated: {0}")]
    PremiseViolation(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}
