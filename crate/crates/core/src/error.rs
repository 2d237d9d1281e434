use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TheoryError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("functor {functor} used with arity {found}, expected {expected}")]
    ArityMismatch {
        functor: String,
        expected: usize,
        found: usize,
    },
    #[error("axiom {axiom}: variable {var} occurs on the right side only")]
    FreeRhsVariable { axiom: String, var: String },
    #[error("start sentence must be ground")]
    NonGroundStart,
    #[error("goal sentence must be ground")]
    NonGroundGoal,
    #[error("missing start declaration")]
    MissingStart,
    #[error("duplicate axiom name {0}")]
    DuplicateAxiom(String),
    #[error("{0} is a reserved name")]
    ReservedName(String),
    #[error("unsupported rule: {0}")]
    UnsupportedRule(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("step {0} does not apply")]
    InvalidAt(usize),
    #[error("unknown axiom {0}")]
    UnknownAxiom(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search frontier exceeded {limit} sentences at depth {depth}")]
    BudgetExceeded { limit: usize, depth: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("index shape mismatch at {path}: {msg}")]
    Shape { path: String, msg: String },
    #[error("unknown axiom {0}")]
    UnknownAxiom(String),
    #[error("{pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("composed relation is empty")]
    NoCompose,
}

/// Failures of the symbolic solvers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("no verified affine closed form for {0}")]
    NotLinearizable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("composed relation is empty")]
    NoCompose,
    #[error("operation not implemented: {0}")]
    Unimplemented(String),
    #[error("solution space is infinite: {0}")]
    Underdetermined(String),
    #[error("no unambiguous atom left; unresolved: {0}")]
    Ambiguous(String),
    #[error("replay of a tuned proof failed: {0}")]
    InternalMismatch(String),
    #[error("{0}")]
    Scheme(#[from] SchemeError),
    #[error("condition system: {0}")]
    Syntax(String),
}
