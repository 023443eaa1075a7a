use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by [`ErrorClass`], which the CLI maps onto its exit
/// codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected ({near_zero} eigenvalues below the clamp tolerance)")]
    DisconnectedGraph { near_zero: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("Fiedler vector is ill-defined: lambda2 = {lambda2}, lambda3 = {lambda3}")]
    DegenerateFiedler { lambda2: f64, lambda3: f64 },

    #[error("residual signs put every node on one side of the cut")]
    EmptyCut,

    #[error("lower-bound weight of edge {edge} is {value}, must be > 0")]
    NonpositiveWeight { edge: usize, value: f64 },

    #[error("operation requires a {expected} model, got {found}")]
    WrongVariant {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state is not an equilibrium (field residual {residual:.3e})")]
    NotAnEquilibrium { residual: f64 },

    #[error("graph has a cycle (n = {n}, m = {m}); closed-form equilibria need a tree")]
    CyclicGraph { n: usize, m: usize },

    #[error("no equilibrium: max normalized flow {max_flow} >= 1")]
    NoEquilibrium { max_flow: f64 },

    #[error("crossing predicate does not change sign on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory ends at t = {t_end} before read time t* = {t_star}")]
    InsufficientHorizon { t_star: f64, t_end: f64 },

    #[error("window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("series has (near) zero variance")]
    DegenerateSeries,

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Coarse classification used for exit codes and the C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidGraph(_)
            | NotSquare { .. }
            | WrongVariant { .. }
            | InvalidModel(_)
            | InvalidArgument(_)
            | Parse { .. }
            | Validation(_)
            | CyclicGraph { .. } => ErrorClass::Validation,
            Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        }
    }

    /// Process exit code: 2 validation, 3 numeric failure, 4 io.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Io => 4,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidGraph(_) => "invalid_graph",
            DisconnectedGraph { .. } => "disconnected_graph",
            NotSymmetric { .. } => "not_symmetric",
            NotSquare { .. } => "not_square",
            NoConvergence { .. } => "no_convergence",
            DegenerateFiedler { .. } => "degenerate_fiedler",
            EmptyCut => "empty_cut",
            NonpositiveWeight { .. } => "nonpositive_weight",
            WrongVariant { .. } => "wrong_variant",
            InvalidModel(_) => "invalid_model",
            NotAnEquilibrium { .. } => "not_an_equilibrium",
            CyclicGraph { .. } => "cyclic_graph",
            NoEquilibrium { .. } => "no_equilibrium",
            NoBracket { .. } => "no_bracket",
            NonFiniteState { .. } => "non_finite_state",
            InvalidArgument(_) => "invalid_argument",
            InsufficientHorizon { .. } => "insufficient_horizon",
            WindowTooLarge { .. } => "window_too_large",
            DegenerateSeries => "degenerate_series",
            Parse { .. } => "parse_error",
            Validation(_) => "validation_error",
            Io { .. } => "io_error",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
