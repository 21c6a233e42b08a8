use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} nodes, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cannot normalize a field with non-positive mass")]
    ZeroMass,

    #[error("negative or non-finite density value {value} at node {index}")]
    InvalidDensity { index: usize, value: f64 },

    #[error("operation not supported: {0}")]
    Unsupported(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear system is singular or not positive definite (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error(
        "nonlinear solve did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonlinearNonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("requested mass {requested} exceeds available mass {available}")]
    SelectionExceedsMass { requested: f64, available: f64 },

    #[error("redistribution capacity {available} is below the requested mass {requested}")]
    InsufficientCapacity { requested: f64, available: f64 },

    #[error("no mass lies outside the maximizing set")]
    EmptySelection,

    #[error("refinement level {level} failed: {source}")]
    StudyLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("random initializer degenerate after {0} redraws")]
    DegenerateDraw(usize),
}
