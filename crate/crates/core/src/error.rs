use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("incomplete exterior datum: {0}")]
    IncompleteDatum(String),
    #[error("admissibility violated on {} cell(s): {cells:?}", cells.len())]
    Admissibility { cells: Vec<usize> },
    #[error("invalid scale factor {0}")]
    InvalidScale(f64),
    #[error("cell {0} lies on the box boundary; stencil incomplete")]
    OutOfStencil(usize),
    #[error("radius {radius} beyond half-grid reach {reach}")]
    OutOfRange { radius: f64, reach: f64 },
    #[error("free boundary does not pass through the origin")]
    FreeBoundaryNotAtOrigin,
    #[error("exhaustive search over {cells} cells exceeds the limit {limit}")]
    TooLarge { cells: usize, limit: usize },
    #[error("quadratic solve did not converge after {iterations} iterations (kkt residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("inputs live on different grids")]
    GridMismatch,
}
