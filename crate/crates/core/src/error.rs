use thiserror::Error;

use crate::dyadic::DyadicInterval;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("interval {0} is not part of the grid")]
    OutsideGrid(DyadicInterval),

    #[error("intervals {0} and {1} have no common ancestor within the grid")]
    NoCommonAncestor(DyadicInterval, DyadicInterval),

    #[error("matrix has eigenvalue {eigenvalue:e} below the tolerated floor {floor:e}")]
    NotPositive { eigenvalue: f64, floor: f64 },

    #[error("matrix is singular: smallest eigenvalue {eigenvalue:e} (largest {largest:e})")]
    Singular { eigenvalue: f64, largest: f64 },

    #[error("weight cell {cell} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { cell: usize, condition: f64 },

    #[error("no block for interval {0}")]
    MissingBlock(DyadicInterval),

    #[error("band pair {source_interval} -> {target} has tree distance {distance} > radius {radius}")]
    BandRadius {
        source_interval: DyadicInterval,
        target: DyadicInterval,
        distance: u32,
        radius: u32,
    },

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate}, residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("linear map failed the linearity probe (discrepancy {0:e})")]
    NotLinear(f64),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("evaluation point {0} lies on a cell boundary")]
    BoundaryPoint(f64),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
