//! Error type shared across the crate.

use crate::triangle::TriangleKind;

/// Everything that can go wrong while building triangles, fitting models, or
/// running the bootstrap.
///
/// Display messages lead with the variant name so that command-line users and
/// log scrapers can match on a stable token.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The same (origin, development) cell appeared more than once in an input.
    #[error("DuplicateCell: cell ({origin}, {dev}) appears more than once")]
    DuplicateCell { origin: usize, dev: usize },

    /// An observed cell required for a strictly square run-off triangle is missing.
    #[error("IncompleteTriangle: missing observed cell ({origin}, {dev})")]
    IncompleteTriangle { origin: usize, dev: usize },

    /// A value was supplied for a cell in the unobserved (future) part of the square.
    #[error("FutureCellPresent: cell ({origin}, {dev}) lies beyond the latest diagonal")]
    FutureCellPresent { origin: usize, dev: usize },

    /// The input text could not be read as triangle CSV.
    #[error("ParseError: {0}")]
    Parse(String),

    /// An operation expected one triangle kind but was handed the other.
    #[error("KindMismatch: expected {expected:?} triangle, found {found:?}")]
    KindMismatch {
        expected: TriangleKind,
        found: TriangleKind,
    },

    /// A numeric argument lies outside the domain of the requested operation.
    #[error("DomainError: {0}")]
    Domain(String),

    /// The triangle has no development history to fit (n = 0).
    #[error("DegenerateTriangle: a single-cell triangle has no parameters to fit")]
    DegenerateTriangle,

    /// An iterative fit exhausted its iteration budget before converging.
    #[error("NoConvergence: fit did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    /// The model design matrix is rank-deficient at the working weights.
    #[error("SingularDesign: design matrix is numerically rank-deficient")]
    SingularDesign,

    /// A prediction was requested from a fit that did not converge.
    #[error("StaleFit: fit did not converge; pass accept_unconverged to use it anyway")]
    StaleFit,

    /// The bootstrap could not even fit the base model.
    #[error("BaseFitError: base model fit failed: {0}")]
    BaseFit(#[source] Box<Error>),

    /// A bootstrap replicate exhausted its redraw budget. The partial result
    /// holds every replicate that did complete, flagged as degraded.
    #[error(
        "TooManyFailures: redraw budget exhausted; {achieved} of {requested} replicates completed"
    )]
    TooManyFailures {
        achieved: usize,
        requested: usize,
        partial: Box<crate::bootstrap::BootstrapResult>,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
