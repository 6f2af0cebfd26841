//! Claims reserving for run-off triangles.
//!
//! The crate fits two multiplicative models to an incremental claims
//! triangle on the log scale — a cross-classified GLM with fixed origin and
//! development effects, and a hierarchical GLM where the origin-year
//! effects are gamma-distributed random effects estimated by h-likelihood —
//! then projects the unobserved lower triangle and quantifies prediction
//! uncertainty, analytically for the GLM and by a residual bootstrap for
//! both.
//!
//! # Layout
//!
//! * [`triangle`] — the triangle data structure, CSV parsing/formatting,
//!   incremental/cumulative conversion.
//! * [`tweedie`] — variance functions, unit deviances, Pearson residuals,
//!   and random sampling for the Tweedie family, `p ∈ {1} ∪ (1, 2]`.
//! * [`glm`] — the fixed-effects engine: IRLS with a log link, dispersion
//!   and covariance estimates, analytic prediction error.
//! * [`hglm`] — the hierarchical engine: augmented IRLS over fixed and
//!   random effects, leverage-corrected dispersion estimation.
//! * [`model`] — a unifying wrapper over both engines.
//! * [`reserving`] — reserve summaries per origin year.
//! * [`bootstrap`] — replicate-based RMSEP and error quantiles.
//!
//! # Example
//!
//! ```
//! use runoff_core::{
//!     bootstrap::{bootstrap_run, error_quantiles, rmsep, BootstrapConfig},
//!     glm::FitControls,
//!     model::{FittedModel, ModelSpec},
//!     reserving::reserve_report,
//!     triangle::{Triangle, TriangleKind},
//!     tweedie::FamilyPower,
//! };
//!
//! let triangle = Triangle::from_rows(
//!     vec![
//!         vec![700.0, 350.0, 160.0, 80.0],
//!         vec![820.0, 410.0, 190.0],
//!         vec![640.0, 330.0],
//!         vec![780.0],
//!     ],
//!     TriangleKind::Incremental,
//! )?;
//!
//! // Point estimates.
//! let model = FittedModel::fit(
//!     &triangle,
//!     &ModelSpec::hglm(FamilyPower::ODP),
//!     &FitControls::default(),
//! )?;
//! let reserves = reserve_report(&model)?;
//! assert!(reserves.total > 0.0);
//!
//! // Prediction error by bootstrap.
//! let config = BootstrapConfig::new(ModelSpec::hglm(FamilyPower::ODP), 50, 42);
//! let result = bootstrap_run(&triangle, &config, 1)?;
//! let error = rmsep(&result);
//! let quantiles = error_quantiles(&result, &[0.5, 0.9])?;
//! assert!(error.total > 0.0);
//! assert!(quantiles.total[0] <= quantiles.total[1]);
//! # Ok::<(), runoff_core::Error>(())
//! ```

pub mod bootstrap;
pub mod error;
pub mod glm;
pub mod hglm;
mod linalg;
pub mod model;
pub mod reserving;
pub mod triangle;
pub mod tweedie;

pub use bootstrap::{BootstrapConfig, BootstrapResult, QuantileTable, ReplicateRecord};
pub use error::{Error, Result};
pub use glm::{FitControls, GlmFit, PredictionErrorReport};
pub use hglm::{HglmFit, HglmSpec};
pub use model::{FittedModel, ModelKind, ModelSpec};
pub use reserving::{OriginReserve, ReserveOptions, ReserveReport};
pub use triangle::{CellIndex, Triangle, TriangleKind};
pub use tweedie::FamilyPower;
