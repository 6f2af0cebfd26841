//! Reserve prediction: summing fitted means over the unobserved lower
//! triangle, per origin year and in total.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FittedModel;
use crate::triangle::future_cells;

/// Options for [`reserve_report_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ReserveOptions {
    /// Predict from a fit that exhausted its iteration budget. Off by
    /// default: predictions from an unconverged fit are usually garbage, so
    /// asking for them must be explicit.
    pub accept_unconverged: bool,
}

/// Reserve for one origin year.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OriginReserve {
    pub origin: usize,
    pub reserve: f64,
}

/// Predicted outstanding claims per origin year and overall.
///
/// Origin year 0 is fully developed (it has no future cells), so its entry
/// is always present with reserve 0 — keeping one row per origin year makes
/// downstream joins trivial.
#[derive(Debug, Clone, Serialize)]
pub struct ReserveReport {
    pub per_origin: Vec<OriginReserve>,
    pub total: f64,
}

/// Fitted mean for one future cell; errors on an observed cell, where the
/// model's fitted value is not a prediction.
pub fn predict_cell(model: &FittedModel, origin: usize, dev: usize) -> Result<f64> {
    let n = model.n();
    if origin > n || dev > n {
        return Err(Error::Domain(format!(
            "cell ({origin}, {dev}) is outside the {size}x{size} square",
            size = n + 1
        )));
    }
    if origin + dev <= n {
        return Err(Error::Domain(format!(
            "cell ({origin}, {dev}) is observed; predictions only cover the future triangle"
        )));
    }
    Ok(model.fitted_mean(crate::triangle::CellIndex::new(origin, dev)))
}

/// Reserves from a converged fit. See [`reserve_report_with`].
pub fn reserve_report(model: &FittedModel) -> Result<ReserveReport> {
    reserve_report_with(model, ReserveOptions::default())
}

/// Sums fitted means over the future triangle, origin-major, so the total is
/// reproducible bit-for-bit across runs.
pub fn reserve_report_with(model: &FittedModel, options: ReserveOptions) -> Result<ReserveReport> {
    if !model.converged() && !options.accept_unconverged {
        return Err(Error::StaleFit);
    }
    let n = model.n();
    let mut per_origin: Vec<OriginReserve> = (0..=n)
        .map(|origin| OriginReserve {
            origin,
            reserve: 0.0,
        })
        .collect();
    for cell in future_cells(n) {
        per_origin[cell.origin].reserve += model.fitted_mean(cell);
    }
    let total = per_origin.iter().map(|r| r.reserve).sum();
    Ok(ReserveReport { per_origin, total })
}
