//! Cross-classified Tweedie GLM on the observed cells of a run-off triangle.
//!
//! The mean model is log-linear in an intercept, origin-year factors, and
//! development-year factors:
//!
//! ```text
//! log mu_ij = c + a_i + b_j,    a_0 = b_0 = 0 (corner constraints),
//! Var(Y_ij) = phi mu_ij^p.
//! ```
//!
//! Fitting is iteratively reweighted least squares with working weights
//! `mu^(2-p)` (log link) and working response `eta + (y - mu)/mu`. For
//! `p = 1` the fitted means reproduce the deterministic chain-ladder
//! projection, and fitted row and column sums match the observed ones —
//! both properties are exercised heavily by the test suite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::triangle::{CellIndex, SquareGrid, Triangle, TriangleKind};
use crate::tweedie::{self, FamilyPower};

/// Iteration budget and convergence tolerance for the IRLS loop.
#[derive(Debug, Clone)]
pub struct FitControls {
    /// Hard cap on IRLS iterations.
    pub max_iterations: usize,
    /// Relative change in quasi-deviance below which the fit has converged.
    pub tolerance: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            max_iterations: 200,
            tolerance: 1e-8,
        }
    }
}

/// Design matrix over the observed cells, rows in origin-major cell order.
#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub cells: Vec<CellIndex>,
}

/// Number of mean parameters for a triangle with largest index `n`.
pub fn parameter_count(n: usize) -> usize {
    2 * n + 1
}

/// The design row of one cell: `[1, origin 1..n indicators, dev 1..n indicators]`.
///
/// Future cells use the same layout, so predictions never extrapolate beyond
/// development year `n`.
pub fn design_row(n: usize, cell: CellIndex) -> Vec<f64> {
    let mut row = vec![0.0; parameter_count(n)];
    row[0] = 1.0;
    if cell.origin > 0 {
        row[cell.origin] = 1.0;
    }
    if cell.dev > 0 {
        row[n + cell.dev] = 1.0;
    }
    row
}

/// Builds the observed-cell design for the cross-classified model.
///
/// A single-cell triangle has no development history and no future cells to
/// predict, so `n = 0` is rejected as degenerate.
pub fn build_design(triangle: &Triangle) -> Result<Design> {
    let n = triangle.n();
    if n == 0 {
        return Err(Error::DegenerateTriangle);
    }
    let cells: Vec<CellIndex> = triangle.observed_cells().collect();
    let cols = parameter_count(n);
    let mut matrix = DMatrix::zeros(cells.len(), cols);
    for (k, cell) in cells.iter().enumerate() {
        for (c, v) in design_row(n, *cell).into_iter().enumerate() {
            matrix[(k, c)] = v;
        }
    }
    Ok(Design { n, matrix, cells })
}

// -- generic IRLS driver ------------------------------------------------------

/// Outcome of an IRLS run on an arbitrary design (also used by the
/// hierarchical model to initialize its fixed effects).
pub(crate) struct DesignFit {
    pub coefficients: DVector<f64>,
    pub mu: DVector<f64>,
    pub quasi_deviance: f64,
    pub pearson_chi2: f64,
    /// Initial quasi-deviance followed by the value after each accepted
    /// iteration. Non-increasing from the second entry on.
    pub deviance_history: Vec<f64>,
    /// `(X' W X)^-1` at the final working weights.
    pub gram_inverse: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits a log-link Tweedie GLM by IRLS on the given design.
///
/// Starting values are `mu = max(y, floor)` with
/// `floor = 1e-6 * mean(|y|)`, i.e. essentially the saturated model, which
/// is why the first iteration is allowed to increase the deviance. From the
/// second iteration on, any step that would increase it is halved toward
/// the previous iterate until it no longer does.
pub(crate) fn fit_design(
    x: &DMatrix<f64>,
    y: &[f64],
    p: FamilyPower,
    controls: &FitControls,
) -> Result<DesignFit> {
    let rows = x.nrows();
    assert_eq!(rows, y.len());

    let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / rows as f64;
    if mean_abs == 0.0 {
        return Err(Error::Domain(
            "cannot fit a model to all-zero observations".into(),
        ));
    }
    let floor = 1e-6 * mean_abs;
    let mut mu = DVector::from_iterator(rows, y.iter().map(|&v| v.max(floor)));
    let mut eta = mu.map(f64::ln);
    let mut coefficients = DVector::zeros(x.ncols());
    let mut deviance = total_quasi_deviance(y, &mu, p)?;
    let mut history = vec![deviance];

    // Accumulated rounding noise in a deviance sum over data of this size.
    // Data an exact multiplicative model reproduces perfectly drive the
    // deviance to this level instead of 0, so both the step acceptance and
    // the convergence check must treat changes below it as no change.
    let noise = 64.0 * f64::EPSILON * mean_abs * rows as f64;

    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=controls.max_iterations {
        let pv = p.value();
        let weights = mu.map(|m| m.powf(2.0 - pv));
        let working = DVector::from_fn(rows, |k, _| eta[k] + (y[k] - mu[k]) / mu[k]);
        let solution = linalg::solve_weighted_least_squares(x, &working, &weights)?;

        // Step halving: accept the full IRLS step when it keeps the
        // quasi-deviance finite and (after the first iteration) non-increasing.
        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..=30 {
            let candidate = &coefficients * (1.0 - step) + &solution * step;
            let eta_try = x * &candidate;
            let mu_try = eta_try.map(f64::exp);
            if mu_try.iter().all(|m| m.is_finite() && *m > 0.0) {
                let dev_try = total_quasi_deviance(y, &mu_try, p)?;
                let acceptable = dev_try <= deviance + 1e-12 * deviance.abs() + noise;
                if dev_try.is_finite() && (iter == 1 || acceptable) {
                    let change = (dev_try - deviance).abs();
                    coefficients = candidate;
                    eta = eta_try;
                    mu = mu_try;
                    deviance = dev_try;
                    history.push(dev_try);
                    iterations = iter;
                    accepted = true;
                    if change <= controls.tolerance * dev_try.abs() + noise {
                        converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || converged {
            break;
        }
    }

    let pv = p.value();
    let final_weights = mu.map(|m| m.powf(2.0 - pv));
    let gram_inverse = linalg::gram_inverse(x, &final_weights)?;
    let pearson_chi2 = (0..rows)
        .map(|k| (y[k] - mu[k]).powi(2) / mu[k].powf(pv))
        .sum();

    Ok(DesignFit {
        coefficients,
        mu,
        quasi_deviance: deviance,
        pearson_chi2,
        deviance_history: history,
        gram_inverse,
        converged,
        iterations,
    })
}

fn total_quasi_deviance(y: &[f64], mu: &DVector<f64>, p: FamilyPower) -> Result<f64> {
    let mut total = 0.0;
    for (k, &yk) in y.iter().enumerate() {
        total += tweedie::quasi_unit_deviance(yk, mu[k], p)?;
    }
    Ok(total)
}

// -- the triangle GLM ---------------------------------------------------------

/// A fitted cross-classified Tweedie GLM.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub power: FamilyPower,
    pub n: usize,
    /// `[c, a_1..a_n, b_1..b_n]`; the corner effects `a_0`, `b_0` are zero by
    /// construction and not stored.
    pub coefficients: Vec<f64>,
    /// Pearson dispersion estimate `chi^2 / (N - (2n + 1))`, or zero when the
    /// model is saturated (`n = 1`) and no degrees of freedom remain.
    pub dispersion: f64,
    /// Fitted means for every cell of the square, observed and future.
    pub fitted: SquareGrid,
    /// Pearson residuals `(y - mu) / sqrt(mu^p)` over observed cells,
    /// origin-major.
    pub residuals: Vec<(CellIndex, f64)>,
    /// `phi_hat (X' W X)^-1` at the final working weights.
    pub coef_covariance: DMatrix<f64>,
    /// `(X' W X)^-1` unscaled, so a user-fixed dispersion can rebuild the
    /// covariance exactly (including when `dispersion` is zero).
    pub(crate) gram_inverse: DMatrix<f64>,
    /// Final quasi-deviance (a true deviance when all observations are in the
    /// family domain).
    pub deviance: f64,
    pub pearson_chi2: f64,
    /// Initial quasi-deviance followed by one value per accepted iteration.
    pub deviance_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// Origin-year effect `a_i` (zero for `i = 0`).
    pub fn origin_effect(&self, origin: usize) -> f64 {
        if origin == 0 {
            0.0
        } else {
            self.coefficients[origin]
        }
    }

    /// Development-year effect `b_j` (zero for `j = 0`).
    pub fn dev_effect(&self, dev: usize) -> f64 {
        if dev == 0 {
            0.0
        } else {
            self.coefficients[self.n + dev]
        }
    }

    /// `c + a_i + b_j` for any cell of the square.
    pub fn linear_predictor(&self, cell: CellIndex) -> f64 {
        self.intercept() + self.origin_effect(cell.origin) + self.dev_effect(cell.dev)
    }
}

/// Fits the cross-classified Tweedie GLM to an incremental triangle.
///
/// Requirements checked up front: the triangle is incremental with `n >= 1`,
/// every development-column sum is strictly positive, and the observations
/// lie in the family domain (`y > 0` for `p = 2`, `y >= 0` for `1 < p < 2`;
/// `p = 1` additionally accepts negative cells, which the quasi-deviance
/// handles — see [`tweedie::quasi_unit_deviance`]).
pub fn fit_glm(triangle: &Triangle, p: FamilyPower, controls: &FitControls) -> Result<GlmFit> {
    if triangle.kind() != TriangleKind::Incremental {
        return Err(Error::KindMismatch {
            expected: TriangleKind::Incremental,
            found: triangle.kind(),
        });
    }
    let design = build_design(triangle)?;
    let n = design.n;
    let y: Vec<f64> = triangle.observed_values().map(|(_, v)| v).collect();

    for (j, sum) in triangle.column_sums().iter().enumerate() {
        if *sum <= 0.0 {
            return Err(Error::Domain(format!(
                "development column {j} has nonpositive sum {sum}; the log-scale \
                 column effect is not estimable"
            )));
        }
    }
    if p.is_gamma() {
        if let Some((cell, v)) = triangle.observed_values().find(|(_, v)| *v <= 0.0) {
            return Err(Error::Domain(format!(
                "p = 2 requires strictly positive cells; cell ({}, {}) is {v}",
                cell.origin, cell.dev
            )));
        }
    } else if !p.is_odp() {
        if let Some((cell, v)) = triangle.observed_values().find(|(_, v)| *v < 0.0) {
            return Err(Error::Domain(format!(
                "1 < p < 2 requires nonnegative cells; cell ({}, {}) is {v}",
                cell.origin, cell.dev
            )));
        }
    }

    let fit = fit_design(&design.matrix, &y, p, controls)?;

    let cell_count = y.len();
    let dof = cell_count - parameter_count(n);
    let dispersion = if dof > 0 {
        fit.pearson_chi2 / dof as f64
    } else {
        0.0
    };
    let coef_covariance = &fit.gram_inverse * dispersion;

    let coefficients: Vec<f64> = fit.coefficients.iter().copied().collect();
    let mut fitted = SquareGrid::new(n + 1, 0.0);
    for i in 0..=n {
        for j in 0..=n {
            let cell = CellIndex::new(i, j);
            let eta: f64 = design_row(n, cell)
                .iter()
                .zip(&coefficients)
                .map(|(x, b)| x * b)
                .sum();
            fitted.set(cell, eta.exp());
        }
    }

    let mut residuals = Vec::with_capacity(cell_count);
    for (cell, value) in triangle.observed_values() {
        residuals.push((cell, tweedie::pearson_residual(value, fitted.get(cell), p)?));
    }

    Ok(GlmFit {
        power: p,
        n,
        coefficients,
        dispersion,
        fitted,
        residuals,
        coef_covariance,
        gram_inverse: fit.gram_inverse,
        deviance: fit.quasi_deviance,
        pearson_chi2: fit.pearson_chi2,
        deviance_history: fit.deviance_history,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

// -- analytic prediction error ------------------------------------------------

/// Root mean squared errors of prediction, one entry per origin year
/// (`per_origin[0]` is always zero — origin 0 has no future cells) plus the
/// all-years total.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PredictionErrorReport {
    pub per_origin: Vec<f64>,
    pub total: f64,
}

/// Analytic RMSEP of the GLM reserves: process variance plus estimation
/// variance,
///
/// ```text
/// MSEP = sum_fut phi mu_ij^p  +  a' Cov(beta) a,    a = sum_fut mu_ij x_ij,
/// ```
///
/// reported as `sqrt(MSEP)` per origin year and for the total. The
/// estimation term propagates the full coefficient covariance, so
/// correlations between future cells are accounted for.
pub fn glm_msep_analytic(fit: &GlmFit) -> Result<PredictionErrorReport> {
    if !fit.converged {
        return Err(Error::StaleFit);
    }
    let n = fit.n;
    let per_origin: Vec<f64> = (0..=n)
        .map(|i| {
            let cells: Vec<CellIndex> = (n - i + 1..=n)
                .filter(|_| i >= 1)
                .map(|j| CellIndex::new(i, j))
                .collect();
            rmsep_over(fit, &cells)
        })
        .collect();
    let all: Vec<CellIndex> = crate::triangle::future_cells(n).collect();
    let total = rmsep_over(fit, &all);
    Ok(PredictionErrorReport { per_origin, total })
}

fn rmsep_over(fit: &GlmFit, cells: &[CellIndex]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    let n = fit.n;
    let pv = fit.power.value();
    let cols = parameter_count(n);
    let mut process = 0.0;
    let mut aggregate = DVector::zeros(cols);
    for &cell in cells {
        let mu = fit.fitted.get(cell);
        process += fit.dispersion * mu.powf(pv);
        let x = DVector::from_vec(design_row(n, cell));
        aggregate += x * mu;
    }
    let estimation = (aggregate.transpose() * &fit.coef_covariance * &aggregate)[(0, 0)];
    (process + estimation).sqrt()
}
