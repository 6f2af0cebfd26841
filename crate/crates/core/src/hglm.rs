//! Hierarchical Tweedie GLM with gamma origin-year random effects, fitted by
//! maximizing the hierarchical likelihood through an augmented GLM.
//!
//! The model keeps the development pattern as fixed effects but replaces the
//! origin-year factors of the plain GLM with multiplicative random effects:
//!
//! ```text
//! Y_ij | u_i ~ Tweedie(mu_ij, phi, p),   log mu_ij = c + b_j + v_i,
//! v_i = log u_i,   u_i ~ Gamma(mean 1, variance phi_u),   i = 0..=n.
//! ```
//!
//! Every origin year gets a random effect — there is no corner constraint on
//! the random side; the gamma prior with unit mean is what pins the level.
//!
//! # Estimation
//!
//! The joint score in `(c, b, v)` is solved as one weighted least-squares
//! problem on the augmented design `[X Z; 0 I]`: each origin year
//! contributes a pseudo-observation with value 1 (the prior mean of `u_i`).
//! On the log scale the gamma prior contributes `(v_i - u_i)/phi_u` to the
//! h-likelihood, so the pseudo-row score is `(1 - u_i)/phi_u` and its Fisher
//! weight is `u_i/phi_u` — for each origin year the stationarity condition
//! is the credibility-style balance
//!
//! ```text
//! sum_j (y_ij - mu_ij)/phi + (1 - u_i)/phi_u = 0.
//! ```
//!
//! Dispersions come from the interconnected gamma-GLM step of h-likelihood
//! estimation: each deviance component is inflated by its leverage,
//! `d/(1 - q)` with prior weight `(1 - q)/2`, which for an intercept-only
//! gamma GLM collapses to
//!
//! ```text
//! phi_hat   = sum_data d_ij / (N - sum_data q),
//! phi_u_hat = sum_i d_u(u_i) / ((n + 1) - sum_rand q),
//! ```
//!
//! with `d_u(u) = 2 (u - 1 - ln u)`. The mean step and the dispersion step
//! alternate until both dispersions settle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{self, FitControls};
use crate::linalg;
use crate::triangle::{CellIndex, SquareGrid, Triangle, TriangleKind};
use crate::tweedie::{self, FamilyPower};

/// Outer-loop cap on mean/dispersion alternations.
const OUTER_CAP: usize = 50;
/// Relative tolerance on both dispersions for outer convergence.
const OUTER_TOL: f64 = 1e-6;
/// Sup-norm tolerance on `(c, b, v)` for the inner mean step.
const MEAN_TOL: f64 = 1e-10;
/// Dispersion floor: below this the random effects have fully shrunk to 1.
const PHI_U_FLOOR: f64 = 1e-10;

/// Model choices for the hierarchical fit.
#[derive(Debug, Clone)]
pub struct HglmSpec {
    /// Variance power of the response family.
    pub p: FamilyPower,
    /// Variance power of the random-effect family. Only the conjugate gamma
    /// case `p_u = 2` is supported; it is the one with an exact h-likelihood
    /// score, and the only one the dispersion step is calibrated for.
    pub p_u: FamilyPower,
    /// Fix the response dispersion instead of estimating it.
    pub fix_phi: Option<f64>,
    /// Fix the random-effect dispersion instead of estimating it.
    pub fix_phi_u: Option<f64>,
}

impl HglmSpec {
    pub fn new(p: FamilyPower) -> Self {
        HglmSpec {
            p,
            p_u: FamilyPower::GAMMA,
            fix_phi: None,
            fix_phi_u: None,
        }
    }
}

/// A fitted hierarchical GLM.
#[derive(Debug, Clone)]
pub struct HglmFit {
    pub power: FamilyPower,
    pub power_u: FamilyPower,
    pub n: usize,
    pub intercept: f64,
    /// Development effects `b_1..b_n` (`b_0 = 0` by the corner constraint).
    pub dev_effects: Vec<f64>,
    /// Random origin-year effects `u_0..u_n` on the response scale.
    pub u: Vec<f64>,
    /// The same effects on the log scale, `v_i = ln u_i`.
    pub v: Vec<f64>,
    /// Response dispersion `phi`.
    pub dispersion: f64,
    /// Random-effect dispersion `phi_u`.
    pub dispersion_u: f64,
    /// Fitted means `exp(c + b_j) u_i` for every cell of the square.
    pub fitted: SquareGrid,
    /// Pearson residuals over observed cells, origin-major.
    pub residuals: Vec<(CellIndex, f64)>,
    /// Hat-matrix diagonal of the augmented system: one entry per observed
    /// cell (origin-major) followed by one per origin-year pseudo-row.
    pub leverages: Vec<f64>,
    /// Scaled h-likelihood deviance at the solution,
    /// `sum d(y, mu)/phi + sum d_u(u)/phi_u`.
    pub h_deviance: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Inner mean-step iterations summed over the outer loop.
    pub mean_iterations: usize,
    /// Set when the estimated `phi_u` collapsed to the floor: the data show
    /// no origin-year heterogeneity beyond the response variance.
    pub full_shrinkage: bool,
}

impl HglmFit {
    /// Development effect `b_j` (zero for `j = 0`).
    pub fn dev_effect(&self, dev: usize) -> f64 {
        if dev == 0 {
            0.0
        } else {
            self.dev_effects[dev - 1]
        }
    }

    /// `c + b_j + v_i` for any cell of the square.
    pub fn linear_predictor(&self, cell: CellIndex) -> f64 {
        self.intercept + self.dev_effect(cell.dev) + self.v[cell.origin]
    }

    /// Number of observed data rows behind this fit.
    pub fn data_rows(&self) -> usize {
        (self.n + 1) * (self.n + 2) / 2
    }

    /// Sum of hat values over the data rows: the effective number of mean
    /// parameters spent on the observations.
    pub fn data_leverage(&self) -> f64 {
        self.leverages[..self.data_rows()].iter().sum()
    }
}

/// Random-effect estimates as `(origin, u_i, v_i)` triples.
pub fn random_effect_estimates(fit: &HglmFit) -> Vec<(usize, f64, f64)> {
    (0..=fit.n).map(|i| (i, fit.u[i], fit.v[i])).collect()
}

/// Fits the hierarchical model to an incremental triangle.
///
/// Preconditions mirror [`glm::fit_glm`]: incremental kind, `n >= 1`,
/// strictly positive development-column sums, and observations inside the
/// family domain for the chosen `p`. Iteration exhaustion returns the fit
/// flagged `converged = false`; structural problems are hard errors.
pub fn fit_hglm(triangle: &Triangle, spec: &HglmSpec, controls: &FitControls) -> Result<HglmFit> {
    if triangle.kind() != TriangleKind::Incremental {
        return Err(Error::KindMismatch {
            expected: TriangleKind::Incremental,
            found: triangle.kind(),
        });
    }
    if !spec.p_u.is_gamma() {
        return Err(Error::Domain(format!(
            "only gamma random effects (p_u = 2) are supported, got p_u = {}",
            spec.p_u.value()
        )));
    }
    for (name, fix) in [("phi", spec.fix_phi), ("phi_u", spec.fix_phi_u)] {
        if let Some(v) = fix {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "fixed {name} must be positive and finite, got {v}"
                )));
            }
        }
    }

    let n = triangle.n();
    if n == 0 {
        return Err(Error::DegenerateTriangle);
    }
    for (j, sum) in triangle.column_sums().iter().enumerate() {
        if *sum <= 0.0 {
            return Err(Error::Domain(format!(
                "development column {j} has nonpositive sum {sum}; the log-scale \
                 column effect is not estimable"
            )));
        }
    }
    let p = spec.p;
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

    let cells: Vec<CellIndex> = triangle.observed_cells().collect();
    let y: Vec<f64> = triangle.observed_values().map(|(_, v)| v).collect();
    let data_rows = y.len();
    let cols = 2 * n + 2;

    // Rounding-noise level of the data deviance sum; dispersion estimates
    // are floored here so data an exact multiplicative model reproduces
    // (true dispersion 0) cannot push the working weights to infinity.
    let dev_noise = 64.0 * f64::EPSILON * y.iter().map(|v| v.abs()).sum::<f64>();
    let phi_floor = dev_noise / data_rows as f64;

    // Augmented design [X Z; 0 I]: columns are the intercept, the n
    // development indicators, then one v column per origin year.
    let mut t_aug = DMatrix::zeros(data_rows + n + 1, cols);
    for (k, cell) in cells.iter().enumerate() {
        t_aug[(k, 0)] = 1.0;
        if cell.dev > 0 {
            t_aug[(k, cell.dev)] = 1.0;
        }
        t_aug[(k, n + 1 + cell.origin)] = 1.0;
    }
    for m in 0..=n {
        t_aug[(data_rows + m, n + 1 + m)] = 1.0;
    }

    // Initialization: fixed effects from the development-only GLM (origin
    // factors dropped), random effects at their prior mean.
    let mut x_init = DMatrix::zeros(data_rows, n + 1);
    for (k, cell) in cells.iter().enumerate() {
        x_init[(k, 0)] = 1.0;
        if cell.dev > 0 {
            x_init[(k, cell.dev)] = 1.0;
        }
    }
    let init = glm::fit_design(&x_init, &y, p, controls)?;

    let mut delta = DVector::zeros(cols);
    for c in 0..=n {
        delta[c] = init.coefficients[c];
    }

    let mut phi = match spec.fix_phi {
        Some(v) => v,
        None => (init.pearson_chi2 / (data_rows - (n + 1)) as f64).max(phi_floor),
    };
    let mut phi_u = match spec.fix_phi_u {
        Some(v) => v,
        None => {
            // Moment start: variance of the per-origin observed/fitted ratios
            // under the development-only fit.
            let mut obs = vec![0.0; n + 1];
            let mut fit = vec![0.0; n + 1];
            for (k, cell) in cells.iter().enumerate() {
                obs[cell.origin] += y[k];
                fit[cell.origin] += init.mu[k];
            }
            let ratios: Vec<f64> = (0..=n).map(|i| obs[i] / fit[i]).collect();
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64;
            var.max(1e-4)
        }
    };

    let mut converged = false;
    let mut outer_iterations = 0;
    let mut mean_iterations = 0;
    let mut full_shrinkage = false;
    let mut step = mean_step(&t_aug, &y, p, phi, phi_u, delta, controls)?;

    for outer in 1..=OUTER_CAP {
        outer_iterations = outer;
        mean_iterations += step.iterations;

        let gram_inv = linalg::gram_inverse(&t_aug, &step.weights)?;
        let q = linalg::leverages(&t_aug, &step.weights, &gram_inv);
        let q_data: f64 = q[..data_rows].iter().sum();
        let q_rand: f64 = q[data_rows..].iter().sum();

        let mut d_data = 0.0;
        for (&yk, &mk) in y.iter().zip(&step.mu) {
            d_data += tweedie::quasi_unit_deviance(yk, mk, p)?;
        }
        let d_rand: f64 = step.u.iter().map(|&u| 2.0 * (u - 1.0 - u.ln())).sum();

        let phi_new = match spec.fix_phi {
            Some(v) => v,
            None => {
                let dof = data_rows as f64 - q_data;
                if dof <= 1e-8 {
                    return Err(Error::Domain(
                        "no residual degrees of freedom to estimate phi".into(),
                    ));
                }
                (d_data / dof).max(phi_floor)
            }
        };
        let phi_u_new = match spec.fix_phi_u {
            Some(v) => v,
            None => {
                let dof = (n + 1) as f64 - q_rand;
                let estimate = if dof <= 1e-8 { 0.0 } else { d_rand / dof };
                if estimate <= PHI_U_FLOOR {
                    full_shrinkage = true;
                    PHI_U_FLOOR
                } else {
                    full_shrinkage = false;
                    estimate
                }
            }
        };

        let phi_change = (phi_new - phi).abs() / phi.abs().max(1e-12);
        let phi_u_change = (phi_u_new - phi_u).abs() / phi_u.abs().max(1e-12);
        phi = phi_new;
        phi_u = phi_u_new;
        if phi_change < OUTER_TOL && phi_u_change < OUTER_TOL {
            converged = step.converged;
            break;
        }
        step = mean_step(&t_aug, &y, p, phi, phi_u, step.delta, controls)?;
    }

    // Final state at the settled dispersions.
    let delta = step.delta;
    let intercept = delta[0];
    let dev_effects: Vec<f64> = (1..=n).map(|j| delta[j]).collect();
    let v: Vec<f64> = (0..=n).map(|i| delta[n + 1 + i]).collect();
    let u: Vec<f64> = v.iter().map(|&vi| vi.exp()).collect();

    let mut fitted = SquareGrid::new(n + 1, 0.0);
    for (i, &vi) in v.iter().enumerate() {
        for j in 0..=n {
            let eta = intercept + if j > 0 { dev_effects[j - 1] } else { 0.0 } + vi;
            fitted.set(CellIndex::new(i, j), eta.exp());
        }
    }

    let mut residuals = Vec::with_capacity(data_rows);
    for (cell, value) in triangle.observed_values() {
        residuals.push((cell, tweedie::pearson_residual(value, fitted.get(cell), p)?));
    }

    let gram_inv = linalg::gram_inverse(&t_aug, &step.weights)?;
    let leverages = linalg::leverages(&t_aug, &step.weights, &gram_inv);

    Ok(HglmFit {
        power: p,
        power_u: spec.p_u,
        n,
        intercept,
        dev_effects,
        u,
        v,
        dispersion: phi,
        dispersion_u: phi_u,
        fitted,
        residuals,
        leverages,
        h_deviance: step.h_deviance,
        converged,
        outer_iterations,
        mean_iterations,
        full_shrinkage,
    })
}

// -- inner mean step ----------------------------------------------------------

struct MeanStep {
    delta: DVector<f64>,
    /// Data-row means at the solution.
    mu: DVector<f64>,
    /// Random effects `u_i = exp(v_i)` at the solution.
    u: Vec<f64>,
    /// Final augmented working weights (data rows then pseudo-rows).
    weights: DVector<f64>,
    h_deviance: f64,
    iterations: usize,
    converged: bool,
}

/// Joint IRLS update of `(c, b, v)` at fixed dispersions.
///
/// Working quantities, all for the log link:
/// * data rows: weight `mu^(2-p)/phi`, response `eta + (y - mu)/mu`;
/// * pseudo-rows: weight `u/phi_u`, response `v + (1 - u)/u`.
///
/// Steps that would increase the scaled h-deviance are halved toward the
/// previous iterate, so the objective is non-increasing across iterations.
fn mean_step(
    t_aug: &DMatrix<f64>,
    y: &[f64],
    p: FamilyPower,
    phi: f64,
    phi_u: f64,
    delta0: DVector<f64>,
    controls: &FitControls,
) -> Result<MeanStep> {
    let data_rows = y.len();
    let total_rows = t_aug.nrows();
    let pv = p.value();

    let mut delta = delta0;
    let mut objective = h_deviance(t_aug, y, p, phi, phi_u, &delta)?;
    let mut iterations = 0;
    let mut converged = false;

    // Absolute rounding noise of the scaled objective: the data deviance sum
    // carries ~eps * sum|y| of error (amplified by 1/phi), the random-effect
    // deviances a few eps each (amplified by 1/phi_u). Increases below this
    // level are indistinguishable from no change and must be accepted, or the
    // halving loop stalls on exactly-reproducible data.
    let obj_noise = 64.0
        * f64::EPSILON
        * (y.iter().map(|v| v.abs()).sum::<f64>() / phi
            + 4.0 * (total_rows - data_rows) as f64 / phi_u);

    for _ in 1..=controls.max_iterations {
        let eta = t_aug * &delta;
        let mut weights = DVector::zeros(total_rows);
        let mut working = DVector::zeros(total_rows);
        for k in 0..data_rows {
            let mu = eta[k].exp();
            weights[k] = mu.powf(2.0 - pv) / phi;
            working[k] = eta[k] + (y[k] - mu) / mu;
        }
        for m in data_rows..total_rows {
            let u = eta[m].exp();
            weights[m] = u / phi_u;
            working[m] = eta[m] + (1.0 - u) / u;
        }
        let solution = linalg::solve_weighted_least_squares(t_aug, &working, &weights)?;

        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..=30 {
            let candidate = &delta * (1.0 - step) + &solution * step;
            if let Ok(obj_try) = h_deviance(t_aug, y, p, phi, phi_u, &candidate) {
                if obj_try.is_finite() && obj_try <= objective + 1e-12 * objective.abs() + obj_noise
                {
                    let biggest = candidate.amax().max(1.0);
                    let moved = (&candidate - &delta).amax();
                    delta = candidate;
                    objective = obj_try;
                    iterations += 1;
                    accepted = true;
                    if moved < MEAN_TOL * biggest {
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

    let eta = t_aug * &delta;
    let mu = DVector::from_fn(data_rows, |k, _| eta[k].exp());
    let u: Vec<f64> = (data_rows..total_rows).map(|m| eta[m].exp()).collect();
    let mut weights = DVector::zeros(total_rows);
    for k in 0..data_rows {
        weights[k] = mu[k].powf(2.0 - pv) / phi;
    }
    for (m, &um) in u.iter().enumerate() {
        weights[data_rows + m] = um / phi_u;
    }

    Ok(MeanStep {
        h_deviance: objective,
        delta,
        mu,
        u,
        weights,
        iterations,
        converged,
    })
}

/// Scaled h-likelihood deviance `sum d(y, mu)/phi + sum d_u(u)/phi_u`; the
/// mean step minimizes this in `(c, b, v)` at fixed dispersions.
fn h_deviance(
    t_aug: &DMatrix<f64>,
    y: &[f64],
    p: FamilyPower,
    phi: f64,
    phi_u: f64,
    delta: &DVector<f64>,
) -> Result<f64> {
    let eta = t_aug * delta;
    let data_rows = y.len();
    let mut total = 0.0;
    for k in 0..data_rows {
        let mu = eta[k].exp();
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::Domain("mean overflowed during mean step".into()));
        }
        total += tweedie::quasi_unit_deviance(y[k], mu, p)? / phi;
    }
    for m in data_rows..t_aug.nrows() {
        let u = eta[m].exp();
        if !u.is_finite() || u <= 0.0 {
            return Err(Error::Domain(
                "random effect overflowed during mean step".into(),
            ));
        }
        total += 2.0 * (u - 1.0 - u.ln()) / phi_u;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::fit_glm;
    use approx::assert_relative_eq;

    fn controls() -> FitControls {
        FitControls::default()
    }

    /// A deterministic 6x6 triangle with genuine origin-year heterogeneity:
    /// row levels vary by up to +-30% around a common development pattern,
    /// plus mild non-multiplicative noise.
    fn heterogeneous_6x6() -> Triangle {
        let levels = [1.0, 1.3, 0.8, 1.15, 0.9, 1.05];
        let pattern = [1000.0, 600.0, 350.0, 180.0, 90.0, 45.0];
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..6 - i)
                    .map(|j| {
                        let noise = 1.0 + 0.04 * ((3 * i + 5 * j) as f64).sin();
                        (levels[i] * pattern[j] * noise).round()
                    })
                    .collect()
            })
            .collect();
        Triangle::from_rows(rows, TriangleKind::Incremental).unwrap()
    }

    #[test]
    fn rejects_non_gamma_random_effects() {
        let mut spec = HglmSpec::new(FamilyPower::ODP);
        spec.p_u = FamilyPower::new(1.5).unwrap();
        let err = fit_hglm(&heterogeneous_6x6(), &spec, &controls()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn satisfies_the_h_likelihood_score_equations() {
        let t = heterogeneous_6x6();
        let spec = HglmSpec::new(FamilyPower::ODP);
        let fit = fit_hglm(&t, &spec, &controls()).unwrap();
        assert!(fit.converged, "outer iterations {}", fit.outer_iterations);

        let n = t.n();
        let scale: f64 = t.observed_values().map(|(_, v)| v).sum::<f64>() / fit.dispersion;

        // Row equations: sum_j (y - mu)/phi + (1 - u_i)/phi_u = 0.
        for i in 0..=n {
            let data_part: f64 = t
                .observed_values()
                .filter(|(c, _)| c.origin == i)
                .map(|(c, v)| (v - fit.fitted.get(c)) / fit.dispersion)
                .sum();
            let prior_part = (1.0 - fit.u[i]) / fit.dispersion_u;
            assert!(
                (data_part + prior_part).abs() < 1e-6 * scale.max(1.0),
                "origin {i}: data {data_part}, prior {prior_part}"
            );
        }

        // Intercept equation: whole-triangle balance of fitted vs observed.
        let observed: f64 = t.observed_values().map(|(_, v)| v).sum();
        let fitted: f64 = t.observed_cells().map(|c| fit.fitted.get(c)).sum();
        assert_relative_eq!(observed, fitted, max_relative = 1e-6);

        // Development-effect equations: per-column balance for j >= 1.
        for j in 1..=n {
            let obs: f64 = t
                .observed_values()
                .filter(|(c, _)| c.dev == j)
                .map(|(_, v)| v)
                .sum();
            let fit_sum: f64 = t
                .observed_cells()
                .filter(|c| c.dev == j)
                .map(|c| fit.fitted.get(c))
                .sum();
            assert_relative_eq!(obs, fit_sum, max_relative = 1e-6);
        }
    }

    #[test]
    fn random_effects_track_row_levels() {
        let fit = fit_hglm(
            &heterogeneous_6x6(),
            &HglmSpec::new(FamilyPower::ODP),
            &controls(),
        )
        .unwrap();
        // Row 1 (level 1.3) must sit above row 2 (level 0.8), etc. Shrinkage
        // moves everything toward 1 but cannot reorder such wide gaps.
        assert!(fit.u[1] > fit.u[2]);
        assert!(fit.u[3] > fit.u[4]);
        assert!(fit.u[1] > 1.0);
        assert!(fit.u[2] < 1.0);
        // And the estimates are genuinely heterogeneous, not collapsed.
        assert!(!fit.full_shrinkage);
        assert!(fit.dispersion_u > 1e-6);
    }

    #[test]
    fn tiny_phi_u_shrinks_all_random_effects_to_one() {
        let mut spec = HglmSpec::new(FamilyPower::ODP);
        spec.fix_phi_u = Some(1e-8);
        let t = heterogeneous_6x6();
        let fit = fit_hglm(&t, &spec, &controls()).unwrap();
        for (i, &u) in fit.u.iter().enumerate() {
            assert!((u - 1.0).abs() < 1e-3, "u[{i}] = {u}");
        }
        // Fixed effects collapse to the development-only GLM.
        let mut x_init = DMatrix::zeros(t.observed_count(), t.n() + 1);
        for (k, cell) in t.observed_cells().enumerate() {
            x_init[(k, 0)] = 1.0;
            if cell.dev > 0 {
                x_init[(k, cell.dev)] = 1.0;
            }
        }
        let y: Vec<f64> = t.observed_values().map(|(_, v)| v).collect();
        let reduced = glm::fit_design(&x_init, &y, FamilyPower::ODP, &controls()).unwrap();
        assert!((fit.intercept - reduced.coefficients[0]).abs() < 1e-3);
        for j in 1..=t.n() {
            assert!((fit.dev_effect(j) - reduced.coefficients[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn huge_phi_u_recovers_the_fixed_effects_glm() {
        let mut spec = HglmSpec::new(FamilyPower::ODP);
        spec.fix_phi_u = Some(1e6);
        let t = heterogeneous_6x6();
        let hglm = fit_hglm(&t, &spec, &controls()).unwrap();
        let glm = fit_glm(&t, FamilyPower::ODP, &controls()).unwrap();
        // Reserves per origin year agree within 0.1%.
        for i in 1..=t.n() {
            let h: f64 = t
                .future_cells()
                .filter(|c| c.origin == i)
                .map(|c| hglm.fitted.get(c))
                .sum();
            let g: f64 = t
                .future_cells()
                .filter(|c| c.origin == i)
                .map(|c| glm.fitted.get(c))
                .sum();
            assert_relative_eq!(h, g, max_relative = 1e-3);
        }
    }

    #[test]
    fn estimated_phi_u_sits_between_the_shrinkage_extremes() {
        let t = heterogeneous_6x6();
        let free = fit_hglm(&t, &HglmSpec::new(FamilyPower::ODP), &controls()).unwrap();
        // Row levels differ by ~30%, so the estimated random-effect variance
        // should be well away from both 0 and the free limit.
        assert!(free.dispersion_u > 1e-3, "phi_u = {}", free.dispersion_u);
        assert!(free.dispersion_u < 1.0, "phi_u = {}", free.dispersion_u);
    }

    #[test]
    fn leverages_are_valid_hat_values() {
        let t = heterogeneous_6x6();
        let fit = fit_hglm(&t, &HglmSpec::new(FamilyPower::ODP), &controls()).unwrap();
        assert_eq!(fit.leverages.len(), t.observed_count() + t.n() + 1);
        for &q in &fit.leverages {
            assert!(q > 0.0 && q < 1.0, "leverage {q}");
        }
        // The trace equals the number of augmented columns (full rank).
        let trace: f64 = fit.leverages.iter().sum();
        assert_relative_eq!(trace, (2 * t.n() + 2) as f64, max_relative = 1e-8);
    }

    #[test]
    fn fixing_both_dispersions_converges_immediately() {
        let mut spec = HglmSpec::new(FamilyPower::ODP);
        spec.fix_phi = Some(75.0);
        spec.fix_phi_u = Some(0.01);
        let fit = fit_hglm(&heterogeneous_6x6(), &spec, &controls()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.outer_iterations, 1);
        assert_eq!(fit.dispersion, 75.0);
        assert_eq!(fit.dispersion_u, 0.01);
    }

    #[test]
    fn exactly_multiplicative_rows_fully_shrink() {
        // Rows are exact scalar multiples of one pattern; after the GLM-level
        // column fit absorbs the average level, no origin heterogeneity
        // remains and phi_u collapses to the floor.
        let pattern = [800.0, 480.0, 240.0, 120.0];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4 - i).map(|j| pattern[j]).collect())
            .collect();
        let t = Triangle::from_rows(rows, TriangleKind::Incremental).unwrap();
        let fit = fit_hglm(&t, &HglmSpec::new(FamilyPower::ODP), &controls()).unwrap();
        assert!(fit.full_shrinkage);
        assert_eq!(fit.dispersion_u, PHI_U_FLOOR);
        for &u in &fit.u {
            assert!((u - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gamma_response_fits() {
        let spec = HglmSpec::new(FamilyPower::GAMMA);
        let fit = fit_hglm(&heterogeneous_6x6(), &spec, &controls()).unwrap();
        assert!(fit.converged);
        assert!(fit.dispersion > 0.0);
        assert!(fit.dispersion_u > 0.0);
    }

    #[test]
    fn rejects_cumulative_input() {
        let c = heterogeneous_6x6().to_cumulative().unwrap();
        let err = fit_hglm(&c, &HglmSpec::new(FamilyPower::ODP), &controls()).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }
}
