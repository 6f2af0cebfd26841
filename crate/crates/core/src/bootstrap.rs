//! Five-step residual bootstrap for reserve prediction error.
//!
//! For each replicate `b = 0..B`:
//!
//! 1. draw one Pearson residual per observed cell, with replacement, from
//!    the base fit's residual pool;
//! 2. form pseudo-data `y* = r* sqrt(mu_hat^p) + mu_hat` over the observed
//!    triangle;
//! 3. refit the configured model on the pseudo-triangle;
//! 4. sum the refit's predicted future values per origin year and in total;
//! 5. simulate "true" future values from the Tweedie family with the *base*
//!    fit's means and the *replicate's* dispersion, and sum those the same
//!    way.
//!
//! The spread of (predicted − simulated) across replicates measures
//! estimation error plus process error: step 4 varies with the resampled
//! parameters while step 5 varies with the process noise, so their
//! difference reproduces the classic prediction-error decomposition.
//!
//! Determinism: each replicate seeds its own counter-based RNG stream from
//! `(seed, b)`, so results are bit-identical across runs and across worker
//! thread counts, and replicates never share mutable state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{FitControls, PredictionErrorReport};
use crate::model::{FittedModel, ModelSpec};
use crate::reserving;
use crate::triangle::{CellIndex, Triangle, TriangleKind};
use crate::tweedie::{self, FamilyPower};

/// Bootstrap configuration. Everything that influences the numbers lives
/// here and is echoed into the result; the worker-thread count does not
/// belong, because it never changes the output.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapConfig {
    /// Number of replicates `B >= 1`.
    pub replicates: usize,
    /// RNG seed; replicate `b` draws from stream `b` of this seed.
    pub seed: u64,
    /// Model refitted on every pseudo-triangle.
    pub model: ModelSpec,
    /// Exclude the two structurally-zero corner residuals — cells `(0, n)`
    /// and `(n, 0)`, each alone in its diagonal of the design — from the
    /// resampling pool. Default off: the pool is all observed cells.
    pub drop_zero_residuals: bool,
    /// Scale the residual pool by `sqrt(N / (N - k))`, `k` the effective
    /// number of mean parameters, before resampling. Default off.
    pub dof_inflation: bool,
    /// Redraw budget per replicate when a refit fails (default 100).
    pub max_redraws: usize,
}

impl BootstrapConfig {
    pub fn new(model: ModelSpec, replicates: usize, seed: u64) -> Self {
        BootstrapConfig {
            replicates,
            seed,
            model,
            drop_zero_residuals: false,
            dof_inflation: false,
            max_redraws: 100,
        }
    }
}

/// One completed replicate: predicted and simulated future sums, per origin
/// year (index = origin, entry 0 always zero) and in total, plus the refit's
/// dispersions for diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub per_origin_predicted: Vec<f64>,
    pub per_origin_simulated: Vec<f64>,
    pub total_predicted: f64,
    pub total_simulated: f64,
    /// Refit dispersion `phi*`, also the scale of the simulated values: for
    /// `p = 1` every simulated cell is a nonnegative multiple of it.
    pub dispersion: f64,
    /// Refit random-effect dispersion (hierarchical model only).
    pub dispersion_u: Option<f64>,
}

/// All replicates plus the run's bookkeeping. Serialize it to check
/// determinism: identical `(triangle, config)` give identical JSON
/// regardless of the thread count.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub replicates: Vec<ReplicateRecord>,
    /// Failed refit attempts consumed across all replicates.
    pub failures: usize,
    /// Set when the run could not complete every requested replicate; such
    /// partial results only emerge inside [`Error::TooManyFailures`].
    pub degraded: bool,
    pub config: BootstrapConfig,
    /// Triangle size parameter, for consumers of the per-origin vectors.
    pub n: usize,
    /// Base-fit dispersion.
    pub base_dispersion: f64,
    /// Base-fit random-effect dispersion (hierarchical model only).
    pub base_dispersion_u: Option<f64>,
}

/// Per-origin and total quantiles of the absolute prediction error.
#[derive(Debug, Clone, Serialize)]
pub struct QuantileTable {
    /// The requested probabilities, ascending.
    pub probs: Vec<f64>,
    /// `per_origin[i][k]` is the `probs[k]` quantile for origin year `i`.
    pub per_origin: Vec<Vec<f64>>,
    /// `total[k]` is the `probs[k]` quantile of the total absolute error.
    pub total: Vec<f64>,
}

enum Outcome {
    Done {
        record: ReplicateRecord,
        redraws: usize,
    },
    Exhausted {
        redraws: usize,
    },
}

/// Everything a replicate needs, immutable and shared across workers.
struct ReplicateInputs<'a> {
    config: &'a BootstrapConfig,
    controls: FitControls,
    /// Observed cells, origin-major; parallel to `observed_means`.
    cells: &'a [CellIndex],
    /// Base-fit means over the observed cells.
    observed_means: &'a [f64],
    /// Future cells with their base-fit means, origin-major.
    future: &'a [(CellIndex, f64)],
    /// Residual pool after the configured exclusions and scaling.
    pool: &'a [f64],
    n: usize,
}

/// Runs the bootstrap with `threads` worker threads (>= 1).
///
/// Errors: a failed or unconverged base fit is wrapped in
/// [`Error::BaseFit`]; a replicate that exhausts its redraw budget aborts
/// the run with [`Error::TooManyFailures`] carrying the completed replicates
/// as a degraded partial result.
pub fn bootstrap_run(
    triangle: &Triangle,
    config: &BootstrapConfig,
    threads: usize,
) -> Result<BootstrapResult> {
    if config.replicates == 0 {
        return Err(Error::Domain("replicate count must be at least 1".into()));
    }
    if threads == 0 {
        return Err(Error::Domain("thread count must be at least 1".into()));
    }
    if triangle.kind() != TriangleKind::Incremental {
        return Err(Error::KindMismatch {
            expected: TriangleKind::Incremental,
            found: triangle.kind(),
        });
    }

    let controls = FitControls::default();
    let base = FittedModel::fit(triangle, &config.model, &controls)
        .map_err(|e| Error::BaseFit(Box::new(e)))?;
    if !base.converged() {
        return Err(Error::BaseFit(Box::new(Error::NoConvergence {
            iterations: controls.max_iterations,
        })));
    }

    let n = base.n();
    let cells: Vec<CellIndex> = triangle.observed_cells().collect();
    let data_count = cells.len();
    let observed_means: Vec<f64> = cells.iter().map(|&c| base.fitted_mean(c)).collect();
    let future: Vec<(CellIndex, f64)> = triangle
        .future_cells()
        .map(|c| (c, base.fitted_mean(c)))
        .collect();

    let mut pool: Vec<f64> = if config.drop_zero_residuals {
        base.residuals()
            .iter()
            .filter(|(c, _)| !(c.origin == 0 && c.dev == n) && !(c.origin == n && c.dev == 0))
            .map(|&(_, r)| r)
            .collect()
    } else {
        base.residuals().iter().map(|&(_, r)| r).collect()
    };
    if config.dof_inflation {
        let k = base.data_leverage_total();
        let dof = data_count as f64 - k;
        if dof <= 0.0 {
            return Err(Error::Domain(format!(
                "cannot inflate residuals: {data_count} observations for {k} \
                 effective parameters leaves no degrees of freedom"
            )));
        }
        let factor = (data_count as f64 / dof).sqrt();
        for r in &mut pool {
            *r *= factor;
        }
    }

    let inputs = ReplicateInputs {
        config,
        controls,
        cells: &cells,
        observed_means: &observed_means,
        future: &future,
        pool: &pool,
        n,
    };

    let outcomes: Vec<Outcome> = if threads == 1 {
        (0..config.replicates)
            .map(|b| replicate(b, &inputs))
            .collect()
    } else {
        let thread_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Domain(format!("failed to build thread pool: {e}")))?;
        use rayon::prelude::*;
        thread_pool.install(|| {
            (0..config.replicates)
                .into_par_iter()
                .map(|b| replicate(b, &inputs))
                .collect()
        })
    };

    let mut records = Vec::with_capacity(config.replicates);
    let mut failures = 0;
    let mut exhausted = 0usize;
    for outcome in outcomes {
        match outcome {
            Outcome::Done { record, redraws } => {
                failures += redraws;
                records.push(record);
            }
            Outcome::Exhausted { redraws } => {
                failures += redraws;
                exhausted += 1;
            }
        }
    }

    let base_dispersion = base.dispersion();
    let base_dispersion_u = base.dispersion_u();
    let make_result =
        |records: Vec<ReplicateRecord>, degraded: bool, failures: usize| BootstrapResult {
            replicates: records,
            failures,
            degraded,
            config: config.clone(),
            n,
            base_dispersion,
            base_dispersion_u,
        };

    if exhausted > 0 {
        let achieved = records.len();
        return Err(Error::TooManyFailures {
            achieved,
            requested: config.replicates,
            partial: Box::new(make_result(records, true, failures)),
        });
    }
    Ok(make_result(records, false, failures))
}

/// One replicate: its RNG stream is a pure function of `(seed, b)`, and a
/// redraw continues on the same stream, so the outcome never depends on
/// which worker thread runs it or in what order.
fn replicate(b: usize, inputs: &ReplicateInputs<'_>) -> Outcome {
    let config = inputs.config;
    let n = inputs.n;
    let p = config.model.p;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(b as u64);

    let mut redraws = 0;
    for _attempt in 0..=config.max_redraws {
        match try_replicate(inputs, p, n, &mut rng) {
            Some(record) => return Outcome::Done { record, redraws },
            None => redraws += 1,
        }
    }
    Outcome::Exhausted { redraws }
}

/// A single attempt; `None` means the refit or the simulation failed and
/// the caller should redraw.
fn try_replicate(
    inputs: &ReplicateInputs<'_>,
    p: FamilyPower,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<ReplicateRecord> {
    // Steps 1 and 2: pseudo-data over the observed triangle.
    let mut rows: Vec<Vec<f64>> = (0..=n).map(|i| Vec::with_capacity(n + 1 - i)).collect();
    for (k, cell) in inputs.cells.iter().enumerate() {
        let r = inputs.pool[rng.random_range(0..inputs.pool.len())];
        rows[cell.origin].push(pseudo_value(r, inputs.observed_means[k], p));
    }
    let pseudo = Triangle::from_rows(rows, TriangleKind::Incremental).ok()?;

    // Step 3: refit; domain violations and non-convergence trigger a redraw.
    let refit = FittedModel::fit(&pseudo, &inputs.config.model, &inputs.controls).ok()?;
    if !refit.converged() {
        return None;
    }

    // Step 4: predicted future sums from the refit.
    let report = reserving::reserve_report(&refit).ok()?;
    let per_origin_predicted: Vec<f64> = report.per_origin.iter().map(|r| r.reserve).collect();
    let total_predicted = report.total;

    // Step 5: simulated future sums from the base means and the replicate's
    // dispersion.
    let phi_star = refit.dispersion();
    let mut per_origin_simulated = vec![0.0; n + 1];
    for &(cell, mean) in inputs.future {
        let draw = tweedie::sample(mean, phi_star, p, rng).ok()?;
        per_origin_simulated[cell.origin] += draw;
    }
    let total_simulated = per_origin_simulated.iter().sum();

    Some(ReplicateRecord {
        per_origin_predicted,
        per_origin_simulated,
        total_predicted,
        total_simulated,
        dispersion: phi_star,
        dispersion_u: refit.dispersion_u(),
    })
}

/// Step-2 inverse of the Pearson residual: `r sqrt(mu^p) + mu`.
fn pseudo_value(r: f64, mu: f64, p: FamilyPower) -> f64 {
    r * mu.powf(p.value()).sqrt() + mu
}

/// Root mean square of (predicted − simulated) across replicates, per
/// origin year and for the total.
///
/// Requires at least one completed replicate (guaranteed for any
/// non-degraded result).
pub fn rmsep(result: &BootstrapResult) -> PredictionErrorReport {
    let b = result.replicates.len();
    assert!(b > 0, "rmsep needs at least one completed replicate");
    let mut per_origin = vec![0.0; result.n + 1];
    let mut total = 0.0;
    for rec in &result.replicates {
        for ((acc, &pred), &sim) in per_origin
            .iter_mut()
            .zip(&rec.per_origin_predicted)
            .zip(&rec.per_origin_simulated)
        {
            let d = pred - sim;
            *acc += d * d;
        }
        let d = rec.total_predicted - rec.total_simulated;
        total += d * d;
    }
    PredictionErrorReport {
        per_origin: per_origin
            .into_iter()
            .map(|s| (s / b as f64).sqrt())
            .collect(),
        total: (total / b as f64).sqrt(),
    }
}

/// Empirical quantiles of the absolute prediction error
/// `|predicted − simulated|`, per origin year and for the total.
///
/// `probs` must be nondecreasing, each strictly inside (0, 1). Quantiles
/// interpolate linearly between order statistics (position `h = (B−1)p + 1`),
/// which needs at least two replicates.
pub fn error_quantiles(result: &BootstrapResult, probs: &[f64]) -> Result<QuantileTable> {
    let b = result.replicates.len();
    if b < 2 {
        return Err(Error::Domain(format!(
            "quantile interpolation needs at least 2 replicates, have {b}"
        )));
    }
    for pair in probs.windows(2) {
        if pair[1] < pair[0] {
            return Err(Error::Domain(format!(
                "quantile probabilities must be nondecreasing: {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    for &p in probs {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile probability must lie strictly inside (0, 1), got {p}"
            )));
        }
    }

    let mut per_origin = Vec::with_capacity(result.n + 1);
    for i in 0..=result.n {
        let mut errors: Vec<f64> = result
            .replicates
            .iter()
            .map(|rec| (rec.per_origin_predicted[i] - rec.per_origin_simulated[i]).abs())
            .collect();
        errors.sort_unstable_by(f64::total_cmp);
        per_origin.push(
            probs
                .iter()
                .map(|&p| interpolated_quantile(&errors, p))
                .collect(),
        );
    }
    let mut errors: Vec<f64> = result
        .replicates
        .iter()
        .map(|rec| (rec.total_predicted - rec.total_simulated).abs())
        .collect();
    errors.sort_unstable_by(f64::total_cmp);
    let total = probs
        .iter()
        .map(|&p| interpolated_quantile(&errors, p))
        .collect();

    Ok(QuantileTable {
        probs: probs.to_vec(),
        per_origin,
        total,
    })
}

/// Linear interpolation between order statistics of pre-sorted data.
fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let low = h.floor() as usize;
    let frac = h - low as f64;
    if low + 1 < sorted.len() {
        sorted[low] + frac * (sorted[low + 1] - sorted[low])
    } else {
        sorted[low]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangle::Triangle;
    use approx::assert_relative_eq;

    fn small_triangle() -> Triangle {
        Triangle::from_rows(
            vec![
                vec![700.0, 350.0, 160.0, 80.0, 40.0],
                vec![820.0, 410.0, 190.0, 95.0],
                vec![640.0, 330.0, 150.0],
                vec![780.0, 390.0],
                vec![710.0],
            ],
            TriangleKind::Incremental,
        )
        .unwrap()
    }

    fn glm_config(replicates: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig::new(ModelSpec::glm(FamilyPower::ODP), replicates, seed)
    }

    #[test]
    fn pseudo_data_inverts_the_residual_definition() {
        // Feeding each cell its own residual must reproduce the data.
        let t = small_triangle();
        let fit = FittedModel::fit(
            &t,
            &ModelSpec::glm(FamilyPower::ODP),
            &FitControls::default(),
        )
        .unwrap();
        for (cell, value) in t.observed_values() {
            let mu = fit.fitted_mean(cell);
            let r = fit
                .residuals()
                .iter()
                .find(|(c, _)| *c == cell)
                .map(|&(_, r)| r)
                .unwrap();
            let back = pseudo_value(r, mu, FamilyPower::ODP);
            assert_relative_eq!(back, value, max_relative = 1e-12, epsilon = 1e-9);
        }
    }

    #[test]
    fn identical_config_gives_bit_identical_results() {
        let t = small_triangle();
        let cfg = glm_config(8, 42);
        let a = bootstrap_run(&t, &cfg, 1).unwrap();
        let b = bootstrap_run(&t, &cfg, 1).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn thread_count_does_not_change_the_bytes() {
        let t = small_triangle();
        let cfg = glm_config(12, 7);
        let sequential = bootstrap_run(&t, &cfg, 1).unwrap();
        let parallel = bootstrap_run(&t, &cfg, 4).unwrap();
        assert_eq!(
            serde_json::to_string(&sequential).unwrap(),
            serde_json::to_string(&parallel).unwrap()
        );
    }

    #[test]
    fn different_seeds_give_different_replicates() {
        let t = small_triangle();
        let a = bootstrap_run(&t, &glm_config(4, 1), 1).unwrap();
        let b = bootstrap_run(&t, &glm_config(4, 2), 1).unwrap();
        assert_ne!(
            serde_json::to_string(&a.replicates).unwrap(),
            serde_json::to_string(&b.replicates).unwrap()
        );
    }

    #[test]
    fn odp_simulated_values_are_multiples_of_the_replicate_dispersion() {
        // For p = 1 every simulated cell is phi* x (Poisson draw), so each
        // per-origin sum divided by phi* must be a nonnegative integer.
        let t = small_triangle();
        let cfg = glm_config(16, 3);
        let result = bootstrap_run(&t, &cfg, 1).unwrap();
        for rec in &result.replicates {
            assert!(rec.dispersion > 0.0);
            for &s in &rec.per_origin_simulated {
                assert!(s >= 0.0);
                let counts = s / rec.dispersion;
                assert!(
                    (counts - counts.round()).abs() < 1e-8 * counts.max(1.0),
                    "sum {s} is not a multiple of phi* {}",
                    rec.dispersion
                );
            }
        }
    }

    #[test]
    fn replicate_records_have_one_entry_per_origin() {
        let t = small_triangle();
        let result = bootstrap_run(&t, &glm_config(3, 9), 1).unwrap();
        assert_eq!(result.replicates.len(), 3);
        for rec in &result.replicates {
            assert_eq!(rec.per_origin_predicted.len(), 5);
            assert_eq!(rec.per_origin_simulated.len(), 5);
            // Origin 0 has no future cells on either side.
            assert_eq!(rec.per_origin_predicted[0], 0.0);
            assert_eq!(rec.per_origin_simulated[0], 0.0);
            let sum: f64 = rec.per_origin_predicted.iter().sum();
            assert_relative_eq!(sum, rec.total_predicted, max_relative = 1e-12);
        }
    }

    #[test]
    fn base_fit_failure_is_wrapped() {
        let cumulative = small_triangle().to_cumulative().unwrap();
        let err = bootstrap_run(&cumulative, &glm_config(2, 1), 1).unwrap_err();
        match err {
            Error::KindMismatch { .. } => {} // caught before the base fit
            Error::BaseFit(inner) => {
                assert!(matches!(*inner, Error::KindMismatch { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }

        // A triangle with a nonpositive column makes the base fit itself fail.
        let bad = Triangle::from_rows(
            vec![vec![100.0, 50.0, -30.0], vec![110.0, 55.0], vec![120.0]],
            TriangleKind::Incremental,
        )
        .unwrap();
        let err = bootstrap_run(&bad, &glm_config(2, 1), 1).unwrap_err();
        assert!(matches!(err, Error::BaseFit(_)), "{err:?}");
    }

    #[test]
    fn hglm_bootstrap_runs_and_echoes_both_dispersions() {
        let t = small_triangle();
        let cfg = BootstrapConfig::new(ModelSpec::hglm(FamilyPower::ODP), 4, 5);
        let result = bootstrap_run(&t, &cfg, 1).unwrap();
        assert_eq!(result.replicates.len(), 4);
        assert!(result.base_dispersion > 0.0);
        assert!(result.base_dispersion_u.is_some());
    }

    #[test]
    fn rmsep_matches_direct_arithmetic() {
        // Two replicates with total differences +3 and -4.
        let result = BootstrapResult {
            replicates: vec![
                ReplicateRecord {
                    per_origin_predicted: vec![0.0, 10.0],
                    per_origin_simulated: vec![0.0, 7.0],
                    total_predicted: 10.0,
                    total_simulated: 7.0,
                    dispersion: 1.0,
                    dispersion_u: None,
                },
                ReplicateRecord {
                    per_origin_predicted: vec![0.0, 6.0],
                    per_origin_simulated: vec![0.0, 10.0],
                    total_predicted: 6.0,
                    total_simulated: 10.0,
                    dispersion: 1.0,
                    dispersion_u: None,
                },
            ],
            failures: 0,
            degraded: false,
            config: glm_config(2, 0),
            n: 1,
            base_dispersion: 1.0,
            base_dispersion_u: None,
        };
        let report = rmsep(&result);
        assert_relative_eq!(report.total, 12.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(report.per_origin[1], 12.5f64.sqrt(), max_relative = 1e-15);
        assert_eq!(report.per_origin[0], 0.0);
    }

    #[test]
    fn rmsep_is_zero_when_predictions_equal_simulations() {
        let rec = ReplicateRecord {
            per_origin_predicted: vec![0.0, 5.0],
            per_origin_simulated: vec![0.0, 5.0],
            total_predicted: 5.0,
            total_simulated: 5.0,
            dispersion: 1.0,
            dispersion_u: None,
        };
        let result = BootstrapResult {
            replicates: vec![rec.clone(), rec],
            failures: 0,
            degraded: false,
            config: glm_config(2, 0),
            n: 1,
            base_dispersion: 1.0,
            base_dispersion_u: None,
        };
        assert_eq!(rmsep(&result).total, 0.0);
    }

    #[test]
    fn rmsep_matches_a_brute_force_loop() {
        let t = small_triangle();
        let result = bootstrap_run(&t, &glm_config(25, 17), 1).unwrap();
        let report = rmsep(&result);
        let b = result.replicates.len() as f64;
        for i in 0..=result.n {
            let mut acc = 0.0;
            for rec in &result.replicates {
                acc += (rec.per_origin_predicted[i] - rec.per_origin_simulated[i]).powi(2);
            }
            assert_relative_eq!(report.per_origin[i], (acc / b).sqrt(), max_relative = 1e-12);
        }
        let mut acc = 0.0;
        for rec in &result.replicates {
            acc += (rec.total_predicted - rec.total_simulated).powi(2);
        }
        assert_relative_eq!(report.total, (acc / b).sqrt(), max_relative = 1e-12);
    }

    fn synthetic_result(total_errors: &[f64]) -> BootstrapResult {
        BootstrapResult {
            replicates: total_errors
                .iter()
                .map(|&e| ReplicateRecord {
                    per_origin_predicted: vec![0.0, e],
                    per_origin_simulated: vec![0.0, 0.0],
                    total_predicted: e,
                    total_simulated: 0.0,
                    dispersion: 1.0,
                    dispersion_u: None,
                })
                .collect(),
            failures: 0,
            degraded: false,
            config: glm_config(total_errors.len(), 0),
            n: 1,
            base_dispersion: 1.0,
            base_dispersion_u: None,
        }
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let result = synthetic_result(&[1.0, 2.0, 3.0, 4.0]);
        let table = error_quantiles(&result, &[0.5]).unwrap();
        assert_relative_eq!(table.total[0], 2.5, max_relative = 1e-15);
        assert_relative_eq!(table.per_origin[1][0], 2.5, max_relative = 1e-15);
    }

    #[test]
    fn quantiles_are_monotone_and_bounded_by_the_maximum() {
        let t = small_triangle();
        let result = bootstrap_run(&t, &glm_config(40, 23), 1).unwrap();
        let probs = [0.5, 0.75, 0.9, 0.95];
        let table = error_quantiles(&result, &probs).unwrap();
        let max_err = result
            .replicates
            .iter()
            .map(|r| (r.total_predicted - r.total_simulated).abs())
            .fold(0.0, f64::max);
        for pair in table.total.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
        assert!(*table.total.last().unwrap() <= max_err);
        for origin_row in &table.per_origin {
            for pair in origin_row.windows(2) {
                assert!(pair[0] <= pair[1]);
            }
        }
    }

    #[test]
    fn quantile_probabilities_are_validated() {
        let result = synthetic_result(&[1.0, 2.0]);
        assert!(matches!(
            error_quantiles(&result, &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            error_quantiles(&result, &[1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            error_quantiles(&result, &[0.9, 0.5]),
            Err(Error::Domain(_))
        ));
        let single = synthetic_result(&[1.0]);
        assert!(matches!(
            error_quantiles(&single, &[0.5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dropping_corner_residuals_shrinks_the_pool_and_changes_results() {
        let t = small_triangle();
        let mut cfg = glm_config(6, 11);
        let default_run = bootstrap_run(&t, &cfg, 1).unwrap();
        cfg.drop_zero_residuals = true;
        let dropped = bootstrap_run(&t, &cfg, 1).unwrap();
        assert_ne!(
            serde_json::to_string(&default_run.replicates).unwrap(),
            serde_json::to_string(&dropped.replicates).unwrap()
        );
        assert!(dropped.config.drop_zero_residuals);
    }

    #[test]
    fn dof_inflation_runs_and_changes_results() {
        let t = small_triangle();
        let mut cfg = glm_config(6, 11);
        let plain = bootstrap_run(&t, &cfg, 1).unwrap();
        cfg.dof_inflation = true;
        let inflated = bootstrap_run(&t, &cfg, 1).unwrap();
        assert_ne!(
            serde_json::to_string(&plain.replicates).unwrap(),
            serde_json::to_string(&inflated.replicates).unwrap()
        );
    }

    #[test]
    fn deleting_one_replicate_barely_moves_rmsep() {
        let t = small_triangle();
        let full = bootstrap_run(&t, &glm_config(100, 31), 1).unwrap();
        let full_rmsep = rmsep(&full).total;
        let mut truncated = full.clone();
        truncated.replicates.pop();
        let truncated_rmsep = rmsep(&truncated).total;
        let rel = (full_rmsep - truncated_rmsep).abs() / full_rmsep;
        assert!(
            rel < 5.0 / (full.replicates.len() as f64).sqrt(),
            "rel = {rel}"
        );
    }

    #[test]
    fn zero_replicates_and_zero_threads_are_rejected() {
        let t = small_triangle();
        assert!(matches!(
            bootstrap_run(&t, &glm_config(0, 1), 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            bootstrap_run(&t, &glm_config(1, 1), 0),
            Err(Error::Domain(_))
        ));
    }
}
