//! Shared helpers for the integration tests: an independent chain-ladder
//! implementation used as an oracle, a random-triangle generator, and a
//! loader for the bundled textbook triangle.
//!
//! Each integration-test binary compiles this module separately and uses a
//! different subset of it, so unused-item lints are off.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use runoff_core::triangle::{CellIndex, Triangle, TriangleKind};

/// Location of the bundled Wüthrich–Merz triangle; `RUNOFF_WM_DATA`
/// overrides the default `data/wuthrich_merz.csv` at the workspace root.
pub fn wm_data_path() -> PathBuf {
    match std::env::var_os("RUNOFF_WM_DATA") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/wuthrich_merz.csv"),
    }
}

/// Loads the bundled triangle, or `None` when the data file is absent so
/// callers can skip data-dependent checks with an explicit message.
pub fn load_wm_triangle() -> Option<Triangle> {
    let text = std::fs::read_to_string(wm_data_path()).ok()?;
    Some(Triangle::parse_csv(&text).expect("bundled triangle must parse"))
}

/// Chain ladder, implemented directly from the definition as an oracle:
/// volume-weighted development factors on the cumulative triangle, applied
/// from each row's latest diagonal. Returns per-origin reserves (index =
/// origin; entry 0 is 0) and their total.
pub fn chain_ladder_reserves(incremental: &Triangle) -> (Vec<f64>, f64) {
    assert_eq!(incremental.kind(), TriangleKind::Incremental);
    let cumulative = incremental.to_cumulative().unwrap();
    let n = cumulative.n();
    let cell = |i: usize, j: usize| cumulative.value(CellIndex::new(i, j)).unwrap();

    let mut factors = Vec::with_capacity(n);
    for j in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=(n - j - 1) {
            num += cell(i, j + 1);
            den += cell(i, j);
        }
        factors.push(num / den);
    }

    let mut per_origin = vec![0.0; n + 1];
    for i in 1..=n {
        let latest = cell(i, n - i);
        let mut ultimate = latest;
        for f in &factors[n - i..n] {
            ultimate *= f;
        }
        per_origin[i] = ultimate - latest;
    }
    let total = per_origin.iter().sum();
    (per_origin, total)
}

/// A random strictly positive incremental triangle of size `(n+1) x (n+1)`
/// with a decaying development pattern and mild lognormal-ish noise, so the
/// log-link fits always have positive column sums and converge.
pub fn random_positive_triangle(rng: &mut ChaCha8Rng, n: usize) -> Triangle {
    let base: f64 = rng.random_range(500.0..5000.0);
    let decay: f64 = rng.random_range(0.3..0.7);
    let rows: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            let level: f64 = base * rng.random_range(0.6..1.6);
            (0..=(n - i))
                .map(|j| {
                    let noise: f64 = rng.random_range(-0.35..0.35f64).exp();
                    level * decay.powi(j as i32) * noise
                })
                .collect()
        })
        .collect();
    Triangle::from_rows(rows, TriangleKind::Incremental).unwrap()
}

/// A fixed 6x6 incremental triangle with genuine origin-year heterogeneity
/// (row levels 0.8..1.3 around a common development pattern) and small
/// deterministic noise. Mirrors the fixture used by the hierarchical-model
/// unit tests so integration tests exercise the same shape.
pub fn heterogeneous_triangle() -> Triangle {
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
