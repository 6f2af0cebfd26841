//! Claims run-off triangles: storage, validation, CSV input and output, and
//! conversion between incremental and cumulative form.
//!
//! A triangle of side `n + 1` covers origin years `i = 0..=n` and development
//! years `j = 0..=n`. Cells with `i + j <= n` are observed — there are
//! `(n + 1)(n + 2) / 2` of them — and cells with `i + j > n` are the future
//! cells that reserving predicts, `n(n + 1) / 2` in total. Only strictly
//! square run-off shapes are accepted; trapezoids are rejected.

use crate::error::{Error, Result};

/// Position of a cell: origin (accident) year `origin`, development year `dev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub origin: usize,
    pub dev: usize,
}

impl CellIndex {
    pub fn new(origin: usize, dev: usize) -> Self {
        CellIndex { origin, dev }
    }
}

/// Whether cell values are per-development-year amounts or running row sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TriangleKind {
    Incremental,
    Cumulative,
}

/// All observed cells of a triangle of side `n + 1`, origin-major.
pub fn observed_cells(n: usize) -> impl Iterator<Item = CellIndex> {
    (0..=n).flat_map(move |i| (0..=n - i).map(move |j| CellIndex::new(i, j)))
}

/// All future cells of a triangle of side `n + 1`, origin-major.
pub fn future_cells(n: usize) -> impl Iterator<Item = CellIndex> {
    (1..=n).flat_map(move |i| (n - i + 1..=n).map(move |j| CellIndex::new(i, j)))
}

/// A validated run-off triangle.
///
/// Row `i` stores the observed values for origin year `i` in development
/// order, so it has `n + 1 - i` entries. Two triangles compare equal when
/// their kind and observed values agree.
#[derive(Debug, Clone)]
pub struct Triangle {
    kind: TriangleKind,
    rows: Vec<Vec<f64>>,
    /// Incremental values retained by `to_cumulative` so that
    /// `to_incremental` can undo the conversion exactly. Plain floating-point
    /// differencing of the running sums would lose low-order bits.
    source_increments: Option<Vec<Vec<f64>>>,
}

impl PartialEq for Triangle {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.rows == other.rows
    }
}

impl Triangle {
    /// Builds a triangle from per-origin rows of observed values.
    ///
    /// Row `i` must hold exactly the observed cells `j = 0..=n - i` of a
    /// strictly square run-off shape; every value must be finite.
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: TriangleKind) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("triangle has no rows".into()));
        }
        let n = rows.len() - 1;
        for (i, row) in rows.iter().enumerate() {
            let want = n + 1 - i;
            if row.len() < want {
                return Err(Error::IncompleteTriangle {
                    origin: i,
                    dev: row.len(),
                });
            }
            if row.len() > want {
                return Err(Error::FutureCellPresent {
                    origin: i,
                    dev: want,
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite value at cell ({i}, {j})"
                )));
            }
        }
        Ok(Triangle {
            kind,
            rows,
            source_increments: None,
        })
    }

    pub fn kind(&self) -> TriangleKind {
        self.kind
    }

    /// Largest origin/development index; the triangle has side `n + 1`.
    pub fn n(&self) -> usize {
        self.rows.len() - 1
    }

    /// Side length `n + 1`.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn observed_count(&self) -> usize {
        let s = self.size();
        s * (s + 1) / 2
    }

    pub fn future_count(&self) -> usize {
        let n = self.n();
        n * (n + 1) / 2
    }

    /// Value of an observed cell; `None` for future cells or out-of-range indices.
    pub fn value(&self, cell: CellIndex) -> Option<f64> {
        self.rows.get(cell.origin)?.get(cell.dev).copied()
    }

    pub fn observed_cells(&self) -> impl Iterator<Item = CellIndex> {
        observed_cells(self.n())
    }

    pub fn future_cells(&self) -> impl Iterator<Item = CellIndex> {
        future_cells(self.n())
    }

    /// Observed `(cell, value)` pairs in origin-major order.
    pub fn observed_values(&self) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, &v)| (CellIndex::new(i, j), v))
        })
    }

    /// Sum of observed values in each development column `j = 0..=n`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.size()];
        for (cell, v) in self.observed_values() {
            sums[cell.dev] += v;
        }
        sums
    }

    /// Sum of observed values in each origin row `i = 0..=n`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().sum()).collect()
    }

    /// Converts an incremental triangle to running row sums.
    ///
    /// The result keeps the incremental values internally so the conversion
    /// can be undone exactly by [`Triangle::to_incremental`].
    pub fn to_cumulative(&self) -> Result<Triangle> {
        if self.kind != TriangleKind::Incremental {
            return Err(Error::KindMismatch {
                expected: TriangleKind::Incremental,
                found: self.kind,
            });
        }
        let nonnegative = self.rows.iter().flatten().all(|&v| v >= 0.0);
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|&v| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect();
        if nonnegative {
            // Rounding a sum of nonnegative terms can never move it below an
            // earlier partial sum, so this holds exactly.
            debug_assert!(rows.iter().all(|row| row.windows(2).all(|w| w[0] <= w[1])));
        }
        Ok(Triangle {
            kind: TriangleKind::Cumulative,
            rows,
            source_increments: Some(self.rows.clone()),
        })
    }

    /// Converts a cumulative triangle back to incremental values.
    ///
    /// If the triangle came out of [`Triangle::to_cumulative`] the original
    /// increments are returned bit-for-bit; otherwise first differences are
    /// computed along each row.
    pub fn to_incremental(&self) -> Result<Triangle> {
        if self.kind != TriangleKind::Cumulative {
            return Err(Error::KindMismatch {
                expected: TriangleKind::Cumulative,
                found: self.kind,
            });
        }
        let rows = match &self.source_increments {
            Some(src) => src.clone(),
            None => self
                .rows
                .iter()
                .map(|row| {
                    let mut prev = 0.0;
                    row.iter()
                        .map(|&c| {
                            let inc = c - prev;
                            prev = c;
                            inc
                        })
                        .collect()
                })
                .collect(),
        };
        Ok(Triangle {
            kind: TriangleKind::Incremental,
            rows,
            source_increments: None,
        })
    }

    // -- CSV input ----------------------------------------------------------

    /// Parses triangle CSV, auto-detecting the layout from the header:
    /// `origin,dev,value` for long form, `origin,d0,...,dn` for wide form.
    /// Either way the values are read as incremental amounts.
    pub fn parse_csv(text: &str) -> Result<Triangle> {
        let header = text.lines().next().unwrap_or("");
        let mut fields = header.split(',').map(str::trim);
        let first = fields.next().unwrap_or("");
        let second = fields.next().unwrap_or("");
        if first != "origin" {
            return Err(Error::Parse(format!(
                "unrecognized header {header:?}: expected origin,dev,value or origin,d0,...,dn"
            )));
        }
        if second == "dev" {
            Self::parse_long_csv(text)
        } else {
            Self::parse_wide_csv(text)
        }
    }

    /// Parses the long layout: header `origin,dev,value`, one row per
    /// observed cell, in any order. `n` is inferred from the largest index
    /// present.
    pub fn parse_long_csv(text: &str) -> Result<Triangle> {
        let mut reader = csv_reader(text);
        check_header(&mut reader, &["origin", "dev", "value"])?;

        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut n = 0usize;
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != 3 {
                return Err(Error::Parse(format!(
                    "expected 3 fields per row, found {} in {:?}",
                    record.len(),
                    record
                )));
            }
            let origin = parse_index(record.get(0).unwrap(), "origin")?;
            let dev = parse_index(record.get(1).unwrap(), "dev")?;
            let value = parse_value(record.get(2).unwrap(), origin, dev)?;
            n = n.max(origin).max(dev);
            entries.push((origin, dev, value));
        }
        if entries.is_empty() {
            return Err(Error::Parse("no data rows".into()));
        }

        let mut rows: Vec<Vec<Option<f64>>> = (0..=n).map(|i| vec![None; n + 1 - i]).collect();
        for (origin, dev, value) in entries {
            if origin + dev > n {
                return Err(Error::FutureCellPresent { origin, dev });
            }
            let slot = &mut rows[origin][dev];
            if slot.is_some() {
                return Err(Error::DuplicateCell { origin, dev });
            }
            *slot = Some(value);
        }
        let rows = materialize(rows)?;
        Triangle::from_rows(rows, TriangleKind::Incremental)
    }

    /// Parses the wide layout: header `origin,d0,...,dn`, one row per origin
    /// year with development years as columns. Future cells must be empty.
    pub fn parse_wide_csv(text: &str) -> Result<Triangle> {
        let mut reader = csv_reader(text);
        let header = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if header.len() < 2 || header.get(0).map(str::trim) != Some("origin") {
            return Err(Error::Parse(
                "wide header must start with origin,d0,...".into(),
            ));
        }
        let n = header.len() - 2;
        for (j, name) in header.iter().skip(1).enumerate() {
            if name.trim() != format!("d{j}") {
                return Err(Error::Parse(format!(
                    "wide header column {} should be d{j}, found {name:?}",
                    j + 1
                )));
            }
        }

        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n + 1];
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != n + 2 {
                return Err(Error::Parse(format!(
                    "expected {} fields per row, found {}",
                    n + 2,
                    record.len()
                )));
            }
            let origin = parse_index(record.get(0).unwrap(), "origin")?;
            if origin > n {
                // More origin rows than development columns: not a square.
                return Err(Error::IncompleteTriangle { origin, dev: n + 1 });
            }
            let mut row = Vec::with_capacity(n + 1 - origin);
            for j in 0..=n {
                let field = record.get(j + 1).unwrap().trim();
                if origin + j <= n {
                    if field.is_empty() {
                        return Err(Error::IncompleteTriangle { origin, dev: j });
                    }
                    row.push(parse_value(field, origin, j)?);
                } else if !field.is_empty() {
                    return Err(Error::FutureCellPresent { origin, dev: j });
                }
            }
            if rows[origin].is_some() {
                return Err(Error::DuplicateCell { origin, dev: 0 });
            }
            rows[origin] = Some(row);
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| row.ok_or(Error::IncompleteTriangle { origin: i, dev: 0 }))
            .collect::<Result<Vec<_>>>()?;
        Triangle::from_rows(rows, TriangleKind::Incremental)
    }

    // -- CSV output ---------------------------------------------------------

    /// Writes the canonical long layout: header `origin,dev,value`, observed
    /// cells in origin-major order, shortest round-trip number formatting.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("origin,dev,value\n");
        for (cell, v) in self.observed_values() {
            out.push_str(&format!("{},{},{}\n", cell.origin, cell.dev, v));
        }
        out
    }
}

/// Dense `(n + 1) x (n + 1)` grid keyed by cell, used for fitted means over
/// the whole square (observed and future).
#[derive(Debug, Clone, PartialEq)]
pub struct SquareGrid {
    size: usize,
    data: Vec<f64>,
}

impl SquareGrid {
    pub fn new(size: usize, fill: f64) -> Self {
        SquareGrid {
            size,
            data: vec![fill; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, cell: CellIndex) -> f64 {
        self.data[cell.origin * self.size + cell.dev]
    }

    pub fn set(&mut self, cell: CellIndex, value: f64) {
        self.data[cell.origin * self.size + cell.dev] = value;
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Parse(format!(
            "expected header {}, found {}",
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn parse_index(field: &str, name: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("invalid {name} index {field:?}")))
}

fn parse_value(field: &str, origin: usize, dev: usize) -> Result<f64> {
    let v = field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid value {field:?} at cell ({origin}, {dev})")))?;
    if !v.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite value at cell ({origin}, {dev})"
        )));
    }
    Ok(v)
}

fn materialize(rows: Vec<Vec<Option<f64>>>) -> Result<Vec<Vec<f64>>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, v)| v.ok_or(Error::IncompleteTriangle { origin: i, dev: j }))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_by_three() -> Triangle {
        Triangle::from_rows(
            vec![vec![100.0, 60.0, 40.0], vec![110.0, 66.0], vec![120.0]],
            TriangleKind::Incremental,
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_long_csv() {
        let t = Triangle::parse_long_csv("origin,dev,value\n0,0,120.5\n0,1,60.25\n1,0,130.0\n")
            .unwrap();
        assert_eq!(t.n(), 1);
        assert_eq!(t.value(CellIndex::new(0, 0)), Some(120.5));
        assert_eq!(t.value(CellIndex::new(0, 1)), Some(60.25));
        assert_eq!(t.value(CellIndex::new(1, 0)), Some(130.0));
        assert_eq!(t.value(CellIndex::new(1, 1)), None);
    }

    #[test]
    fn long_csv_order_does_not_matter() {
        let a = Triangle::parse_long_csv("origin,dev,value\n0,0,1\n0,1,2\n1,0,3\n").unwrap();
        let b = Triangle::parse_long_csv("origin,dev,value\n1,0,3\n0,1,2\n0,0,1\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_duplicate_cell() {
        let err =
            Triangle::parse_long_csv("origin,dev,value\n0,0,1\n0,0,2\n0,1,2\n1,0,3\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateCell { origin: 0, dev: 0 }));
    }

    #[test]
    fn rejects_missing_cell() {
        let err = Triangle::parse_long_csv("origin,dev,value\n0,0,1\n0,1,2\n").unwrap_err();
        assert!(matches!(
            err,
            Error::IncompleteTriangle { origin: 1, dev: 0 }
        ));
    }

    #[test]
    fn rejects_future_cell() {
        let err =
            Triangle::parse_long_csv("origin,dev,value\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n").unwrap_err();
        assert!(matches!(
            err,
            Error::FutureCellPresent { origin: 1, dev: 1 }
        ));
    }

    #[test]
    fn rejects_bad_number() {
        let err = Triangle::parse_long_csv("origin,dev,value\n0,0,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn parses_wide_csv() {
        let text = "origin,d0,d1,d2\n0,100,60,40\n1,110,66,\n2,120,,\n";
        let t = Triangle::parse_wide_csv(text).unwrap();
        assert_eq!(t, three_by_three());
    }

    #[test]
    fn wide_csv_rejects_value_in_future_cell() {
        let text = "origin,d0,d1,d2\n0,100,60,40\n1,110,66,7\n2,120,,\n";
        let err = Triangle::parse_wide_csv(text).unwrap_err();
        assert!(matches!(
            err,
            Error::FutureCellPresent { origin: 1, dev: 2 }
        ));
    }

    #[test]
    fn wide_csv_rejects_missing_row() {
        let text = "origin,d0,d1,d2\n0,100,60,40\n2,120,,\n";
        let err = Triangle::parse_wide_csv(text).unwrap_err();
        assert!(matches!(
            err,
            Error::IncompleteTriangle { origin: 1, dev: 0 }
        ));
    }

    #[test]
    fn auto_detects_layout() {
        let long = Triangle::parse_csv("origin,dev,value\n0,0,1\n0,1,2\n1,0,3\n").unwrap();
        let wide = Triangle::parse_csv("origin,d0,d1\n0,1,2\n1,3,\n").unwrap();
        assert_eq!(long, wide);
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let t = three_by_three();
        let parsed = Triangle::parse_long_csv(&t.to_long_csv()).unwrap();
        assert_eq!(parsed, t);
    }

    #[test]
    fn cumulative_rows_are_running_sums() {
        let c = three_by_three().to_cumulative().unwrap();
        assert_eq!(c.value(CellIndex::new(0, 0)), Some(100.0));
        assert_eq!(c.value(CellIndex::new(0, 1)), Some(160.0));
        assert_eq!(c.value(CellIndex::new(0, 2)), Some(200.0));
        assert_eq!(c.value(CellIndex::new(1, 1)), Some(176.0));
        assert_eq!(c.value(CellIndex::new(2, 0)), Some(120.0));
    }

    #[test]
    fn conversion_round_trip_is_exact() {
        // 0.1 + 0.2 is the classic case where naive differencing of the
        // running sums would not return the original increments bit-for-bit.
        let t = Triangle::from_rows(
            vec![vec![0.1, 0.2, 0.3], vec![1e16, 1.0], vec![5.5]],
            TriangleKind::Incremental,
        )
        .unwrap();
        let back = t.to_cumulative().unwrap().to_incremental().unwrap();
        for (cell, v) in t.observed_values() {
            assert_eq!(back.value(cell), Some(v), "cell {cell:?}");
        }
    }

    #[test]
    fn conversion_requires_matching_kind() {
        let t = three_by_three();
        assert!(matches!(
            t.to_incremental(),
            Err(Error::KindMismatch { .. })
        ));
        let c = t.to_cumulative().unwrap();
        assert!(matches!(c.to_cumulative(), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn cell_counts_match_formulas() {
        let t = three_by_three();
        assert_eq!(t.observed_count(), 6);
        assert_eq!(t.future_count(), 3);
        assert_eq!(t.observed_cells().count(), 6);
        assert_eq!(t.future_cells().count(), 3);
        let all: usize = t.observed_count() + t.future_count();
        assert_eq!(all, t.size() * t.size());
    }

    #[test]
    fn future_cells_for_n2() {
        let cells: Vec<_> = future_cells(2).collect();
        assert_eq!(
            cells,
            vec![
                CellIndex::new(1, 2),
                CellIndex::new(2, 1),
                CellIndex::new(2, 2)
            ]
        );
    }

    #[test]
    fn column_and_row_sums() {
        let t = three_by_three();
        assert_eq!(t.column_sums(), vec![330.0, 126.0, 40.0]);
        assert_eq!(t.row_sums(), vec![200.0, 176.0, 120.0]);
    }

    #[test]
    fn rejects_trapezoid_rows() {
        let short = Triangle::from_rows(
            vec![vec![1.0, 2.0], vec![3.0], vec![4.0]],
            TriangleKind::Incremental,
        );
        assert!(matches!(short, Err(Error::IncompleteTriangle { .. })));
        let long = Triangle::from_rows(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            TriangleKind::Incremental,
        );
        assert!(matches!(long, Err(Error::FutureCellPresent { .. })));
    }

    #[test]
    fn rejects_non_finite_values() {
        let t = Triangle::from_rows(
            vec![vec![1.0, f64::NAN], vec![3.0]],
            TriangleKind::Incremental,
        );
        assert!(matches!(t, Err(Error::Domain(_))));
    }
}
