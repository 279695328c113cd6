//! Country-specific cubic B-spline bases.
//!
//! Interior knots sit on a lattice with fixed spacing anchored at the
//! country's most recent survey year, so one basis function peaks exactly at
//! that year. Boundary knots are clamped (replicated `DEGREE + 1` times) at
//! the window edges.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;
pub const DEFAULT_SPACING: f64 = 3.5;

const KNOT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    /// Lattice points `recent + j * spacing` inside the closed window.
    pub interior: Vec<f64>,
    pub window: (f64, f64),
    pub spacing: f64,
}

impl KnotVector {
    /// Full clamped knot vector. Lattice points that coincide with a window
    /// edge merge into the replicated boundary knot.
    pub fn augmented(&self) -> Vec<f64> {
        let (start, end) = self.window;
        let mut knots = vec![start; DEGREE + 1];
        knots.extend(
            self.interior
                .iter()
                .copied()
                .filter(|&k| k > start + KNOT_EPS && k < end - KNOT_EPS),
        );
        knots.extend(std::iter::repeat_n(end, DEGREE + 1));
        knots
    }

    pub fn n_basis(&self) -> usize {
        self.augmented().len() - DEGREE - 1
    }
}

/// Interior knots on the lattice `recent_year + j * spacing` within `window`.
pub fn build_knots(recent_year: f64, window: (f64, f64), spacing: f64) -> Result<KnotVector> {
    let (start, end) = window;
    if !(spacing > 0.0) {
        return Err(Error::Config(format!("knot spacing must be positive, got {spacing}")));
    }
    if !(start < recent_year && recent_year <= end + KNOT_EPS) {
        return Err(Error::Domain(format!(
            "reference year {recent_year} outside window ({start}, {end}]"
        )));
    }
    let j_lo = ((start - recent_year) / spacing - KNOT_EPS).ceil() as i64;
    let j_hi = ((end - recent_year) / spacing + KNOT_EPS).floor() as i64;
    let interior = (j_lo..=j_hi)
        .map(|j| {
            let k = recent_year + j as f64 * spacing;
            // Snap lattice points that land on an edge within rounding.
            if (k - start).abs() < KNOT_EPS {
                start
            } else if (k - end).abs() < KNOT_EPS {
                end
            } else {
                k
            }
        })
        .collect();
    Ok(KnotVector {
        interior,
        window,
        spacing,
    })
}

/// Values of all degree-`degree` B-splines on `knots` at `x`, by the bottom-up
/// Cox–de Boor recursion. Returns `knots.len() - degree - 1` values.
pub fn basis_functions(knots: &[f64], degree: usize, x: f64) -> Result<Vec<f64>> {
    if knots.len() < degree + 2 {
        return Err(Error::Shape(format!(
            "{} knots cannot carry a degree-{degree} basis",
            knots.len()
        )));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("knots must be non-decreasing".into()));
    }
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if !(x >= first && x <= last) {
        return Err(Error::Domain(format!(
            "x = {x} outside knot span [{first}, {last}]"
        )));
    }
    let n_intervals = knots.len() - 1;
    let mut n: Vec<f64> = (0..n_intervals)
        .map(|i| {
            if knots[i] <= x && x < knots[i + 1] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    if x == last {
        // Right end: close the last non-degenerate interval.
        if let Some(i) = (0..n_intervals).rev().find(|&i| knots[i] < knots[i + 1]) {
            n[i] = 1.0;
        }
    }
    for d in 1..=degree {
        let next: Vec<f64> = (0..n_intervals - d)
            .map(|i| {
                let left_den = knots[i + d] - knots[i];
                let right_den = knots[i + d + 1] - knots[i + 1];
                let left = if left_den > 0.0 {
                    (x - knots[i]) / left_den * n[i]
                } else {
                    0.0
                };
                let right = if right_den > 0.0 {
                    (knots[i + d + 1] - x) / right_den * n[i + 1]
                } else {
                    0.0
                };
                left + right
            })
            .collect();
        n = next;
    }
    Ok(n)
}

/// Cubic basis matrix, one row per year.
pub fn evaluate_basis(knots: &[f64], years: &[f64]) -> Result<DMatrix<f64>> {
    if knots.len() < 2 * (DEGREE + 1) {
        return Err(Error::Shape(format!(
            "need at least {} knots, got {}",
            2 * (DEGREE + 1),
            knots.len()
        )));
    }
    let k = knots.len() - DEGREE - 1;
    let mut out = DMatrix::zeros(years.len(), k);
    for (r, &t) in years.iter().enumerate() {
        let row = basis_functions(knots, DEGREE, t)?;
        for (c, v) in row.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Index of the basis function whose central knot is `recent_year`.
pub fn reference_knot_index(knots: &KnotVector, recent_year: f64) -> Result<usize> {
    let (start, end) = knots.window;
    let augmented = knots.augmented();
    let k = augmented.len() - DEGREE - 1;
    if (recent_year - end).abs() < KNOT_EPS {
        return Ok(k - 1);
    }
    if (recent_year - start).abs() < KNOT_EPS {
        return Ok(0);
    }
    augmented
        .iter()
        .position(|&t| (t - recent_year).abs() < KNOT_EPS)
        .map(|i| i - DEGREE / 2 - 1)
        .ok_or_else(|| Error::Domain(format!("no knot placed at reference year {recent_year}")))
}

/// A country's spline basis over the estimation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub country: String,
    pub recent_year: f64,
    pub knots: KnotVector,
    augmented: Vec<f64>,
    pub k_star: usize,
    pub grid: Vec<f64>,
    /// `grid.len() x n_basis()` evaluations.
    pub basis: DMatrix<f64>,
}

impl BasisSet {
    pub fn new(
        country: impl Into<String>,
        recent_year: f64,
        window: (f64, f64),
        spacing: f64,
        grid: &[f64],
    ) -> Result<Self> {
        let knots = build_knots(recent_year, window, spacing)?;
        let k_star = reference_knot_index(&knots, recent_year)?;
        let augmented = knots.augmented();
        let basis = evaluate_basis(&augmented, grid)?;
        Ok(Self {
            country: country.into(),
            recent_year,
            knots,
            augmented,
            k_star,
            grid: grid.to_vec(),
            basis,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.basis.ncols()
    }

    pub fn augmented_knots(&self) -> &[f64] {
        &self.augmented
    }

    /// Basis evaluated at an arbitrary (possibly fractional) year.
    pub fn row(&self, year: f64) -> Result<Vec<f64>> {
        basis_functions(&self.augmented, DEGREE, year)
    }

    /// Plot-ready `year,k,value` rows (k is 1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["year", "k", "value"])?;
        for (r, year) in self.grid.iter().enumerate() {
            for k in 0..self.n_basis() {
                w.write_record([year.to_string(), (k + 1).to_string(), self.basis[(r, k)].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<basis csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (1990..=2025).map(f64::from).collect()
    }

    #[test]
    fn lattice_anchored_at_recent_year() {
        let kv = build_knots(2015.0, (1990.0, 2025.0), 3.5).unwrap();
        let expected: Vec<f64> = (-7..=2).map(|j| 2015.0 + 3.5 * j as f64).collect();
        assert_eq!(kv.interior, expected);
        assert_eq!(kv.interior[0], 1990.5);
        assert!(kv.interior.iter().all(|&k| k <= 2025.0));
    }

    #[test]
    fn recent_at_window_end() {
        let kv = build_knots(2025.0, (1990.0, 2025.0), 3.5).unwrap();
        assert_eq!(*kv.interior.last().unwrap(), 2025.0);
        let k_star = reference_knot_index(&kv, 2025.0).unwrap();
        assert_eq!(k_star, kv.n_basis() - 1);
    }

    #[test]
    fn recent_outside_window_is_error() {
        assert!(build_knots(1985.0, (1990.0, 2025.0), 3.5).is_err());
        assert!(build_knots(2030.0, (1990.0, 2025.0), 3.5).is_err());
        assert!(build_knots(2015.0, (1990.0, 2025.0), 0.0).is_err());
    }

    #[test]
    fn different_recent_years_give_different_knots() {
        let afg = build_knots(2015.0, (1990.0, 2025.0), 3.5).unwrap();
        let drc = build_knots(2013.0, (1990.0, 2025.0), 3.5).unwrap();
        assert_ne!(afg.interior, drc.interior);
    }

    #[test]
    fn k_star_peaks_at_recent_year() {
        for recent in [2013.0, 2015.0] {
            let b = BasisSet::new("x", recent, (1990.0, 2025.0), 3.5, &grid()).unwrap();
            let col = b.basis.column(b.k_star);
            let argmax = (0..col.len()).max_by(|&i, &j| col[i].total_cmp(&col[j])).unwrap();
            assert_eq!(b.grid[argmax], recent);
            assert_eq!(b.augmented_knots()[b.k_star + 2], recent);
        }
    }

    #[test]
    fn partition_of_unity_and_positivity() {
        let b = BasisSet::new("x", 2015.0, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        for r in 0..b.grid.len() {
            let row = b.basis.row(r);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn local_support_spans_at_most_four_intervals() {
        let b = BasisSet::new("x", 2015.0, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        let t = b.augmented_knots();
        for k in 0..b.n_basis() {
            for (r, &year) in b.grid.iter().enumerate() {
                if b.basis[(r, k)] > 0.0 {
                    assert!(year >= t[k] && year <= t[k + DEGREE + 1]);
                }
            }
        }
    }

    #[test]
    fn out_of_span_rejected() {
        let b = BasisSet::new("x", 2015.0, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        assert!(b.row(1989.0).is_err());
        assert!(b.row(2025.5).is_err());
        let end = b.row(2025.0).unwrap();
        assert!((end.last().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shift_by_one_spacing_reindexes_columns() {
        let a = BasisSet::new("x", 2015.0, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        let b = BasisSet::new("x", 2011.5, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        assert_eq!(a.knots.interior, b.knots.interior);
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.k_star, b.k_star + 1);
    }

    #[test]
    fn missing_reference_knot_is_error() {
        let kv = build_knots(2015.0, (1990.0, 2025.0), 3.5).unwrap();
        assert!(reference_knot_index(&kv, 2016.0).is_err());
    }

    #[test]
    fn basis_csv_has_one_row_per_year_and_function() {
        let b = BasisSet::new("x", 2015.0, (1990.0, 2025.0), 3.5, &grid()).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 36 * b.n_basis());
    }
}
