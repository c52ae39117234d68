//! Training-data containers: a row-major design matrix and per-variable
//! cutpoint grids.

use crate::{BartError, Result};

/// Row-major n×p covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Vec<f64>,
    num_rows: usize,
    num_cols: usize,
}

impl DesignMatrix {
    /// Builds a matrix from a flat row-major buffer.
    pub fn new(values: Vec<f64>, num_rows: usize, num_cols: usize) -> Result<Self> {
        if values.len() != num_rows * num_cols {
            return Err(BartError::InvalidInput(format!(
                "design matrix buffer has {} entries, expected {}*{}",
                values.len(),
                num_rows,
                num_cols
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BartError::InvalidInput("design matrix contains non-finite entries".into()));
        }
        Ok(Self { values, num_rows, num_cols })
    }

    /// Builds a matrix from per-row slices (all rows must share a length).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_rows = rows.len();
        let num_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(num_rows * num_cols);
        for row in rows {
            if row.len() != num_cols {
                return Err(BartError::InvalidInput("ragged design matrix rows".into()));
            }
            values.extend_from_slice(row);
        }
        Self::new(values, num_rows, num_cols)
    }

    /// Number of rows n.
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    /// Number of covariates p.
    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Borrow row `i` as a slice of length p.
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.num_cols;
        &self.values[start..start + self.num_cols]
    }

    /// Single entry (row, col).
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.num_cols + col]
    }
}

/// Per-variable grids of candidate split cutpoints.
///
/// Continuous variables receive `num_cutpoints` equally spaced interior points
/// over their observed training range (endpoints excluded, so every cut
/// partitions the observed domain non-trivially). Variables taking only the
/// values {0, 1} receive the single cutpoint 0.5. A constant column has an
/// empty grid and can never be split on.
#[derive(Debug, Clone, PartialEq)]
pub struct CutpointGrid {
    cuts: Vec<Vec<f64>>,
}

impl CutpointGrid {
    /// Builds grids from observed training covariates.
    pub fn from_design(x: &DesignMatrix, num_cutpoints: usize) -> Self {
        let mut cuts = Vec::with_capacity(x.num_cols());
        for v in 0..x.num_cols() {
            cuts.push(Self::column_grid(x, v, num_cutpoints));
        }
        Self { cuts }
    }

    fn column_grid(x: &DesignMatrix, v: usize, num_cutpoints: usize) -> Vec<f64> {
        let n = x.num_rows();
        if n == 0 {
            return Vec::new();
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut binary = true;
        for i in 0..n {
            let val = x.get(i, v);
            lo = lo.min(val);
            hi = hi.max(val);
            if val != 0.0 && val != 1.0 {
                binary = false;
            }
        }
        if lo == hi {
            return Vec::new(); // constant column: no legal split
        }
        if binary {
            return vec![0.5];
        }
        let span = hi - lo;
        (1..=num_cutpoints)
            .map(|i| lo + span * i as f64 / (num_cutpoints as f64 + 1.0))
            .collect()
    }

    /// Grids supplied directly (used by tests and the prior simulator).
    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Self {
        Self { cuts }
    }

    /// Number of variables covered.
    pub fn num_vars(&self) -> usize {
        self.cuts.len()
    }

    /// The ascending cutpoint values for variable `v`.
    pub fn cuts(&self, v: usize) -> &[f64] {
        &self.cuts[v]
    }

    /// Index of an exact cut value within variable `v`'s grid.
    pub fn index_of(&self, v: usize, cut: f64) -> Option<usize> {
        self.cuts[v].binary_search_by(|c| c.total_cmp(&cut)).ok()
    }
}
