//! Robust input scaling and dB/min-max output scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::dbm_to_watt;
use crate::{Error, Result};

/// Output floor before the dB conversion (dBm).
pub const OUTPUT_FLOOR_DBM: f64 = -80.0;

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column_rows(m: &DMatrix<f64>, col: usize, rows: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().map(|&r| m[(r, col)]).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `x' = (x − median)/IQR` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
    /// Features whose IQR was zero; these are only centered.
    pub degenerate: Vec<usize>,
}

impl InputScaler {
    /// Fits on the given rows of `x` (samples are rows).
    pub fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("cannot fit a normalizer on an empty split".into()));
        }
        let mut median = Vec::with_capacity(x.ncols());
        let mut iqr = Vec::with_capacity(x.ncols());
        let mut degenerate = Vec::new();
        for c in 0..x.ncols() {
            let v = column_rows(x, c, rows);
            median.push(quantile_sorted(&v, 0.5));
            let spread = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
            if spread > 0.0 {
                iqr.push(spread);
            } else {
                iqr.push(1.0);
                degenerate.push(c);
            }
        }
        Ok(Self { median, iqr, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.median.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| (x[(r, c)] - self.median[c]) / self.iqr[c])
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.median.iter().zip(&self.iqr)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// `y' = (dB(max(y, floor)) − min)/(max − min)` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputScaler {
    pub floor_dbm: f64,
    pub min_db: Vec<f64>,
    pub max_db: Vec<f64>,
    /// Features that were constant in training; their range is widened by 1 dB.
    pub degenerate: Vec<usize>,
}

fn to_dbm(y: f64, floor: f64) -> f64 {
    10.0 * (y.max(floor) * 1e3).log10()
}

impl OutputScaler {
    /// Fits on the given rows of `y` (powers in W, samples are rows).
    pub fn fit(y: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("cannot fit a normalizer on an empty split".into()));
        }
        let floor = dbm_to_watt(OUTPUT_FLOOR_DBM);
        let mut min_db = Vec::with_capacity(y.ncols());
        let mut max_db = Vec::with_capacity(y.ncols());
        let mut degenerate = Vec::new();
        for c in 0..y.ncols() {
            let db: Vec<f64> = rows.iter().map(|&r| to_dbm(y[(r, c)], floor)).collect();
            let lo = db.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Domain(format!("non-finite label in column {c}")));
            }
            if hi <= lo {
                hi = lo + 1.0;
                degenerate.push(c);
            }
            min_db.push(lo);
            max_db.push(hi);
        }
        Ok(Self { floor_dbm: OUTPUT_FLOOR_DBM, min_db, max_db, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.min_db.len()
    }

    fn floor(&self) -> f64 {
        dbm_to_watt(self.floor_dbm)
    }

    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let floor = self.floor();
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
            (to_dbm(y[(r, c)], floor) - self.min_db[c]) / (self.max_db[c] - self.min_db[c])
        })
    }

    pub fn invert_row(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(c, v)| dbm_to_watt(self.min_db[c] + v * (self.max_db[c] - self.min_db[c])))
            .collect()
    }

    pub fn invert(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
            dbm_to_watt(self.min_db[c] + y[(r, c)] * (self.max_db[c] - self.min_db[c]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input: InputScaler,
    pub output: OutputScaler,
}

impl Normalizer {
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, train_rows: &[usize]) -> Result<Self> {
        Ok(Self { input: InputScaler::fit(x, train_rows)?, output: OutputScaler::fit(y, train_rows)? })
    }
}
