//! Supervised datasets and their on-disk format.
//!
//! Binary layout: `b"CFD1"`, then little-endian `u32` rows, input columns and
//! output columns, then each row's inputs followed by its labels as `f64`.
//! A `<file>.json` sidecar holds split tags and provenance.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CFD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Where the samples came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// `dl` or `ul`.
    pub direction: String,
    /// Policy that produced the labels.
    pub solver: String,
    pub seed: u64,
    /// sha256 of the serialized system configuration.
    pub scenario_sha256: String,
    /// sha256 of the serialized solver configuration.
    pub solver_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub inputs: DMatrix<f64>,
    pub labels: DMatrix<f64>,
    pub splits: Vec<Split>,
    /// Trial index each row was drawn from.
    pub sample_ids: Vec<u64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    rows: usize,
    input_cols: usize,
    output_cols: usize,
    splits: Vec<Split>,
    sample_ids: Vec<u64>,
    provenance: Provenance,
}

/// Shuffled 80/10/10 assignment.
pub fn assign_splits(n: usize, split_seed: u64) -> Vec<Split> {
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = (0.1 * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(split_seed));
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in idx.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, labels: DMatrix<f64>, splits: Vec<Split>, provenance: Provenance) -> Result<Self> {
        if inputs.nrows() != labels.nrows() || splits.len() != inputs.nrows() {
            return Err(Error::Dimension(format!(
                "{} input rows, {} label rows, {} split tags",
                inputs.nrows(),
                labels.nrows(),
                splits.len()
            )));
        }
        let sample_ids = (0..inputs.nrows() as u64).collect();
        Ok(Self { inputs, labels, splits, sample_ids, provenance })
    }

    pub fn with_sample_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::Dimension(format!("{} sample ids for {} rows", ids.len(), self.len())));
        }
        self.sample_ids = ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Same samples and splits with different labels (e.g. per-stage targets).
    pub fn with_labels(&self, labels: DMatrix<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), labels, self.splits.clone(), self.provenance.clone())?.with_sample_ids(self.sample_ids.clone())
    }

    pub fn with_inputs(&self, inputs: DMatrix<f64>) -> Result<Self> {
        Self::new(inputs, self.labels.clone(), self.splits.clone(), self.provenance.clone())?.with_sample_ids(self.sample_ids.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Format("dimension exceeds u32".into()));
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(MAGIC)?;
        for v in [self.len(), self.inputs.ncols(), self.labels.ncols()] {
            w.write_all(&dim(v)?.to_le_bytes())?;
        }
        for r in 0..self.len() {
            for v in self.inputs.row(r).iter().chain(self.labels.row(r).iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        let side = Sidecar {
            rows: self.len(),
            input_cols: self.inputs.ncols(),
            output_cols: self.labels.ncols(),
            splits: self.splits.clone(),
            sample_ids: self.sample_ids.clone(),
            provenance: self.provenance.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut u32_buf = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut u32_buf)?;
            *d = u32::from_le_bytes(u32_buf) as usize;
        }
        let [rows, in_cols, out_cols] = dims;
        let mut inputs = DMatrix::zeros(rows, in_cols);
        let mut labels = DMatrix::zeros(rows, out_cols);
        let mut f64_buf = [0u8; 8];
        for i in 0..rows {
            for j in 0..in_cols + out_cols {
                r.read_exact(&mut f64_buf).map_err(|_| Error::Format("truncated dataset".into()))?;
                let v = f64::from_le_bytes(f64_buf);
                if j < in_cols {
                    inputs[(i, j)] = v;
                } else {
                    labels[(i, j - in_cols)] = v;
                }
            }
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        if (side.rows, side.input_cols, side.output_cols) != (rows, in_cols, out_cols) {
            return Err(Error::Format("sidecar shape disagrees with the binary header".into()));
        }
        Self::new(inputs, labels, side.splits, side.provenance)?.with_sample_ids(side.sample_ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let s = assign_splits(2000, 9);
        let count = |t| s.iter().filter(|&&x| x == t).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (1600, 200, 200));
        assert_eq!(s, assign_splits(2000, 9));
        assert_ne!(s, assign_splits(2000, 10));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.cfd");
        let x = DMatrix::from_fn(5, 3, |i, j| i as f64 * 0.1 - j as f64 * 1e-300);
        let y = DMatrix::from_fn(5, 2, |i, j| (i * j) as f64 + f64::EPSILON);
        let prov = Provenance { direction: "dl".into(), solver: "opc-maximin".into(), seed: 3, ..Default::default() };
        let ds = Dataset::new(x, y, assign_splits(5, 1), prov).unwrap().with_sample_ids(vec![3, 1, 4, 5, 9]).unwrap();
        ds.write(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CFD1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 16 + 5 * 5 * 8);
        // first row: inputs then labels
        assert_eq!(f64::from_le_bytes(bytes[16 + 3 * 8..16 + 4 * 8].try_into().unwrap()), f64::EPSILON);
        assert_eq!(Dataset::read(&path).unwrap(), ds);
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.cfd");
        let ds = Dataset::new(DMatrix::zeros(2, 1), DMatrix::zeros(2, 1), vec![Split::Train; 2], Provenance::default()).unwrap();
        ds.write(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(Dataset::read(&path), Err(Error::Format(_))));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(Dataset::read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(Dataset::new(DMatrix::zeros(2, 1), DMatrix::zeros(3, 1), vec![Split::Train; 2], Provenance::default()).is_err());
    }
}
