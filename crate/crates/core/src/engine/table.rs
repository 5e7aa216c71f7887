use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseVec};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;

/// How stored gradients are represented.
///
/// `Dense` keeps every `g_i` as a full vector, exactly as the algorithm is
/// written. `Scalar` keeps one loss coefficient `ν_i` per example and treats
/// the regularizer part of every entry as one shared vector, which cancels
/// in `g_j − ḡ`; the cached mean then holds only `(1/n) Σ ν_i X_i`. The two
/// coincide when `μ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableStorage {
    #[default]
    Dense,
    Scalar,
}

#[derive(Debug, Clone)]
enum Entries {
    /// Row-major `n × dim`.
    Dense(Vec<f64>),
    Scalar(Vec<f64>),
}

/// Per-example stored gradients with a cached mean.
#[derive(Debug, Clone)]
pub struct GradientTable {
    n: usize,
    dim: usize,
    entries: Entries,
    mean: Vec<f64>,
}

impl GradientTable {
    pub fn zeros(n: usize, dim: usize, storage: TableStorage) -> Self {
        let entries = match storage {
            TableStorage::Dense => Entries::Dense(vec![0.0; n * dim]),
            TableStorage::Scalar => Entries::Scalar(vec![0.0; n]),
        };
        Self {
            n,
            dim,
            entries,
            mean: vec![0.0; dim],
        }
    }

    /// Dense table from explicit entries; the mean is computed directly.
    pub fn from_dense_entries(entries: &[Vec<f64>]) -> Result<Self> {
        let n = entries.len();
        let dim = entries.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * dim);
        for e in entries {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.len(),
                });
            }
            flat.extend_from_slice(e);
        }
        let mut table = Self {
            n,
            dim,
            entries: Entries::Dense(flat),
            mean: vec![0.0; dim],
        };
        table.mean = table.dense_mean();
        Ok(table)
    }

    /// Scalar table from explicit coefficients.
    pub fn from_coefficients(coefficients: Vec<f64>, ds: &Dataset) -> Self {
        let mut table = Self {
            n: coefficients.len(),
            dim: ds.dim(),
            entries: Entries::Scalar(coefficients),
            mean: vec![0.0; ds.dim()],
        };
        table.mean = table.recompute_mean(ds);
        table
    }

    pub fn storage(&self) -> TableStorage {
        match self.entries {
            Entries::Dense(_) => TableStorage::Dense,
            Entries::Scalar(_) => TableStorage::Scalar,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cached `(1/n) Σ g_i`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dense_entry(&self, j: usize) -> Option<&[f64]> {
        match &self.entries {
            Entries::Dense(flat) => Some(&flat[j * self.dim..(j + 1) * self.dim]),
            Entries::Scalar(_) => None,
        }
    }

    pub fn coefficient(&self, j: usize) -> Option<f64> {
        match &self.entries {
            Entries::Dense(_) => None,
            Entries::Scalar(c) => Some(c[j]),
        }
    }

    /// Entry `j` as a dense vector. Scalar tables yield the loss part only.
    pub fn entry(&self, j: usize, ds: &Dataset) -> Vec<f64> {
        match &self.entries {
            Entries::Dense(flat) => flat[j * self.dim..(j + 1) * self.dim].to_vec(),
            Entries::Scalar(c) => {
                let mut v = vec![0.0; self.dim];
                ds.row(j).axpy(c[j], &mut v);
                v
            }
        }
    }

    /// Replaces a dense entry and updates the mean by `(g_new − g_old)/n`.
    pub fn set_dense(&mut self, j: usize, g: &[f64]) {
        let inv_n = 1.0 / self.n as f64;
        let dim = self.dim;
        let Entries::Dense(flat) = &mut self.entries else {
            panic!("set_dense on a scalar table");
        };
        let old = &mut flat[j * dim..(j + 1) * dim];
        for ((m, o), new) in self.mean.iter_mut().zip(old.iter_mut()).zip(g) {
            *m += (new - *o) * inv_n;
            *o = *new;
        }
    }

    /// Replaces a scalar coefficient and updates the mean on the row support.
    pub fn set_coefficient(&mut self, j: usize, nu: f64, row: &SparseVec) {
        let inv_n = 1.0 / self.n as f64;
        let Entries::Scalar(c) = &mut self.entries else {
            panic!("set_coefficient on a dense table");
        };
        let delta = nu - c[j];
        c[j] = nu;
        row.axpy(delta * inv_n, &mut self.mean);
    }

    fn dense_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        if let Entries::Dense(flat) = &self.entries {
            for e in flat.chunks_exact(self.dim.max(1)) {
                for (m, v) in mean.iter_mut().zip(e) {
                    *m += v;
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|m| *m *= inv_n);
        mean
    }

    /// Mean recomputed from the entries.
    pub fn recompute_mean(&self, ds: &Dataset) -> Vec<f64> {
        match &self.entries {
            Entries::Dense(_) => self.dense_mean(),
            Entries::Scalar(c) => {
                let mut mean = vec![0.0; self.dim];
                let inv_n = 1.0 / self.n as f64;
                for (j, nu) in c.iter().enumerate() {
                    ds.row(j).axpy(nu * inv_n, &mut mean);
                }
                mean
            }
        }
    }

    /// `‖cached − recomputed‖ / (1 + ‖recomputed‖)`.
    pub fn mean_drift(&self, ds: &Dataset) -> f64 {
        let fresh = self.recompute_mean(ds);
        let diff: f64 = self
            .mean
            .iter()
            .zip(&fresh)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        diff.sqrt() / (1.0 + norm_sq(&fresh).sqrt())
    }

    /// Replaces the cached mean with a fresh recomputation.
    pub fn refresh_mean(&mut self, ds: &Dataset) {
        self.mean = self.recompute_mean(ds);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![
                SparseVec::new(vec![0, 2], vec![1.0, 2.0]).unwrap(),
                SparseVec::new(vec![1], vec![-3.0]).unwrap(),
            ],
            vec![1.0, -1.0],
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_table_has_zero_mean() {
        for storage in [TableStorage::Dense, TableStorage::Scalar] {
            let t = GradientTable::zeros(4, 3, storage);
            assert!(t.mean().iter().all(|&m| m == 0.0));
            assert_eq!(t.storage(), storage);
        }
    }

    #[test]
    fn dense_updates_keep_mean() {
        let ds = toy();
        let mut t = GradientTable::zeros(2, 3, TableStorage::Dense);
        t.set_dense(0, &[1.0, 2.0, 3.0]);
        t.set_dense(1, &[-1.0, 0.5, 0.0]);
        t.set_dense(0, &[0.0, 0.0, 1.0]);
        assert_eq!(t.mean(), &[-0.5, 0.25, 0.5]);
        assert!(t.mean_drift(&ds) < 1e-15);
    }

    #[test]
    fn scalar_updates_keep_mean() {
        let ds = toy();
        let mut t = GradientTable::zeros(2, 3, TableStorage::Scalar);
        t.set_coefficient(0, 2.0, ds.row(0));
        t.set_coefficient(1, 1.0, ds.row(1));
        t.set_coefficient(0, -1.0, ds.row(0));
        assert_eq!(t.mean(), &[-0.5, -1.5, -1.0]);
        assert_eq!(t.entry(1, &ds), vec![0.0, -3.0, 0.0]);
        assert!(t.mean_drift(&ds) < 1e-15);
    }
}
