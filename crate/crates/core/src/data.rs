//! Sparse labeled datasets and the constants of the regularized problem.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::norm_sq;
use crate::losses::LossKind;
use crate::rng::IndexSampler;

/// One data row as sorted `(index, value)` pairs with a cached squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
    sq_norm: f64,
}

impl SparseVec {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            ));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return invalid(format!(
                "indices not strictly increasing at {} -> {}",
                w[0], w[1]
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite value {v}"));
        }
        let sq_norm = norm_sq(&values);
        Ok(Self {
            indices,
            values,
            sq_norm,
        })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
            sq_norm: 0.0,
        }
    }

    /// Builds a row from a dense slice, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self::new(indices, values)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    /// `y += alpha * self`
    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        for (i, v) in self.iter() {
            y[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy(1.0, &mut out);
        out
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }
}

/// Immutable collection of rows and labels with a fixed feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVec>,
    labels: Vec<f64>,
    dim: usize,
    max_sq_norm: f64,
}

impl Dataset {
    pub fn new(rows: Vec<SparseVec>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return invalid("dataset must contain at least one row");
        }
        if rows.len() != labels.len() {
            return invalid(format!("{} rows but {} labels", rows.len(), labels.len()));
        }
        if let Some(v) = labels.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite label {v}"));
        }
        if let Some(m) = rows.iter().filter_map(SparseVec::max_index).max() {
            if m >= dim {
                return invalid(format!(
                    "feature index {m} out of range for dimension {dim}"
                ));
            }
        }
        let max_sq_norm = rows.iter().map(SparseVec::sq_norm).fold(0.0, f64::max);
        Ok(Self {
            rows,
            labels,
            dim,
            max_sq_norm,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &SparseVec {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn max_sq_norm(&self) -> f64 {
        self.max_sq_norm
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseVec::nnz).sum()
    }

    /// Raises the feature count, e.g. to align train and test shapes.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return invalid(format!("cannot shrink dimension {} to {dim}", self.dim));
        }
        self.dim = dim;
        Ok(self)
    }

    /// Rows at the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let rows = positions.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = positions.iter().map(|&i| self.labels[i]).collect();
        Self::new(rows, labels, self.dim)
    }

    /// Divides every feature by its largest absolute value so that all
    /// entries land in `[-1, 1]`. Not applied by any loader.
    pub fn scaled_to_unit_range(&self) -> Self {
        let mut max_abs = vec![0.0f64; self.dim];
        for row in &self.rows {
            for (i, v) in row.iter() {
                max_abs[i] = max_abs[i].max(v.abs());
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let values = r
                    .iter()
                    .map(|(i, v)| if max_abs[i] > 0.0 { v / max_abs[i] } else { v })
                    .collect();
                SparseVec::new(r.indices.clone(), values).expect("scaling keeps rows valid")
            })
            .collect();
        Self::new(rows, self.labels.clone(), self.dim).expect("scaling keeps dataset valid")
    }

    /// LIBSVM text with 1-based indices. Values use the shortest decimal
    /// representation that parses back to the same `f64`.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, y) in self.rows.iter().zip(&self.labels) {
            let _ = write!(out, "{y}");
            for (i, v) in row.iter() {
                let _ = write!(out, " {}:{v}", i + 1);
            }
            out.push('\n');
        }
        out
    }
}

/// How raw file labels map to the labels used by the losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMap {
    /// Accept only `+1` and `-1`.
    #[default]
    PlusMinusOne,
    /// Pass labels through unchanged (regression targets).
    Identity,
    /// Explicit `raw -> mapped` pairs; any other raw label is an error.
    Pairs(Vec<(f64, f64)>),
}

impl LabelMap {
    /// Parses `"1:1,2:-1"` style pairs, or `pm1` / `identity`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "pm1" | "" => return Ok(LabelMap::PlusMinusOne),
            "identity" => return Ok(LabelMap::Identity),
            _ => {}
        }
        let mut pairs = Vec::new();
        for item in text.split(',') {
            let (raw, mapped) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad label pair `{item}`")))?;
            let raw: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad raw label `{raw}`")))?;
            let mapped: f64 = mapped
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad mapped label `{mapped}`")))?;
            pairs.push((raw, mapped));
        }
        Ok(LabelMap::Pairs(pairs))
    }

    fn apply(&self, raw: f64) -> Option<f64> {
        match self {
            LabelMap::PlusMinusOne => (raw == 1.0 || raw == -1.0).then_some(raw),
            LabelMap::Identity => Some(raw),
            LabelMap::Pairs(pairs) => pairs.iter().find(|(r, _)| *r == raw).map(|(_, m)| *m),
        }
    }
}

fn parse_error<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        message: message.into(),
    })
}

/// Reads LIBSVM text: `<label> <idx>:<val> ...` with 1-based, strictly
/// increasing indices. `#` starts a comment; blank lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, labels: &LabelMap) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let raw: f64 = match label_tok.parse() {
            Ok(v) => v,
            Err(_) => return parse_error(lineno, format!("bad label `{label_tok}`")),
        };
        let Some(y) = labels.apply(raw) else {
            return parse_error(lineno, format!("label {raw} not accepted by {labels:?}"));
        };
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let Some((idx, val)) = tok.split_once(':') else {
                return parse_error(lineno, format!("malformed token `{tok}`"));
            };
            let idx: u32 = match idx.parse() {
                Ok(i) if i >= 1 => i,
                _ => return parse_error(lineno, format!("bad feature index in `{tok}`")),
            };
            let val: f64 = match val.parse() {
                Ok(v) if f64::is_finite(v) => v,
                _ => return parse_error(lineno, format!("bad feature value in `{tok}`")),
            };
            let zero_based = idx - 1;
            if indices.last().is_some_and(|&last| last >= zero_based) {
                return parse_error(lineno, format!("index {idx} is not increasing"));
            }
            indices.push(zero_based);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            dim = dim.max(last as usize + 1);
        }
        rows.push(SparseVec::new(indices, values).expect("validated above"));
        ys.push(y);
    }
    Dataset::new(rows, ys, dim)
}

pub fn parse_libsvm_str(text: &str, labels: &LabelMap) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), labels)
}

/// Loads a LIBSVM file, decompressing when the name ends in `.gz`.
pub fn load_libsvm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader), labels)
}

/// Number of rows kept by [`subsample`]: `⌈fraction·n⌉`.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    // absorb representation error such as 0.07 * 100 = 7.000000000000001
    let target = fraction * n as f64;
    let rounded = target.round();
    if (target - rounded).abs() <= 1e-9 * target.max(1.0) {
        rounded as usize
    } else {
        target.ceil() as usize
    }
}

/// `⌈fraction·n⌉` distinct rows drawn uniformly without replacement, kept in
/// their original order.
pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("fraction must lie in (0, 1], got {fraction}"));
    }
    let n = ds.n();
    let k = subsample_size(n, fraction);
    if k < 1 {
        return invalid(format!("fraction {fraction} of {n} rows selects nothing"));
    }
    if k >= n {
        return Ok(ds.clone());
    }
    // partial Fisher-Yates
    let mut positions: Vec<usize> = (0..n).collect();
    let mut sampler = IndexSampler::new(seed);
    for i in 0..k {
        let j = i + sampler.next_index(n - i);
        positions.swap(i, j);
    }
    positions.truncate(k);
    positions.sort_unstable();
    ds.select(&positions)
}

/// A dataset paired with a loss, regularization and smoothness constant.
///
/// Each term is `F_i(x) = l(<x, X_i>; y_i) + (μ/2)‖x‖²` and the objective is
/// their mean.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    dataset: Arc<Dataset>,
    loss: LossKind,
    mu: f64,
    lipschitz: Option<f64>,
}

/// `L = c_loss · max_i ‖X_i‖² + μ` with `c = 1/4` (logistic), `1` (squared);
/// the hinge has no finite `L`.
pub fn derive_constants(
    ds: impl Into<Arc<Dataset>>,
    loss: LossKind,
    mu: f64,
) -> Result<ProblemSpec> {
    ProblemSpec::new(ds.into(), loss, mu)
}

impl ProblemSpec {
    pub fn new(dataset: Arc<Dataset>, loss: LossKind, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return invalid(format!("regularization must be finite and >= 0, got {mu}"));
        }
        if loss.is_classification() {
            if let Some(y) = dataset.labels().iter().find(|&&y| y != 1.0 && y != -1.0) {
                return invalid(format!("{loss} loss needs labels in {{-1, +1}}, found {y}"));
            }
        }
        let lipschitz = loss
            .curvature_bound()
            .map(|c| c * dataset.max_sq_norm() + mu);
        Ok(Self {
            dataset,
            loss,
            mu,
            lipschitz,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn shared_dataset(&self) -> Arc<Dataset> {
        Arc::clone(&self.dataset)
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness constant of each regularized term; `None` for hinge.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.shared_dataset(), self.loss, mu)
    }

    /// `L/μ`, if both are finite and positive.
    pub fn condition_number(&self) -> Option<f64> {
        match self.lipschitz {
            Some(l) if self.mu > 0.0 => Some(l / self.mu),
            _ => None,
        }
    }

    pub fn term_value(&self, j: usize, x: &[f64]) -> f64 {
        let row = self.dataset.row(j);
        self.loss.value(row.dot(x), self.dataset.label(j)) + 0.5 * self.mu * norm_sq(x)
    }

    /// Mean of the regularized terms.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let ds = &self.dataset;
        let loss: f64 = ds
            .rows()
            .iter()
            .zip(ds.labels())
            .map(|(row, &y)| self.loss.value(row.dot(x), y))
            .sum();
        loss / ds.n() as f64 + 0.5 * self.mu * norm_sq(x)
    }

    /// A subgradient of `F_j` at `x` (the gradient for smooth losses).
    pub fn term_subgradient(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = x.iter().map(|v| self.mu * v).collect();
        let row = self.dataset.row(j);
        let k = self.loss.derivative(row.dot(x), self.dataset.label(j));
        row.axpy(k, &mut g);
        g
    }

    /// A subgradient of the full objective at `x`.
    pub fn full_subgradient(&self, x: &[f64]) -> Vec<f64> {
        let ds = &self.dataset;
        let n = ds.n() as f64;
        let mut g: Vec<f64> = x.iter().map(|v| self.mu * v).collect();
        for (row, &y) in ds.rows().iter().zip(ds.labels()) {
            row.axpy(self.loss.derivative(row.dot(x), y) / n, &mut g);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_line() {
        let ds = parse_libsvm_str("+1 1:0.5 3:-2\n", &LabelMap::default()).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.row(0).indices(), &[0, 2]);
        assert_eq!(ds.row(0).values(), &[0.5, -2.0]);
        assert_eq!(ds.row(0).sq_norm(), 4.25);
    }

    #[test]
    fn parses_empty_row_and_comments() {
        let text = "# header\n-1\n\n+1 2:1 # trailing\n";
        let ds = parse_libsvm_str(text, &LabelMap::default()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.row(0).nnz(), 0);
        assert_eq!(ds.label(0), -1.0);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_libsvm_str("1 3:abc", &LabelMap::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_libsvm_str("1 1:1\n-1 2:1 2:3\n", &LabelMap::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_libsvm_str("1 0:1\n", &LabelMap::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_libsvm_str("1 4\n", &LabelMap::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn label_maps() {
        assert!(parse_libsvm_str("2 1:1\n", &LabelMap::default()).is_err());
        let map = LabelMap::parse("1:1,2:-1").unwrap();
        let ds = parse_libsvm_str("2 1:1\n1 1:2\n", &map).unwrap();
        assert_eq!(ds.labels(), &[-1.0, 1.0]);
        let ds = parse_libsvm_str("3.5 1:1\n", &LabelMap::Identity).unwrap();
        assert_eq!(ds.labels(), &[3.5]);
    }

    #[test]
    fn explicit_zeros_do_not_change_products() {
        let ds = parse_libsvm_str("1 1:0 2:3\n", &LabelMap::default()).unwrap();
        assert_eq!(ds.row(0).sq_norm(), 9.0);
        assert_eq!(ds.row(0).dot(&[100.0, 2.0]), 6.0);
    }

    #[test]
    fn dimension_override() {
        let ds = parse_libsvm_str("1 2:1\n", &LabelMap::default()).unwrap();
        assert_eq!(ds.clone().with_dim(10).unwrap().dim(), 10);
        assert!(ds.with_dim(1).is_err());
    }

    #[test]
    fn subsample_contracts() {
        let text: String = (0..100).map(|i| format!("1 {}:1\n", i + 1)).collect();
        let ds = parse_libsvm_str(&text, &LabelMap::default()).unwrap();
        assert_eq!(subsample(&ds, 1.0, 9).unwrap(), ds);
        let sub = subsample(&ds, 0.1, 3).unwrap();
        assert_eq!(sub.n(), 10);
        assert_eq!(sub.dim(), 100);
        let mut ids: Vec<u32> = sub.rows().iter().map(|r| r.indices()[0]).collect();
        ids.dedup();
        assert_eq!(ids.len(), 10);
        assert_eq!(subsample(&ds, 0.1, 3).unwrap(), sub);
        assert_ne!(subsample(&ds, 0.1, 4).unwrap(), sub);
        assert!(subsample(&ds, 0.0, 1).is_err());
        assert!(subsample(&ds, 1.5, 1).is_err());
        assert!(subsample(&ds, 0.001, 1).is_err() || subsample(&ds, 0.001, 1).unwrap().n() == 1);
    }

    #[test]
    fn subsample_size_is_ceiling() {
        assert_eq!(subsample_size(100, 0.07), 7);
        assert_eq!(subsample_size(690, 0.05), 35);
        assert_eq!(subsample_size(8124, 0.05), 407);
        assert_eq!(subsample_size(8124, 0.1), 813);
        assert_eq!(subsample_size(3, 0.5), 2);
    }

    #[test]
    fn lipschitz_constants() {
        let ds = Dataset::new(
            vec![
                SparseVec::new(vec![0, 1], vec![2.0, 0.0]).unwrap(),
                SparseVec::new(vec![1], vec![1.0]).unwrap(),
            ],
            vec![1.0, -1.0],
            2,
        )
        .unwrap();
        let ds = Arc::new(ds);
        let sq = derive_constants(ds.clone(), LossKind::Squared, 0.5).unwrap();
        assert_eq!(sq.lipschitz(), Some(4.5));
        let lg = derive_constants(ds.clone(), LossKind::Logistic, 0.0).unwrap();
        assert_eq!(lg.lipschitz(), Some(1.0));
        let hi = derive_constants(ds, LossKind::Hinge, 0.1).unwrap();
        assert_eq!(hi.lipschitz(), None);
    }

    #[test]
    fn classification_labels_are_checked() {
        let ds = Dataset::new(vec![SparseVec::empty()], vec![0.5], 1).unwrap();
        let ds = Arc::new(ds);
        assert!(derive_constants(ds.clone(), LossKind::Logistic, 0.1).is_err());
        assert!(derive_constants(ds, LossKind::Squared, 0.1).is_ok());
    }

    #[test]
    fn sparse_vec_validation() {
        assert!(SparseVec::new(vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVec::new(vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVec::new(vec![0], vec![f64::NAN]).is_err());
        assert!(SparseVec::new(vec![0], vec![]).is_err());
        assert!(Dataset::new(
            vec![SparseVec::new(vec![3], vec![1.0]).unwrap()],
            vec![1.0],
            3
        )
        .is_err());
    }
}
