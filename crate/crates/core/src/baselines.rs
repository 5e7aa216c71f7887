//! Reference solvers for comparison runs: SAGA and Pegasos-style SGD.

use serde::{Deserialize, Serialize};

use crate::data::ProblemSpec;
use crate::engine::{drive, EpochRecord, GradientTable, IncrementalSolver, TableStorage, Trace};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Saga,
    Pegasos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Step size for SAGA; time offset `t0` for Pegasos.
    pub step: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step > 0.0 && self.step.is_finite() {
            Ok(())
        } else {
            invalid(format!(
                "{:?} step parameter must be positive, got {}",
                self.method, self.step
            ))
        }
    }
}

/// SAGA with the regularizer folded into every term's gradient.
#[derive(Debug, Clone)]
pub struct SagaState {
    x: Vec<f64>,
    table: GradientTable,
    gamma: f64,
    grad: Vec<f64>,
}

impl SagaState {
    pub fn new(spec: &ProblemSpec, x0: &[f64], gamma: f64, storage: TableStorage) -> Result<Self> {
        if !spec.loss().is_smooth() {
            return invalid(format!(
                "SAGA needs gradients; {} loss is non-smooth",
                spec.loss()
            ));
        }
        if x0.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: x0.len(),
            });
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return invalid(format!(
                "step size must be positive and finite, got {gamma}"
            ));
        }
        Ok(Self {
            x: x0.to_vec(),
            table: GradientTable::zeros(spec.n(), spec.dim(), storage),
            gamma,
            grad: vec![0.0; spec.dim()],
        })
    }

    pub fn from_parts(x: Vec<f64>, table: GradientTable, gamma: f64) -> Self {
        let dim = x.len();
        Self {
            x,
            table,
            gamma,
            grad: vec![0.0; dim],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn table(&self) -> &GradientTable {
        &self.table
    }

    /// `x⁺ = x − γ[∇F_j(x) − g_j + ḡ]`, then `g_j ← ∇F_j(x)`.
    pub fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()> {
        if j >= spec.n() {
            return invalid(format!(
                "example index {j} out of range for n = {}",
                spec.n()
            ));
        }
        let ds = spec.dataset();
        let row = ds.row(j);
        let mu = spec.mu();
        let nu = spec.loss().derivative(row.dot(&self.x), ds.label(j));
        let gamma = self.gamma;
        match self.table.storage() {
            TableStorage::Dense => {
                for (g, x) in self.grad.iter_mut().zip(&self.x) {
                    *g = mu * x;
                }
                row.axpy(nu, &mut self.grad);
                let old = self.table.dense_entry(j).expect("dense table");
                let mean = self.table.mean();
                for d in 0..self.x.len() {
                    self.x[d] -= gamma * (self.grad[d] - old[d] + mean[d]);
                }
                self.table.set_dense(j, &self.grad);
            }
            TableStorage::Scalar => {
                // the regularizer gradient μx is exact, only ν_j is stored
                let nu_old = self.table.coefficient(j).expect("scalar table");
                let mean = self.table.mean();
                for (x, m) in self.x.iter_mut().zip(mean) {
                    *x -= gamma * (m + mu * *x);
                }
                row.axpy(-gamma * (nu - nu_old), &mut self.x);
                self.table.set_coefficient(j, nu, row);
            }
        }
        Ok(())
    }
}

impl IncrementalSolver for SagaState {
    fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()> {
        SagaState::step(self, spec, j)
    }

    fn iterate(&mut self, _spec: &ProblemSpec) -> &[f64] {
        &self.x
    }
}

/// Projection-free Pegasos: `η_t = 1/(μ(t + t0))`,
/// `x⁺ = x − η_t(κ X_j + μ x)` with `κ` the scalar loss subgradient.
#[derive(Debug, Clone)]
pub struct PegasosState {
    x: Vec<f64>,
    t: u64,
    t0: f64,
}

impl PegasosState {
    pub fn new(spec: &ProblemSpec, x0: &[f64], t0: f64) -> Result<Self> {
        if !(spec.mu() > 0.0) {
            return invalid("Pegasos needs μ > 0");
        }
        if !(t0 > 0.0) {
            return invalid(format!("time offset must be positive, got {t0}"));
        }
        if x0.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: x0.len(),
            });
        }
        Ok(Self {
            x: x0.to_vec(),
            t: 0,
            t0,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn learning_rate(&self, mu: f64) -> f64 {
        1.0 / (mu * (self.t as f64 + self.t0))
    }

    pub fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()> {
        if j >= spec.n() {
            return invalid(format!(
                "example index {j} out of range for n = {}",
                spec.n()
            ));
        }
        let ds = spec.dataset();
        let row = ds.row(j);
        let mu = spec.mu();
        let eta = self.learning_rate(mu);
        let k = spec.loss().derivative(row.dot(&self.x), ds.label(j));
        let shrink = 1.0 - eta * mu;
        self.x.iter_mut().for_each(|v| *v *= shrink);
        row.axpy(-eta * k, &mut self.x);
        self.t += 1;
        Ok(())
    }
}

impl IncrementalSolver for PegasosState {
    fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()> {
        PegasosState::step(self, spec, j)
    }

    fn iterate(&mut self, _spec: &ProblemSpec) -> &[f64] {
        &self.x
    }
}

/// Runs a baseline from zero for `epochs` epochs.
pub fn run_baseline<F>(
    spec: &ProblemSpec,
    config: &BaselineConfig,
    epochs: usize,
    observer: F,
) -> Result<Trace>
where
    F: FnMut(&EpochRecord, &[f64]),
{
    config.validate()?;
    let x0 = vec![0.0; spec.dim()];
    match config.method {
        BaselineMethod::Saga => {
            let mut s = SagaState::new(spec, &x0, config.step, TableStorage::Dense)?;
            drive(spec, &mut s, epochs, config.seed, observer)
        }
        BaselineMethod::Pegasos => {
            let mut s = PegasosState::new(spec, &x0, config.step)?;
            drive(spec, &mut s, epochs, config.seed, observer)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{derive_constants, Dataset, SparseVec};
    use crate::linalg::max_rel_diff;

    fn toy(loss: crate::LossKind, mu: f64) -> ProblemSpec {
        let ds = Dataset::new(
            vec![
                SparseVec::new(vec![0, 1], vec![1.0, -0.5]).unwrap(),
                SparseVec::new(vec![1], vec![2.0]).unwrap(),
                SparseVec::new(vec![0], vec![0.3]).unwrap(),
            ],
            vec![1.0, -1.0, 1.0],
            2,
        )
        .unwrap();
        derive_constants(ds, loss, mu).unwrap()
    }

    #[test]
    fn saga_rejects_hinge() {
        let spec = toy(crate::LossKind::Hinge, 0.1);
        assert!(SagaState::new(&spec, &[0.0, 0.0], 0.1, TableStorage::Dense).is_err());
    }

    #[test]
    fn saga_with_current_gradient_steps_along_mean() {
        let spec = toy(crate::LossKind::Logistic, 0.2);
        let x = vec![0.4, -0.7];
        let j = 1;
        let gj = spec.term_subgradient(j, &x);
        let mut entries = vec![vec![0.0; 2]; 3];
        entries[j] = gj.clone();
        entries[0] = vec![0.9, -0.3];
        let table = GradientTable::from_dense_entries(&entries).unwrap();
        let mean = table.mean().to_vec();
        let mut s = SagaState::from_parts(x.clone(), table, 0.3);
        s.step(&spec, j).unwrap();
        let want: Vec<f64> = x.iter().zip(&mean).map(|(a, m)| a - 0.3 * m).collect();
        assert!(max_rel_diff(s.x(), &want) < 1e-15);
    }

    #[test]
    fn saga_at_n1_is_gradient_descent() {
        let ds = Dataset::new(
            vec![SparseVec::new(vec![0, 1], vec![1.0, 2.0]).unwrap()],
            vec![0.5],
            2,
        )
        .unwrap();
        let spec = derive_constants(ds, crate::LossKind::Squared, 0.1).unwrap();
        let mut s = SagaState::new(&spec, &[1.0, -1.0], 0.05, TableStorage::Dense).unwrap();
        let mut x = vec![1.0, -1.0];
        for _ in 0..20 {
            s.step(&spec, 0).unwrap();
            let g = spec.full_subgradient(&x);
            x.iter_mut().zip(&g).for_each(|(a, b)| *a -= 0.05 * b);
            assert!(max_rel_diff(s.x(), &x) < 1e-14);
        }
    }

    #[test]
    fn saga_storages_agree_without_regularization() {
        let spec = toy(crate::LossKind::Logistic, 0.0);
        let mut dense = SagaState::new(&spec, &[0.0, 0.0], 0.2, TableStorage::Dense).unwrap();
        let mut scalar = SagaState::new(&spec, &[0.0, 0.0], 0.2, TableStorage::Scalar).unwrap();
        for j in [0, 2, 1, 1, 0, 2, 2, 1] {
            dense.step(&spec, j).unwrap();
            scalar.step(&spec, j).unwrap();
        }
        assert!(max_rel_diff(dense.x(), scalar.x()) < 1e-14);
    }

    #[test]
    fn pegasos_schedule() {
        let spec = toy(crate::LossKind::Hinge, 0.5);
        let mut p = PegasosState::new(&spec, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(p.learning_rate(0.5), 2.0);
        p.t = 1_000_000_000;
        assert!(p.learning_rate(0.5) < 1e-8);
    }

    #[test]
    fn pegasos_inactive_hinge_at_zero_stays_put() {
        // y<x, X> = 0 < 1 is active at x = 0, so use a row with zero features
        let ds = Dataset::new(
            vec![
                SparseVec::empty(),
                SparseVec::new(vec![0], vec![1.0]).unwrap(),
            ],
            vec![1.0, 1.0],
            1,
        )
        .unwrap();
        let spec = derive_constants(ds, crate::LossKind::Hinge, 0.5).unwrap();
        let mut p = PegasosState::new(&spec, &[0.0], 1.0).unwrap();
        p.step(&spec, 0).unwrap();
        assert_eq!(p.x(), &[0.0]);
    }

    #[test]
    fn pegasos_needs_regularization() {
        let spec = toy(crate::LossKind::Hinge, 0.0);
        assert!(PegasosState::new(&spec, &[0.0, 0.0], 1.0).is_err());
    }
}
