use serde::{Deserialize, Serialize};

use super::table::{GradientTable, TableStorage};
use crate::data::ProblemSpec;
use crate::error::{invalid, Error, Result};
use crate::losses::{prox_term_into, ProxResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `g_i⁰ = 0`; no pass over the data.
    #[default]
    Zero,
    /// `g_i⁰` is a subgradient of `F_i` at `x⁰`.
    Subgradient,
}

/// Where the iterate lives between steps.
///
/// `Dense` touches every coordinate on every step. `Lazy` only touches the
/// support of the sampled row and catches the other coordinates up on demand
/// with a closed form; it requires [`TableStorage::Scalar`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Dense,
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StateConfig {
    pub init: InitMode,
    pub storage: TableStorage,
    pub backend: Backend,
    pub track_average: bool,
}

/// Running mean of the iterates `x¹, ..., xᵏ`.
#[derive(Debug, Clone)]
pub struct RunningAverage {
    mean: Vec<f64>,
    count: u64,
}

impl RunningAverage {
    fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += (v - *m) * w;
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Bookkeeping for the lazy backend: `x[d]` is current as of step `lags[d]`.
#[derive(Debug, Clone)]
struct LazyClock {
    lags: Vec<u64>,
    gamma: Option<f64>,
}

/// Iterate, gradient table and step counter of one Point-SAGA run.
#[derive(Debug, Clone)]
pub struct SolverState {
    x: Vec<f64>,
    table: GradientTable,
    step: u64,
    average: Option<RunningAverage>,
    lazy: Option<LazyClock>,
    scratch: Vec<f64>,
    prox_out: Vec<f64>,
}

/// Builds the initial state at `x0`.
pub fn init_state(spec: &ProblemSpec, x0: &[f64], config: StateConfig) -> Result<SolverState> {
    SolverState::new(spec, x0, config)
}

impl SolverState {
    pub fn new(spec: &ProblemSpec, x0: &[f64], config: StateConfig) -> Result<Self> {
        let ds = spec.dataset();
        let (n, dim) = (ds.n(), ds.dim());
        if x0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x0.len(),
            });
        }
        if config.backend == Backend::Lazy {
            if config.storage != TableStorage::Scalar {
                return invalid("the lazy backend needs scalar table storage");
            }
            if config.track_average {
                return invalid("the lazy backend does not track iterate averages");
            }
        }
        let table = match (config.init, config.storage) {
            (InitMode::Zero, storage) => GradientTable::zeros(n, dim, storage),
            (InitMode::Subgradient, TableStorage::Dense) => {
                let entries: Vec<Vec<f64>> = (0..n).map(|i| spec.term_subgradient(i, x0)).collect();
                GradientTable::from_dense_entries(&entries)?
            }
            (InitMode::Subgradient, TableStorage::Scalar) => {
                let coefficients = (0..n)
                    .map(|i| spec.loss().derivative(ds.row(i).dot(x0), ds.label(i)))
                    .collect();
                GradientTable::from_coefficients(coefficients, ds)
            }
        };
        Ok(Self::from_parts(
            x0.to_vec(),
            table,
            config.backend,
            config.track_average,
        ))
    }

    /// State with an explicit iterate and table, e.g. an arbitrary point for
    /// single-step experiments.
    pub fn from_parts(
        x: Vec<f64>,
        table: GradientTable,
        backend: Backend,
        track_average: bool,
    ) -> Self {
        let dim = x.len();
        Self {
            lazy: (backend == Backend::Lazy).then(|| LazyClock {
                lags: vec![0; dim],
                gamma: None,
            }),
            average: track_average.then(|| RunningAverage::new(dim)),
            x,
            table,
            step: 0,
            scratch: vec![0.0; dim],
            prox_out: vec![0.0; dim],
        }
    }

    pub fn backend(&self) -> Backend {
        if self.lazy.is_some() {
            Backend::Lazy
        } else {
            Backend::Dense
        }
    }

    pub fn table(&self) -> &GradientTable {
        &self.table
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn average(&self) -> Option<&RunningAverage> {
        self.average.as_ref()
    }

    /// Current iterate; flushes pending lazy updates first.
    pub fn iterate(&mut self, spec: &ProblemSpec) -> &[f64] {
        self.materialize(spec);
        &self.x
    }

    /// Raw iterate storage. For the lazy backend coordinates may be stale
    /// until [`materialize`](Self::materialize) is called.
    pub fn raw_iterate(&self) -> &[f64] {
        &self.x
    }

    /// Brings every coordinate of a lazy iterate up to the current step.
    pub fn materialize(&mut self, spec: &ProblemSpec) {
        let Some(clock) = self.lazy.as_mut() else {
            return;
        };
        let Some(gamma) = clock.gamma else {
            return;
        };
        let drift = Drift::new(spec.mu(), gamma);
        let now = self.step;
        let mean = self.table.mean();
        for d in 0..self.x.len() {
            let m = now - clock.lags[d];
            if m > 0 {
                self.x[d] = drift.apply(self.x[d], mean[d], m);
                clock.lags[d] = now;
            }
        }
    }

    /// One Point-SAGA step on example `j`:
    /// `z = x + γ(g_j − ḡ)`, `x⁺ = prox_j^γ(z)`, `g_j ← (z − x⁺)/γ`.
    pub fn step(&mut self, spec: &ProblemSpec, gamma: f64, j: usize) -> Result<ProxResult> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return invalid(format!(
                "step size must be positive and finite, got {gamma}"
            ));
        }
        if j >= spec.n() {
            return invalid(format!(
                "example index {j} out of range for n = {}",
                spec.n()
            ));
        }
        let res = if self.lazy.is_some() {
            self.step_lazy(spec, gamma, j)?
        } else {
            match self.table.storage() {
                TableStorage::Dense => self.step_dense_table(spec, gamma, j)?,
                TableStorage::Scalar => self.step_scalar_table(spec, gamma, j)?,
            }
        };
        self.step += 1;
        if let Some(avg) = self.average.as_mut() {
            avg.push(&self.x);
        }
        Ok(res)
    }

    fn step_dense_table(&mut self, spec: &ProblemSpec, gamma: f64, j: usize) -> Result<ProxResult> {
        let g_j = self.table.dense_entry(j).expect("dense table");
        let mean = self.table.mean();
        for d in 0..self.x.len() {
            self.scratch[d] = self.x[d] + gamma * (g_j[d] - mean[d]);
        }
        let res = prox_term_into(spec, j, &self.scratch, gamma, &mut self.prox_out)?;
        let inv_gamma = 1.0 / gamma;
        for (z, p) in self.scratch.iter_mut().zip(&self.prox_out) {
            *z = (*z - p) * inv_gamma;
        }
        self.table.set_dense(j, &self.scratch);
        std::mem::swap(&mut self.x, &mut self.prox_out);
        Ok(res)
    }

    fn step_scalar_table(
        &mut self,
        spec: &ProblemSpec,
        gamma: f64,
        j: usize,
    ) -> Result<ProxResult> {
        let row = spec.dataset().row(j);
        let nu_old = self.table.coefficient(j).expect("scalar table");
        let mean = self.table.mean();
        for d in 0..self.x.len() {
            self.scratch[d] = self.x[d] - gamma * mean[d];
        }
        row.axpy(gamma * nu_old, &mut self.scratch);
        let res = prox_term_into(spec, j, &self.scratch, gamma, &mut self.prox_out)?;
        self.table.set_coefficient(j, res.nu, row);
        std::mem::swap(&mut self.x, &mut self.prox_out);
        Ok(res)
    }

    fn step_lazy(&mut self, spec: &ProblemSpec, gamma: f64, j: usize) -> Result<ProxResult> {
        let clock = self.lazy.as_mut().expect("lazy backend");
        if clock.gamma.is_some_and(|g| g != gamma) {
            self.materialize(spec);
        }
        let clock = self.lazy.as_mut().expect("lazy backend");
        clock.gamma = Some(gamma);
        let drift = Drift::new(spec.mu(), gamma);
        let ds = spec.dataset();
        let row = ds.row(j);
        let y = ds.label(j);
        let nu_old = self.table.coefficient(j).expect("scalar table");
        let mean = self.table.mean();
        let now = self.step;

        // catch the support up, then form ρz on it
        let mut a = 0.0;
        for (d, v) in row.iter() {
            let m = now - clock.lags[d];
            if m > 0 {
                self.x[d] = drift.apply(self.x[d], mean[d], m);
            }
            let z = self.x[d] + gamma * (nu_old * v - mean[d]);
            self.scratch[d] = drift.rho * z;
            a += self.scratch[d] * v;
        }
        let norm_sq = row.sq_norm();
        let res = if norm_sq == 0.0 {
            ProxResult {
                c: 0.0,
                nu: spec.loss().derivative(0.0, y),
                iterations: 0,
            }
        } else {
            spec.loss().prox(a, y, drift.rho * gamma * norm_sq)?
        };
        let shift = if norm_sq == 0.0 {
            0.0
        } else {
            (a - res.c) / norm_sq
        };
        for (d, v) in row.iter() {
            self.x[d] = self.scratch[d] - shift * v;
            clock.lags[d] = now + 1;
        }
        self.table.set_coefficient(j, res.nu, row);
        Ok(res)
    }
}

/// Closed form for coordinates outside the sampled row's support.
///
/// Off the support one step maps `x_d ↦ ρ(x_d − γ ḡ_d)`; with `ḡ_d` fixed,
/// `m` steps give `ρ^m x_d − γ ḡ_d · ρ(1 − ρ^m)/(1 − ρ)`.
#[derive(Debug, Clone, Copy)]
struct Drift {
    rho: f64,
    log_rho: f64,
    gamma: f64,
    mu_gamma: f64,
}

impl Drift {
    fn new(mu: f64, gamma: f64) -> Self {
        let mu_gamma = mu * gamma;
        Self {
            rho: 1.0 / (1.0 + mu_gamma),
            log_rho: -mu_gamma.ln_1p(),
            gamma,
            mu_gamma,
        }
    }

    fn apply(&self, x: f64, mean: f64, m: u64) -> f64 {
        if self.mu_gamma == 0.0 {
            return x - self.gamma * mean * m as f64;
        }
        let t = self.log_rho * m as f64;
        let rho_m = t.exp();
        // ρ/(1 − ρ) = 1/(μγ)
        let geometric = -t.exp_m1() / self.mu_gamma;
        rho_m * x - self.gamma * mean * geometric
    }
}
