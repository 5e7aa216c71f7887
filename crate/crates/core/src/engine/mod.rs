//! The Point-SAGA solver.
//!
//! Each step samples an example `j` uniformly, forms
//! `z = x + γ(g_j − ḡ)`, takes the proximal step `x⁺ = prox_j^γ(z)` on the
//! L2-folded term, and stores the implicit gradient `(z − x⁺)/γ` back into
//! the table. With `n = 1` this is the proximal-point method.

mod state;
mod table;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use state::{init_state, Backend, InitMode, RunningAverage, SolverState, StateConfig};
pub use table::{GradientTable, TableStorage};

use crate::data::ProblemSpec;
use crate::error::{invalid, Result};
use crate::rng::IndexSampler;

/// Objectives above this (or non-finite) mark a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Theoretical step size
/// `γ = √((n−1)² + 4nL/μ)/(2Ln) − (1 − 1/n)/(2L)`.
pub fn step_size_default(n: usize, lipschitz: f64, mu: f64) -> Result<f64> {
    if n == 0 {
        return invalid("need at least one example");
    }
    if !lipschitz.is_finite() {
        return invalid("no finite smoothness constant; supply the step size manually");
    }
    if !(mu > 0.0) {
        return invalid(format!("strong convexity μ must be positive, got {mu}"));
    }
    if mu >= lipschitz {
        return invalid(format!(
            "μ = {mu} is not below L = {lipschitz}; supply the step size manually"
        ));
    }
    let n = n as f64;
    let l = lipschitz;
    let gamma =
        ((n - 1.0).powi(2) + 4.0 * n * l / mu).sqrt() / (2.0 * l * n) - (1.0 - 1.0 / n) / (2.0 * l);
    Ok(gamma)
}

/// Per-step contraction `κ = μγ/(1 + μγ)`.
pub fn kappa(mu: f64, gamma: f64) -> f64 {
    let t = mu * gamma;
    t / (1.0 + t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSizeSource {
    Theoretical,
    User,
    Grid { exponent: i32 },
    NonSmooth { r: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizePlan {
    pub gamma: f64,
    pub source: StepSizeSource,
}

impl StepSizePlan {
    pub fn theoretical(spec: &ProblemSpec) -> Result<Self> {
        let Some(l) = spec.lipschitz() else {
            return invalid(format!(
                "{} loss is non-smooth; the theoretical step size does not apply",
                spec.loss()
            ));
        };
        Ok(Self {
            gamma: step_size_default(spec.n(), l, spec.mu())?,
            source: StepSizeSource::Theoretical,
        })
    }

    pub fn user(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return invalid(format!(
                "step size must be positive and finite, got {gamma}"
            ));
        }
        Ok(Self {
            gamma,
            source: StepSizeSource::User,
        })
    }

    pub fn grid(exponent: i32) -> Self {
        Self {
            gamma: 2f64.powi(exponent),
            source: StepSizeSource::Grid { exponent },
        }
    }

    /// `γ = R/(B√n)`, balancing the two terms of the averaged-iterate bound.
    pub fn nonsmooth(r: f64, b: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && b > 0.0 && r.is_finite() && b.is_finite()) {
            return invalid(format!("R and B must be positive, got R = {r}, B = {b}"));
        }
        Ok(Self {
            gamma: r / (b * (n as f64).sqrt()),
            source: StepSizeSource::NonSmooth { r, b },
        })
    }
}

/// What the observer sees at the end of each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    /// Objective at the running average, when tracked.
    pub averaged_objective: Option<f64>,
    /// Cumulative solver time, excluding objective evaluation.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<EpochRecord>,
    pub final_iterate: Vec<f64>,
    pub averaged_iterate: Option<Vec<f64>>,
    pub diverged: bool,
    pub steps: u64,
}

impl Trace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }
}

/// Anything that can take one stochastic step on example `j`.
pub trait IncrementalSolver {
    fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()>;

    /// Current iterate, fully materialized.
    fn iterate(&mut self, spec: &ProblemSpec) -> &[f64];

    fn averaged_iterate(&self) -> Option<&[f64]> {
        None
    }
}

/// Point-SAGA at a fixed step size.
#[derive(Debug, Clone)]
pub struct PointSaga {
    pub state: SolverState,
    pub gamma: f64,
}

impl IncrementalSolver for PointSaga {
    fn step(&mut self, spec: &ProblemSpec, j: usize) -> Result<()> {
        self.state.step(spec, self.gamma, j).map(|_| ())
    }

    fn iterate(&mut self, spec: &ProblemSpec) -> &[f64] {
        self.state.iterate(spec)
    }

    fn averaged_iterate(&self) -> Option<&[f64]> {
        self.state.average().map(RunningAverage::mean)
    }
}

fn diverged(objective: f64) -> bool {
    !objective.is_finite() || objective > DIVERGENCE_THRESHOLD
}

/// Runs `epochs · n` steps with i.i.d. uniform indices from `seed`, calling
/// `observer` with each epoch's record and iterate. Stops early, flagging
/// the trace, if the objective diverges.
pub fn drive<S, F>(
    spec: &ProblemSpec,
    solver: &mut S,
    epochs: usize,
    seed: u64,
    mut observer: F,
) -> Result<Trace>
where
    S: IncrementalSolver + ?Sized,
    F: FnMut(&EpochRecord, &[f64]),
{
    if epochs == 0 {
        return invalid("need at least one epoch");
    }
    let n = spec.n();
    let mut sampler = IndexSampler::new(seed);
    let mut records = Vec::with_capacity(epochs);
    let mut elapsed = 0.0;
    let mut steps = 0u64;
    let mut is_diverged = false;
    for epoch in 1..=epochs {
        let start = Instant::now();
        for _ in 0..n {
            let j = sampler.next_index(n);
            solver.step(spec, j)?;
        }
        steps += n as u64;
        let x = solver.iterate(spec);
        elapsed += start.elapsed().as_secs_f64();
        let objective = spec.objective(x);
        let averaged_objective = solver.averaged_iterate().map(|a| spec.objective(a));
        let record = EpochRecord {
            epoch,
            objective,
            averaged_objective,
            wall_seconds: elapsed,
        };
        observer(&record, solver.iterate(spec));
        records.push(record);
        if diverged(objective) {
            is_diverged = true;
            break;
        }
    }
    Ok(Trace {
        records,
        final_iterate: solver.iterate(spec).to_vec(),
        averaged_iterate: solver.averaged_iterate().map(<[f64]>::to_vec),
        diverged: is_diverged,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epochs: usize,
    pub plan: StepSizePlan,
    pub seed: u64,
    pub state: StateConfig,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(epochs: usize, plan: StepSizePlan) -> Self {
        Self {
            epochs,
            plan,
            seed: 0,
            state: StateConfig::default(),
            x0: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn init(mut self, init: InitMode) -> Self {
        self.state.init = init;
        self
    }

    pub fn storage(mut self, storage: TableStorage) -> Self {
        self.state.storage = storage;
        self
    }

    pub fn backend(mut self, backend: Backend) -> Self {
        self.state.backend = backend;
        self
    }

    pub fn track_average(mut self, on: bool) -> Self {
        self.state.track_average = on;
        self
    }

    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }
}

/// Point-SAGA for `config.epochs` epochs.
pub fn run<F>(spec: &ProblemSpec, config: &RunConfig, observer: F) -> Result<Trace>
where
    F: FnMut(&EpochRecord, &[f64]),
{
    if config.epochs == 0 {
        return invalid("need at least one epoch");
    }
    let x0 = match &config.x0 {
        Some(x) => x.clone(),
        None => vec![0.0; spec.dim()],
    };
    let state = SolverState::new(spec, &x0, config.state)?;
    let mut solver = PointSaga {
        state,
        gamma: config.plan.gamma,
    };
    drive(spec, &mut solver, config.epochs, config.seed, observer)
}

/// Fixed step `γ = R/(B√n)` with the running average `x̄ᵏ` tracked, as used
/// for non-smooth terms. Starts from zero with a zero table.
pub fn run_nonsmooth(
    spec: &ProblemSpec,
    epochs: usize,
    r: f64,
    b: f64,
    seed: u64,
) -> Result<Trace> {
    let plan = StepSizePlan::nonsmooth(r, b, spec.n())?;
    let config = RunConfig::new(epochs, plan).seed(seed).track_average(true);
    run(spec, &config, |_, _| {})
}
