//! Epoch counts to a target suboptimality, for comparing how methods scale
//! with `n` at a fixed condition number.

use crate::baselines::SagaState;
use crate::data::ProblemSpec;
use crate::engine::{IncrementalSolver, PointSaga, SolverState, StateConfig, TableStorage};
use crate::error::Result;
use crate::rng::IndexSampler;

/// Runs epochs until `f(x) − f* ≤ tol`, returning the epoch count, or
/// `None` after `max_epochs` or on divergence.
pub fn epochs_to_tolerance<S: IncrementalSolver + ?Sized>(
    spec: &ProblemSpec,
    solver: &mut S,
    fstar: f64,
    tol: f64,
    max_epochs: usize,
    seed: u64,
) -> Result<Option<usize>> {
    let n = spec.n();
    let mut sampler = IndexSampler::new(seed);
    for epoch in 1..=max_epochs {
        for _ in 0..n {
            solver.step(spec, sampler.next_index(n))?;
        }
        let f = spec.objective(solver.iterate(spec));
        if !f.is_finite() || f > crate::engine::DIVERGENCE_THRESHOLD {
            return Ok(None);
        }
        if f - fstar <= tol {
            return Ok(Some(epoch));
        }
    }
    Ok(None)
}

/// Point-SAGA at step `gamma` from `x0` with a zero table.
pub fn point_saga_epochs(
    spec: &ProblemSpec,
    x0: &[f64],
    gamma: f64,
    fstar: f64,
    tol: f64,
    max_epochs: usize,
    seed: u64,
) -> Result<Option<usize>> {
    let state = SolverState::new(spec, x0, StateConfig::default())?;
    let mut solver = PointSaga { state, gamma };
    epochs_to_tolerance(spec, &mut solver, fstar, tol, max_epochs, seed)
}

/// SAGA over the step sizes `2^e`, `e ∈ exponents`; returns the fewest
/// epochs reached and the step that achieved it (ties toward larger γ).
/// Steps are tried from largest to smallest, each capped one epoch below
/// the best count so far, since only a strictly faster run can win.
pub fn saga_best_epochs(
    spec: &ProblemSpec,
    x0: &[f64],
    exponents: &[i32],
    fstar: f64,
    tol: f64,
    max_epochs: usize,
    seed: u64,
) -> Result<Option<(usize, f64)>> {
    let mut order = exponents.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    order.dedup();
    let mut best: Option<(usize, f64)> = None;
    for e in order {
        let cap = best.map_or(max_epochs, |(b, _)| b - 1);
        if cap == 0 {
            break;
        }
        let gamma = 2f64.powi(e);
        let mut s = SagaState::new(spec, x0, gamma, TableStorage::Dense)?;
        if let Some(epochs) = epochs_to_tolerance(spec, &mut s, fstar, tol, cap, seed)? {
            best = Some((epochs, gamma));
        }
    }
    Ok(best)
}
