//! Lyapunov function tracking and the rates that follow from it.

use rayon::prelude::*;

use super::reference::ReferenceSolution;
use super::synthetic::{normal_vec, rng};
use super::{mean_stderr, CheckReport};
use crate::data::ProblemSpec;
use crate::engine::{
    kappa, Backend, GradientTable, InitMode, SolverState, StateConfig, StepSizePlan, TableStorage,
};
use crate::error::{invalid, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::rng::{derive_seed, IndexSampler};

/// `T = (c/n) Σ‖g_i − g_i*‖² + ‖x − x*‖²` with `c = 1/(μL)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub total: f64,
    pub table_term: f64,
    pub distance_term: f64,
    pub c: f64,
}

/// Needs a dense-table, dense-backend state so every `g_i` is explicit.
pub fn lyapunov(
    state: &SolverState,
    reference: &ReferenceSolution,
    mu: f64,
    lipschitz: f64,
) -> Result<LyapunovSample> {
    if state.backend() != Backend::Dense || state.table().storage() != TableStorage::Dense {
        return invalid("the Lyapunov function needs a dense table on the dense backend");
    }
    let table = state.table();
    let n = table.n();
    let c = 1.0 / (mu * lipschitz);
    let mut sum = 0.0;
    for (i, gstar) in reference.g.iter().enumerate() {
        sum += dist_sq(table.dense_entry(i).expect("dense"), gstar);
    }
    let table_term = c / n as f64 * sum;
    let distance_term = dist_sq(state.raw_iterate(), &reference.x);
    Ok(LyapunovSample {
        total: table_term + distance_term,
        table_term,
        distance_term,
        c,
    })
}

fn smooth_constants(spec: &ProblemSpec) -> Result<(f64, f64)> {
    match spec.lipschitz() {
        Some(l) if spec.mu() > 0.0 && spec.mu() < l => Ok((spec.mu(), l)),
        _ => invalid("needs a smooth loss with 0 < μ < L"),
    }
}

/// State at `x* + δ` with table `g* + Δ`, scaled so the two Lyapunov terms
/// have comparable size.
fn perturbed_state(
    spec: &ProblemSpec,
    reference: &ReferenceSolution,
    seed: u64,
) -> Result<SolverState> {
    let (mu, l) = smooth_constants(spec)?;
    let dim = spec.dim();
    let mut r = rng(seed);
    let unit = 1.0 / (dim as f64).sqrt();
    let dx = normal_vec(&mut r, dim, unit);
    let x: Vec<f64> = reference.x.iter().zip(&dx).map(|(a, b)| a + b).collect();
    let g_scale = (mu * l).sqrt() * unit;
    let entries: Vec<Vec<f64>> = reference
        .g
        .iter()
        .map(|g| {
            let d = normal_vec(&mut r, dim, g_scale);
            g.iter().zip(&d).map(|(a, b)| a + b).collect()
        })
        .collect();
    let table = GradientTable::from_dense_entries(&entries)?;
    Ok(SolverState::from_parts(x, table, Backend::Dense, false))
}

/// Single-step descent `E[T^{k+1}]/T^k ≤ 1 − κ`, estimated by Monte Carlo
/// from a fixed random state; the exact expectation over the `n` choices of
/// `j` is reported alongside.
pub fn check_descent(
    spec: &ProblemSpec,
    reference: &ReferenceSolution,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let (mu, l) = smooth_constants(spec)?;
    let state = perturbed_state(spec, reference, seed)?;
    descent_from(spec, reference, &state, gamma, trials, seed, mu, l)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn descent_from(
    spec: &ProblemSpec,
    reference: &ReferenceSolution,
    state: &SolverState,
    gamma: f64,
    trials: usize,
    seed: u64,
    mu: f64,
    l: f64,
) -> Result<CheckReport> {
    let t0 = lyapunov(state, reference, mu, l)?.total;
    let bound = 1.0 - kappa(mu, gamma);
    let mut report = CheckReport::new("lyapunov_descent")
        .metric("gamma", gamma)
        .metric("bound", bound)
        .metric("t0", t0);
    if t0 == 0.0 {
        let mut s = state.clone();
        s.step(spec, gamma, 0)?;
        let t1 = lyapunov(&s, reference, mu, l)?.total;
        // zero up to rounding of the prox at the fixed point
        let scale = 1.0 + norm_sq(&reference.x);
        report.detail = "state at the fixed point; T stays zero".into();
        report.push("t1", t1);
        report.require(t1 <= 1e-24 * scale);
        return Ok(report);
    }
    let one_step = |j: usize| -> Result<f64> {
        let mut s = state.clone();
        s.step(spec, gamma, j)?;
        Ok(lyapunov(&s, reference, mu, l)?.total / t0)
    };
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let j = IndexSampler::new(derive_seed(seed, t as u64)).next_index(spec.n());
            one_step(j)
        })
        .collect::<Result<_>>()?;
    let exact: Vec<f64> = (0..spec.n())
        .into_par_iter()
        .map(one_step)
        .collect::<Result<_>>()?;
    let (mean, se) = mean_stderr(&ratios);
    let exact_mean = exact.iter().sum::<f64>() / exact.len() as f64;
    report.push("trials", trials as f64);
    report.push("ratio_mean", mean);
    report.push("ratio_stderr", se);
    report.push("ratio_exact", exact_mean);
    report.require(mean <= bound + 3.0 * se);
    report.detail = format!("E[T+]/T = {mean:.6} ± {se:.2e} vs 1 − κ = {bound:.6}");
    Ok(report)
}

/// `E‖x^k − x*‖² ≤ (1 − κ)^k ((μ + L)/μ)‖x⁰ − x*‖²` over seeds, with the
/// table initialized to subgradients at `x0` and the theoretical step.
pub fn check_chained_rate(
    spec: &ProblemSpec,
    reference: &ReferenceSolution,
    x0: &[f64],
    seeds: &[u64],
    ks: &[u64],
) -> Result<CheckReport> {
    let (mu, l) = smooth_constants(spec)?;
    let gamma = StepSizePlan::theoretical(spec)?.gamma;
    let kap = kappa(mu, gamma);
    let r0 = dist_sq(x0, &reference.x);
    let config = StateConfig {
        init: InitMode::Subgradient,
        ..StateConfig::default()
    };
    let start = SolverState::new(spec, x0, config)?;
    let t0 = lyapunov(&start, reference, mu, l)?.total;
    let t0_bound = (mu + l) / mu * r0;
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let mut s = start.clone();
            let mut sampler = IndexSampler::new(seed);
            let mut out = Vec::with_capacity(ks.len());
            for k in 1..=kmax {
                s.step(spec, gamma, sampler.next_index(spec.n()))?;
                if ks.contains(&k) {
                    out.push(dist_sq(s.raw_iterate(), &reference.x));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport::new("chained_rate")
        .metric("gamma", gamma)
        .metric("kappa", kap)
        .metric("t0", t0)
        .metric("t0_bound", t0_bound);
    report.require(t0 <= t0_bound * (1.0 + 1e-12));
    let mut sorted: Vec<u64> = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for (idx, &k) in sorted.iter().enumerate() {
        let vals: Vec<f64> = per_seed.iter().map(|v| v[idx]).collect();
        let (mean, se) = mean_stderr(&vals);
        let bound = (1.0 - kap).powf(k as f64) * t0_bound;
        report.push(format!("k{k}_mean"), mean);
        report.push(format!("k{k}_stderr"), se);
        report.push(format!("k{k}_bound"), bound);
        report.require(mean <= bound + 3.0 * se);
    }
    Ok(report)
}

/// `k·E‖x̄^k − x*‖²` across `ks` for the averaged iterate at
/// `γ = R/(B√n)` from zero, where `R = ‖x*‖` and `B = max_i ‖g_i*‖`.
/// Passes when the largest and smallest values are within a factor 3.
pub fn check_nonsmooth_rate(
    spec: &ProblemSpec,
    reference: &ReferenceSolution,
    seeds: &[u64],
    ks: &[u64],
) -> Result<CheckReport> {
    let r = norm_sq(&reference.x).sqrt();
    let b = reference
        .g
        .iter()
        .map(|g| norm_sq(g).sqrt())
        .fold(0.0, f64::max);
    let plan = StepSizePlan::nonsmooth(r, b, spec.n())?;
    let config = StateConfig {
        track_average: true,
        ..StateConfig::default()
    };
    let start = SolverState::new(spec, &vec![0.0; spec.dim()], config)?;
    let mut sorted: Vec<u64> = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let kmax = sorted.last().copied().unwrap_or(0);
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let mut s = start.clone();
            let mut sampler = IndexSampler::new(seed);
            let mut out = Vec::with_capacity(sorted.len());
            for k in 1..=kmax {
                s.step(spec, plan.gamma, sampler.next_index(spec.n()))?;
                if sorted.binary_search(&k).is_ok() {
                    let avg = s.average().expect("tracked").mean();
                    out.push(dist_sq(avg, &reference.x));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport::new("nonsmooth_rate")
        .metric("gamma", plan.gamma)
        .metric("r", r)
        .metric("b", b);
    let mut scaled = Vec::new();
    for (idx, &k) in sorted.iter().enumerate() {
        let vals: Vec<f64> = per_seed.iter().map(|v| v[idx]).collect();
        let (mean, se) = mean_stderr(&vals);
        report.push(format!("k{k}_mean"), mean);
        report.push(format!("k{k}_stderr"), se);
        report.push(format!("k{k}_scaled"), k as f64 * mean);
        scaled.push(k as f64 * mean);
    }
    let hi = scaled.iter().copied().fold(0.0, f64::max);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    report.push("spread", spread);
    report.require(spread.is_finite() && spread <= 3.0);
    report.detail = format!("max/min of k·E‖x̄−x*‖² = {spread:.3}");
    Ok(report)
}
