//! Seeded random problem instances for the checks.

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data::{derive_constants, Dataset, ProblemSpec, SparseVec};
use crate::error::{invalid, Result};
use crate::losses::LossKind;

pub(crate) fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub(crate) fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub(crate) fn normal_vec<R: Rng>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * normal(rng)).collect()
}

/// `10^u` with `u` uniform on `[log10 lo, log10 hi]`.
pub(crate) fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u = rng.random_range(lo.log10()..=hi.log10());
    10f64.powf(u)
}

fn unit_row<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Squared loss with unit-norm Gaussian rows and noisy linear targets; μ is
/// chosen so that `L/μ` equals `condition` exactly.
pub fn quadratic_problem(n: usize, dim: usize, condition: f64, seed: u64) -> Result<ProblemSpec> {
    if !(condition > 1.0) {
        return invalid(format!("condition number must exceed 1, got {condition}"));
    }
    let mut r = rng(seed);
    let w = normal_vec(&mut r, dim, 1.0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = unit_row(&mut r, dim);
        let t: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        labels.push(t + 0.1 * normal(&mut r));
        rows.push(SparseVec::from_dense(&x)?);
    }
    let ds = Dataset::new(rows, labels, dim)?;
    let mu = ds.max_sq_norm() / (condition - 1.0);
    derive_constants(ds, LossKind::Squared, mu)
}

/// Random sparse rows with about `density · dim` nonzeros each (at least
/// one), Gaussian values scaled to unit expected row norm. Labels are ±1
/// from a planted linear classifier for hinge/logistic and noisy linear
/// targets for squared loss.
pub fn sparse_problem(
    n: usize,
    dim: usize,
    density: f64,
    loss: LossKind,
    mu: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    if dim == 0 || !(density > 0.0 && density <= 1.0) {
        return invalid(format!(
            "need dim > 0 and density in (0, 1], got {dim}, {density}"
        ));
    }
    let mut r = rng(seed);
    let w = normal_vec(&mut r, dim, 1.0);
    let per_row = ((density * dim as f64).round() as usize).clamp(1, dim);
    let scale = 1.0 / (per_row as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut positions: Vec<u32> = (0..dim as u32).collect();
    for _ in 0..n {
        // partial Fisher-Yates for the support
        for k in 0..per_row {
            let pick = r.random_range(k..dim);
            positions.swap(k, pick);
        }
        let mut idx = positions[..per_row].to_vec();
        idx.sort_unstable();
        let vals = normal_vec(&mut r, per_row, scale);
        let margin: f64 = idx.iter().zip(&vals).map(|(&i, v)| w[i as usize] * v).sum();
        let label = match loss {
            LossKind::Squared => margin + 0.1 * normal(&mut r),
            _ => {
                if margin + 0.3 * normal(&mut r) >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        rows.push(SparseVec::new(idx, vals)?);
        labels.push(label);
    }
    derive_constants(Dataset::new(rows, labels, dim)?, loss, mu)
}

/// Dense Gaussian classification or regression data with rows normalized to
/// unit length.
pub fn dense_problem(
    n: usize,
    dim: usize,
    loss: LossKind,
    mu: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    sparse_problem(n, dim, 1.0, loss, mu, seed).and_then(|spec| {
        let ds = spec.dataset();
        let rows = ds
            .rows()
            .iter()
            .map(|row| {
                let norm = row.sq_norm().sqrt();
                let v: Vec<f64> = row.to_dense(ds.dim()).iter().map(|x| x / norm).collect();
                SparseVec::from_dense(&v)
            })
            .collect::<Result<Vec<_>>>()?;
        derive_constants(
            Dataset::new(rows, ds.labels().to_vec(), ds.dim())?,
            loss,
            mu,
        )
    })
}

/// A single folded term `l(<x, X>; y) + (μ/2)‖x‖²` with random data, μ and
/// label, as a one-example problem.
pub fn random_term<R: Rng>(rng: &mut R, loss: LossKind, dim: usize) -> Result<ProblemSpec> {
    let scale = log_uniform(rng, 0.1, 3.0);
    let x = normal_vec(rng, dim, scale);
    let y = match loss {
        LossKind::Squared => 2.0 * normal(rng),
        _ => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    };
    let mu = if rng.random_range(0..4) == 0 {
        0.0
    } else {
        log_uniform(rng, 1e-3, 1.0)
    };
    let ds = Dataset::new(vec![SparseVec::from_dense(&x)?], vec![y], dim)?;
    derive_constants(ds, loss, mu)
}

/// Scaling instance: `n` unit-norm rows in `dim − 1` data features plus one
/// feature no row touches, with `L/μ = condition`. The untouched coordinate
/// is governed by the regularizer alone, which makes it the slowest
/// direction of the problem.
pub fn scaling_problem(n: usize, dim: usize, condition: f64, seed: u64) -> Result<ProblemSpec> {
    if dim < 2 {
        return invalid("scaling problem needs at least two features");
    }
    let spec = quadratic_problem(n, dim - 1, condition, seed)?;
    let ds = spec.dataset().clone().with_dim(dim)?;
    derive_constants(ds, LossKind::Squared, spec.mu())
}
