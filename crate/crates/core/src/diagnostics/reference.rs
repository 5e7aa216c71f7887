//! High-accuracy minimizers with a matching table of optimal subgradients.

use nalgebra::{DMatrix, DVector};

use crate::data::ProblemSpec;
use crate::engine::{run, RunConfig, StepSizePlan};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::losses::{logistic_weight, prox_term, LossKind};

/// Dense solves are refused above this dimension.
pub const MAX_REFERENCE_DIM: usize = 4096;

/// `x*` with subgradients `g_i* ∈ ∂F_i(x*)` summing to zero.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub fstar: f64,
    /// Optimality residual reached by the solver.
    pub residual: f64,
}

impl ReferenceSolution {
    /// `v_i = x* + γ g_i*`, the fixed point of `z` for example `i`.
    pub fn v(&self, i: usize, gamma: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.g[i])
            .map(|(x, g)| x + gamma * g)
            .collect()
    }

    pub fn g_sum_norm(&self) -> f64 {
        let mut s = vec![0.0; self.x.len()];
        for g in &self.g {
            s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        norm_sq(&s).sqrt()
    }

    /// Largest `‖prox_i^γ(v_i) − x*‖` over the examples.
    pub fn fixed_point_error(&self, spec: &ProblemSpec, gamma: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..spec.n() {
            let p = prox_term(spec, i, &self.v(i, gamma), gamma)?;
            worst = worst.max(dist_sq(&p, &self.x).sqrt());
        }
        Ok(worst)
    }
}

/// Minimizes the regularized objective to optimality residual `tol`.
///
/// Squared loss uses the regularized normal equations. Logistic loss warms
/// up with Point-SAGA and finishes with damped Newton. Hinge loss solves the
/// dual box QP by coordinate ascent, then re-solves exactly on the detected
/// active set; the dual variables give a selection with `Σ g_i* = 0`.
pub fn solve_reference(spec: &ProblemSpec, tol: f64) -> Result<ReferenceSolution> {
    if !(spec.mu() > 0.0) {
        return Err(Error::Reference("needs μ > 0".into()));
    }
    if spec.dim() > MAX_REFERENCE_DIM {
        return Err(Error::Reference(format!(
            "dimension {} exceeds the dense reference limit {MAX_REFERENCE_DIM}",
            spec.dim()
        )));
    }
    let x = match spec.loss() {
        LossKind::Squared => ridge(spec)?,
        LossKind::Logistic => logistic(spec, tol)?,
        LossKind::Hinge => return hinge(spec, tol),
    };
    let g: Vec<Vec<f64>> = (0..spec.n())
        .map(|i| spec.term_subgradient(i, &x))
        .collect();
    let residual = mean_norm(&g);
    if !(residual <= tol) {
        return Err(Error::Reference(format!(
            "gradient residual {residual:e} above tolerance {tol:e}"
        )));
    }
    Ok(ReferenceSolution {
        fstar: spec.objective(&x),
        x,
        g,
        residual,
    })
}

fn mean_norm(g: &[Vec<f64>]) -> f64 {
    let dim = g.first().map_or(0, Vec::len);
    let mut s = vec![0.0; dim];
    for gi in g {
        s.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
    }
    norm_sq(&s).sqrt() / g.len() as f64
}

fn dense_rows(spec: &ProblemSpec) -> DMatrix<f64> {
    let ds = spec.dataset();
    let mut a = DMatrix::zeros(ds.n(), ds.dim());
    for (i, row) in ds.rows().iter().enumerate() {
        for (j, v) in row.iter() {
            a[(i, j)] += v;
        }
    }
    a
}

/// `(XᵀX/n + μI) x = Xᵀy/n`.
fn ridge(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let ds = spec.dataset();
    let n = ds.n() as f64;
    let a = dense_rows(spec);
    let mut h = a.transpose() * &a / n;
    for k in 0..ds.dim() {
        h[(k, k)] += spec.mu();
    }
    let b = a.transpose() * DVector::from_column_slice(ds.labels()) / n;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Reference("normal equations not positive definite".into()))?;
    let mut x = chol.solve(&b);
    // one step of iterative refinement
    let mut h2 = a.transpose() * &a / n;
    for k in 0..ds.dim() {
        h2[(k, k)] += spec.mu();
    }
    let r = &b - &h2 * &x;
    x += chol.solve(&r);
    Ok(x.as_slice().to_vec())
}

fn logistic(spec: &ProblemSpec, tol: f64) -> Result<Vec<f64>> {
    let ds = spec.dataset();
    let mut x = match StepSizePlan::theoretical(spec) {
        Ok(plan) => {
            let cfg = RunConfig::new(20, plan).seed(0x5eed);
            run(spec, &cfg, |_, _| {})?.final_iterate
        }
        Err(_) => vec![0.0; spec.dim()],
    };
    let n = ds.n() as f64;
    for _ in 0..100 {
        let g = spec.full_subgradient(&x);
        let gnorm = norm_sq(&g).sqrt();
        if gnorm <= 0.1 * tol {
            return Ok(x);
        }
        let mut h = DMatrix::<f64>::zeros(ds.dim(), ds.dim());
        for (row, &y) in ds.rows().iter().zip(ds.labels()) {
            let p = logistic_weight(y * row.dot(&x));
            let w = p * (1.0 - p) / n;
            for (i, vi) in row.iter() {
                for (j, vj) in row.iter() {
                    h[(i, j)] += w * vi * vj;
                }
            }
        }
        for k in 0..ds.dim() {
            h[(k, k)] += spec.mu();
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Reference("logistic Hessian not positive definite".into()))?;
        let dir = chol.solve(&DVector::from_column_slice(&g));
        let slope = -dir.dot(&DVector::from_column_slice(&g));
        let f0 = spec.objective(&x);
        let mut t = 1.0;
        let trial = loop {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a - t * d).collect();
            if spec.objective(&trial) <= f0 + 1e-4 * t * slope || t < 1e-10 {
                break trial;
            }
            t *= 0.5;
        };
        if trial == x {
            break;
        }
        x = trial;
    }
    let g = spec.full_subgradient(&x);
    if norm_sq(&g).sqrt() <= tol {
        Ok(x)
    } else {
        Err(Error::Reference(format!(
            "Newton stalled at gradient norm {:e}",
            norm_sq(&g).sqrt()
        )))
    }
}

/// Hinge SVM through its dual: `max (1/n)Σα_i − (μ/2)‖x(α)‖²`,
/// `x(α) = (1/(μn)) Σ α_i y_i X_i`, `α ∈ [0, 1]ⁿ`.
fn hinge(spec: &ProblemSpec, tol: f64) -> Result<ReferenceSolution> {
    let ds = spec.dataset();
    let n = ds.n();
    let mu = spec.mu();
    let scale = 1.0 / (mu * n as f64);
    let mut alpha = vec![0.0; n];
    let mut x = vec![0.0; ds.dim()];
    for _ in 0..20_000 {
        let mut max_change = 0.0f64;
        for i in 0..n {
            let row = ds.row(i);
            let q = row.sq_norm();
            if q == 0.0 {
                alpha[i] = 1.0;
                continue;
            }
            let y = ds.label(i);
            let grad = 1.0 - y * row.dot(&x);
            let new = (alpha[i] + grad / (q * scale)).clamp(0.0, 1.0);
            let delta = new - alpha[i];
            if delta != 0.0 {
                row.axpy(delta * y * scale, &mut x);
                alpha[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-13 {
            break;
        }
    }
    let polished = polish_active_set(spec, &alpha, 1e-7).unwrap_or(alpha);
    let x = dual_to_primal(spec, &polished);
    let residual = kkt_residual(spec, &polished, &x);
    if !(residual <= tol) {
        return Err(Error::Reference(format!(
            "hinge KKT residual {residual:e} above tolerance {tol:e}"
        )));
    }
    let g = (0..n)
        .map(|i| {
            let mut g: Vec<f64> = x.iter().map(|v| mu * v).collect();
            ds.row(i).axpy(-polished[i] * ds.label(i), &mut g);
            g
        })
        .collect();
    Ok(ReferenceSolution {
        fstar: spec.objective(&x),
        x,
        g,
        residual,
    })
}

fn dual_to_primal(spec: &ProblemSpec, alpha: &[f64]) -> Vec<f64> {
    let ds = spec.dataset();
    let scale = 1.0 / (spec.mu() * ds.n() as f64);
    let mut x = vec![0.0; ds.dim()];
    for (i, a) in alpha.iter().enumerate() {
        if *a != 0.0 {
            ds.row(i).axpy(a * ds.label(i) * scale, &mut x);
        }
    }
    x
}

/// Largest violation of `α_i = 1` on margin `< 1`, `α_i = 0` on margin `> 1`
/// and `α ∈ [0, 1]`.
pub(crate) fn kkt_residual(spec: &ProblemSpec, alpha: &[f64], x: &[f64]) -> f64 {
    let ds = spec.dataset();
    let mut worst = 0.0f64;
    for (i, &a) in alpha.iter().enumerate() {
        let m = ds.label(i) * ds.row(i).dot(x);
        worst = worst.max((-a).max(a - 1.0));
        if a < 1.0 {
            worst = worst.max((1.0 - m) * (1.0 - a));
        }
        if a > 0.0 {
            worst = worst.max((m - 1.0) * a);
        }
    }
    worst
}

/// Fixes `α` on strictly violated / strictly satisfied margins and solves
/// for the kink examples so their margins are exactly one.
fn polish_active_set(spec: &ProblemSpec, alpha: &[f64], eps: f64) -> Option<Vec<f64>> {
    let ds = spec.dataset();
    let scale = 1.0 / (spec.mu() * ds.n() as f64);
    let x = dual_to_primal(spec, alpha);
    let mut fixed = alpha.to_vec();
    let mut kink = Vec::new();
    for i in 0..ds.n() {
        let m = ds.label(i) * ds.row(i).dot(&x);
        if (m - 1.0).abs() <= eps && ds.row(i).sq_norm() > 0.0 {
            kink.push(i);
            fixed[i] = 0.0;
        } else if m < 1.0 {
            fixed[i] = 1.0;
        } else {
            fixed[i] = 0.0;
        }
    }
    if kink.is_empty() {
        return Some(fixed);
    }
    let base = dual_to_primal(spec, &fixed);
    let k = kink.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let dense: Vec<Vec<f64>> = kink.iter().map(|&i| ds.row(i).to_dense(ds.dim())).collect();
    for a in 0..k {
        let ia = kink[a];
        rhs[a] = 1.0 - ds.label(ia) * ds.row(ia).dot(&base);
        for b in 0..k {
            let ib = kink[b];
            gram[(a, b)] = scale * ds.label(ia) * ds.label(ib) * ds.row(ia).dot(&dense[b]);
        }
    }
    let svd = gram.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).ok()?;
    for (a, &i) in kink.iter().enumerate() {
        let v = sol[a];
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return None;
        }
        fixed[i] = v.clamp(0.0, 1.0);
    }
    let x = dual_to_primal(spec, &fixed);
    if kkt_residual(spec, &fixed, &x) <= kkt_residual(spec, alpha, &dual_to_primal(spec, alpha)) {
        Some(fixed)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::synthetic::{dense_problem, quadratic_problem};

    #[test]
    fn ridge_satisfies_invariants() {
        let spec = quadratic_problem(50, 10, 50.0, 4).unwrap();
        let r = solve_reference(&spec, 1e-12).unwrap();
        assert!(r.g_sum_norm() <= 1e-8 * spec.n() as f64);
        assert!(r.fixed_point_error(&spec, 0.7).unwrap() < 1e-8);
    }

    #[test]
    fn logistic_reaches_tolerance() {
        let spec = dense_problem(20, 5, LossKind::Logistic, 0.05, 5).unwrap();
        let r = solve_reference(&spec, 1e-10).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(r.fixed_point_error(&spec, 2.0).unwrap() < 1e-8);
    }

    #[test]
    fn hinge_selection_sums_to_zero() {
        let spec = dense_problem(40, 6, LossKind::Hinge, 0.05, 6).unwrap();
        let r = solve_reference(&spec, 1e-9).unwrap();
        assert!(r.g_sum_norm() <= 1e-8 * spec.n() as f64);
        assert!(r.fixed_point_error(&spec, 0.3).unwrap() < 1e-8);
        // x* is a minimizer: no direction decreases the objective much
        let f = spec.objective(&r.x);
        for k in 0..spec.dim() {
            for h in [1e-4, -1e-4] {
                let mut x = r.x.clone();
                x[k] += h;
                assert!(spec.objective(&x) >= f - 1e-12);
            }
        }
    }

    #[test]
    fn needs_regularization() {
        let spec = dense_problem(5, 3, LossKind::Squared, 0.0, 1).unwrap();
        assert!(solve_reference(&spec, 1e-10).is_err());
    }
}
