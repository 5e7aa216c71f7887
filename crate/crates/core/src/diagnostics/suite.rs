//! The standard battery of checks, shared by `pointsaga check` and the
//! acceptance tests. Each function builds its own seeded problem.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::lyapunov::{check_chained_rate, check_descent, check_nonsmooth_rate};
use super::operators::{
    check_moreau, check_newton_iterations, check_operator_inequalities, check_prox_oracle,
    known_conjugate_suite,
};
use super::reference::solve_reference;
use super::scaling::{point_saga_epochs, saga_best_epochs};
use super::synthetic::{dense_problem, quadratic_problem, scaling_problem, sparse_problem};
use super::CheckReport;
use crate::data::{derive_constants, Dataset, SparseVec};
use crate::engine::{
    run, Backend, IncrementalSolver, PointSaga, RunConfig, SolverState, StateConfig, StepSizePlan,
    TableStorage,
};
use crate::error::Result;
use crate::linalg::max_rel_diff;
use crate::losses::LossKind;

/// Sample counts for the suite; `full` matches the acceptance settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSize {
    pub oracle_samples: usize,
    pub operator_samples: usize,
    pub descent_trials: usize,
    pub chained_seeds: usize,
    pub nonsmooth_seeds: usize,
    pub scaling: bool,
}

impl SuiteSize {
    pub fn full() -> Self {
        Self {
            oracle_samples: 10_000,
            operator_samples: 10_000,
            descent_trials: 2000,
            chained_seeds: 20,
            nonsmooth_seeds: 10,
            scaling: true,
        }
    }

    pub fn quick() -> Self {
        Self {
            oracle_samples: 1000,
            operator_samples: 1000,
            descent_trials: 500,
            chained_seeds: 20,
            nonsmooth_seeds: 4,
            scaling: false,
        }
    }
}

/// Closed-form / Newton prox against the golden-section oracle, per loss.
pub fn prox_oracle(samples: usize, seed: u64) -> Result<CheckReport> {
    let reports: Vec<CheckReport> = LossKind::ALL
        .par_iter()
        .enumerate()
        .map(|(i, &loss)| check_prox_oracle(loss, samples, seed + i as u64, 1e-8))
        .collect::<Result<_>>()?;
    let mut out = CheckReport::new("prox_oracle");
    for r in reports {
        out.require(r.passed);
        out.push(
            format!(
                "{}_max_abs_error",
                r.name.trim_start_matches("prox_oracle_")
            ),
            r.get("max_abs_error").unwrap_or(f64::NAN),
        );
    }
    Ok(out)
}

/// Operator inequalities on folded logistic/squared terms plus the Moreau
/// identity on the known-conjugate suite.
pub fn operator_checks(samples: usize, seed: u64) -> Result<CheckReport> {
    let ineq =
        check_operator_inequalities(&[LossKind::Logistic, LossKind::Squared], samples, seed)?;
    let mut out = CheckReport::new("operator_inequalities");
    out.metrics = ineq.metrics.clone();
    out.require(ineq.passed);
    let mut worst = 0.0f64;
    for pair in known_conjugate_suite() {
        for gamma in [0.25, 1.0, 3.0] {
            let r = check_moreau(pair.as_ref(), gamma, 100, seed);
            out.require(r.passed);
            worst = worst
                .max(r.get("identity_residual").unwrap_or(f64::NAN))
                .max(r.get("gconj_residual").unwrap_or(f64::NAN));
        }
    }
    out.push("moreau_max_residual", worst);
    Ok(out)
}

/// Monte-Carlo single-step Lyapunov descent on a quadratic with n = 10,
/// `L/μ = 100`, at the theoretical step.
pub fn lyapunov_descent(trials: usize, seed: u64) -> Result<CheckReport> {
    let spec = quadratic_problem(10, 5, 100.0, seed)?;
    let reference = solve_reference(&spec, 1e-12)?;
    let gamma = StepSizePlan::theoretical(&spec)?.gamma;
    check_descent(&spec, &reference, gamma, trials, seed)
}

/// Chained rate bound at k ∈ {100, 500, 1000} from subgradient init.
pub fn chained_rate(seeds: usize, seed: u64) -> Result<CheckReport> {
    let spec = quadratic_problem(10, 5, 100.0, seed)?;
    let reference = solve_reference(&spec, 1e-12)?;
    let x0 = vec![0.0; spec.dim()];
    let seeds: Vec<u64> = (0..seeds as u64).map(|s| seed * 1000 + s).collect();
    check_chained_rate(&spec, &reference, &x0, &seeds, &[100, 500, 1000])
}

/// Epochs to suboptimality 1e-9 at `L/μ = 10⁶` for n = 100 and n = 400.
/// Point-SAGA's ratio should be near 2 (within 30%); SAGA's, at its best
/// grid step, at least 3.
pub fn accelerated_scaling(seed: u64) -> Result<CheckReport> {
    let dim = 11;
    let measure = |n: usize| -> Result<(usize, usize, f64)> {
        let spec = scaling_problem(n, dim, 1e6, seed)?;
        let reference = solve_reference(&spec, 1e-12)?;
        // start away from x* along the regularizer-only coordinate
        let mut x0 = vec![0.0; dim];
        x0[dim - 1] = 1.0;
        let gamma = StepSizePlan::theoretical(&spec)?.gamma;
        let ps = point_saga_epochs(&spec, &x0, gamma, reference.fstar, 1e-9, 100_000, seed)?;
        let exponents: Vec<i32> = (-8..=1).collect();
        let saga = saga_best_epochs(&spec, &x0, &exponents, reference.fstar, 1e-9, 400_000, seed)?;
        let ps = ps.unwrap_or(usize::MAX);
        let (saga, saga_gamma) = saga.unwrap_or((usize::MAX, f64::NAN));
        Ok((ps, saga, saga_gamma))
    };
    let (small, large) = rayon::join(|| measure(100), || measure(400));
    let ((ps100, saga100, g100), (ps400, saga400, g400)) = (small?, large?);
    let ps_ratio = ps100 as f64 / ps400 as f64;
    let saga_ratio = saga100 as f64 / saga400 as f64;
    let mut out = CheckReport::new("accelerated_scaling")
        .metric("point_saga_epochs_n100", ps100 as f64)
        .metric("point_saga_epochs_n400", ps400 as f64)
        .metric("point_saga_ratio", ps_ratio)
        .metric("saga_epochs_n100", saga100 as f64)
        .metric("saga_epochs_n400", saga400 as f64)
        .metric("saga_gamma_n100", g100)
        .metric("saga_gamma_n400", g400)
        .metric("saga_ratio", saga_ratio);
    out.require((ps_ratio - 2.0).abs() <= 0.6 && saga_ratio >= 3.0);
    Ok(out)
}

/// With one example the method is the proximal-point iteration
/// `x⁺ = (I + γ(XXᵀ + μI))⁻¹(x + γyX)`, solved here with a dense LU.
pub fn n1_degeneration(seed: u64) -> Result<CheckReport> {
    let x_row = vec![0.8, -0.3, 1.1];
    let y = 0.7;
    let mu = 0.05 + 0.01 * (seed % 7) as f64;
    let gamma = 0.9;
    let ds = Dataset::new(vec![SparseVec::from_dense(&x_row)?], vec![y], 3)?;
    let spec = derive_constants(ds, LossKind::Squared, mu)?;
    let x0 = vec![1.0, 2.0, -1.0];
    let state = SolverState::new(&spec, &x0, StateConfig::default())?;
    let mut solver = PointSaga { state, gamma };
    let xv = DVector::from_column_slice(&x_row);
    let m = DMatrix::identity(3, 3) * (1.0 + gamma * mu) + &xv * xv.transpose() * gamma;
    let lu = m.lu();
    let mut pp = DVector::from_column_slice(&x0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        solver.step(&spec, 0)?;
        pp = lu.solve(&(&pp + &xv * (gamma * y))).expect("nonsingular");
        worst = worst.max(max_rel_diff(solver.iterate(&spec), pp.as_slice()));
    }
    let mut out = CheckReport::new("n1_degeneration").metric("max_rel_diff", worst);
    out.require(worst <= 1e-14);
    Ok(out)
}

/// Dense and lazy iterates over 10 epochs on a sparse logistic problem
/// (n = 500, d = 10⁴, 1% density), both with the scalar table.
pub fn backend_equivalence(seed: u64) -> Result<CheckReport> {
    let spec = sparse_problem(500, 10_000, 0.01, LossKind::Logistic, 1e-3, seed)?;
    let plan = StepSizePlan::theoretical(&spec)?;
    let trace = |backend: Backend| {
        let mut per_epoch = Vec::new();
        let cfg = RunConfig::new(10, plan)
            .seed(seed)
            .storage(TableStorage::Scalar)
            .backend(backend);
        run(&spec, &cfg, |_, x| per_epoch.push(x.to_vec())).map(|_| per_epoch)
    };
    let (dense, lazy) = rayon::join(|| trace(Backend::Dense), || trace(Backend::Lazy));
    let (dense, lazy) = (dense?, lazy?);
    let worst = dense
        .iter()
        .zip(&lazy)
        .map(|(a, b)| max_rel_diff(b, a))
        .fold(0.0f64, f64::max);
    let mut out = CheckReport::new("backend_equivalence").metric("max_rel_diff", worst);
    out.require(worst <= 1e-8);
    Ok(out)
}

/// Averaged-iterate rate on a hinge problem (n = 2000, d = 100, μ = 1e-2):
/// `k·E‖x̄^k − x*‖²` within a factor 3 over k ∈ {1000, 2000, 4000}.
pub fn nonsmooth_rate(seeds: usize, seed: u64) -> Result<CheckReport> {
    let spec = dense_problem(2000, 100, LossKind::Hinge, 1e-2, seed)?;
    let reference = solve_reference(&spec, 1e-9)?;
    let seeds: Vec<u64> = (0..seeds as u64).map(|s| seed * 1000 + s).collect();
    check_nonsmooth_rate(&spec, &reference, &seeds, &[1000, 2000, 4000])
}

/// Every check at the given size.
pub fn run_suite(size: SuiteSize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = vec![
        prox_oracle(size.oracle_samples, seed)?,
        check_newton_iterations(size.oracle_samples, seed)?,
        operator_checks(size.operator_samples, seed)?,
        lyapunov_descent(size.descent_trials, seed)?,
        chained_rate(size.chained_seeds, seed)?,
    ];
    if size.scaling {
        out.push(accelerated_scaling(seed)?);
    }
    out.push(n1_degeneration(seed)?);
    out.push(backend_equivalence(seed)?);
    out.push(nonsmooth_rate(size.nonsmooth_seeds, seed)?);
    Ok(out)
}
