use nalgebra::{DMatrix, DVector};

use pointsaga::baselines::{PegasosState, SagaState};
use pointsaga::diagnostics::solve_reference;
use pointsaga::diagnostics::synthetic::dense_problem;
use pointsaga::engine::{drive, run, run_nonsmooth, PointSaga, RunConfig, StateConfig};
use pointsaga::rng::index_sequence;
use pointsaga::{
    derive_constants, Dataset, GradientTable, InitMode, LossKind, ProblemSpec, SolverState,
    SparseVec, StepSizePlan, TableStorage,
};

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ridge minimizer from `(XᵀX/n + μI) x = Xᵀy/n`.
fn normal_equations(spec: &ProblemSpec) -> Vec<f64> {
    let ds = spec.dataset();
    let (n, d) = (ds.n(), ds.dim());
    let mut a = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for (k, v) in ds.row(i).iter() {
            a[(i, k)] = v;
        }
    }
    let y = DVector::from_column_slice(ds.labels());
    let lhs = a.transpose() * &a / n as f64 + DMatrix::identity(d, d) * spec.mu();
    let rhs = a.transpose() * y / n as f64;
    lhs.lu().solve(&rhs).unwrap().as_slice().to_vec()
}

#[test]
fn single_term_iterates_halve() {
    // F(x) = ½x² as a one-row problem with an empty row and μ = 1
    let ds = Dataset::new(vec![SparseVec::empty()], vec![0.0], 1).unwrap();
    let spec = derive_constants(ds, LossKind::Squared, 1.0).unwrap();
    let mut s = SolverState::new(&spec, &[1.0], StateConfig::default()).unwrap();
    s.step(&spec, 1.0, 0).unwrap();
    assert_eq!(s.raw_iterate(), &[0.5]);
    assert_eq!(s.table().dense_entry(0).unwrap(), &[0.5]);
    assert_eq!(s.table().mean(), &[0.5]);
    s.step(&spec, 1.0, 0).unwrap();
    assert_eq!(s.raw_iterate(), &[0.25]);
}

#[test]
fn matching_table_entry_leaves_z_at_x() {
    // g_j = ḡ means z = x, so one step is exactly prox_j(x)
    let spec = dense_problem(4, 3, LossKind::Squared, 0.2, 5).unwrap();
    let x = vec![0.3, -1.0, 0.7];
    let same = vec![0.1, 0.2, -0.4];
    let table = GradientTable::from_dense_entries(&vec![same; 4]).unwrap();
    let mut s = SolverState::from_parts(x.clone(), table, Default::default(), false);
    s.step(&spec, 0.6, 2).unwrap();
    let expected = pointsaga::losses::prox_term(&spec, 2, &x, 0.6).unwrap();
    assert!(dist_sq(s.raw_iterate(), &expected) <= 1e-30);
}

#[test]
fn one_step_matches_straight_line_transcription() {
    let spec = dense_problem(5, 4, LossKind::Squared, 0.3, 11).unwrap();
    let ds = spec.dataset();
    let entries: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..4).map(|k| ((i * 4 + k) as f64 * 0.37).sin()).collect())
        .collect();
    let x0 = vec![0.5, -0.2, 0.9, 0.1];
    let gamma = 0.4;
    let j = 3;

    let mut s = SolverState::from_parts(
        x0.clone(),
        GradientTable::from_dense_entries(&entries).unwrap(),
        Default::default(),
        false,
    );
    s.step(&spec, gamma, j).unwrap();

    // dense transcription: z, then (XXᵀ + (μ + 1/γ)I) x⁺ = yX + z/γ
    let mean: Vec<f64> = (0..4)
        .map(|k| entries.iter().map(|e| e[k]).sum::<f64>() / 5.0)
        .collect();
    let z: Vec<f64> = (0..4)
        .map(|k| x0[k] + gamma * (entries[j][k] - mean[k]))
        .collect();
    let xj = DVector::from_column_slice(&ds.row(j).to_dense(4));
    let m = &xj * xj.transpose() + DMatrix::identity(4, 4) * (spec.mu() + 1.0 / gamma);
    let rhs = &xj * ds.label(j) + DVector::from_column_slice(&z) / gamma;
    let x1 = m.lu().solve(&rhs).unwrap();
    let g_new: Vec<f64> = (0..4).map(|k| (z[k] - x1[k]) / gamma).collect();

    for k in 0..4 {
        assert!((s.raw_iterate()[k] - x1[k]).abs() <= 1e-12);
        assert!((s.table().dense_entry(j).unwrap()[k] - g_new[k]).abs() <= 1e-12);
    }
}

#[test]
fn zero_epochs_rejected() {
    let spec = dense_problem(5, 2, LossKind::Logistic, 0.1, 0).unwrap();
    let cfg = RunConfig::new(0, StepSizePlan::user(0.1).unwrap());
    assert!(run(&spec, &cfg, |_, _| {}).is_err());
}

#[test]
fn fixed_seed_reproduces_trace() {
    let spec = dense_problem(30, 5, LossKind::Logistic, 0.05, 2).unwrap();
    let cfg = RunConfig::new(4, StepSizePlan::theoretical(&spec).unwrap()).seed(9);
    let a = run(&spec, &cfg, |_, _| {}).unwrap();
    let b = run(&spec, &cfg, |_, _| {}).unwrap();
    assert_eq!(a.final_iterate, b.final_iterate);
    let objectives =
        |t: &pointsaga::engine::Trace| t.records.iter().map(|r| r.objective).collect::<Vec<_>>();
    assert_eq!(objectives(&a), objectives(&b));
    assert_eq!(index_sequence(9, 30, 500), index_sequence(9, 30, 500));
}

#[test]
fn ridge_converges_to_normal_equations() {
    let spec = dense_problem(50, 10, LossKind::Squared, 0.1, 3).unwrap();
    let xstar = normal_equations(&spec);
    let cfg = RunConfig::new(200, StepSizePlan::theoretical(&spec).unwrap()).seed(4);
    let trace = run(&spec, &cfg, |_, _| {}).unwrap();
    let err = dist_sq(&trace.final_iterate, &xstar);
    assert!(err <= 1e-18, "‖x − x*‖² = {err:e}");
}

#[test]
fn saga_converges_on_ridge() {
    let spec = dense_problem(50, 10, LossKind::Squared, 0.1, 3).unwrap();
    let xstar = normal_equations(&spec);
    let gamma = 1.0 / (3.0 * spec.lipschitz().unwrap());
    let mut s = SagaState::new(&spec, &[0.0; 10], gamma, TableStorage::Dense).unwrap();
    drive(&spec, &mut s, 400, 4, |_, _| {}).unwrap();
    let err = dist_sq(s.x(), &xstar);
    assert!(err <= 1e-16, "‖x − x*‖² = {err:e}");
}

#[test]
fn reference_ridge_matches_direct_solve() {
    let spec = dense_problem(50, 10, LossKind::Squared, 0.1, 8).unwrap();
    let reference = solve_reference(&spec, 1e-12).unwrap();
    let direct = normal_equations(&spec);
    for (a, b) in reference.x.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn subgradient_init_for_squared_at_zero() {
    let spec = dense_problem(6, 3, LossKind::Squared, 0.0, 1).unwrap();
    let cfg = StateConfig {
        init: InitMode::Subgradient,
        ..Default::default()
    };
    let s = SolverState::new(&spec, &[0.0; 3], cfg).unwrap();
    let ds = spec.dataset();
    let mut direct = [0.0; 3];
    for i in 0..6 {
        let expected: Vec<f64> = ds
            .row(i)
            .to_dense(3)
            .iter()
            .map(|v| -ds.label(i) * v)
            .collect();
        let got = s.table().dense_entry(i).unwrap();
        for k in 0..3 {
            assert!((got[k] - expected[k]).abs() <= 1e-15);
            direct[k] += got[k] / 6.0;
        }
    }
    for k in 0..3 {
        assert!((s.table().mean()[k] - direct[k]).abs() <= 1e-15);
    }
}

#[test]
fn zero_init_has_zero_mean() {
    let spec = dense_problem(6, 3, LossKind::Logistic, 0.1, 1).unwrap();
    let s = SolverState::new(&spec, &[0.4, 0.1, -2.0], StateConfig::default()).unwrap();
    assert_eq!(s.table().mean(), &[0.0; 3]);
}

#[test]
fn single_example_run_is_proximal_point() {
    let ds = Dataset::new(vec![SparseVec::from_dense(&[2.0]).unwrap()], vec![1.0], 1).unwrap();
    let spec = derive_constants(ds, LossKind::Squared, 0.5).unwrap();
    let mut solver = PointSaga {
        state: SolverState::new(&spec, &[3.0], StateConfig::default()).unwrap(),
        gamma: 0.7,
    };
    let mut pp = 3.0;
    for _ in 0..20 {
        pointsaga::engine::IncrementalSolver::step(&mut solver, &spec, 0).unwrap();
        // argmin ½(2x − 1)² + ¼x² + (x − pp)²/(2·0.7)
        pp = (2.0 + pp / 0.7) / (4.0 + 0.5 + 1.0 / 0.7);
        let x = solver.state.raw_iterate()[0];
        assert!((x - pp).abs() <= 1e-14 * pp.abs().max(1.0));
    }
}

#[test]
fn pegasos_trails_point_saga_on_hinge() {
    let spec = dense_problem(200, 10, LossKind::Hinge, 0.01, 6).unwrap();
    let reference = solve_reference(&spec, 1e-10).unwrap();
    let r = reference.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b = reference
        .g
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let epochs = 10_000 / 200;
    let ps = run_nonsmooth(&spec, epochs, r, b, 7).unwrap();
    let ps_avg = spec.objective(ps.averaged_iterate.as_ref().unwrap()) - reference.fstar;
    let mut peg = PegasosState::new(&spec, &[0.0; 10], 1.0).unwrap();
    drive(&spec, &mut peg, epochs, 7, |_, _| {}).unwrap();
    let peg_sub = spec.objective(peg.x()) - reference.fstar;
    assert!(
        peg_sub >= ps_avg,
        "pegasos {peg_sub:e} vs point-saga averaged {ps_avg:e}"
    );
}
