use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use pointsaga::diagnostics::synthetic::dense_problem;
use pointsaga::harness::{
    execute, metadata_path, run_experiments, ExperimentPlan, IterateKind, Method, StepPolicy,
    CSV_COLUMNS,
};
use pointsaga::LossKind;

fn write_problem(dir: &Path, name: &str, loss: LossKind, n: usize, seed: u64) -> PathBuf {
    let spec = dense_problem(n, 6, loss, 0.01, seed).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, spec.dataset().to_libsvm()).unwrap();
    path
}

fn plan(data: PathBuf, loss: LossKind, mu: f64) -> ExperimentPlan {
    ExperimentPlan {
        data,
        loss,
        mu: Some(mu),
        epochs: 20,
        step: StepPolicy::Grid { lo: -6, hi: 2 },
        fstar_epochs: 100,
        ..Default::default()
    }
}

fn ridge_objective_min(path: &Path, mu: f64) -> f64 {
    let ds = pointsaga::data::load_libsvm(path, &pointsaga::LabelMap::Identity).unwrap();
    let (n, d) = (ds.n(), ds.dim());
    let mut a = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for (k, v) in ds.row(i).iter() {
            a[(i, k)] = v;
        }
    }
    let y = DVector::from_column_slice(ds.labels());
    let lhs = a.transpose() * &a / n as f64 + DMatrix::identity(d, d) * mu;
    let x = lhs.lu().solve(&(a.transpose() * &y / n as f64)).unwrap();
    let r = &a * &x - y;
    0.5 * r.norm_squared() / n as f64 + 0.5 * mu * x.norm_squared()
}

#[test]
fn row_count_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_problem(dir.path(), "toy.txt", LossKind::Logistic, 200, 1);
    let p = ExperimentPlan {
        methods: vec![Method::PointSaga, Method::Saga],
        out: dir.path().join("out/trace.csv"),
        ..plan(data, LossKind::Logistic, 1e-3)
    };
    let output = execute(&p).unwrap();
    assert_eq!(output.records.len(), 2 * 3 * 20);

    let text = std::fs::read_to_string(&p.out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 121);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(metadata_path(&p.out)).unwrap()).unwrap();
    for key in [
        "seeds",
        "label_map",
        "init",
        "rng_algorithm",
        "fractions",
        "pegasos_variant",
    ] {
        assert!(meta.get(key).is_some(), "metadata lacks {key}");
    }
    assert!(meta["fractions"][0]["selections"][0]["gamma"].is_number());

    // sorted by method, fraction, seed, gamma, epoch; epochs increase per run
    let keys: Vec<(String, f64, u64, usize)> = output
        .records
        .iter()
        .map(|r| (r.method.name().to_string(), r.fraction, r.seed, r.epoch))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    assert_eq!(keys, sorted);
    for r in &output.records {
        assert!(r.suboptimality >= -1e-12);
    }
}

#[test]
fn same_mu_for_every_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_problem(dir.path(), "toy.txt", LossKind::Logistic, 100, 2);
    let output = run_experiments(&ExperimentPlan {
        methods: vec![Method::PointSaga],
        epochs: 3,
        ..plan(data, LossKind::Logistic, 2e-3)
    })
    .unwrap();
    assert_eq!(output.metadata.mu, 2e-3);
    let sizes: Vec<usize> = output.metadata.fractions.iter().map(|f| f.n).collect();
    assert_eq!(sizes, vec![5, 10, 100]);
}

#[test]
fn ridge_fstar_matches_normal_equations() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dense_problem(60, 6, LossKind::Squared, 0.05, 4).unwrap();
    let data = dir.path().join("ridge.txt");
    std::fs::write(&data, spec.dataset().to_libsvm()).unwrap();
    let output = run_experiments(&ExperimentPlan {
        label_map: "identity".into(),
        fractions: vec![1.0],
        methods: vec![Method::PointSaga],
        fstar_epochs: 500,
        ..plan(data.clone(), LossKind::Squared, 0.05)
    })
    .unwrap();
    let fstar = output.metadata.fractions[0].fstar.value;
    let exact = ridge_objective_min(&data, 0.05);
    assert!(
        (fstar - exact).abs() <= 1e-10,
        "f* = {fstar}, exact = {exact}"
    );
}

#[test]
fn more_epochs_never_raise_fstar() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_problem(dir.path(), "toy.txt", LossKind::Logistic, 80, 3);
    let base = ExperimentPlan {
        fractions: vec![1.0],
        methods: vec![Method::PointSaga],
        epochs: 5,
        fstar_epochs: 20,
        ..plan(data, LossKind::Logistic, 1e-2)
    };
    let short = run_experiments(&base).unwrap();
    let long = run_experiments(&ExperimentPlan {
        fstar_epochs: 200,
        ..base
    })
    .unwrap();
    let (a, b) = (
        short.metadata.fractions[0].fstar.value,
        long.metadata.fractions[0].fstar.value,
    );
    assert!(b <= a);
    for r in &short.records {
        assert!(a <= r.objective);
    }
}

#[test]
fn hinge_reports_both_iterates() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_problem(dir.path(), "svm.txt", LossKind::Hinge, 120, 5);
    let output = run_experiments(&ExperimentPlan {
        methods: vec![Method::PointSaga, Method::Pegasos],
        fractions: vec![0.5],
        epochs: 4,
        ..plan(data, LossKind::Hinge, 1e-2)
    })
    .unwrap();
    let count = |m, k| {
        output
            .records
            .iter()
            .filter(|r| r.method == m && r.iterate_kind == k)
            .count()
    };
    assert_eq!(count(Method::PointSaga, IterateKind::Last), 4);
    assert_eq!(count(Method::PointSaga, IterateKind::Averaged), 4);
    assert_eq!(count(Method::Pegasos, IterateKind::Averaged), 0);
    assert!(output
        .records
        .iter()
        .filter(|r| r.method == Method::Pegasos)
        .all(|r| r.gamma.is_none()));
}

#[test]
fn diverging_explicit_step_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_problem(dir.path(), "toy.txt", LossKind::Squared, 50, 6);
    let output = run_experiments(&ExperimentPlan {
        label_map: "identity".into(),
        methods: vec![Method::Saga],
        fractions: vec![1.0],
        step: StepPolicy::Explicit { gamma: 64.0 },
        ..plan(data, LossKind::Squared, 1e-2)
    })
    .unwrap();
    let diverged = &output.metadata.diverged_runs;
    assert_eq!(diverged.len(), 1);
    assert!(diverged[0].in_csv);
    assert!(output.records.len() < 20, "trace should stop at divergence");
}

#[test]
fn mushrooms_point_saga_beats_pegasos() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mushrooms.txt.gz");
    let output = run_experiments(&ExperimentPlan {
        data,
        loss: LossKind::Logistic,
        methods: vec![Method::PointSaga, Method::Pegasos],
        epochs: 10,
        step: StepPolicy::Grid { lo: -4, hi: 4 },
        fstar_epochs: 100,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(output.metadata.mu, 1e-4);
    for f in [0.05, 0.10, 1.0] {
        let ps = output.final_suboptimality(Method::PointSaga, f).unwrap();
        let peg = output.final_suboptimality(Method::Pegasos, f).unwrap();
        assert!(ps < peg, "fraction {f}: point-saga {ps:e}, pegasos {peg:e}");
    }
}
