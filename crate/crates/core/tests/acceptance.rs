//! The ten acceptance criteria, run in order with one PASS/FAIL line each.
//! Built with `harness = false` so the lines print without `--nocapture`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use pointsaga::diagnostics::suite;
use pointsaga::diagnostics::{check_newton_iterations, CheckReport};
use pointsaga::harness::{run_experiments, ExperimentPlan, Method};

const SEED: u64 = 1;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The full AUSTRALIAN file from `POINTSAGA_DATA_DIR`, else the vendored
/// 85-row excerpt.
fn australian() -> (PathBuf, &'static str) {
    if let Ok(dir) = std::env::var("POINTSAGA_DATA_DIR") {
        for name in [
            "australian_scale",
            "australian_scale.txt",
            "australian",
            "australian.txt",
        ] {
            let p = Path::new(&dir).join(name);
            if p.exists() {
                return (p, "full");
            }
        }
    }
    (data_dir().join("australian_excerpt.txt"), "85-row excerpt")
}

fn merge(name: &str, parts: Vec<CheckReport>) -> CheckReport {
    let mut out = CheckReport::new(name);
    for p in parts {
        out.require(p.passed);
        for (k, v) in p.metrics {
            out.push(format!("{}.{k}", p.name), v);
        }
    }
    out
}

fn small_dataset_ordering() -> pointsaga::Result<CheckReport> {
    let mut out = CheckReport::new("small_dataset_ordering");
    let (aus_path, aus_kind) = australian();
    let cases = [
        ("australian", aus_path),
        ("mushrooms", data_dir().join("mushrooms.txt.gz")),
    ];
    let mut notes = vec![format!("australian: {aus_kind}")];
    for (name, path) in cases {
        let plan = ExperimentPlan {
            data: path,
            dataset: Some(name.into()),
            mu: Some(1e-4),
            epochs: 30,
            seeds: vec![0, 1, 2],
            ..Default::default()
        };
        let output = run_experiments(&plan)?;
        for f in &plan.fractions {
            let sub = |m| output.final_suboptimality(m, *f).unwrap_or(f64::INFINITY);
            let (ps, saga, peg) = (
                sub(Method::PointSaga),
                sub(Method::Saga),
                sub(Method::Pegasos),
            );
            let ok = ps <= saga && peg > saga && peg > ps;
            out.require(ok);
            out.push(format!("{name}_{f}_point_saga"), ps);
            out.push(format!("{name}_{f}_saga"), saga);
            out.push(format!("{name}_{f}_pegasos"), peg);
            if !ok {
                notes.push(format!("{name} at {f} out of order"));
            }
        }
    }
    out.detail = notes.join("; ");
    Ok(out)
}

fn strip_wall_seconds(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() > 6 {
                cols.remove(6);
            }
            cols.join(",")
        })
        .collect()
}

fn determinism() -> pointsaga::Result<CheckReport> {
    let dir = std::env::temp_dir().join(format!("pointsaga-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let data = data_dir().join("mushrooms.txt.gz");
    let invoke = |out: &Path, workers: &str| -> pointsaga::Result<String> {
        let status = Command::new(env!("CARGO_BIN_EXE_pointsaga"))
            .args([
                "run",
                "--loss",
                "logistic",
                "--l2",
                "1e-4",
                "--methods",
                "point-saga,saga,pegasos",
            ])
            .args([
                "--fractions",
                "0.05,0.1",
                "--epochs",
                "8",
                "--grid=-4..2",
                "--seeds",
                "0,1",
            ])
            .args(["--fstar-epochs", "50", "--workers", workers])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(out)
            .output()?;
        if !status.status.success() {
            return Err(pointsaga::Error::InvalidArgument(
                String::from_utf8_lossy(&status.stderr).into(),
            ));
        }
        Ok(std::fs::read_to_string(out)?)
    };
    let a = invoke(&dir.join("a.csv"), "4")?;
    let b = invoke(&dir.join("b.csv"), "4")?;
    let c = invoke(&dir.join("c.csv"), "1")?;
    let (a, b, c) = (
        strip_wall_seconds(&a),
        strip_wall_seconds(&b),
        strip_wall_seconds(&c),
    );
    let mut out = CheckReport::new("determinism")
        .metric("rows", a.len().saturating_sub(1) as f64)
        .metric("identical_repeat", (a == b) as u8 as f64)
        .metric("identical_one_worker", (a == c) as u8 as f64);
    out.require(a == b && a == c && a.len() > 1);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(out)
}

struct Criterion {
    number: u32,
    limit: Option<Duration>,
    run: Box<dyn Fn() -> pointsaga::Result<CheckReport>>,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = vec![
        Criterion {
            number: 1,
            limit: secs(10),
            run: Box::new(|| {
                Ok(merge(
                    "prox_oracle",
                    vec![
                        suite::prox_oracle(10_000, SEED)?,
                        check_newton_iterations(10_000, SEED)?,
                    ],
                ))
            }),
        },
        Criterion {
            number: 2,
            limit: secs(10),
            run: Box::new(|| suite::operator_checks(10_000, SEED)),
        },
        Criterion {
            number: 3,
            limit: secs(10),
            run: Box::new(|| suite::lyapunov_descent(2000, SEED)),
        },
        Criterion {
            number: 4,
            limit: secs(30),
            run: Box::new(|| suite::chained_rate(20, SEED)),
        },
        Criterion {
            number: 5,
            limit: secs(120),
            run: Box::new(|| suite::accelerated_scaling(SEED)),
        },
        Criterion {
            number: 6,
            limit: None,
            run: Box::new(|| suite::n1_degeneration(SEED)),
        },
        Criterion {
            number: 7,
            limit: None,
            run: Box::new(|| suite::backend_equivalence(SEED)),
        },
        Criterion {
            number: 8,
            limit: secs(60),
            run: Box::new(|| suite::nonsmooth_rate(10, SEED)),
        },
        Criterion {
            number: 9,
            limit: secs(600),
            run: Box::new(small_dataset_ordering),
        },
        Criterion {
            number: 10,
            limit: None,
            run: Box::new(determinism),
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let limit = c
            .limit
            .map_or("-".to_string(), |l| format!("{}s", l.as_secs()));
        match result {
            Ok(report) => {
                let passed = report.passed && in_time;
                failed += usize::from(!passed);
                println!(
                    "criterion {:>2} {} {} time={:.2}s limit={}{}",
                    c.number,
                    if passed { "PASS" } else { "FAIL" },
                    report.name,
                    elapsed.as_secs_f64(),
                    limit,
                    if report.detail.is_empty() {
                        String::new()
                    } else {
                        format!(" ({})", report.detail)
                    },
                );
                for (k, v) in &report.metrics {
                    println!("    {k} = {v:.6e}");
                }
            }
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL error: {e}", c.number);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
