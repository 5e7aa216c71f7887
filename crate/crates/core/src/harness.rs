//! Experiment runner: subsampling, step-size grid search over powers of 2,
//! f* estimation and per-epoch CSV traces with a JSON metadata sidecar.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{PegasosState, SagaState};
use crate::data::{derive_constants, load_libsvm, subsample, Dataset, LabelMap, ProblemSpec};
use crate::engine::{
    drive, run, Backend, EpochRecord, InitMode, RunConfig, StepSizePlan, TableStorage, Trace,
};
use crate::error::{invalid, Error, Result};
use crate::losses::LossKind;
use crate::rng::{derive_seed, RNG_ALGORITHM};

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "dataset",
    "fraction",
    "seed",
    "gamma",
    "epoch",
    "wall_seconds",
    "objective",
    "suboptimality",
    "iterate_kind",
];

/// Largest `n·d` for which the auto layout keeps a dense gradient table.
pub const DENSE_TABLE_LIMIT: usize = 1 << 24;

pub const PEGASOS_VARIANT: &str = "projection-free Pegasos: eta_t = 1/(mu (t + t0)), \
     x <- (1 - eta_t mu) x - eta_t l'(<x, X_j>; y_j) X_j, last iterate, no averaging; \
     the loss derivative replaces the hinge subgradient for smooth losses";

/// μ used in the published experiments, keyed by dataset name prefix.
pub fn published_mu(dataset: &str) -> Option<f64> {
    let name = dataset.to_ascii_lowercase();
    [
        ("covtype", 2e-6),
        ("australian", 1e-4),
        ("mushrooms", 1e-4),
        ("rcv1", 5e-5),
    ]
    .iter()
    .find(|(prefix, _)| name.starts_with(prefix))
    .map(|&(_, mu)| mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PointSaga,
    Saga,
    Pegasos,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PointSaga => "point-saga",
            Method::Saga => "saga",
            Method::Pegasos => "pegasos",
        }
    }

    /// Whether the method takes a step size from the plan's policy.
    /// Pegasos uses its own decaying schedule.
    pub fn uses_step_policy(self) -> bool {
        !matches!(self, Method::Pegasos)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "point-saga" | "pointsaga" => Ok(Method::PointSaga),
            "saga" => Ok(Method::Saga),
            "pegasos" | "sgd" => Ok(Method::Pegasos),
            other => invalid(format!("unknown method `{other}`")),
        }
    }
}

/// Where the step size comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    Theoretical,
    Explicit {
        gamma: f64,
    },
    /// Every `γ = 2^e` for `e` in `lo..=hi`.
    Grid {
        lo: i32,
        hi: i32,
    },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Grid { lo: -14, hi: 4 }
    }
}

impl StepPolicy {
    /// Parses `A..B` (inclusive exponents).
    pub fn parse_grid(text: &str) -> Result<Self> {
        let (a, b) = text.split_once("..").ok_or_else(|| {
            Error::InvalidArgument(format!("grid `{text}` is not of the form A..B"))
        })?;
        let parse = |s: &str| {
            s.trim()
                .trim_start_matches("2^")
                .parse::<i32>()
                .map_err(|_| Error::InvalidArgument(format!("bad grid exponent `{s}`")))
        };
        let policy = StepPolicy::Grid {
            lo: parse(a)?,
            hi: parse(b.trim_start_matches('='))?,
        };
        policy.validate()?;
        Ok(policy)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StepPolicy::Theoretical => Ok(()),
            StepPolicy::Explicit { gamma } => StepSizePlan::user(gamma).map(|_| ()),
            StepPolicy::Grid { lo, hi } => {
                if lo > hi {
                    invalid(format!("grid exponents must satisfy a ≤ b, got {lo}..{hi}"))
                } else if lo < -1000 || hi > 1000 {
                    invalid(format!(
                        "grid exponents {lo}..{hi} give non-finite step sizes"
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Table storage and iterate backend for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutChoice {
    /// Dense table when `n·d ≤ DENSE_TABLE_LIMIT`, otherwise the scalar
    /// table, with the lazy backend where averaging is not needed.
    #[default]
    Auto,
    Dense,
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub storage: TableStorage,
    pub backend: Backend,
}

impl LayoutChoice {
    pub fn resolve(self, spec: &ProblemSpec) -> Layout {
        let averaging = !spec.loss().is_smooth();
        match self {
            LayoutChoice::Dense => Layout {
                storage: TableStorage::Dense,
                backend: Backend::Dense,
            },
            LayoutChoice::Lazy => Layout {
                storage: TableStorage::Scalar,
                backend: Backend::Lazy,
            },
            LayoutChoice::Auto if spec.n().saturating_mul(spec.dim()) <= DENSE_TABLE_LIMIT => {
                Layout {
                    storage: TableStorage::Dense,
                    backend: Backend::Dense,
                }
            }
            LayoutChoice::Auto => Layout {
                storage: TableStorage::Scalar,
                backend: if averaging {
                    Backend::Dense
                } else {
                    Backend::Lazy
                },
            },
        }
    }
}

/// Everything needed to reproduce one experiment. Deserializes from JSON
/// with every field optional except `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub data: PathBuf,
    /// Name used in the CSV; defaults to the file name up to the first dot.
    pub dataset: Option<String>,
    /// `pm1`, `identity`, or `raw:mapped` pairs such as `0:-1,1:1`.
    pub label_map: String,
    pub loss: LossKind,
    /// Defaults to the published value for known dataset names.
    pub mu: Option<f64>,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    pub epochs: usize,
    pub step: StepPolicy,
    pub seeds: Vec<u64>,
    pub init: InitMode,
    pub out: PathBuf,
    /// Seed of the row subsample; shared by all runs at a fraction.
    pub subsample_seed: u64,
    pub fstar_epochs: usize,
    pub layout: LayoutChoice,
    pub pegasos_t0: f64,
    pub workers: Option<usize>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            dataset: None,
            label_map: "pm1".into(),
            loss: LossKind::Logistic,
            mu: None,
            methods: vec![Method::PointSaga, Method::Saga, Method::Pegasos],
            fractions: vec![0.05, 0.10, 1.0],
            epochs: 20,
            step: StepPolicy::default(),
            seeds: vec![0],
            init: InitMode::Zero,
            out: PathBuf::from("trace.csv"),
            subsample_seed: 0,
            fstar_epochs: 500,
            layout: LayoutChoice::Auto,
            pegasos_t0: 1.0,
            workers: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.dataset {
            return name.clone();
        }
        self.data
            .file_name()
            .and_then(|s| s.to_str())
            .and_then(|s| s.split('.').next())
            .filter(|s| !s.is_empty())
            .unwrap_or("dataset")
            .to_string()
    }

    /// The plan's μ, or the published one for the dataset name.
    pub fn resolve_mu(&self) -> Result<(f64, String)> {
        if let Some(mu) = self.mu {
            return Ok((mu, "plan".into()));
        }
        let name = self.dataset_name();
        match published_mu(&name) {
            Some(mu) => Ok((mu, format!("published value for {name}"))),
            None => invalid(format!(
                "no μ given and no default known for dataset `{name}`"
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return invalid("need at least one method");
        }
        if self.seeds.is_empty() {
            return invalid("need at least one seed");
        }
        if self.fractions.is_empty() {
            return invalid("need at least one fraction");
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return invalid(format!("fractions must lie in (0, 1], got {f}"));
        }
        if self.epochs == 0 || self.fstar_epochs == 0 {
            return invalid("epoch counts must be positive");
        }
        if !(self.pegasos_t0 > 0.0 && self.pegasos_t0.is_finite()) {
            return invalid(format!(
                "pegasos_t0 must be positive, got {}",
                self.pegasos_t0
            ));
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive");
        }
        self.step.validate()?;
        if !self.loss.is_smooth() {
            if self.methods.contains(&Method::Saga) {
                return invalid("SAGA needs a smooth loss; drop it for hinge");
            }
            if self.step == StepPolicy::Theoretical {
                return invalid("the theoretical step size needs a smooth loss");
            }
        }
        let (mu, _) = self.resolve_mu()?;
        if !(mu > 0.0 && mu.is_finite()) {
            return invalid(format!("μ must be positive, got {mu}"));
        }
        LabelMap::parse(&self.label_map)?;
        Ok(())
    }

    fn settings(&self, layout: Layout) -> RunSettings {
        RunSettings {
            epochs: self.epochs,
            seeds: self.seeds.clone(),
            init: self.init,
            layout,
            pegasos_t0: self.pegasos_t0,
        }
    }
}

/// Per-run options shared by every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub init: InitMode,
    pub layout: Layout,
    pub pegasos_t0: f64,
}

impl RunSettings {
    pub fn new(epochs: usize, seeds: Vec<u64>) -> Self {
        Self {
            epochs,
            seeds,
            init: InitMode::Zero,
            layout: Layout {
                storage: TableStorage::Dense,
                backend: Backend::Dense,
            },
            pegasos_t0: 1.0,
        }
    }
}

/// One method run at one step size and seed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub diverged: bool,
    /// Set when the run stopped on a numerical error rather than divergence.
    pub failure: Option<String>,
}

impl RunOutcome {
    pub fn final_objective(&self) -> Option<f64> {
        if self.diverged {
            return None;
        }
        self.records.last().map(|r| r.objective)
    }

    fn min_objective(&self) -> Option<f64> {
        self.records
            .iter()
            .flat_map(|r| std::iter::once(r.objective).chain(r.averaged_objective))
            .filter(|v| v.is_finite())
            .min_by(f64::total_cmp)
    }
}

/// Runs `method` for `settings.epochs` epochs from zero.
pub fn run_method(
    spec: &ProblemSpec,
    method: Method,
    gamma: Option<f64>,
    seed: u64,
    settings: &RunSettings,
) -> Result<RunOutcome> {
    let x0 = vec![0.0; spec.dim()];
    let need_gamma =
        || gamma.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a step size")));
    let trace: Result<Trace> = match method {
        Method::PointSaga => {
            let cfg = RunConfig::new(settings.epochs, StepSizePlan::user(need_gamma()?)?)
                .seed(seed)
                .init(settings.init)
                .storage(settings.layout.storage)
                .backend(settings.layout.backend)
                .track_average(!spec.loss().is_smooth());
            run(spec, &cfg, |_, _| {})
        }
        Method::Saga => {
            let mut s = SagaState::new(spec, &x0, need_gamma()?, settings.layout.storage)?;
            drive(spec, &mut s, settings.epochs, seed, |_, _| {})
        }
        Method::Pegasos => {
            let mut s = PegasosState::new(spec, &x0, settings.pegasos_t0)?;
            drive(spec, &mut s, settings.epochs, seed, |_, _| {})
        }
    };
    match trace {
        Ok(t) => Ok(RunOutcome {
            method,
            gamma,
            seed,
            records: t.records,
            diverged: t.diverged,
            failure: None,
        }),
        // a failed inner solve ends the run like a divergence
        Err(e @ Error::NoConvergence { .. }) => Ok(RunOutcome {
            method,
            gamma,
            seed,
            records: Vec::new(),
            diverged: true,
            failure: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

/// One grid cell, scored by the mean final objective over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub exponent: i32,
    pub gamma: f64,
    /// `None` when any seed diverged.
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub method: Method,
    pub cells: Vec<GridCell>,
    pub selected: f64,
    pub runs: Vec<RunOutcome>,
}

/// Lowest score wins; equal scores go to the larger step. Diverged cells
/// never win.
pub fn select_gamma(cells: &[GridCell]) -> Result<f64> {
    cells
        .iter()
        .filter_map(|c| c.score.filter(|s| s.is_finite()).map(|s| (s, c.gamma)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)))
        .map(|(_, gamma)| gamma)
        .ok_or(Error::AllDiverged)
}

/// Runs every `γ = 2^e`, `e ∈ lo..=hi`, for every seed and picks the step
/// with the lowest mean objective at the final epoch.
pub fn grid_search(
    spec: &ProblemSpec,
    method: Method,
    lo: i32,
    hi: i32,
    settings: &RunSettings,
) -> Result<GridOutcome> {
    StepPolicy::Grid { lo, hi }.validate()?;
    if !method.uses_step_policy() {
        return invalid(format!("{method} has no step size to search"));
    }
    let jobs: Vec<(i32, u64)> = (lo..=hi)
        .flat_map(|e| settings.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(e, seed)| run_method(spec, method, Some(2f64.powi(e)), seed, settings))
        .collect::<Result<_>>()?;
    let cells: Vec<GridCell> = (lo..=hi)
        .map(|e| {
            let gamma = 2f64.powi(e);
            let finals: Option<Vec<f64>> = runs
                .iter()
                .filter(|r| r.gamma == Some(gamma))
                .map(RunOutcome::final_objective)
                .collect();
            let score = finals.map(|f| f.iter().sum::<f64>() / f.len() as f64);
            GridCell {
                exponent: e,
                gamma,
                score,
            }
        })
        .collect();
    let selected = select_gamma(&cells)?;
    Ok(GridOutcome {
        method,
        cells,
        selected,
        runs,
    })
}

/// Where f* came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FstarEstimate {
    pub value: f64,
    pub long_run_gamma: f64,
    pub long_run_epochs: usize,
    pub long_run_seed: u64,
    pub long_run_min: Option<f64>,
    pub observed_min: Option<f64>,
    pub observed_runs: usize,
}

/// Minimum objective over a long Point-SAGA run at `gamma` and every
/// epoch (last and averaged iterates) of the `observed` runs.
pub fn estimate_fstar(
    spec: &ProblemSpec,
    gamma: f64,
    epochs: usize,
    seed: u64,
    settings: &RunSettings,
    observed: &[RunOutcome],
) -> Result<FstarEstimate> {
    if !(spec.mu() > 0.0) {
        return invalid("f* estimation needs μ > 0");
    }
    let long = RunSettings {
        epochs,
        ..settings.clone()
    };
    let run = run_method(spec, Method::PointSaga, Some(gamma), seed, &long)?;
    let long_run_min = run.min_objective();
    let observed_min = observed
        .iter()
        .filter_map(RunOutcome::min_objective)
        .min_by(f64::total_cmp);
    let value = match (long_run_min, observed_min) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(Error::AllDiverged),
    };
    Ok(FstarEstimate {
        value,
        long_run_gamma: gamma,
        long_run_epochs: epochs,
        long_run_seed: seed,
        long_run_min,
        observed_min,
        observed_runs: observed.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterateKind {
    Last,
    Averaged,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub method: Method,
    pub dataset: String,
    pub fraction: f64,
    pub seed: u64,
    /// Empty for Pegasos, which has no constant step.
    pub gamma: Option<f64>,
    pub epoch: usize,
    pub wall_seconds: f64,
    pub objective: f64,
    pub suboptimality: f64,
    pub iterate_kind: IterateKind,
}

fn compare_records(a: &TraceRecord, b: &TraceRecord) -> Ordering {
    a.method
        .name()
        .cmp(b.method.name())
        .then(a.fraction.total_cmp(&b.fraction))
        .then(a.seed.cmp(&b.seed))
        .then(a.gamma.unwrap_or(0.0).total_cmp(&b.gamma.unwrap_or(0.0)))
        .then(a.epoch.cmp(&b.epoch))
        .then(a.iterate_kind.cmp(&b.iterate_kind))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSelection {
    pub method: Method,
    pub gamma: Option<f64>,
    pub source: String,
    pub grid: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergedRun {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub epochs_completed: usize,
    pub reason: String,
    pub in_csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionSummary {
    pub fraction: f64,
    pub n: usize,
    pub lipschitz: Option<f64>,
    pub layout: Layout,
    pub selections: Vec<MethodSelection>,
    pub fstar: FstarEstimate,
}

/// Contents of the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub dataset: String,
    pub data_path: PathBuf,
    pub preprocessing: String,
    pub n_total: usize,
    pub dim: usize,
    pub loss: LossKind,
    pub mu: f64,
    pub mu_source: String,
    pub label_map: String,
    pub init: InitMode,
    pub init_applies_to: String,
    pub rng_algorithm: String,
    pub seeds: Vec<u64>,
    pub subsample_seed: u64,
    pub epochs: usize,
    pub step: StepPolicy,
    pub selection_rule: String,
    pub pegasos_variant: String,
    pub pegasos_t0: f64,
    pub csv_columns: Vec<String>,
    pub fractions: Vec<FractionSummary>,
    pub diverged_runs: Vec<DivergedRun>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TraceRecord>,
    pub metadata: Metadata,
}

impl ExperimentOutput {
    /// Final-epoch suboptimality of the last iterate, averaged over seeds.
    pub fn final_suboptimality(&self, method: Method, fraction: f64) -> Option<f64> {
        let mut finals = Vec::new();
        let rows: Vec<&TraceRecord> = self
            .records
            .iter()
            .filter(|r| {
                r.method == method && r.fraction == fraction && r.iterate_kind == IterateKind::Last
            })
            .collect();
        for seed in self.metadata.seeds.iter() {
            let last = rows
                .iter()
                .filter(|r| r.seed == *seed)
                .max_by_key(|r| r.epoch)?;
            finals.push(last.suboptimality);
        }
        (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64)
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Loads the plan's dataset.
pub fn load_dataset(plan: &ExperimentPlan) -> Result<Dataset> {
    load_libsvm(&plan.data, &LabelMap::parse(&plan.label_map)?)
}

/// Runs the plan against an already loaded dataset.
pub fn run_experiments_on(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentOutput> {
    plan.validate()?;
    pool(plan.workers)?.install(|| run_inner(plan, data))
}

/// Loads the data and runs the whole plan without writing anything.
pub fn run_experiments(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let data = load_dataset(plan)?;
    run_experiments_on(plan, &data)
}

fn run_inner(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentOutput> {
    let (mu, mu_source) = plan.resolve_mu()?;
    let dataset = plan.dataset_name();
    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut diverged_runs = Vec::new();
    for (fi, &fraction) in plan.fractions.iter().enumerate() {
        let sub_seed = derive_seed(plan.subsample_seed, fi as u64);
        let spec = derive_constants(subsample(data, fraction, sub_seed)?, plan.loss, mu)?;
        let layout = plan.layout.resolve(&spec);
        let settings = plan.settings(layout);

        let mut selections = Vec::new();
        let mut all_runs: Vec<RunOutcome> = Vec::new();
        let mut kept: Vec<RunOutcome> = Vec::new();
        for &method in &methods {
            let (gamma, source, grid, runs) = match (method.uses_step_policy(), plan.step) {
                (false, _) => (
                    None,
                    format!("t0 = {}", plan.pegasos_t0),
                    Vec::new(),
                    seeded_runs(&spec, method, None, &settings)?,
                ),
                (true, StepPolicy::Grid { lo, hi }) => {
                    let g = grid_search(&spec, method, lo, hi, &settings)?;
                    (Some(g.selected), "grid".into(), g.cells, g.runs)
                }
                (true, StepPolicy::Explicit { gamma }) => (
                    Some(gamma),
                    "explicit".into(),
                    Vec::new(),
                    seeded_runs(&spec, method, Some(gamma), &settings)?,
                ),
                (true, StepPolicy::Theoretical) => {
                    let gamma = StepSizePlan::theoretical(&spec)?.gamma;
                    (
                        Some(gamma),
                        "theoretical".into(),
                        Vec::new(),
                        seeded_runs(&spec, method, Some(gamma), &settings)?,
                    )
                }
            };
            for r in &runs {
                if r.diverged {
                    diverged_runs.push(DivergedRun {
                        method,
                        fraction,
                        seed: r.seed,
                        gamma: r.gamma,
                        epochs_completed: r.records.len(),
                        reason: r
                            .failure
                            .clone()
                            .unwrap_or_else(|| "objective diverged".into()),
                        in_csv: r.gamma == gamma,
                    });
                }
            }
            kept.extend(runs.iter().filter(|r| r.gamma == gamma).cloned());
            all_runs.extend(runs);
            selections.push(MethodSelection {
                method,
                gamma,
                source,
                grid,
            });
        }

        let fstar_gamma = point_saga_gamma(plan, &spec, &selections, &settings)?;
        let fstar = estimate_fstar(
            &spec,
            fstar_gamma,
            plan.fstar_epochs,
            derive_seed(plan.seeds[0], 0xF5),
            &settings,
            &all_runs,
        )?;
        for r in &kept {
            for rec in &r.records {
                let mut push = |objective: f64, kind: IterateKind| {
                    records.push(TraceRecord {
                        method: r.method,
                        dataset: dataset.clone(),
                        fraction,
                        seed: r.seed,
                        gamma: r.gamma,
                        epoch: rec.epoch,
                        wall_seconds: rec.wall_seconds,
                        objective,
                        suboptimality: objective - fstar.value,
                        iterate_kind: kind,
                    })
                };
                push(rec.objective, IterateKind::Last);
                if let Some(avg) = rec.averaged_objective {
                    push(avg, IterateKind::Averaged);
                }
            }
        }
        summaries.push(FractionSummary {
            fraction,
            n: spec.n(),
            lipschitz: spec.lipschitz(),
            layout,
            selections,
            fstar,
        });
    }
    records.sort_by(compare_records);

    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION").into(),
        dataset,
        data_path: plan.data.clone(),
        preprocessing: "features used as read from the file; no rescaling".into(),
        n_total: data.n(),
        dim: data.dim(),
        loss: plan.loss,
        mu,
        mu_source,
        label_map: plan.label_map.clone(),
        init: plan.init,
        init_applies_to: "point-saga gradient table; saga tables start at zero".into(),
        rng_algorithm: RNG_ALGORITHM.into(),
        seeds: plan.seeds.clone(),
        subsample_seed: plan.subsample_seed,
        epochs: plan.epochs,
        step: plan.step,
        selection_rule: "lowest mean last-iterate objective at the final epoch over seeds; \
                         ties to the larger step; cells with any diverged seed excluded"
            .into(),
        pegasos_variant: PEGASOS_VARIANT.into(),
        pegasos_t0: plan.pegasos_t0,
        csv_columns: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
        fractions: summaries,
        diverged_runs,
    };
    Ok(ExperimentOutput { records, metadata })
}

fn seeded_runs(
    spec: &ProblemSpec,
    method: Method,
    gamma: Option<f64>,
    settings: &RunSettings,
) -> Result<Vec<RunOutcome>> {
    settings
        .seeds
        .par_iter()
        .map(|&seed| run_method(spec, method, gamma, seed, settings))
        .collect()
}

/// Step for the long f* run: Point-SAGA's selection if it ran, otherwise
/// the plan's policy applied to Point-SAGA.
fn point_saga_gamma(
    plan: &ExperimentPlan,
    spec: &ProblemSpec,
    selections: &[MethodSelection],
    settings: &RunSettings,
) -> Result<f64> {
    if let Some(g) = selections
        .iter()
        .find(|s| s.method == Method::PointSaga)
        .and_then(|s| s.gamma)
    {
        return Ok(g);
    }
    match plan.step {
        StepPolicy::Explicit { gamma } => Ok(gamma),
        StepPolicy::Theoretical => Ok(StepSizePlan::theoretical(spec)?.gamma),
        StepPolicy::Grid { lo, hi } => {
            Ok(grid_search(spec, Method::PointSaga, lo, hi, settings)?.selected)
        }
    }
}

/// Sidecar path: `<out>.meta.json`.
pub fn metadata_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the CSV and its metadata sidecar.
pub fn write_outputs(output: &ExperimentOutput, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out)?;
    for r in &output.records {
        w.serialize(r)?;
    }
    if output.records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    fs::write(
        metadata_path(out),
        serde_json::to_string_pretty(&output.metadata)?,
    )?;
    Ok(())
}

/// `run_experiments` followed by `write_outputs` to `plan.out`.
pub fn execute(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    let output = run_experiments(plan)?;
    write_outputs(&output, &plan.out)?;
    Ok(output)
}
