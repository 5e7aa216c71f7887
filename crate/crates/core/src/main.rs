use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pointsaga::diagnostics::{run_suite, SuiteSize};
use pointsaga::harness::{self, ExperimentPlan, LayoutChoice, Method, StepPolicy};
use pointsaga::{InitMode, LossKind};

#[derive(Parser)]
#[command(
    name = "pointsaga",
    version,
    about = "Point-SAGA experiments and self-checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a plan and write the CSV trace plus `<out>.meta.json`.
    Run(PlanArgs),
    /// Estimate f* for every fraction of a plan and print it.
    Fstar(PlanArgs),
    /// Run the diagnostics suite; exits non-zero if any check fails.
    Check {
        /// Smaller sample counts, no scaling experiment.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// JSON plan; flags given on the command line override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name in the CSV; defaults to the data file's stem.
    #[arg(long)]
    dataset: Option<String>,
    /// `pm1`, `identity` or pairs like `0:-1,1:1`.
    #[arg(long)]
    label_map: Option<String>,
    #[arg(long)]
    loss: Option<LossKind>,
    /// Regularization μ.
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Step-size grid `A..B` over exponents of 2.
    #[arg(long, group = "step", allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, group = "step")]
    gamma: Option<f64>,
    #[arg(long, group = "step")]
    gamma_theoretical: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    fstar_epochs: Option<usize>,
    #[arg(long)]
    subsample_seed: Option<u64>,
    #[arg(long, value_parser = parse_layout)]
    layout: Option<LayoutChoice>,
    #[arg(long)]
    pegasos_t0: Option<f64>,
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    match s {
        "zero" => Ok(InitMode::Zero),
        "subgradient" => Ok(InitMode::Subgradient),
        _ => Err(format!("expected zero or subgradient, got `{s}`")),
    }
}

fn parse_layout(s: &str) -> Result<LayoutChoice, String> {
    match s {
        "auto" => Ok(LayoutChoice::Auto),
        "dense" => Ok(LayoutChoice::Dense),
        "lazy" => Ok(LayoutChoice::Lazy),
        _ => Err(format!("expected auto, dense or lazy, got `{s}`")),
    }
}

impl PlanArgs {
    fn into_plan(self) -> pointsaga::Result<ExperimentPlan> {
        let mut plan = match &self.config {
            Some(path) => ExperimentPlan::load(path)?,
            None => ExperimentPlan::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { plan.$target = v; })*
            };
        }
        set!(data => data, label_map => label_map, loss => loss, methods => methods,
             fractions => fractions, epochs => epochs, seeds => seeds, init => init, out => out,
             fstar_epochs => fstar_epochs, subsample_seed => subsample_seed, layout => layout,
             pegasos_t0 => pegasos_t0);
        if self.dataset.is_some() {
            plan.dataset = self.dataset;
        }
        if self.l2.is_some() {
            plan.mu = self.l2;
        }
        if self.workers.is_some() {
            plan.workers = self.workers;
        }
        if let Some(g) = self.grid {
            plan.step = StepPolicy::parse_grid(&g)?;
        } else if let Some(gamma) = self.gamma {
            plan.step = StepPolicy::Explicit { gamma };
        } else if self.gamma_theoretical {
            plan.step = StepPolicy::Theoretical;
        }
        if plan.data.as_os_str().is_empty() {
            return Err(pointsaga::Error::InvalidArgument(
                "--data is required".into(),
            ));
        }
        Ok(plan)
    }
}

fn run(command: Command) -> pointsaga::Result<bool> {
    match command {
        Command::Run(args) => {
            let plan = args.into_plan()?;
            let output = harness::execute(&plan)?;
            for f in &output.metadata.fractions {
                for s in &f.selections {
                    println!(
                        "fraction={} method={} gamma={} fstar={:e}",
                        f.fraction,
                        s.method,
                        s.gamma.map_or("-".to_string(), |g| format!("{g:e}")),
                        f.fstar.value
                    );
                }
            }
            println!(
                "rows={} out={} meta={}",
                output.records.len(),
                plan.out.display(),
                harness::metadata_path(&plan.out).display()
            );
            Ok(true)
        }
        Command::Fstar(args) => {
            let mut plan = args.into_plan()?;
            plan.methods = vec![Method::PointSaga];
            let output = harness::run_experiments(&plan)?;
            for f in &output.metadata.fractions {
                println!(
                    "fraction={} n={} fstar={:.17e} gamma={:e} long_run_epochs={}",
                    f.fraction, f.n, f.fstar.value, f.fstar.long_run_gamma, f.fstar.long_run_epochs
                );
            }
            Ok(true)
        }
        Command::Check { quick, seed } => {
            let size = if quick {
                SuiteSize::quick()
            } else {
                SuiteSize::full()
            };
            let reports = run_suite(size, seed)?;
            for r in &reports {
                println!("{}", r.key_values());
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("checks={} failed={}", reports.len(), failed);
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
