use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use random_machines::bench::{
    self, agreement_study, default_gamma_grid, gamma_sweep, run_experiment, win_proportions, DataSource, EvalReport,
    ExperimentPlan, Format, Method, Metric,
};
use random_machines::data::{ColumnRef, CsvOptions, CsvSidecar, SimConfig, SimKind};
use random_machines::{Error, KernelSpec, Result};

#[derive(Parser)]
#[command(name = "random-machines", version, about = "Random Machines SVM ensembles and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated holdout comparison of the selected methods.
    Run(ExperimentArgs),
    /// Repeat the experiment for each gamma in a grid.
    SweepGamma {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated gammas; defaults to 2^-3..2^3.
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
    },
    /// Test accuracy and mean pairwise agreement of ensemble base models.
    Agreement {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Monte Carlo points per feature.
        #[arg(long, default_value_t = bench::DEFAULT_K_PER_DIM)]
        k_per_dim: usize,
    },
    /// Pairwise win proportions from JSON reports written by `run`.
    Wins {
        /// Report files (one per dataset).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "accuracy")]
        metric: String,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Sim1,
    Sim2,
    Sim3,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "sim1")]
    dataset: DatasetArg,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Label column, by header name or 0-based index.
    #[arg(long)]
    label: Option<String>,
    /// Value of the label column that maps to +1.
    #[arg(long)]
    positive: Option<String>,
    /// JSON file declaring discrete columns and/or the positive label.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Fraction of class A (label -1).
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Seed of the generated dataset; defaults to --seed.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Comma-separated: rm, bsvm:<kernel>, svm:<kernel>.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 0.3)]
    probe_split: f64,
    #[arg(long, default_value_t = bench::DEFAULT_REPETITIONS)]
    reps: usize,
    #[arg(long, default_value_t = bench::DEFAULT_TRAIN_FRACTION)]
    train_frac: f64,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    /// Standardize features on the training split (default for CSV data).
    #[arg(long, conflicts_with = "no_standardize")]
    standardize: bool,
    /// Use raw features (default for generated data).
    #[arg(long)]
    no_standardize: bool,
    /// Record fit and predict wall times (makes output run-dependent).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    output: OutputArgs,
}

impl ExperimentArgs {
    fn plan(&self, default_methods: Vec<Method>) -> Result<ExperimentPlan> {
        let sim = |which| {
            DataSource::Generator(SimConfig {
                which,
                n: self.n,
                p: self.p,
                ratio: self.ratio,
                seed: self.data_seed.unwrap_or(self.seed),
            })
        };
        let data = match self.dataset {
            DatasetArg::Sim1 => sim(SimKind::Sim1),
            DatasetArg::Sim2 => sim(SimKind::Sim2),
            DatasetArg::Sim3 => sim(SimKind::Sim3),
            DatasetArg::Csv => self.csv_source()?,
        };
        let methods = match &self.methods {
            Some(s) => Method::parse_list(s)?,
            None => default_methods,
        };
        let mut plan = ExperimentPlan::new(data, methods);
        plan.repetitions = self.reps;
        plan.train_fraction = self.train_frac;
        plan.seed = self.seed;
        plan.record_timing = self.timing;
        if self.standardize || self.no_standardize {
            plan.standardize = self.standardize;
        }
        plan.ensemble.kernels = KernelSpec::default_set(self.gamma, self.degree)?;
        plan.ensemble.bootstraps = self.b;
        plan.ensemble.cost = self.cost;
        plan.ensemble.probe_split = self.probe_split;
        Ok(plan)
    }

    fn csv_source(&self) -> Result<DataSource> {
        let path = self
            .csv
            .clone()
            .ok_or_else(|| Error::Input("--dataset csv requires --csv PATH".into()))?;
        let sidecar = match &self.sidecar {
            Some(p) => CsvSidecar::read(p)?,
            None => CsvSidecar::default(),
        };
        let label_column = sidecar
            .label_column
            .clone()
            .or_else(|| self.label.as_deref().map(ColumnRef::parse))
            .ok_or_else(|| Error::Input("CSV data requires --label COLUMN or a sidecar label_column".into()))?;
        let options = sidecar.apply(CsvOptions {
            label_column,
            positive_label: self.positive.clone().unwrap_or_default(),
            discrete_columns: Vec::new(),
        });
        if options.positive_label.is_empty() {
            return Err(Error::Input("CSV data requires --positive VALUE or a sidecar positive_label".into()));
        }
        Ok(DataSource::Csv { path, options })
    }
}

impl OutputArgs {
    fn format(&self) -> Result<Format> {
        self.format.parse()
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => bench::write_atomic(path, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn print_summary(reports: &[EvalReport]) {
    for r in reports {
        if let Some(g) = r.provenance.gamma {
            eprintln!("gamma = {g}");
        }
        for s in &r.summary {
            let agr = s
                .agreement
                .as_ref()
                .map(|a| format!("  agr {:.4} ({:.4})", a.mean, a.sd))
                .unwrap_or_default();
            eprintln!(
                "{:<16} acc {:.4} ({:.4})  mcc {:.4} ({:.4}){agr}",
                s.method.to_string(),
                s.accuracy.mean,
                s.accuracy.sd,
                s.mcc.mean,
                s.mcc.sd
            );
        }
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
}

fn finish(reports: &[EvalReport], output: &OutputArgs) -> Result<()> {
    let text = bench::render(reports, output.format()?)?;
    output.emit(&text)?;
    if output.out.is_some() {
        print_summary(reports);
    }
    Ok(())
}

fn ensembles() -> Vec<Method> {
    Method::all().into_iter().filter(|m| m.is_ensemble()).collect()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(exp) => {
            let report = run_experiment(&exp.plan(Method::all())?)?;
            finish(&[report], &exp.output)
        }
        Command::SweepGamma { exp, gammas } => {
            let grid = if gammas.is_empty() { default_gamma_grid() } else { gammas };
            let reports = gamma_sweep(&exp.plan(Method::all())?, &grid)?;
            finish(&reports, &exp.output)
        }
        Command::Agreement { exp, k_per_dim } => {
            let report = agreement_study(&exp.plan(ensembles())?, k_per_dim)?;
            finish(&[report], &exp.output)
        }
        Command::Wins { inputs, metric, output } => {
            let mut reports = Vec::new();
            for path in &inputs {
                reports.extend(bench::read_reports(path)?);
            }
            let matrix = win_proportions(&reports, metric.parse::<Metric>()?)?;
            output.emit(&bench::render_wins(&matrix, output.format()?)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_training() { 2 } else { 1 })
        }
    }
}
