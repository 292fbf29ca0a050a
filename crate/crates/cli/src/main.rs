use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use taskbasis::harness::experiment::{self, DataSource, ExperimentConfig, Mode, ResultRecord};
use taskbasis::harness::{cv, io, metrics};
use taskbasis::synth::{self, SynthKind};
use taskbasis::{BasisMethod, Error, ErrorClass, Execution, Hyperparams, TaskKind};

#[derive(Parser)]
#[command(name = "taskbasis", version, about = "Multi-task learning with a shared sparse latent basis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset directory.
    Synth(SynthArgs),
    /// Fit a model at a fixed sparsity weight.
    Train(TrainArgs),
    /// Select the sparsity weight by cross-validation, then refit.
    Cv(CvArgs),
    /// Score a saved model on a dataset directory.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Disjoint,
    Overlap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Squared,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BasisArg {
    ClosedForm,
    Gradient,
    Newton,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    dataset: DatasetArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Append a constant-1 feature to every sample.
    #[arg(long)]
    append_bias: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of latent basis tasks.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Defaults to the loss matching the dataset kind.
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Defaults to closed_form for squared loss and newton for logistic loss.
    #[arg(long, value_enum)]
    basis: Option<BasisArg>,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-4)]
    outer_tol: f64,
    /// Run the per-task solves on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Train independent per-task models instead of the shared basis.
    #[arg(long)]
    single_task: bool,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated sparsity weights.
    #[arg(long, value_delimiter = ',', default_values_t = cv::DEFAULT_MU_GRID.to_vec())]
    grid: Vec<f64>,
    #[arg(long, default_value_t = cv::DEFAULT_SPLITS)]
    splits: usize,
    #[arg(long, default_value_t = cv::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth_cmd(args),
        Command::Train(args) => train_cmd(args),
        Command::Cv(args) => cv_cmd(args),
        Command::Eval(args) => eval_cmd(args),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

fn synth_cmd(args: SynthArgs) -> taskbasis::Result<serde_json::Value> {
    let kind = match args.dataset {
        DatasetArg::Disjoint => SynthKind::Disjoint,
        DatasetArg::Overlap => SynthKind::Overlap,
    };
    let mut ds = synth::generate(kind, args.seed);
    if args.append_bias {
        ds = ds.with_bias();
    }
    io::export_dataset(&args.out, &ds.train, Some(&ds.test), args.append_bias)?;
    io::write_matrix(&args.out.join("true_W.csv"), &ds.true_w)?;
    io::write_matrix(&args.out.join("true_S.csv"), &ds.true_s)?;
    let groups = args.out.join("groups.json");
    let text = serde_json::to_string_pretty(&ds.true_groups).expect("plain struct");
    std::fs::write(&groups, text).map_err(|e| Error::Io {
        path: groups,
        source: e,
    })?;
    Ok(json!({
        "out": args.out,
        "d": ds.train.dim(),
        "T": ds.train.n_tasks(),
        "train_samples": ds.train.total_samples(),
        "test_samples": ds.test.total_samples(),
    }))
}

fn build_config(args: &ModelArgs, mu_grid: Vec<f64>) -> taskbasis::Result<ExperimentConfig> {
    let manifest = io::read_manifest(&args.data)?;
    let loss = args.loss.map(|l| match l {
        LossArg::Squared => TaskKind::Regression,
        LossArg::Logistic => TaskKind::Classification,
    });
    let kind = loss.unwrap_or(manifest.kind);
    let basis_method = match args.basis {
        Some(BasisArg::ClosedForm) => BasisMethod::ClosedForm,
        Some(BasisArg::Gradient) => BasisMethod::Gradient,
        Some(BasisArg::Newton) => BasisMethod::Newton,
        None if kind == TaskKind::Regression => BasisMethod::ClosedForm,
        None => BasisMethod::Newton,
    };
    let mut hyper = Hyperparams::new(args.k)
        .with_lambda(args.lambda)
        .with_basis_method(basis_method);
    hyper.outer_max_iter = args.max_outer;
    hyper.outer_tol = args.outer_tol;
    if args.sequential {
        hyper.execution = Execution::Sequential;
    }
    let mut config = ExperimentConfig::new(
        DataSource::Directory {
            path: args.data.clone(),
        },
        hyper,
    );
    config.loss = loss;
    config.mu_grid = mu_grid;
    config.output = Some(args.out.clone());
    Ok(config)
}

fn summary(record: &ResultRecord) -> serde_json::Value {
    json!({
        "mu": record.mu_star,
        "test_metric": record.test_metric_name,
        "test_value": record.test_metric,
        "outer_iters": record.outer_iters,
        "converged": record.converged,
        "active_latent_rows": record.active_latent_rows,
        "final_objective": record.objective_trace.last(),
        "record": record.config.output.as_deref().map(|p| p.join("record.json")),
    })
}

fn train_cmd(args: TrainArgs) -> taskbasis::Result<serde_json::Value> {
    let mut config = build_config(&args.model, vec![args.mu])?;
    config.hyper.mu = args.mu;
    if args.single_task {
        config.mode = Mode::SingleTask;
    }
    let record = experiment::run_experiment(&config)?;
    Ok(summary(&record))
}

fn cv_cmd(args: CvArgs) -> taskbasis::Result<serde_json::Value> {
    let mut config = build_config(&args.model, args.grid)?;
    config.cv_splits = args.splits;
    config.cv_train_fraction = args.train_fraction;
    config.seed = args.seed;
    let record = experiment::run_experiment(&config)?;
    let mut out = summary(&record);
    out["cv_metric"] = json!(record.cv_metric);
    out["cv_table"] = json!(record
        .cv_table
        .iter()
        .map(|g| json!({"mu": g.mu, "mean": g.mean_metric}))
        .collect::<Vec<_>>());
    Ok(out)
}

fn eval_cmd(args: EvalArgs) -> taskbasis::Result<serde_json::Value> {
    let (model, kind) = io::read_model(&args.model)?;
    let data = io::ingest_dataset(&args.data)?;
    if data.train.kind() != kind {
        return Err(Error::Parameter(format!(
            "model was trained for {kind:?}, data is {:?}",
            data.train.kind()
        )));
    }
    let (split, set) = match &data.test {
        Some(test) => ("test", test),
        None => ("train", &data.train),
    };
    let (name, value) = experiment::test_metric(&model, set)?;
    let per_task = match kind {
        TaskKind::Regression => Some(metrics::per_task_rmse(&model, set)?),
        TaskKind::Classification => None,
    };
    Ok(json!({
        "model": display(&args.model),
        "split": split,
        "metric": name,
        "value": value,
        "per_task_rmse": per_task,
    }))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}
