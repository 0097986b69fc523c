//! Command-line harness for deep-unfolded quantum federated learning:
//! run experiments and baselines, compare the two over paired seeds,
//! recompute fairness reports, fit convergence diagnostics, and generate
//! synthetic genomic data.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::PathBuf;

use duqfl::diagnostics;
use duqfl::experiment::{self, DatasetKind, ExperimentConfig, PartitionKind, TrainingMode};
use duqfl::fairness::{self, FairnessReport, SelectionHistory};
use duqfl::federation::{read_records_jsonl, AggregationStrategy};
use duqfl::unfold::UnfoldTrace;

#[derive(Parser)]
#[command(name = "duqfl", version, about = "Deep-unfolded quantum federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a federated experiment with meta-learned hyperparameters.
    Train(RunArgs),
    /// Run the fixed-hyperparameter control arm of the same pipeline.
    Baseline(RunArgs),
    /// Paired runs (meta-learned vs fixed) over a list of seeds.
    Compare(CompareArgs),
    /// Recompute the fairness report from a rounds.jsonl file.
    Fairness(FairnessArgs),
    /// Fit the gradient-norm decay exponent from a trace CSV.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic genomic dataset CSV.
    GenData(GenDataArgs),
}

/// Experiment configuration: a TOML file with flat keys, each optionally
/// overridden by a flag of the same name.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; flags below override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: wdbc | genomic
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    wdbc_path: Option<PathBuf>,
    #[arg(long)]
    genomic_samples: Option<usize>,
    #[arg(long)]
    genomic_genes: Option<usize>,
    #[arg(long)]
    genomic_seed: Option<u64>,
    #[arg(long)]
    n_qubits: Option<usize>,
    /// Client count k
    #[arg(long)]
    clients: Option<usize>,
    /// Unfolding steps T_u per client per round
    #[arg(long)]
    unfold_steps: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Aggregation: mean | best
    #[arg(long)]
    strategy: Option<String>,
    /// Partition: iid | dirichlet
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    dirichlet_alpha: Option<f64>,
    /// Measurement shots; 0 = exact expectation
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// FETI fairness weight λ
    #[arg(long)]
    lambda: Option<f64>,
    /// Early-stop loss threshold ε
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    /// Meta step size α for the learning-rate update
    #[arg(long)]
    meta_step_eta: Option<f64>,
    /// Meta step size for the perturbation update
    #[arg(long)]
    meta_step_delta: Option<f64>,
    #[arg(long)]
    hyper_momentum: Option<f64>,
    #[arg(long)]
    param_momentum: Option<f64>,
    /// Initial angle range: uniform in (−init_scale, init_scale)
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Disable client-level parallelism
    #[arg(long)]
    serial: bool,
}

impl ConfigArgs {
    fn resolve(&self, mode: TrainingMode) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = match v.as_str() {
                "wdbc" => DatasetKind::Wdbc,
                "genomic" => DatasetKind::Genomic,
                other => bail!("unknown dataset {other:?} (expected wdbc or genomic)"),
            };
        }
        if let Some(v) = &self.strategy {
            cfg.strategy = match v.as_str() {
                "mean" => AggregationStrategy::Mean,
                "best" => AggregationStrategy::Best,
                other => bail!("unknown strategy {other:?} (expected mean or best)"),
            };
        }
        if let Some(v) = &self.partition {
            cfg.partition = match v.as_str() {
                "iid" => PartitionKind::Iid,
                "dirichlet" => PartitionKind::Dirichlet,
                other => bail!("unknown partition {other:?} (expected iid or dirichlet)"),
            };
        }
        macro_rules! override_field {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        override_field!(
            wdbc_path => wdbc_path,
            genomic_samples => genomic_samples,
            genomic_genes => genomic_genes,
            genomic_seed => genomic_seed,
            n_qubits => n_qubits,
            clients => clients,
            unfold_steps => unfold_steps,
            rounds => rounds,
            dirichlet_alpha => dirichlet_alpha,
            shots => shots,
            seed => seed,
            lambda => lambda,
            epsilon => epsilon,
            eta0 => eta0,
            delta0 => delta0,
            meta_step_eta => meta_step_eta,
            meta_step_delta => meta_step_delta,
            hyper_momentum => hyper_momentum,
            param_momentum => param_momentum,
            init_scale => init_scale,
            test_fraction => test_fraction,
        );
        if self.serial {
            cfg.parallel = false;
        }
        cfg.mode = mode;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for the artifact bundle
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Seeds for the paired runs
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Where to write the comparison report JSON
    #[arg(long, default_value = "out/compare.json")]
    out: PathBuf,
}

#[derive(Args)]
struct FairnessArgs {
    /// rounds.jsonl produced by a previous run
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Best accuracy across the settings being compared (same unit as the
    /// records); defaults to this run's own final accuracy
    #[arg(long)]
    a_max: Option<f64>,
    /// Optional output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Trace CSV (t,loss,eta,delta,grad_norm) from a previous run
    #[arg(long)]
    trace: PathBuf,
    /// Optional output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 240)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    genes: usize,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    /// Output CSV path (header: label,g0..g{n-1})
    #[arg(long, default_value = "genomic.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(args) => run(args, TrainingMode::Duqfl),
        Command::Baseline(args) => run(args, TrainingMode::FixedBaseline),
        Command::Compare(args) => compare(args),
        Command::Fairness(args) => fairness_report(args),
        Command::Diagnose(args) => diagnose(args),
        Command::GenData(args) => gen_data(args),
    }
}

fn run(args: RunArgs, mode: TrainingMode) -> Result<()> {
    let cfg = args.config.resolve(mode)?;
    let outcome = experiment::run_experiment(&cfg, &args.out).map_err(|e| {
        flag_partial_artifacts(&args.out);
        e
    })?;

    println!("mode: {:?}, dataset: {:?}", cfg.mode, cfg.dataset);
    println!(
        "clients: {}, unfold steps: {}, rounds: {}, strategy: {:?}",
        cfg.clients, cfg.unfold_steps, cfg.rounds, cfg.strategy
    );
    println!("round  best  global_test_acc");
    for rec in &outcome.records {
        println!(
            "{:>5}  {:>4}  {:.4}",
            rec.round, rec.best_client, rec.global_test_acc
        );
    }
    println!("final global test accuracy: {:.4}", outcome.final_accuracy);
    println!(
        "fairness: FFM {:.4}, EFS {:.4}, FETI {:.4} (lambda {})",
        outcome.fairness.ffm, outcome.fairness.efs, outcome.fairness.feti, outcome.fairness.lambda
    );
    match &outcome.decay {
        Some(decay) => println!(
            "gradient decay: {:.0}% of client-rounds decaying (r² ≥ {}), median α {:.3}",
            100.0 * decay.decaying_fraction,
            decay.r2_floor,
            decay.median_alpha
        ),
        None => println!("gradient decay: traces too short to fit"),
    }
    println!("artifacts written under {}", args.out.display());
    Ok(())
}

fn flag_partial_artifacts(outdir: &std::path::Path) {
    if let Ok(entries) = fs::read_dir(outdir) {
        let names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        if !names.is_empty() {
            eprintln!(
                "warning: run failed; {} may hold partial artifacts: {}",
                outdir.display(),
                names.join(", ")
            );
        }
    }
}

fn compare(args: CompareArgs) -> Result<()> {
    let cfg = args.config.resolve(TrainingMode::Duqfl)?;
    let report = experiment::compare_modes(&cfg, &args.seeds)?;
    println!("seed  duqfl   baseline");
    for pair in &report.per_seed {
        println!(
            "{:>4}  {:.4}  {:.4}",
            pair.seed, pair.duqfl_accuracy, pair.baseline_accuracy
        );
    }
    println!(
        "medians: duqfl {:.4} vs baseline {:.4}; duqfl >= baseline on {}/{} seeds",
        report.duqfl_median,
        report.baseline_median,
        report.duqfl_wins_or_ties,
        report.per_seed.len()
    );
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    serde_json::to_writer_pretty(fs::File::create(&args.out)?, &report)?;
    println!("comparison report written to {}", args.out.display());
    Ok(())
}

fn fairness_report(args: FairnessArgs) -> Result<()> {
    let records = read_records_jsonl(fs::File::open(&args.records)?)?;
    let report = FairnessReport::from_records(&records, args.lambda, args.a_max)?;
    let history = SelectionHistory::from_records(&records)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &json)?;
            println!("fairness report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    println!("selection counts: {:?}", history.counts);
    let matrix = fairness::best_client_heatmap(&records)?;
    let mut heatmap = Vec::new();
    fairness::write_heatmap_csv(&matrix, &mut heatmap)?;
    print!("{}", String::from_utf8_lossy(&heatmap));
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let trace = UnfoldTrace::read_csv(fs::File::open(&args.trace)?)?;
    let grad_fit = diagnostics::fit_grad_norm_decay(&trace)?;
    let loss_fit = diagnostics::fit_decay_exponent(&diagnostics::moving_average(
        &trace.losses,
        diagnostics::SMOOTHING_WINDOW,
    ))?;
    let report = serde_json::json!({
        "grad_norm_squared": grad_fit,
        "loss": loss_fit,
        "steps": trace.steps_used,
    });
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &json)?;
            println!("diagnostics written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let samples = duqfl::dataset::generate_synthetic_genomic(args.samples, args.genes, args.seed)?;
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().from_path(&args.out)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..args.genes).map(|g| format!("g{g}")));
    w.write_record(&header)?;
    for s in &samples {
        let mut row = vec![s.label.to_string()];
        row.extend(s.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!(
        "wrote {} samples x {} genes to {}",
        args.samples,
        args.genes,
        args.out.display()
    );
    Ok(())
}
