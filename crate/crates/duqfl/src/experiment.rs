//! End-to-end experiment harness: configuration, dataset pipeline, the
//! federated run, and artifact emission (round records, traces, fairness and
//! decay reports, plot-ready CSVs).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset;
use crate::diagnostics::DecaySummary;
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessReport};
use crate::federation::{
    self, AggregationStrategy, FederationConfig, FederationRun, PartitionConfig, PartitionScheme,
    RoundRecord,
};
use crate::preprocess;
use crate::statevector::ShotConfig;
use crate::unfold::{AdaptiveDelta, HyperState, UnfoldConfig, UnfoldTrace};
use crate::vqc::ModelSpec;

/// r² floor used when summarizing gradient-norm decay fits.
pub const DECAY_R2_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Wdbc,
    Genomic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Meta-learned η and δ (the full method).
    Duqfl,
    /// Frozen η₀, δ₀ control arm: same pipeline, no meta-learning.
    FixedBaseline,
}

/// Flat experiment configuration. Serializes losslessly to/from TOML; every
/// key can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub wdbc_path: PathBuf,
    pub genomic_samples: usize,
    pub genomic_genes: usize,
    pub genomic_seed: u64,
    pub n_qubits: usize,
    /// Client count k.
    pub clients: usize,
    /// Unfolding steps T_u per client per round.
    pub unfold_steps: usize,
    pub rounds: usize,
    pub strategy: AggregationStrategy,
    pub partition: PartitionKind,
    pub dirichlet_alpha: f64,
    /// 0 means exact expectation values; otherwise measurement shots.
    pub shots: u64,
    /// Master seed; the split, partition, initialization, and Rademacher
    /// streams derive from it.
    pub seed: u64,
    /// FETI fairness weight λ.
    pub lambda: f64,
    pub mode: TrainingMode,
    /// Early-stop loss threshold ε.
    pub epsilon: f64,
    pub eta0: f64,
    pub delta0: f64,
    /// Meta step size α for the learning-rate update.
    pub meta_step_eta: f64,
    /// Meta step size for the perturbation update.
    pub meta_step_delta: f64,
    /// Momentum γ of the meta-gradient accumulators.
    pub hyper_momentum: f64,
    /// Momentum β of the parameter-velocity term.
    pub param_momentum: f64,
    /// Initial angles are drawn uniformly from (−init_scale, init_scale).
    pub init_scale: f64,
    pub test_fraction: f64,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Wdbc,
            wdbc_path: PathBuf::from("data/wdbc.csv"),
            genomic_samples: 240,
            genomic_genes: 16,
            genomic_seed: 13,
            n_qubits: 4,
            clients: 3,
            unfold_steps: 10,
            rounds: 5,
            strategy: AggregationStrategy::Best,
            partition: PartitionKind::Iid,
            dirichlet_alpha: 0.5,
            shots: 0,
            seed: 7,
            lambda: 0.5,
            mode: TrainingMode::Duqfl,
            epsilon: 0.0,
            eta0: 0.1,
            delta0: 0.1,
            meta_step_eta: 0.01,
            meta_step_delta: 0.01,
            hyper_momentum: 0.9,
            param_momentum: 0.5,
            init_scale: std::f64::consts::PI,
            test_fraction: 0.2,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_qubits", self.n_qubits),
            ("clients", self.clients),
            ("unfold_steps", self.unfold_steps),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::OutOfUnitInterval {
                name: "lambda",
                value: self.lambda,
            });
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.eta0 < crate::unfold::HYPER_FLOOR || self.delta0 < crate::unfold::HYPER_FLOOR {
            return Err(Error::InvalidConfig(
                "eta0 and delta0 must be at or above the 0.001 floor".into(),
            ));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::new(self.n_qubits)
    }

    pub fn shot_config(&self) -> ShotConfig {
        if self.shots == 0 {
            ShotConfig::Exact
        } else {
            ShotConfig::Sampled {
                shots: self.shots,
                seed: self.seed.wrapping_add(4),
            }
        }
    }

    fn hyper0(&self) -> HyperState {
        let (meta_eta, meta_delta) = match self.mode {
            TrainingMode::Duqfl => (self.meta_step_eta, self.meta_step_delta),
            TrainingMode::FixedBaseline => (0.0, 0.0),
        };
        HyperState {
            eta: self.eta0,
            delta: self.delta0,
            meta_step_eta: meta_eta,
            meta_step_delta: meta_delta,
            hyper_momentum: self.hyper_momentum,
            param_momentum: self.param_momentum,
            ..HyperState::default()
        }
    }

    fn federation_config(&self) -> FederationConfig {
        let scheme = match self.partition {
            PartitionKind::Iid => PartitionScheme::Iid,
            PartitionKind::Dirichlet => PartitionScheme::Dirichlet {
                alpha: self.dirichlet_alpha,
            },
        };
        FederationConfig {
            rounds: self.rounds,
            strategy: self.strategy,
            partition: PartitionConfig {
                scheme,
                k: self.clients,
                seed: self.seed.wrapping_add(1),
            },
            unfold: UnfoldConfig {
                max_steps: self.unfold_steps,
                epsilon: self.epsilon,
                rademacher_seed: self.seed.wrapping_add(3),
                adaptive_delta: AdaptiveDelta::Meta,
            },
            shots: self.shot_config(),
            hyper0: self.hyper0(),
            init_seed: self.seed.wrapping_add(2),
            init_scale: self.init_scale,
            parallel: self.parallel,
        }
    }

    /// Load and preprocess the configured dataset into model-ready
    /// train/test splits.
    pub fn prepare_data(&self) -> Result<(Vec<crate::vqc::Sample>, Vec<crate::vqc::Sample>)> {
        let raw = match self.dataset {
            DatasetKind::Wdbc => dataset::load_wdbc(&self.wdbc_path)?,
            DatasetKind::Genomic => dataset::generate_synthetic_genomic(
                self.genomic_samples,
                self.genomic_genes,
                self.genomic_seed,
            )?,
        };
        let (train_raw, test_raw) = dataset::stratified_split(&raw, self.test_fraction, self.seed)?;
        let (_, train, test) = preprocess::fit_transform(&train_raw, &test_raw, self.n_qubits)?;
        Ok((train, test))
    }
}

/// In-memory result of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    pub fairness: FairnessReport,
    /// Absent when every trace is too short to support a decay fit
    /// (fewer than 4 unfolding steps).
    pub decay: Option<DecaySummary>,
    pub final_accuracy: f64,
    pub run: FederationRun,
}

/// Run the configured experiment without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (train, test) = cfg.prepare_data()?;
    let model = cfg.model_spec();
    let fed_cfg = cfg.federation_config();
    let run = federation::run_federation(&model, &train, &test, &fed_cfg)?;
    if run.records.is_empty() {
        return Err(Error::InvalidConfig(
            "experiment needs at least one round for reports".into(),
        ));
    }
    let fairness = FairnessReport::from_records(&run.records, cfg.lambda, None)?;
    let traces: Vec<&UnfoldTrace> = run
        .clients
        .iter()
        .flat_map(|c| c.history.iter())
        .collect();
    let decay = DecaySummary::from_traces(traces.into_iter(), DECAY_R2_FLOOR).ok();
    let final_accuracy = run.records.last().expect("nonempty").global_test_acc;
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        records: run.records.clone(),
        fairness,
        decay,
        final_accuracy,
        run,
    })
}

/// Artifact bundle written by [`run_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub rounds_jsonl: PathBuf,
    pub trace_csvs: Vec<PathBuf>,
    pub fairness_json: PathBuf,
    pub decay_json: Option<PathBuf>,
    pub plot_csvs: Vec<PathBuf>,
}

/// Run the experiment and write the full artifact set under `outdir`.
pub fn run_experiment(cfg: &ExperimentConfig, outdir: &Path) -> Result<ExperimentOutcome> {
    let outcome = run_in_memory(cfg)?;
    write_artifacts(&outcome, outdir)?;
    Ok(outcome)
}

/// Write round records, per-client traces, fairness/decay reports, and the
/// plot-ready CSVs for the figure analogs (log-log loss, accuracy per round,
/// η/δ trajectories, selection heatmap).
pub fn write_artifacts(outcome: &ExperimentOutcome, outdir: &Path) -> Result<ArtifactPaths> {
    let traces_dir = outdir.join("traces");
    let plots_dir = outdir.join("plots");
    fs::create_dir_all(&traces_dir)?;
    fs::create_dir_all(&plots_dir)?;

    let rounds_jsonl = outdir.join("rounds.jsonl");
    federation::write_records_jsonl(&outcome.records, fs::File::create(&rounds_jsonl)?)?;

    let mut trace_csvs = Vec::new();
    for client in &outcome.run.clients {
        for (round_idx, trace) in client.history.iter().enumerate() {
            let path = traces_dir.join(format!(
                "trace_r{}_c{}.csv",
                round_idx + 1,
                client.client_id
            ));
            trace.write_csv(fs::File::create(&path)?)?;
            trace_csvs.push(path);
        }
    }

    let fairness_json = outdir.join("fairness.json");
    serde_json::to_writer_pretty(fs::File::create(&fairness_json)?, &outcome.fairness)?;

    let decay_json = match &outcome.decay {
        Some(decay) => {
            let path = outdir.join("decay.json");
            serde_json::to_writer_pretty(fs::File::create(&path)?, decay)?;
            Some(path)
        }
        None => None,
    };

    let mut plot_csvs = Vec::new();

    let loss_path = plots_dir.join("loss_loglog.csv");
    {
        let mut w = csv::Writer::from_writer(fs::File::create(&loss_path)?);
        w.write_record(["round", "client", "t", "loss", "log_t", "log_loss"])?;
        for client in &outcome.run.clients {
            for (round_idx, trace) in client.history.iter().enumerate() {
                for (t_idx, &loss) in trace.losses.iter().enumerate() {
                    let t = (t_idx + 1) as f64;
                    w.write_record([
                        (round_idx + 1).to_string(),
                        client.client_id.to_string(),
                        (t_idx + 1).to_string(),
                        loss.to_string(),
                        t.ln().to_string(),
                        loss.max(f64::EPSILON).ln().to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    plot_csvs.push(loss_path);

    let acc_path = plots_dir.join("accuracy_vs_round.csv");
    {
        let mut w = csv::Writer::from_writer(fs::File::create(&acc_path)?);
        w.write_record(["round", "client", "train_acc", "test_acc", "global_test_acc", "best_client"])?;
        for rec in &outcome.records {
            for c in 0..rec.per_client_test_acc.len() {
                w.write_record([
                    rec.round.to_string(),
                    c.to_string(),
                    rec.per_client_train_acc[c].to_string(),
                    rec.per_client_test_acc[c].to_string(),
                    rec.global_test_acc.to_string(),
                    rec.best_client.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    plot_csvs.push(acc_path);

    let hyper_path = plots_dir.join("hyper_trajectories.csv");
    {
        let mut w = csv::Writer::from_writer(fs::File::create(&hyper_path)?);
        w.write_record(["round", "client", "t", "eta", "delta"])?;
        for client in &outcome.run.clients {
            for (round_idx, trace) in client.history.iter().enumerate() {
                for t_idx in 0..trace.steps_used {
                    w.write_record([
                        (round_idx + 1).to_string(),
                        client.client_id.to_string(),
                        (t_idx + 1).to_string(),
                        trace.etas[t_idx].to_string(),
                        trace.deltas[t_idx].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    plot_csvs.push(hyper_path);

    let heatmap_path = plots_dir.join("heatmap.csv");
    let matrix = fairness::best_client_heatmap(&outcome.records)?;
    fairness::write_heatmap_csv(&matrix, fs::File::create(&heatmap_path)?)?;
    plot_csvs.push(heatmap_path);

    Ok(ArtifactPaths {
        rounds_jsonl,
        trace_csvs,
        fairness_json,
        decay_json,
        plot_csvs,
    })
}

/// One seed's paired accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    pub seed: u64,
    pub duqfl_accuracy: f64,
    pub baseline_accuracy: f64,
}

/// Paired comparison of the meta-learned method against the frozen-
/// hyperparameter control over a set of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub per_seed: Vec<PairedResult>,
    pub duqfl_median: f64,
    pub baseline_median: f64,
    /// Seeds where duqfl >= baseline.
    pub duqfl_wins_or_ties: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracy"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Run duqfl and the fixed baseline with identical seeds (same split,
/// partition, initialization, and Rademacher streams) for each seed.
pub fn compare_modes(base: &ExperimentConfig, seeds: &[u64]) -> Result<CompareReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("need at least one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let duqfl_cfg = ExperimentConfig {
            seed,
            mode: TrainingMode::Duqfl,
            ..base.clone()
        };
        let baseline_cfg = ExperimentConfig {
            seed,
            mode: TrainingMode::FixedBaseline,
            ..base.clone()
        };
        let duqfl = run_in_memory(&duqfl_cfg)?;
        let baseline = run_in_memory(&baseline_cfg)?;
        per_seed.push(PairedResult {
            seed,
            duqfl_accuracy: duqfl.final_accuracy,
            baseline_accuracy: baseline.final_accuracy,
        });
    }
    let duqfl_accs: Vec<f64> = per_seed.iter().map(|p| p.duqfl_accuracy).collect();
    let baseline_accs: Vec<f64> = per_seed.iter().map(|p| p.baseline_accuracy).collect();
    let duqfl_wins_or_ties = per_seed
        .iter()
        .filter(|p| p.duqfl_accuracy >= p.baseline_accuracy)
        .count();
    Ok(CompareReport {
        per_seed,
        duqfl_median: median(&duqfl_accs),
        baseline_median: median(&baseline_accs),
        duqfl_wins_or_ties,
    })
}
