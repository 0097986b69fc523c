//! Federated round orchestration: partitioning, parallel client unfolding,
//! best-client selection, aggregation, and broadcast.
//!
//! Each round broadcasts the global parameter vector to every client, runs
//! the unfolded SPSA loop locally, evaluates the clients, and aggregates
//! either by unweighted arithmetic mean or by copying the parameters of the
//! client with the lowest local loss. Client hyperparameter state persists
//! across rounds, so each client keeps its own learned η and δ trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::statevector::ShotConfig;
use crate::unfold::{HyperState, UnfoldConfig, UnfoldTrace};
use crate::vqc::{self, ModelSpec, ParamVector, Sample};

const PARTITION_RETRIES: usize = 100;

/// Server aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    /// Unweighted componentwise mean of the client parameter vectors.
    Mean,
    /// Copy the parameters of the client with minimal local loss.
    Best,
}

/// How the training data is split across clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    Iid,
    /// Label-skewed shards: each client draws class proportions from a
    /// symmetric Dirichlet(alpha); small alpha means strong skew.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub scheme: PartitionScheme,
    pub k: usize,
    pub seed: u64,
}

impl PartitionConfig {
    pub fn iid(k: usize, seed: u64) -> Self {
        PartitionConfig {
            scheme: PartitionScheme::Iid,
            k,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("client count k must be >= 1".into()));
        }
        if let PartitionScheme::Dirichlet { alpha } = self.scheme {
            if !(alpha > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "dirichlet alpha must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

/// One client's local state, owned across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: Vec<Sample>,
    pub theta: ParamVector,
    pub hyper: HyperState,
    pub history: Vec<UnfoldTrace>,
}

/// Server-side record of one federated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub per_client_loss: Vec<f64>,
    pub per_client_train_acc: Vec<f64>,
    pub per_client_test_acc: Vec<f64>,
    pub best_client: usize,
    pub global_test_acc: f64,
    pub strategy: AggregationStrategy,
}

/// Write round records as JSON lines, one object per round.
pub fn write_records_jsonl<W: std::io::Write>(records: &[RoundRecord], mut writer: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read records previously written by [`write_records_jsonl`].
pub fn read_records_jsonl<R: std::io::Read>(reader: R) -> Result<Vec<RoundRecord>> {
    let mut records = Vec::new();
    for line in std::io::BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Split a dataset into k shards. IID: seeded shuffle and equal split with
/// the remainder going to the lowest client indices. Dirichlet: per-client
/// class proportions drawn from Dirichlet(alpha), resampled (bounded) until
/// every shard is nonempty.
pub fn partition_dataset(data: &[Sample], cfg: &PartitionConfig) -> Result<Vec<Vec<Sample>>> {
    cfg.validate()?;
    if data.len() < cfg.k {
        return Err(Error::DatasetTooSmall {
            n_samples: data.len(),
            k: cfg.k,
        });
    }
    match cfg.scheme {
        PartitionScheme::Iid => Ok(partition_iid(data, cfg.k, cfg.seed)),
        PartitionScheme::Dirichlet { alpha } => {
            for attempt in 0..PARTITION_RETRIES {
                let shards = partition_dirichlet(data, cfg.k, alpha, cfg.seed.wrapping_add(attempt as u64));
                if shards.iter().all(|s| !s.is_empty()) {
                    return Ok(shards);
                }
            }
            Err(Error::PartitionRetriesExceeded {
                retries: PARTITION_RETRIES,
            })
        }
    }
}

fn partition_iid(data: &[Sample], k: usize, seed: u64) -> Vec<Vec<Sample>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut order, &mut rng);
    let base = data.len() / k;
    let remainder = data.len() % k;
    let mut shards = Vec::with_capacity(k);
    let mut cursor = 0;
    for i in 0..k {
        let size = base + usize::from(i < remainder);
        let shard = order[cursor..cursor + size]
            .iter()
            .map(|&idx| data[idx].clone())
            .collect();
        cursor += size;
        shards.push(shard);
    }
    shards
}

fn partition_dirichlet(data: &[Sample], k: usize, alpha: f64, seed: u64) -> Vec<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // group sample indices by label, shuffled within each class
    let mut labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut by_class: Vec<Vec<usize>> = labels
        .iter()
        .map(|&lbl| {
            data.iter()
                .enumerate()
                .filter(|(_, s)| s.label == lbl)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    for class in &mut by_class {
        shuffle(class, &mut rng);
    }

    // client i's class-proportion vector p_i ~ Dirichlet(alpha · 1_C);
    // with a single class every client weighs it equally
    let n_classes = by_class.len();
    let proportions: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            if n_classes == 1 {
                vec![1.0]
            } else {
                Dirichlet::new(&vec![alpha; n_classes]).expect("valid alpha").sample(&mut rng)
            }
        })
        .collect();

    let mut shards: Vec<Vec<Sample>> = vec![Vec::new(); k];
    for (c, class_indices) in by_class.iter().enumerate() {
        // normalize this class's weight across clients, then allocate by
        // largest remainder so counts sum exactly to the class size
        let weights: Vec<f64> = proportions.iter().map(|p| p[c]).collect();
        let total_weight: f64 = weights.iter().sum();
        let n_c = class_indices.len();
        let targets: Vec<f64> = weights
            .iter()
            .map(|w| w / total_weight * n_c as f64)
            .collect();
        let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
        let mut leftover = n_c - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let fa = targets[a] - targets[a].floor();
            let fb = targets[b] - targets[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &i in &order {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
        let mut cursor = 0;
        for (i, &count) in counts.iter().enumerate() {
            for &idx in &class_indices[cursor..cursor + count] {
                shards[i].push(data[idx].clone());
            }
            cursor += count;
        }
    }
    shards
}

/// Fisher-Yates with the crate's seeded RNG.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Index of the client with minimal loss; ties break to the lowest index.
/// Mirrors the server's selection loop including its error branch: an empty
/// or non-finite loss vector means no valid client.
pub fn select_best_client(per_client_loss: &[f64]) -> Result<usize> {
    if per_client_loss.is_empty() {
        return Err(Error::ClientSelection {
            reason: "no clients reported a loss".into(),
        });
    }
    if let Some(bad) = per_client_loss.iter().position(|l| !l.is_finite()) {
        return Err(Error::ClientSelection {
            reason: format!("client {bad} reported a non-finite loss"),
        });
    }
    let mut best = 0usize;
    let mut best_loss = per_client_loss[0];
    for (i, &loss) in per_client_loss.iter().enumerate().skip(1) {
        if loss < best_loss {
            best = i;
            best_loss = loss;
        }
    }
    Ok(best)
}

/// Combine client parameter vectors per the aggregation strategy. Best-client
/// aggregation is a bit-exact copy of the winner's parameters.
pub fn aggregate(
    thetas: &[ParamVector],
    losses: &[f64],
    strategy: AggregationStrategy,
) -> Result<ParamVector> {
    if thetas.is_empty() || thetas.len() != losses.len() {
        return Err(Error::ShapeMismatch);
    }
    let len = thetas[0].len();
    if thetas.iter().any(|t| t.len() != len) {
        return Err(Error::ShapeMismatch);
    }
    match strategy {
        AggregationStrategy::Mean => {
            let n = thetas.len() as f64;
            let mut mean = vec![0.0; len];
            for theta in thetas {
                for (m, v) in mean.iter_mut().zip(theta.as_slice()) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            ParamVector::new(mean)
        }
        AggregationStrategy::Best => Ok(thetas[select_best_client(losses)?].clone()),
    }
}

/// Full-run configuration for the federated loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub rounds: usize,
    pub strategy: AggregationStrategy,
    pub partition: PartitionConfig,
    /// Per-client Rademacher streams derive from this config's seed:
    /// `seed + client_id` in round 1, shifted by round thereafter.
    pub unfold: UnfoldConfig,
    pub shots: ShotConfig,
    pub hyper0: HyperState,
    pub init_seed: u64,
    /// Initial angles are uniform in (−init_scale, init_scale).
    pub init_scale: f64,
    pub parallel: bool,
}

/// Outcome of [`run_federation`].
#[derive(Debug, Clone)]
pub struct FederationRun {
    pub records: Vec<RoundRecord>,
    pub final_theta: ParamVector,
    pub clients: Vec<ClientState>,
}

fn client_seed(base: u64, client_id: usize, round: usize) -> u64 {
    base.wrapping_add(client_id as u64)
        .wrapping_add(((round as u64) - 1) << 32)
}

struct ClientRoundResult {
    theta: ParamVector,
    hyper: HyperState,
    trace: UnfoldTrace,
    loss: f64,
    train_acc: f64,
    test_acc: f64,
}

fn train_one_client(
    model: &ModelSpec,
    client: &ClientState,
    global_theta: &ParamVector,
    test_set: &[Sample],
    round: usize,
    cfg: &FederationConfig,
) -> Result<ClientRoundResult> {
    let unfold_cfg = UnfoldConfig {
        rademacher_seed: client_seed(cfg.unfold.rademacher_seed, client.client_id, round),
        ..cfg.unfold
    };
    let outcome = crate::unfold::unfold_client(
        model,
        global_theta,
        &client.shard,
        &client.hyper,
        &unfold_cfg,
        &cfg.shots,
    )?;
    let train_acc = vqc::accuracy(model, &outcome.theta, &client.shard)?;
    let test_acc = vqc::accuracy(model, &outcome.theta, test_set)?;
    Ok(ClientRoundResult {
        theta: outcome.theta,
        hyper: outcome.hyper,
        trace: outcome.trace,
        loss: outcome.final_loss,
        train_acc,
        test_acc,
    })
}

/// One federated round: broadcast the global parameters, unfold every client
/// locally, evaluate, select the best client, aggregate, and record.
/// Client state (parameters, hyperparameters, trace history) is updated in
/// place. Clients run in parallel when configured; results are consumed in
/// client order either way, so the records are identical.
pub fn run_round(
    model: &ModelSpec,
    clients: &mut [ClientState],
    global_theta: &ParamVector,
    test_set: &[Sample],
    round: usize,
    cfg: &FederationConfig,
) -> Result<(ParamVector, RoundRecord)> {
    let results: Vec<ClientRoundResult> = if cfg.parallel {
        clients
            .par_iter()
            .map(|c| train_one_client(model, c, global_theta, test_set, round, cfg))
            .collect::<Result<Vec<_>>>()?
    } else {
        clients
            .iter()
            .map(|c| train_one_client(model, c, global_theta, test_set, round, cfg))
            .collect::<Result<Vec<_>>>()?
    };

    for (client, result) in clients.iter_mut().zip(&results) {
        client.theta = result.theta.clone();
        client.hyper = result.hyper;
        client.history.push(result.trace.clone());
    }

    let per_client_loss: Vec<f64> = results.iter().map(|r| r.loss).collect();
    let thetas: Vec<ParamVector> = results.iter().map(|r| r.theta.clone()).collect();
    let best_client = select_best_client(&per_client_loss)?;
    let new_global = aggregate(&thetas, &per_client_loss, cfg.strategy)?;
    let global_test_acc = match cfg.strategy {
        // the winner's accuracy was already computed on exactly these θ
        AggregationStrategy::Best => results[best_client].test_acc,
        AggregationStrategy::Mean => vqc::accuracy(model, &new_global, test_set)?,
    };

    let record = RoundRecord {
        round,
        per_client_loss,
        per_client_train_acc: results.iter().map(|r| r.train_acc).collect(),
        per_client_test_acc: results.iter().map(|r| r.test_acc).collect(),
        best_client,
        global_test_acc,
        strategy: cfg.strategy,
    };
    Ok((new_global, record))
}

/// Run `cfg.rounds` sequential federated rounds over a train/test split.
/// Per-client hyperparameter state persists across rounds. Deterministic for
/// fixed seeds in exact-expectation mode.
pub fn run_federation(
    model: &ModelSpec,
    train: &[Sample],
    test: &[Sample],
    cfg: &FederationConfig,
) -> Result<FederationRun> {
    model.validate()?;
    cfg.unfold.validate()?;
    cfg.hyper0.validate()?;
    let shards = partition_dataset(train, &cfg.partition)?;
    let global0 = initial_theta(model, cfg.init_seed, cfg.init_scale);
    let mut clients: Vec<ClientState> = shards
        .into_iter()
        .enumerate()
        .map(|(client_id, shard)| ClientState {
            client_id,
            shard,
            theta: global0.clone(),
            hyper: cfg.hyper0,
            history: Vec::new(),
        })
        .collect();

    let mut global_theta = global0;
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let (next_global, record) =
            run_round(model, &mut clients, &global_theta, test, round, cfg)?;
        global_theta = next_global;
        records.push(record);
    }
    Ok(FederationRun {
        records,
        final_theta: global_theta,
        clients,
    })
}

/// Seeded uniform initial angles in (−scale, scale).
pub fn initial_theta(model: &ModelSpec, seed: u64, scale: f64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParamVector::new(
        (0..model.param_count())
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    )
    .expect("finite init")
}
