//! Single-process Federated Averaging with optional LwF across events.
//!
//! One round broadcasts the central model, trains every client on its own
//! shard ([`local_update`]), and replaces the central model with the
//! sample-weighted mean of the client models ([`aggregate`]). Client updates
//! within a round may run in parallel; their seeds come from
//! `(event seed, round, client id)`, so results never depend on scheduling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::continual::{snapshot_teacher, train_on_task, TeacherSnapshot, TrainConfig};
use crate::data::{Dataset, EventSplits};
use crate::error::{Error, Result};
use crate::metrics::{cumulative_mean, evaluate, forgetting, AccuracyMatrix, EvalRecord, MetricsLog, Split};
use crate::nn::{init_model, ModelParams};
use crate::rng::{client_seed, event_seed, mix, rng_from};

/// Suggested shard-size range; smaller or larger shards only trigger a warning.
pub const SUGGESTED_SHARD_SIZE: (usize, usize) = (500, 1500);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionStrategy {
    Iid,
    /// Per-label Dirichlet(alpha) proportions over clients.
    LabelSkew { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    /// Row indices into the parent dataset, ascending.
    pub indices: Vec<usize>,
    pub data: Dataset,
}

/// Splits `data` into `n_clients` non-empty, disjoint shards covering every row.
pub fn partition(data: &Dataset, n_clients: usize, strategy: PartitionStrategy, seed: u64) -> Result<Vec<ClientShard>> {
    let n = data.len();
    if n_clients == 0 {
        return Err(Error::config("fed.n_clients", "must be >= 1"));
    }
    if n_clients > n {
        return Err(Error::config(
            "fed.n_clients",
            format!("{n_clients} clients but only {n} samples"),
        ));
    }
    let mut rng = rng_from(mix(seed, &[0x9a27]));
    let mut assignment: Vec<Vec<usize>> = match strategy {
        PartitionStrategy::Iid => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (base, extra) = (n / n_clients, n % n_clients);
            let mut start = 0;
            (0..n_clients)
                .map(|k| {
                    let len = base + usize::from(k < extra);
                    let shard = idx[start..start + len].to_vec();
                    start += len;
                    shard
                })
                .collect()
        }
        PartitionStrategy::LabelSkew { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config("fed.alpha", "must be > 0"));
            }
            let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config("fed.alpha", e.to_string()))?;
            let mut shards = vec![Vec::new(); n_clients];
            for label in 0..data.n_classes() {
                let mut members: Vec<usize> = (0..n).filter(|&i| data.labels()[i] == label).collect();
                if members.is_empty() {
                    continue;
                }
                members.shuffle(&mut rng);
                let mut props: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = props.iter().sum();
                if total > 0.0 && total.is_finite() {
                    props.iter_mut().for_each(|p| *p /= total);
                } else {
                    // Every draw underflowed: the whole label goes to one client.
                    props.iter_mut().for_each(|p| *p = 0.0);
                    props[rng.gen_range(0..n_clients)] = 1.0;
                }
                let m = members.len();
                let mut cum = 0.0;
                let mut start = 0;
                for (k, p) in props.iter().enumerate() {
                    cum += p;
                    let end = if k + 1 == n_clients { m } else { ((cum * m as f64).round() as usize).min(m) };
                    let end = end.max(start);
                    shards[k].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
            // Repair: every shard takes one row from the currently largest shard.
            while let Some(empty) = shards.iter().position(Vec::is_empty) {
                let donor = (0..n_clients)
                    .max_by_key(|&k| (shards[k].len(), std::cmp::Reverse(k)))
                    .expect("n_clients >= 1");
                let moved = shards[donor].pop().expect("donor has > 1 row since n_clients <= n");
                shards[empty].push(moved);
            }
            shards
        }
    };

    let (lo, hi) = SUGGESTED_SHARD_SIZE;
    let outside = assignment.iter().filter(|s| s.len() < lo || s.len() > hi).count();
    if outside > 0 {
        let smallest = assignment.iter().map(Vec::len).min().unwrap_or(0);
        let largest = assignment.iter().map(Vec::len).max().unwrap_or(0);
        warn!(outside, smallest, largest, "shard sizes outside suggested range {lo}..={hi}");
    }
    assignment
        .iter_mut()
        .enumerate()
        .map(|(client_id, idx)| {
            idx.sort_unstable();
            Ok(ClientShard {
                client_id,
                data: data.subset(idx)?,
                indices: std::mem::take(idx),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub partition: PartitionStrategy,
    /// Shared training settings. `train.epochs` is ignored here: clients run
    /// `local_epochs` per round and centralized training runs
    /// `rounds × local_epochs` per event.
    pub train: TrainConfig,
    /// Run client updates of a round on the rayon pool.
    pub parallel: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            n_clients: 3,
            rounds: 100,
            local_epochs: 5,
            partition: PartitionStrategy::Iid,
            train: TrainConfig::default(),
            parallel: true,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::config("fed.n_clients", "must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(Error::config("fed.rounds", "must be >= 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("fed.local_epochs", "must be >= 1"));
        }
        if let PartitionStrategy::LabelSkew { alpha } = self.partition {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config("fed.alpha", "must be > 0"));
            }
        }
        TrainConfig {
            epochs: self.local_epochs,
            ..self.train
        }
        .validate()
    }

    /// Epochs per event for centralized training.
    pub fn central_epochs(&self) -> usize {
        self.rounds * self.local_epochs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub params: ModelParams,
    pub n_samples: usize,
    pub client_id: usize,
}

/// Trains a copy of `central` on one shard for `cfg.local_epochs` epochs,
/// seeded by [`client_seed`]`(cfg.train.seed, round, client_id)`.
pub fn local_update(
    central: &ModelParams,
    shard: &ClientShard,
    teacher: Option<&TeacherSnapshot>,
    cfg: &FedConfig,
    round: usize,
) -> Result<ClientUpdate> {
    let train_cfg = TrainConfig {
        epochs: cfg.local_epochs,
        seed: client_seed(cfg.train.seed, round, shard.client_id),
        ..cfg.train
    };
    let (params, _) = train_on_task(central, &shard.data, None, teacher, &train_cfg)?;
    Ok(ClientUpdate {
        params,
        n_samples: shard.data.len(),
        client_id: shard.client_id,
    })
}

/// Sample-weighted mean `Σ_k (n_k / Σn) · params_k`, summed in ascending
/// `client_id` order. Coordinates on which all clients agree bitwise are
/// returned unchanged (the exact mean of equal values).
pub fn aggregate(updates: &[ClientUpdate]) -> Result<ModelParams> {
    if updates.is_empty() {
        return Err(Error::Protocol("aggregate called with no client updates".into()));
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let first = &ordered[0].params;
    for u in &ordered {
        if u.n_samples == 0 {
            return Err(Error::Protocol(format!("client {} reported zero samples", u.client_id)));
        }
        first.check_compatible(&u.params, &format!("update from client {}", u.client_id))?;
    }
    let total: usize = ordered.iter().map(|u| u.n_samples).sum();
    let weights: Vec<f64> = ordered.iter().map(|u| u.n_samples as f64 / total as f64).collect();

    let mut out = first.clone();
    let client_tensors: Vec<Vec<&[f64]>> = ordered.iter().map(|u| u.params.tensors().collect()).collect();
    for (t, dst) in out.tensors_mut().enumerate() {
        for (i, d) in dst.iter_mut().enumerate() {
            let v0 = client_tensors[0][t][i];
            if client_tensors.iter().all(|c| c[t][i].to_bits() == v0.to_bits()) {
                continue;
            }
            let mut acc = weights[0] * v0;
            for (c, w) in client_tensors.iter().zip(&weights).skip(1) {
                acc += w * c[t][i];
            }
            *d = acc;
        }
    }
    Ok(out)
}

/// Result of training one event.
#[derive(Debug, Clone)]
pub struct EventOutcome {
    pub central: ModelParams,
    /// Validation curve rows followed by one test row for this event.
    pub log: MetricsLog,
}

fn check_event_matches(central: &ModelParams, event: &EventSplits) -> Result<()> {
    if event.train.dim() != central.in_dim() {
        return Err(Error::config(
            "model.in_dim",
            format!("event `{}` has dim {}, model expects {}", event.name, event.train.dim(), central.in_dim()),
        ));
    }
    if event.train.n_classes() != central.n_classes() {
        return Err(Error::config(
            "model.n_classes",
            format!(
                "event `{}` has {} classes, model expects {}",
                event.name,
                event.train.n_classes(),
                central.n_classes()
            ),
        ));
    }
    Ok(())
}

/// FedAvg over one event: partition once, then `cfg.rounds` rounds of
/// broadcast → local updates → aggregate → validate, then one test pass.
/// `event_idx` only labels the emitted records.
pub fn run_event(
    central: &ModelParams,
    event: &EventSplits,
    event_idx: usize,
    teacher: Option<&TeacherSnapshot>,
    cfg: &FedConfig,
) -> Result<EventOutcome> {
    cfg.validate()?;
    check_event_matches(central, event)?;
    let shards = partition(&event.train, cfg.n_clients, cfg.partition, cfg.train.seed)?;
    let mut central = central.clone();
    let mut log = Vec::with_capacity(cfg.rounds + 1);

    for round in 0..cfg.rounds {
        let run = |s: &ClientShard| local_update(&central, s, teacher, cfg, round);
        let updates: Vec<ClientUpdate> = if cfg.parallel {
            shards.par_iter().map(run).collect::<Result<_>>()?
        } else {
            shards.iter().map(run).collect::<Result<_>>()?
        };
        central = aggregate(&updates)?;
        let e = evaluate(&central, &event.valid)?;
        log.push(EvalRecord {
            event: event_idx,
            round: round + 1,
            epoch: (round + 1) * cfg.local_epochs,
            split: Split::Valid,
            target_event: event_idx,
            loss: e.loss,
            accuracy: e.accuracy,
        });
    }
    let e = evaluate(&central, &event.test)?;
    log.push(EvalRecord {
        event: event_idx,
        round: cfg.rounds,
        epoch: cfg.central_epochs(),
        split: Split::Test,
        target_event: event_idx,
        loss: e.loss,
        accuracy: e.accuracy,
    });
    Ok(EventOutcome { central, log })
}

/// Centralized counterpart of [`run_event`]: one in-process trainer running
/// `rounds × local_epochs` epochs with the seed a lone client would get in
/// round 0, so a one-client one-round federation reproduces it bitwise.
pub fn run_event_central(
    central: &ModelParams,
    event: &EventSplits,
    event_idx: usize,
    teacher: Option<&TeacherSnapshot>,
    cfg: &FedConfig,
) -> Result<EventOutcome> {
    cfg.validate()?;
    check_event_matches(central, event)?;
    let train_cfg = TrainConfig {
        epochs: cfg.central_epochs(),
        seed: client_seed(cfg.train.seed, 0, 0),
        ..cfg.train
    };
    let (params, history) = train_on_task(central, &event.train, Some(&event.valid), teacher, &train_cfg)?;
    let mut log: MetricsLog = history
        .iter()
        .map(|h| EvalRecord {
            event: event_idx,
            round: 0,
            epoch: h.epoch,
            split: Split::Valid,
            target_event: event_idx,
            loss: h.valid_loss.expect("valid given"),
            accuracy: h.valid_accuracy.expect("valid given"),
        })
        .collect();
    let e = evaluate(&params, &event.test)?;
    log.push(EvalRecord {
        event: event_idx,
        round: 0,
        epoch: train_cfg.epochs,
        split: Split::Test,
        target_event: event_idx,
        loss: e.loss,
        accuracy: e.accuracy,
    });
    Ok(EventOutcome { central: params, log })
}

/// Which combination of federation and LwF to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FedCl,
    FedOnly,
    CentralCl,
    CentralOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::FedCl, Mode::FedOnly, Mode::CentralCl, Mode::CentralOnly];

    pub fn federated(self) -> bool {
        matches!(self, Mode::FedCl | Mode::FedOnly)
    }

    pub fn continual(self) -> bool {
        matches!(self, Mode::FedCl | Mode::CentralCl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FedCl => "fed_cl",
            Mode::FedOnly => "fed_only",
            Mode::CentralCl => "central_cl",
            Mode::CentralOnly => "central_only",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub depth: usize,
    pub width: usize,
    pub in_dim: usize,
    pub n_classes: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            depth: 3,
            width: 100,
            in_dim: crate::data::EMBEDDING_DIM,
            n_classes: 10,
        }
    }
}

impl ModelSpec {
    pub fn init(&self, seed: u64) -> Result<ModelParams> {
        init_model(self.depth, self.width, self.in_dim, self.n_classes, seed)
    }
}

/// End-of-sequence summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub events: Vec<String>,
    /// Test accuracy on each event with the final model.
    pub final_test_accuracy: Vec<f64>,
    pub final_train_accuracy: Vec<f64>,
    pub final_test_loss: Vec<f64>,
    /// Cumulative mean test accuracy after each event.
    pub cumulative_test_accuracy: Vec<f64>,
    pub cumulative_train_accuracy: Vec<f64>,
    /// Present once at least two events completed.
    pub forgetting: Option<f64>,
    pub test_accuracy_matrix: Vec<Vec<f64>>,
}

impl Summary {
    pub fn final_cumulative_test(&self) -> f64 {
        *self.cumulative_test_accuracy.last().expect("at least one event")
    }

    pub fn final_cumulative_train(&self) -> f64 {
        *self.cumulative_train_accuracy.last().expect("at least one event")
    }

    /// Mean over events of the final model's test loss.
    pub fn mean_final_test_loss(&self) -> f64 {
        self.final_test_loss.iter().sum::<f64>() / self.final_test_loss.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub params: ModelParams,
    pub log: MetricsLog,
    pub test_matrix: AccuracyMatrix,
    pub train_matrix: AccuracyMatrix,
    pub summary: Summary,
}

/// Trains one model through `events` in order.
///
/// The model is initialized from `(cfg.train.seed)`; event `k` trains with
/// the derived [`event_seed`]. Continual modes snapshot a teacher after each
/// event and hand it to the next. After every event the model is evaluated
/// on every event's train and test split, filling the accuracy matrices.
pub fn run_event_sequence(events: &[EventSplits], model: &ModelSpec, cfg: &FedConfig, mode: Mode) -> Result<SequenceOutcome> {
    if events.is_empty() {
        return Err(Error::config("data", "need at least one event"));
    }
    cfg.validate()?;
    let base = cfg.train.seed;
    let mut params = model.init(mix(base, &[0x1417]))?;
    for e in events {
        check_event_matches(&params, e)?;
    }

    let mut teacher: Option<TeacherSnapshot> = None;
    let mut log = Vec::new();
    let mut test_matrix = AccuracyMatrix::default();
    let mut train_matrix = AccuracyMatrix::default();
    let mut test_loss_last = Vec::new();

    for (k, event) in events.iter().enumerate() {
        let event_cfg = FedConfig {
            train: TrainConfig {
                seed: event_seed(base, k),
                ..cfg.train
            },
            ..*cfg
        };
        let t = if mode.continual() { teacher.as_ref() } else { None };
        let outcome = if mode.federated() {
            run_event(&params, event, k, t, &event_cfg)?
        } else {
            run_event_central(&params, event, k, t, &event_cfg)?
        };
        params = outcome.central;
        log.extend(outcome.log);

        let epoch = event_cfg.central_epochs();
        let round = if mode.federated() { cfg.rounds } else { 0 };
        let mut test_row = Vec::with_capacity(events.len());
        let mut train_row = Vec::with_capacity(events.len());
        test_loss_last.clear();
        for (j, target) in events.iter().enumerate() {
            let te = evaluate(&params, &target.test)?;
            let tr = evaluate(&params, &target.train)?;
            test_row.push(te.accuracy);
            train_row.push(tr.accuracy);
            test_loss_last.push(te.loss);
            if j != k {
                log.push(EvalRecord {
                    event: k,
                    round,
                    epoch,
                    split: Split::Test,
                    target_event: j,
                    loss: te.loss,
                    accuracy: te.accuracy,
                });
            }
            log.push(EvalRecord {
                event: k,
                round,
                epoch,
                split: Split::Train,
                target_event: j,
                loss: tr.loss,
                accuracy: tr.accuracy,
            });
        }
        test_matrix.push_row(test_row)?;
        train_matrix.push_row(train_row)?;

        if mode.continual() {
            teacher = Some(snapshot_teacher(&params, k));
        }
    }

    let n = events.len();
    let summary = Summary {
        mode,
        events: events.iter().map(|e| e.name.clone()).collect(),
        final_test_accuracy: test_matrix.rows()[n - 1].clone(),
        final_train_accuracy: train_matrix.rows()[n - 1].clone(),
        final_test_loss: test_loss_last,
        cumulative_test_accuracy: (1..=n).map(|u| cumulative_mean(&test_matrix, u)).collect::<Result<_>>()?,
        cumulative_train_accuracy: (1..=n).map(|u| cumulative_mean(&train_matrix, u)).collect::<Result<_>>()?,
        forgetting: if n >= 2 { Some(forgetting(&test_matrix)?) } else { None },
        test_accuracy_matrix: test_matrix.rows().to_vec(),
    };
    Ok(SequenceOutcome {
        params,
        log,
        test_matrix,
        train_matrix,
        summary,
    })
}
