//! Learning without Forgetting.
//!
//! Before a new task the current model is frozen as a [`TeacherSnapshot`].
//! Its temperature-softened outputs on the new task's inputs are recorded
//! once ([`SoftLabels`]) and the student is trained on
//! `L_new + λ₀·L_distill + l2·½‖W‖²`, where `L_distill` is the soft
//! cross-entropy between those recorded targets and the student's softened
//! outputs. All tasks share one classification head.

use serde::{Deserialize, Serialize};

use crate::data::{batch_order, Dataset};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::nn::{adam_step_in_place, loss_grads_logits, predict_logits, AdamState, Hyper, ModelParams};
use crate::tensor::{log_softmax_into, softmax_into, softmax_rows, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwfConfig {
    /// Weight of the distillation term.
    pub lambda0: f64,
    pub temperature: f64,
    pub enabled: bool,
}

impl Default for LwfConfig {
    fn default() -> Self {
        LwfConfig {
            lambda0: 1.0,
            temperature: 2.0,
            enabled: true,
        }
    }
}

impl LwfConfig {
    pub fn disabled() -> Self {
        LwfConfig {
            enabled: false,
            ..LwfConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::config("train.lambda0", "must be >= 0"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("train.temperature", "must be > 0"));
        }
        Ok(())
    }

    /// True when the distillation term contributes to the objective.
    pub fn active(&self) -> bool {
        self.enabled && self.lambda0 != 0.0
    }
}

/// Frozen copy of the model taken after an event.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSnapshot {
    params: ModelParams,
    taken_after_event: usize,
}

impl TeacherSnapshot {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn taken_after_event(&self) -> usize {
        self.taken_after_event
    }
}

pub fn snapshot_teacher(params: &ModelParams, event_idx: usize) -> TeacherSnapshot {
    TeacherSnapshot {
        params: params.clone(),
        taken_after_event: event_idx,
    }
}

/// Temperature-softened teacher probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels {
    probs: Matrix,
}

impl SoftLabels {
    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn rows(&self, idx: &[usize]) -> Matrix {
        self.probs.gather_rows(idx)
    }
}

/// `softmax(teacher_logits / T)` for every row of `data`.
pub fn record_soft_labels(teacher: &TeacherSnapshot, data: &Matrix, temperature: f64) -> Result<SoftLabels> {
    if !(temperature > 0.0) {
        return Err(Error::config("temperature", "must be > 0"));
    }
    let logits = predict_logits(&teacher.params, data)?;
    Ok(SoftLabels {
        probs: softmax_rows(&logits, temperature),
    })
}

/// Mean soft cross-entropy `−Σ_c t_c · log softmax(z/T)_c` and its gradient
/// w.r.t. the unscaled logits, `(softmax(z/T) − t) / (T·B)`.
pub fn distillation_loss(student_logits: &Matrix, targets: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    if student_logits.shape() != targets.shape() {
        return Err(Error::shape(
            "distillation targets vs logits",
            format!("{:?}", student_logits.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    let (b, c) = student_logits.shape();
    let inv_b = 1.0 / b as f64;
    let mut grad = Matrix::zeros(b, c);
    let mut scaled = vec![0.0; c];
    let mut logp = vec![0.0; c];
    let mut loss = 0.0;
    for r in 0..b {
        for (s, &z) in scaled.iter_mut().zip(student_logits.row(r)) {
            *s = z / temperature;
        }
        log_softmax_into(&scaled, &mut logp);
        let t = targets.row(r);
        loss -= t.iter().zip(&logp).map(|(ti, lp)| ti * lp).sum::<f64>();
        let g = grad.row_mut(r);
        softmax_into(&scaled, g);
        for (gi, ti) in g.iter_mut().zip(t) {
            *gi = (*gi - ti) * inv_b / temperature;
        }
    }
    Ok((loss * inv_b, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hyper: Hyper,
    pub lwf: LwfConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            hyper: Hyper::default(),
            lwf: LwfConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        self.hyper.validate()?;
        self.lwf.validate()
    }
}

/// One epoch's training-curve point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the full objective over the epoch's batches.
    pub train_loss: f64,
    /// Accuracy of the pre-update predictions seen during the epoch.
    pub train_accuracy: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

/// Trains `params` on one task.
///
/// Soft targets are recorded once, before the first epoch, when a teacher is
/// given and the distillation term is active. Each epoch shuffles with
/// `(cfg.seed, epoch)`, trains every batch including the short tail, and
/// takes one Adam step per batch from a fresh optimizer state.
pub fn train_on_task(
    params: &ModelParams,
    train: &Dataset,
    valid: Option<&Dataset>,
    teacher: Option<&TeacherSnapshot>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data {
            row: 0,
            col: None,
            message: "empty training set".into(),
        });
    }
    for (name, d) in std::iter::once(("train", train)).chain(valid.map(|v| ("valid", v))) {
        if d.dim() != params.in_dim() {
            return Err(Error::shape(format!("{name} dim vs model input"), params.in_dim(), d.dim()));
        }
        if d.n_classes() != params.n_classes() {
            return Err(Error::shape(format!("{name} classes vs model output"), params.n_classes(), d.n_classes()));
        }
    }

    let soft = match teacher {
        Some(t) if cfg.lwf.active() => {
            params.check_compatible(t.params(), "teacher vs student")?;
            Some(record_soft_labels(t, train.features(), cfg.lwf.temperature)?)
        }
        _ => None,
    };

    let mut params = params.clone();
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for idx in batch_order(train.len(), cfg.batch_size, epoch, cfg.seed) {
            let x = train.features().gather_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let targets = soft.as_ref().map(|s| s.rows(&idx));
            let (loss, grads, logits) =
                loss_grads_logits(&params, &x, &y, targets.as_ref(), &cfg.lwf, &cfg.hyper)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {}", epoch + 1)));
            }
            loss_sum += loss * idx.len() as f64;
            correct += logits.argmax_rows().iter().zip(&y).filter(|(p, t)| p == t).count();
            adam_step_in_place(&mut params, &grads, &mut state, &cfg.hyper)?;
        }
        let (valid_loss, valid_accuracy) = match valid {
            Some(v) => {
                let e = evaluate(&params, v)?;
                (Some(e.loss), Some(e.accuracy))
            }
            None => (None, None),
        };
        history.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            valid_loss,
            valid_accuracy,
        });
    }
    if !params.all_finite() {
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    Ok((params, history))
}
