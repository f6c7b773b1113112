use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::predict_examples;
use crate::dataset::{BalancedSampler, Example, ManeuverClass};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};
use crate::tensor::{sgd_step, Mode, OptimizerState, ParamStore, StepDecay, Tape, Tensor};

/// Optimization budget and schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainBudget {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning-rate factor applied every `lr_step_epochs` epochs.
    pub lr_gamma: f64,
    pub lr_step_epochs: usize,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Balanced batches per epoch; `None` covers the training set once.
    pub steps_per_epoch: Option<usize>,
    /// Wall-clock limit, checked between epochs.
    pub max_seconds: Option<f64>,
    /// Stop once validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainBudget {
    fn default() -> Self {
        TrainBudget {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_gamma: 0.1,
            lr_step_epochs: 10,
            patience: 5,
            steps_per_epoch: None,
            max_seconds: None,
            target_accuracy: None,
        }
    }
}

impl TrainBudget {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 3 {
            return Err(Error::Config(format!("batch size must be >= 3, got {}", self.batch_size)));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::Config("lr_step_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            base: self.learning_rate,
            gamma: self.lr_gamma,
            step_epochs: self.lr_step_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Accuracy of the fused training-mode predictions on the drawn batches.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    Plateau,
    TimeLimit,
    Target,
}

/// Best-validation model plus the per-epoch log. With a zero-epoch budget
/// the untrained model is returned, evaluated once.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub log: Vec<EpochLog>,
    /// `None` when the untrained model scored best.
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: f64,
    pub initial_val_accuracy: f64,
    pub stop: StopReason,
    pub seconds: f64,
}

/// Stacks examples into `B×T_s×3×S×S` appearance and `B×2L×S×S` flow.
pub fn stack_examples(examples: &[&Example]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let a: Vec<&Tensor<f32>> = examples.iter().map(|e| &e.appearance).collect();
    let f: Vec<&Tensor<f32>> = examples.iter().map(|e| &e.flow).collect();
    Ok((Tensor::stack(&a)?, Tensor::stack(&f)?))
}

fn accuracy(truth: &[ManeuverClass], predicted: &[ManeuverClass]) -> f64 {
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

fn check_compatible(config: &ModelConfig, e: &Example) -> Result<()> {
    let s = config.input_size();
    let a = e.appearance.shape();
    let want_t = match config {
        ModelConfig::StMultiplier(c) => Some(c.appearance_frames),
        ModelConfig::Disjoint(_) => None,
    };
    if a.len() != 4 || a[1] != 3 || a[2] != s || a[3] != s || want_t.is_some_and(|t| t != a[0]) {
        return Err(Error::Config(format!(
            "{} model expects appearance {}×3×{s}×{s}, samples are {a:?}",
            config.method_name(),
            want_t.map_or("T".to_string(), |t| t.to_string()),
        )));
    }
    let f = e.flow.shape();
    if f != [2 * config.flow_pairs(), s, s] {
        return Err(Error::Config(format!(
            "{} model expects flow {}×{s}×{s}, samples are {f:?}",
            config.method_name(),
            2 * config.flow_pairs()
        )));
    }
    Ok(())
}

/// SGD with momentum on class-balanced batches, keeping the parameters of
/// the best validation epoch. Deterministic for a given seed.
pub fn train(
    config: &ModelConfig,
    train_set: &[Example],
    val_set: &[Example],
    budget: &TrainBudget,
    seed: u64,
) -> Result<TrainOutcome> {
    budget.validate()?;
    let start = Instant::now();
    let labels: Vec<ManeuverClass> = train_set.iter().map(|e| e.label).collect();
    let mut sampler = BalancedSampler::new(&labels, seed ^ 0x5A4D_504C_4552)?;
    if val_set.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    for e in train_set.iter().chain(val_set) {
        check_compatible(config, e)?;
    }
    let mut model = Model::<f32>::new(config, seed)?;
    let val_truth: Vec<ManeuverClass> = val_set.iter().map(|e| e.label).collect();
    let eval_batch = budget.batch_size;
    let initial = accuracy(&val_truth, &predict_examples(&mut model, val_set, eval_batch)?);
    let mut best_store: ParamStore<f32> = model.store.clone();
    let mut best = (None, initial);
    let mut stale = 0;
    let mut log = Vec::new();
    let mut opt = OptimizerState::new(&model.store, budget.learning_rate, budget.momentum)?;
    let steps = budget
        .steps_per_epoch
        .unwrap_or_else(|| train_set.len().div_ceil(budget.batch_size));
    let schedule = budget.schedule();
    let mut stop = StopReason::Budget;
    log::info!(
        "training {} ({} parameters) on {} samples, validating on {}; initial val accuracy {:.4}",
        config.method_name(),
        model.num_parameters(),
        train_set.len(),
        val_set.len(),
        initial
    );
    for epoch in 0..budget.epochs {
        let t0 = Instant::now();
        let lr = schedule.rate(epoch);
        opt.learning_rate = lr;
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0usize, 0usize);
        for step in 0..steps {
            let idx = sampler.batch(budget.batch_size)?;
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let targets: Vec<usize> = batch.iter().map(|e| e.label.index()).collect();
            let (a, f) = stack_examples(&batch)?;
            let (a, f) = model.prepare_inputs(&a, &f)?;
            let mut tape = Tape::new();
            let av = tape.input(&a)?;
            let fv = tape.input(&f)?;
            let (loss, probs) = model
                .forward(&mut tape, av, fv, Mode::Train)
                .and_then(|logits| model.loss(&mut tape, logits, &targets))
                .map_err(|e| match e {
                    Error::Numeric { .. } => Error::Diverged {
                        epoch,
                        step,
                        detail: e.to_string(),
                    },
                    other => other,
                })?;
            let l = tape.value(loss)[0];
            if !l.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("loss is {l} at learning rate {lr}"),
                });
            }
            tape.backward(loss, &mut model.store).map_err(|e| Error::Diverged {
                epoch,
                step,
                detail: e.to_string(),
            })?;
            sgd_step(&mut model.store, &mut opt)?;
            if let Some(e) = model.store.entries().iter().find(|e| !e.tensor.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("parameter '{}' became non-finite", e.name),
                });
            }
            loss_sum += l as f64;
            let pred = crate::models::predict_rows(&probs);
            hits += pred.iter().zip(&batch).filter(|(p, e)| **p == e.label).count();
            seen += batch.len();
        }
        let val_accuracy = accuracy(&val_truth, &predict_examples(&mut model, val_set, eval_batch)?);
        let entry = EpochLog {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / steps as f64,
            train_accuracy: hits as f64 / seen.max(1) as f64,
            val_accuracy,
            seconds: t0.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train acc {:.4} val acc {:.4} ({:.1}s)",
            entry.train_loss,
            entry.train_accuracy,
            entry.val_accuracy,
            entry.seconds
        );
        log.push(entry);
        if val_accuracy > best.1 || best.0.is_none() && val_accuracy >= best.1 {
            best = (Some(epoch), val_accuracy);
            best_store = model.store.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if budget.target_accuracy.is_some_and(|t| best.1 >= t) {
            stop = StopReason::Target;
            break;
        }
        if budget.patience > 0 && stale >= budget.patience {
            stop = StopReason::Plateau;
            break;
        }
        if budget.max_seconds.is_some_and(|m| start.elapsed().as_secs_f64() >= m) {
            stop = StopReason::TimeLimit;
            break;
        }
    }
    model.store = best_store;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: best.0,
        best_val_accuracy: best.1,
        initial_val_accuracy: initial,
        stop,
        seconds: start.elapsed().as_secs_f64(),
    })
}
