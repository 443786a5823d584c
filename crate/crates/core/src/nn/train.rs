use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::layers::{gaussian_noise_augment, softmax_row, softmax_xent};
use super::model::{backward, batch_input, forward, forward_train};
use super::optim::{OptimizerState, RmsProp};
use super::{NnError, ParamSet, SeededRng};
use crate::arch::NetworkGraph;
use crate::dataio::Window;
use crate::metrics::MetricsReport;

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            rho: 0.95,
            eps: 1e-8,
            batch_size: 200,
            epochs: 10,
            noise_sigma: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> RmsProp {
        RmsProp { lr: self.lr, momentum: self.momentum, rho: self.rho, eps: self.eps, weight_decay: self.weight_decay }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if !(0.0..1.0).contains(&self.rho) || self.eps <= 0.0 {
            return Err(NnError::Config(format!("rho {} must be in [0, 1) and eps {} positive", self.rho, self.eps)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(NnError::Config(format!("noise sigma {} must be non-negative", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_wf1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet<f32>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn best_val_wf1(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.history[e - 1].val_wf1)
    }
}

fn check_labels(graph: &NetworkGraph, windows: &[Window]) -> Result<(), NnError> {
    match windows.iter().find(|w| w.label >= graph.num_classes) {
        Some(w) => Err(NnError::Label { label: w.label, classes: graph.num_classes }),
        None => Ok(()),
    }
}

/// Mini-batch training with per-epoch validation. Returns the snapshot with
/// the highest validation wF1; ties keep the earlier epoch.
pub fn train(
    graph: &NetworkGraph,
    init: ParamSet<f32>,
    train_set: &[Window],
    val_set: &[Window],
    cfg: &TrainConfig,
    frozen: &BTreeSet<String>,
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyData("training set".into()));
    }
    if val_set.is_empty() {
        return Err(NnError::EmptyData("validation set".into()));
    }
    check_labels(graph, train_set)?;
    check_labels(graph, val_set)?;

    let opt = cfg.optimizer();
    let mut params = init;
    let mut state = OptimizerState::new(&params);
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamSet<f32>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = batch_input::<f32>(train_set, idx)?;
            gaussian_noise_augment(x.data_mut(), cfg.noise_sigma, &mut rng);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set[i].label).collect();
            let (logits, cache) = forward_train(graph, &params, &x, Some(&mut rng))?;
            let (loss, dlogits) = softmax_xent(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: batch + 1 });
            }
            loss_sum += loss * idx.len() as f64;
            let grads = backward(graph, &params, &cache, &dlogits)?;
            opt.step(&mut params, &grads, &mut state, frozen)?;
        }
        let val_wf1 = evaluate(graph, &params, val_set)?.wf1;
        history.push(EpochRecord { epoch, train_loss: loss_sum / train_set.len() as f64, val_wf1 });
        if best.as_ref().is_none_or(|(_, score, _)| val_wf1 > *score) {
            best = Some((epoch, val_wf1, params.clone()));
        }
    }

    Ok(match best {
        Some((epoch, _, snapshot)) => TrainOutcome { params: snapshot, history, best_epoch: Some(epoch) },
        None => TrainOutcome { params, history, best_epoch: None },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

/// Inference-mode class predictions. Ties resolve to the smallest index.
pub fn predict(graph: &NetworkGraph, params: &ParamSet<f32>, windows: &[Window]) -> Result<Prediction, NnError> {
    let mut out =
        Prediction { classes: Vec::with_capacity(windows.len()), probabilities: Vec::with_capacity(windows.len()) };
    let all: Vec<usize> = (0..windows.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let x = batch_input::<f32>(windows, idx)?;
        let logits = forward(graph, params, &x)?;
        for row in logits.data().chunks_exact(graph.num_classes) {
            let probs = softmax_row(row);
            let arg = probs.iter().enumerate().fold(0, |best, (c, &p)| if p > probs[best] { c } else { best });
            out.classes.push(arg);
            out.probabilities.push(probs);
        }
    }
    Ok(out)
}

/// Window-level metrics of a model on a labelled set.
pub fn evaluate(graph: &NetworkGraph, params: &ParamSet<f32>, windows: &[Window]) -> Result<MetricsReport, NnError> {
    let pred = predict(graph, params, windows)?;
    let truth: Vec<usize> = windows.iter().map(|w| w.label).collect();
    MetricsReport::compute(&truth, &pred.classes, graph.num_classes).map_err(|e| NnError::EmptyData(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSelection {
    pub lr: f64,
    /// Validation score per candidate; `None` for a run that diverged.
    pub scores: Vec<(f64, Option<f64>)>,
}

/// Picks the candidate with the highest score, ties going to the larger lr.
/// Candidates whose evaluation reports a non-finite loss are recorded as
/// diverged; any other error aborts.
pub fn select_learning_rate_by<F>(lrs: &[f64], mut score: F) -> Result<LrSelection, NnError>
where
    F: FnMut(f64) -> Result<f64, NnError>,
{
    let mut scores = Vec::with_capacity(lrs.len());
    let mut best: Option<(f64, f64)> = None;
    for &lr in lrs {
        match score(lr) {
            Ok(s) => {
                scores.push((lr, Some(s)));
                if best.is_none_or(|(blr, bs)| s > bs || (s == bs && lr > blr)) {
                    best = Some((lr, s));
                }
            }
            Err(NnError::NonFiniteLoss { .. }) => scores.push((lr, None)),
            Err(e) => return Err(e),
        }
    }
    best.map(|(lr, _)| LrSelection { lr, scores }).ok_or(NnError::AllDiverged)
}

/// Trains one model per candidate learning rate from the same initial
/// parameters and seed, returning the selection and the winning model.
pub fn select_learning_rate(
    graph: &NetworkGraph,
    init: &ParamSet<f32>,
    train_set: &[Window],
    val_set: &[Window],
    cfg: &TrainConfig,
    lrs: &[f64],
    frozen: &BTreeSet<String>,
) -> Result<(LrSelection, TrainOutcome), NnError> {
    let mut outcomes = Vec::new();
    let selection = select_learning_rate_by(lrs, |lr| {
        let run_cfg = TrainConfig { lr, ..cfg.clone() };
        let outcome = train(graph, init.clone(), train_set, val_set, &run_cfg, frozen)?;
        let score = outcome.best_val_wf1().unwrap_or(f64::NEG_INFINITY);
        outcomes.push((lr, outcome));
        Ok(score)
    })?;
    let outcome =
        outcomes.into_iter().find(|(lr, _)| *lr == selection.lr).map(|(_, o)| o).ok_or(NnError::AllDiverged)?;
    Ok((selection, outcome))
}
