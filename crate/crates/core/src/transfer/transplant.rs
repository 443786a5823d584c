use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, TransferError};
use crate::arch::{branch_prefix, init_params, NetworkGraph, CONV_LAYERS};
use crate::dataio::{Limb, Window};
use crate::metrics::MetricsReport;
use crate::nn::{evaluate, predict, select_learning_rate, ParamSet, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferPlan {
    /// Number of leading convolutions copied from the source.
    pub n_conv: usize,
    /// Keep copied layers fixed during fine-tuning.
    pub freeze: bool,
    /// Percentage of the target training windows used, per class.
    pub target_fraction: f64,
    pub seed: u64,
    /// Branch whose convolutions seed a single-stack target when the source
    /// is a limb-branch network.
    pub source_branch: Limb,
}

impl Default for TransferPlan {
    fn default() -> Self {
        Self { n_conv: 1, freeze: false, target_fraction: 100.0, seed: 42, source_branch: Limb::N }
    }
}

/// Target parameters after transplantation, plus the keys to hold fixed.
#[derive(Debug, Clone)]
pub struct Transplanted {
    pub params: ParamSet<f32>,
    pub frozen: BTreeSet<String>,
}

/// Initializes every target parameter from `rng`, then overwrites the first
/// `plan.n_conv` convolution weights and biases with the source's.
///
/// Because the fresh initialization consumes the rng exactly as
/// [`init_params`] does, `n_conv = 0` reproduces scratch initialization bit
/// for bit.
pub fn transplant<R: Rng + ?Sized>(
    source: &Checkpoint,
    target: &NetworkGraph,
    plan: &TransferPlan,
    rng: &mut R,
) -> Result<Transplanted, TransferError> {
    if plan.n_conv > CONV_LAYERS {
        return Err(TransferError::Plan(format!("n_conv {} exceeds {CONV_LAYERS}", plan.n_conv)));
    }
    if !target.is_sequential() {
        return Err(TransferError::Plan("target network must be a single convolution stack".into()));
    }
    let prefix = if source.graph.is_sequential() { String::new() } else { branch_prefix(plan.source_branch) };
    let src_keys = source.graph.conv_keys(&prefix);
    let dst_keys = target.conv_keys("");
    if plan.n_conv > src_keys.len() {
        let what =
            if prefix.is_empty() { "source".to_string() } else { format!("source branch {}", plan.source_branch) };
        return Err(TransferError::Plan(format!(
            "{what} has {} convolutions, {} requested",
            src_keys.len(),
            plan.n_conv
        )));
    }
    if plan.n_conv > dst_keys.len() {
        return Err(TransferError::Plan(format!(
            "target has {} convolutions, {} requested",
            dst_keys.len(),
            plan.n_conv
        )));
    }

    let mut params = init_params(target, rng)?;
    let mut frozen = BTreeSet::new();
    for ((sw, sb), (dw, db)) in src_keys.iter().zip(&dst_keys).take(plan.n_conv) {
        for (s, d) in [(sw, dw), (sb, db)] {
            let src = source.params.get(s)?;
            let dst = params.get_mut(d)?;
            if src.shape() != dst.shape() {
                return Err(TransferError::LayerMismatch {
                    layer: d.clone(),
                    source_shape: src.shape().to_vec(),
                    target_shape: dst.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
            if plan.freeze {
                frozen.insert(d.clone());
            }
        }
    }
    Ok(Transplanted { params, frozen })
}

/// Target windows already reduced to the plan's training fraction.
#[derive(Debug, Clone, Copy)]
pub struct TargetData<'a> {
    pub train: &'a [Window],
    pub val: &'a [Window],
    pub test: &'a [Window],
}

#[derive(Debug, Clone)]
pub struct FineTuneReport {
    pub plan: TransferPlan,
    pub lr: f64,
    pub lr_scores: Vec<(f64, Option<f64>)>,
    pub outcome: TrainOutcome,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Per test window, whether the prediction matched the label.
    pub test_correct: Vec<bool>,
}

/// Trains transplanted parameters on target data, choosing the learning rate
/// among `lrs` by validation wF1.
pub fn fine_tune(
    graph: &NetworkGraph,
    start: Transplanted,
    data: TargetData<'_>,
    plan: &TransferPlan,
    cfg: &TrainConfig,
    lrs: &[f64],
) -> Result<FineTuneReport, TransferError> {
    let lrs = if lrs.is_empty() { std::slice::from_ref(&cfg.lr) } else { lrs };
    let (selection, outcome) =
        select_learning_rate(graph, &start.params, data.train, data.val, cfg, lrs, &start.frozen)?;
    let val = evaluate(graph, &outcome.params, data.val)?;
    let pred = predict(graph, &outcome.params, data.test)?;
    let truth: Vec<usize> = data.test.iter().map(|w| w.label).collect();
    let test = MetricsReport::compute(&truth, &pred.classes, graph.num_classes)?;
    let test_correct = truth.iter().zip(&pred.classes).map(|(t, p)| t == p).collect();
    Ok(FineTuneReport {
        plan: plan.clone(),
        lr: selection.lr,
        lr_scores: selection.scores,
        outcome,
        val,
        test,
        test_correct,
    })
}
