use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::layers::softmax_xent;
use super::model::{backward, forward_train, relu_pattern};
use super::{NnError, ParamSet, SeededRng, Tensor};
use crate::arch::NetworkGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    /// Initial central-difference step.
    pub step: f64,
    /// Smallest step tried when a probe crosses a ReLU kink.
    pub min_step: f64,
    /// Elements sampled per tensor.
    pub max_elements: usize,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub seed: u64,
    /// Negates the analytic gradient of this tensor, to confirm the check
    /// catches a wrong sign.
    pub inject_sign_flip: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            min_step: 1e-7,
            max_elements: 64,
            tolerance: 1e-3,
            abs_floor: 1e-8,
            seed: 0,
            inject_sign_flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub key: String,
    pub checked: usize,
    /// Elements whose every probe straddled a ReLU kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub worst_key: Option<String>,
    pub tolerance: f64,
    pub passed: bool,
}

struct Probe<'a> {
    graph: &'a NetworkGraph,
    x: Tensor<f64>,
    labels: &'a [usize],
}

impl Probe<'_> {
    fn loss(&self, params: &ParamSet<f64>) -> Result<(f64, Vec<bool>), NnError> {
        let (logits, cache) = forward_train(self.graph, params, &self.x, None)?;
        let (loss, _) = softmax_xent(&logits, self.labels)?;
        Ok((loss, relu_pattern(self.graph, &cache)))
    }
}

/// Compares reverse-mode gradients of the mean cross-entropy against central
/// differences, in f64 with dropout and noise off.
pub fn gradient_check(
    graph: &NetworkGraph,
    params: &ParamSet<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let mut p = params.cast::<f64>();
    let probe = Probe { graph, x: x.cast(), labels };
    let (logits, cache) = forward_train(graph, &p, &probe.x, None)?;
    let (_, dlogits) = softmax_xent(&logits, labels)?;
    let mut grads = backward(graph, &p, &cache, &dlogits)?;
    let base_pattern = relu_pattern(graph, &cache);
    if let Some(key) = &cfg.inject_sign_flip {
        grads.get_mut(key)?.data_mut().iter_mut().for_each(|g| *g = -*g);
    }

    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let keys: Vec<String> = p.keys().cloned().collect();
    let mut tensors = Vec::with_capacity(keys.len());
    for key in keys {
        let n = p.get(&key)?.len();
        let mut idx: Vec<usize> = if n <= cfg.max_elements {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, cfg.max_elements).into_vec()
        };
        idx.sort_unstable();
        let mut check = TensorCheck { key: key.clone(), checked: 0, skipped: 0, max_rel_error: 0.0, worst_index: None };
        for i in idx {
            let analytic = grads.get(&key)?.data()[i];
            let orig = p.get(&key)?.data()[i];
            let mut h = cfg.step;
            let numeric = loop {
                p.get_mut(&key)?.data_mut()[i] = orig + h;
                let (lp, pat_p) = probe.loss(&p)?;
                p.get_mut(&key)?.data_mut()[i] = orig - h;
                let (lm, pat_m) = probe.loss(&p)?;
                p.get_mut(&key)?.data_mut()[i] = orig;
                if pat_p == base_pattern && pat_m == base_pattern {
                    break Some((lp - lm) / (2.0 * h));
                }
                h /= 10.0;
                if h < cfg.min_step {
                    break None;
                }
            };
            let Some(numeric) = numeric else {
                check.skipped += 1;
                continue;
            };
            check.checked += 1;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
            if rel > check.max_rel_error || check.worst_index.is_none() {
                check.max_rel_error = rel;
                check.worst_index = Some(i);
            }
        }
        tensors.push(check);
    }

    let worst = tensors.iter().filter(|t| t.checked > 0).max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error));
    let max_rel_error = worst.map_or(0.0, |t| t.max_rel_error);
    let worst_key = worst.map(|t| t.key.clone());
    Ok(GradCheckReport {
        passed: max_rel_error < cfg.tolerance,
        tensors,
        max_rel_error,
        worst_key,
        tolerance: cfg.tolerance,
    })
}
