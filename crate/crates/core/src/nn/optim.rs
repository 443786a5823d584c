use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet};

/// RMSProp with heavy-ball momentum and coupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub momentum: f64,
    pub rho: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self { lr: 1e-3, momentum: 0.9, rho: 0.95, eps: 1e-8, weight_decay: 5e-4 }
    }
}

/// Running square average and momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    sq: ParamSet<f32>,
    mom: ParamSet<f32>,
}

impl OptimizerState {
    pub fn new(params: &ParamSet<f32>) -> Self {
        Self { sq: params.zeros_like(), mom: params.zeros_like() }
    }

    pub fn square_average(&self) -> &ParamSet<f32> {
        &self.sq
    }

    pub fn momentum(&self) -> &ParamSet<f32> {
        &self.mom
    }
}

impl RmsProp {
    /// One update. Keys in `frozen` are left untouched, including their decay
    /// and buffers.
    pub fn step(
        &self,
        params: &mut ParamSet<f32>,
        grads: &ParamSet<f32>,
        state: &mut OptimizerState,
        frozen: &BTreeSet<String>,
    ) -> Result<(), NnError> {
        for (key, w) in params.iter_mut() {
            if frozen.contains(key) {
                continue;
            }
            let g = grads.get(key)?;
            let sq = state.sq.get_mut(key)?;
            if g.shape() != w.shape() || sq.shape() != w.shape() {
                return Err(NnError::Shape(format!("{key}: gradient {:?} vs parameter {:?}", g.shape(), w.shape())));
            }
            let mom = state.mom.get_mut(key)?;
            let elems = w.data_mut().iter_mut().zip(g.data()).zip(sq.data_mut()).zip(mom.data_mut());
            for (((w, &g), sq), m) in elems {
                let gt = g as f64 + self.weight_decay * *w as f64;
                let s = self.rho * *sq as f64 + (1.0 - self.rho) * gt * gt;
                let mv = self.momentum * *m as f64 + gt / (s + self.eps).sqrt();
                *sq = s as f32;
                *m = mv as f32;
                *w = (*w as f64 - self.lr * mv) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f32) -> ParamSet<f32> {
        [("w".to_string(), Tensor::from_vec(&[1], vec![v]).unwrap())].into_iter().collect()
    }

    #[test]
    fn hand_computed_step() {
        let opt = RmsProp { lr: 0.01, weight_decay: 0.0, ..RmsProp::default() };
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&p);
        opt.step(&mut p, &scalar(1.0), &mut st, &BTreeSet::new()).unwrap();
        let m = 1.0 / (0.05f64 + 1e-8).sqrt();
        assert!((st.square_average().get("w").unwrap().data()[0] as f64 - 0.05).abs() < 1e-8);
        assert!((st.momentum().get("w").unwrap().data()[0] as f64 - m).abs() < 1e-5);
        assert!((p.get("w").unwrap().data()[0] as f64 - (1.0 - 0.01 * m)).abs() < 1e-6);
        assert!((p.get("w").unwrap().data()[0] - 0.95528).abs() < 1e-5);
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let opt = RmsProp { weight_decay: 0.0, ..RmsProp::default() };
        let mut p = scalar(0.3);
        let mut st = OptimizerState::new(&p);
        for _ in 0..5 {
            opt.step(&mut p, &scalar(0.0), &mut st, &BTreeSet::new()).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data()[0], 0.3);
    }

    #[test]
    fn zero_lr_is_noop() {
        let opt = RmsProp { lr: 0.0, ..RmsProp::default() };
        let mut p = scalar(0.3);
        let mut st = OptimizerState::new(&p);
        opt.step(&mut p, &scalar(2.0), &mut st, &BTreeSet::new()).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 0.3);
    }

    #[test]
    fn decay_only_shrinks_toward_zero() {
        let opt = RmsProp { weight_decay: 5e-4, ..RmsProp::default() };
        for w0 in [0.7f32, -0.7] {
            let mut p = scalar(w0);
            let mut st = OptimizerState::new(&p);
            opt.step(&mut p, &scalar(0.0), &mut st, &BTreeSet::new()).unwrap();
            let w1 = p.get("w").unwrap().data()[0];
            assert!(w1.abs() < w0.abs() && w1.signum() == w0.signum());
        }
    }

    #[test]
    fn frozen_keys_untouched() {
        let opt = RmsProp::default();
        let mut p = scalar(0.3);
        let mut st = OptimizerState::new(&p);
        let frozen = BTreeSet::from(["w".to_string()]);
        opt.step(&mut p, &scalar(1.0), &mut st, &frozen).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 0.3);
        assert_eq!(st.momentum().get("w").unwrap().data()[0], 0.0);
    }
}
