//! Layer descriptions and their forward/backward kernels.
//!
//! Activations use the `[batch, time, column, channel]` layout for the
//! convolutional part and `[batch, features]` after flattening. Weight
//! layouts: temporal conv `[filters, in_channels, kernel_t]`, dense
//! `[fan_in, units]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

pub const DEFAULT_FILTERS: usize = 64;
pub const DEFAULT_KERNEL: [usize; 2] = [5, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    TemporalConv { filters: usize, kernel: [usize; 2], activation: Activation },
    Flatten,
    Dense { units: usize, activation: Activation },
    Dropout { p: f64 },
    SoftmaxOutput { classes: usize },
}

impl LayerSpec {
    pub fn conv() -> Self {
        LayerSpec::TemporalConv { filters: DEFAULT_FILTERS, kernel: DEFAULT_KERNEL, activation: Activation::Relu }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::TemporalConv { .. } | LayerSpec::Dense { .. } | LayerSpec::SoftmaxOutput { .. })
    }
}

/// A layer with its name inside a stack, e.g. `conv1` or `fc2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    #[serde(flatten)]
    pub spec: LayerSpec,
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in chunks * 8..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `[filters, in, k]` → `[k, in, filters]` so the filter axis is contiguous.
fn transpose_conv_weight<T: Real>(w: &Tensor<T>) -> Vec<T> {
    let (co_n, ci_n, k_n) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut wt = vec![T::zero(); w.len()];
    for co in 0..co_n {
        for ci in 0..ci_n {
            for k in 0..k_n {
                wt[(k * ci_n + ci) * co_n + co] = w.data()[(co * ci_n + ci) * k_n + k];
            }
        }
    }
    wt
}

fn conv_dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, layer: &str) -> Result<[usize; 7], NnError> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 4 || ws.len() != 3 {
        return Err(NnError::Shape(format!(
            "{layer}: expected input [B,T,D,C] and weight [F,C,K], got {xs:?} and {ws:?}"
        )));
    }
    let (bn, tn, dn, ci_n) = (xs[0], xs[1], xs[2], xs[3]);
    let (co_n, k_n) = (ws[0], ws[2]);
    if ws[1] != ci_n {
        return Err(NnError::Shape(format!("{layer}: input has {ci_n} channels, weight expects {}", ws[1])));
    }
    if b.shape() != [co_n] {
        return Err(NnError::Shape(format!("{layer}: bias shape {:?} != [{co_n}]", b.shape())));
    }
    if tn < k_n {
        return Err(NnError::Shape(format!("{layer}: time dimension {tn} shorter than kernel {k_n}")));
    }
    Ok([bn, tn, dn, ci_n, co_n, k_n, tn - k_n + 1])
}

/// Valid correlation along time with a `[k, 1]` kernel, plus bias and
/// optional ReLU. Each column `d` is filtered independently.
pub fn conv_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    activation: Activation,
    layer: &str,
) -> Result<Tensor<T>, NnError> {
    let [bn, tn, dn, ci_n, co_n, k_n, to_n] = conv_dims(x, w, b, layer)?;
    let wt = transpose_conv_weight(w);
    let xd = x.data();
    let mut out = Tensor::zeros(&[bn, to_n, dn, co_n]);
    let od = out.data_mut();
    for bi in 0..bn {
        for t in 0..to_n {
            for d in 0..dn {
                let o = ((bi * to_n + t) * dn + d) * co_n;
                let acc = &mut od[o..o + co_n];
                acc.copy_from_slice(b.data());
                for k in 0..k_n {
                    let xo = ((bi * tn + t + k) * dn + d) * ci_n;
                    for ci in 0..ci_n {
                        let xv = xd[xo + ci];
                        if xv != T::zero() {
                            let wo = (k * ci_n + ci) * co_n;
                            axpy(acc, xv, &wt[wo..wo + co_n]);
                        }
                    }
                }
                if activation == Activation::Relu {
                    for v in acc.iter_mut() {
                        if *v < T::zero() {
                            *v = T::zero();
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient through the activation: zero where the ReLU output was clamped.
fn activation_grad<T: Real>(out: &Tensor<T>, dout: &Tensor<T>, activation: Activation) -> Vec<T> {
    match activation {
        Activation::Relu => {
            out.data().iter().zip(dout.data()).map(|(&o, &g)| if o > T::zero() { g } else { T::zero() }).collect()
        }
        Activation::None => dout.data().to_vec(),
    }
}

pub struct LayerGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Reverse pass of [`conv_forward`]. Weight and bias gradients are summed
/// over the batch in f64.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    out: &Tensor<T>,
    dout: &Tensor<T>,
    activation: Activation,
    need_input_grad: bool,
    layer: &str,
) -> Result<LayerGrads<T>, NnError> {
    let [bn, tn, dn, ci_n, co_n, k_n, to_n] = conv_dims(x, w, b, layer)?;
    if dout.shape() != [bn, to_n, dn, co_n] {
        return Err(NnError::Shape(format!("{layer}: upstream gradient shape {:?}", dout.shape())));
    }
    let dpre = activation_grad(out, dout, activation);
    let wt = transpose_conv_weight(w);
    let xd = x.data();
    let mut dw64 = vec![0f64; w.len()];
    let mut db64 = vec![0f64; co_n];
    let mut dws = vec![T::zero(); w.len()];
    let mut dx = need_input_grad.then(|| Tensor::<T>::zeros(x.shape()));
    for bi in 0..bn {
        dws.iter_mut().for_each(|v| *v = T::zero());
        for t in 0..to_n {
            for d in 0..dn {
                let o = ((bi * to_n + t) * dn + d) * co_n;
                let dp = &dpre[o..o + co_n];
                for (acc, &g) in db64.iter_mut().zip(dp) {
                    *acc += g.f64();
                }
                for k in 0..k_n {
                    let xo = ((bi * tn + t + k) * dn + d) * ci_n;
                    for ci in 0..ci_n {
                        let wo = (k * ci_n + ci) * co_n;
                        let xv = xd[xo + ci];
                        if xv != T::zero() {
                            axpy(&mut dws[wo..wo + co_n], xv, dp);
                        }
                        if let Some(dx) = dx.as_mut() {
                            dx.data_mut()[xo + ci] += dot(&wt[wo..wo + co_n], dp);
                        }
                    }
                }
            }
        }
        for (acc, &v) in dw64.iter_mut().zip(&dws) {
            *acc += v.f64();
        }
    }
    // back to [filters, in, k]
    let mut dw = vec![T::zero(); w.len()];
    for co in 0..co_n {
        for ci in 0..ci_n {
            for k in 0..k_n {
                dw[(co * ci_n + ci) * k_n + k] = T::of(dw64[(k * ci_n + ci) * co_n + co]);
            }
        }
    }
    Ok(LayerGrads {
        input: dx,
        weight: Tensor::from_vec(w.shape(), dw)?,
        bias: Tensor::from_vec(&[co_n], db64.into_iter().map(T::of).collect())?,
    })
}

fn dense_dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, layer: &str) -> Result<[usize; 3], NnError> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 {
        return Err(NnError::Shape(format!("{layer}: expected [B,n] input and [n,u] weight, got {xs:?} and {ws:?}")));
    }
    if xs[1] != ws[0] {
        return Err(NnError::Shape(format!(
            "{layer}: fan-in mismatch, input has {} features, weight expects {}",
            xs[1], ws[0]
        )));
    }
    if b.shape() != [ws[1]] {
        return Err(NnError::Shape(format!("{layer}: bias shape {:?} != [{}]", b.shape(), ws[1])));
    }
    Ok([xs[0], ws[0], ws[1]])
}

/// `x·W + b`, then the activation.
pub fn dense_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    activation: Activation,
    layer: &str,
) -> Result<Tensor<T>, NnError> {
    let [bn, n, u] = dense_dims(x, w, b, layer)?;
    let mut out = Tensor::zeros(&[bn, u]);
    for bi in 0..bn {
        let row = &mut out.data_mut()[bi * u..(bi + 1) * u];
        row.copy_from_slice(b.data());
        for i in 0..n {
            let xv = x.data()[bi * n + i];
            if xv != T::zero() {
                axpy(row, xv, &w.data()[i * u..(i + 1) * u]);
            }
        }
        if activation == Activation::Relu {
            for v in row.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    out: &Tensor<T>,
    dout: &Tensor<T>,
    activation: Activation,
    need_input_grad: bool,
    layer: &str,
) -> Result<LayerGrads<T>, NnError> {
    let [bn, n, u] = dense_dims(x, w, b, layer)?;
    if dout.shape() != [bn, u] {
        return Err(NnError::Shape(format!("{layer}: upstream gradient shape {:?}", dout.shape())));
    }
    let dpre = activation_grad(out, dout, activation);
    let mut dw64 = vec![0f64; n * u];
    let mut db64 = vec![0f64; u];
    let mut dx = need_input_grad.then(|| Tensor::<T>::zeros(&[bn, n]));
    for bi in 0..bn {
        let dy = &dpre[bi * u..(bi + 1) * u];
        for (acc, &g) in db64.iter_mut().zip(dy) {
            *acc += g.f64();
        }
        for i in 0..n {
            let xv = x.data()[bi * n + i];
            if xv != T::zero() {
                for (acc, &g) in dw64[i * u..(i + 1) * u].iter_mut().zip(dy) {
                    *acc += (xv * g).f64();
                }
            }
            if let Some(dx) = dx.as_mut() {
                dx.data_mut()[bi * n + i] = dot(&w.data()[i * u..(i + 1) * u], dy);
            }
        }
    }
    Ok(LayerGrads {
        input: dx,
        weight: Tensor::from_vec(&[n, u], dw64.into_iter().map(T::of).collect())?,
        bias: Tensor::from_vec(&[u], db64.into_iter().map(T::of).collect())?,
    })
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (0 or `1/(1-p)` while training, all ones at inference).
pub fn dropout_apply<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, Vec<T>), NnError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::Config(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), vec![T::one(); x.len()]));
    }
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len()).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), data)?, mask))
}

/// Adds `N(0, sigma²)` noise to every element.
pub fn gaussian_noise_augment<R: Rng + ?Sized>(data: &mut [f32], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for v in data {
        *v += normal.sample(rng) as f32;
    }
}

/// Mean cross-entropy of the softmax over logits `[B, K]`, with its gradient
/// `(softmax − onehot) / B`. Computed in f64 with max subtraction.
pub fn softmax_xent<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>), NnError> {
    let (bn, k) = match logits.shape() {
        [b, k] => (*b, *k),
        s => return Err(NnError::Shape(format!("logits must be [B, K], got {s:?}"))),
    };
    if labels.len() != bn {
        return Err(NnError::Shape(format!("{} labels for batch of {bn}", labels.len())));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(bn * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(NnError::Label { label, classes: k });
        }
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[label].f64();
        let probs = softmax_row(row);
        for (c, p) in probs.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push(T::of((p - onehot) / bn as f64));
        }
    }
    Ok((loss / bn as f64, Tensor::from_vec(&[bn, k], grad)?))
}

pub fn softmax_row<T: Real>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
