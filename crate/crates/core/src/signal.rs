//! Local quintic interpolation, resampling and the synthetic on-body signal.
//!
//! Every query is answered by the degree-5 polynomial through the `support`
//! source samples nearest to it (clamped at the clip ends). Time is measured in
//! seconds, so second derivatives carry units of `unit / s²` regardless of the
//! source frame rate. Queries near either end use a one-sided support and are
//! noticeably less accurate than interior ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPLINE_DEGREE: usize = 5;
pub const DEFAULT_SUPPORT: usize = SPLINE_DEGREE + 1;
pub const ZSCORE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("query times must be non-decreasing (index {index})")]
    NonMonotoneQuery { index: usize },
    #[error("query time {time} s outside [0, {end}] s")]
    QueryOutOfRange { time: f64, end: f64 },
    #[error("invalid spline query: {0}")]
    InvalidQuery(String),
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("resampling factor must be positive, got {0}")]
    InvalidFactor(f64),
    #[error("resampled series would have {0} samples (need at least 2)")]
    TooShort(usize),
    #[error("expected a position series")]
    NotPosition,
    #[error("anchor joint `{0}` not present in clip")]
    MissingAnchor(String),
    #[error("joint `{joint}` lacks axis `{axis}` present on the anchor")]
    MissingAxis { joint: String, axis: String },
    #[error("channel `{0}` is not of the form `joint.axis`")]
    BadChannelName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Position,
    Acceleration,
}

/// One uniformly sampled channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub values: Vec<f64>,
    pub rate_hz: f64,
    pub unit: Unit,
}

impl ChannelSeries {
    pub fn new(values: Vec<f64>, rate_hz: f64, unit: Unit) -> Result<Self, SignalError> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(SignalError::InvalidRate(rate_hz));
        }
        Ok(Self { values, rate_hz, unit })
    }

    /// Time of the last sample in seconds.
    pub fn duration(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 / self.rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    Value,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineQuery {
    pub support: usize,
    pub derivative: DerivativeOrder,
}

impl SplineQuery {
    pub fn value() -> Self {
        Self { support: DEFAULT_SUPPORT, derivative: DerivativeOrder::Value }
    }

    pub fn second_derivative() -> Self {
        Self { support: DEFAULT_SUPPORT, derivative: DerivativeOrder::Second }
    }

    pub fn with_support(mut self, support: usize) -> Self {
        self.support = support;
        self
    }

    pub fn degree(&self) -> usize {
        SPLINE_DEGREE
    }

    fn validate(&self) -> Result<(), SignalError> {
        if self.support < DEFAULT_SUPPORT {
            return Err(SignalError::InvalidQuery(format!("support {} < {}", self.support, DEFAULT_SUPPORT)));
        }
        Ok(())
    }
}

/// First index of the `support` samples nearest to fractional index `u`.
fn window_start(u: f64, support: usize, len: usize) -> usize {
    let start = (u - support as f64 / 2.0).ceil();
    let max_start = (len - support) as f64;
    start.clamp(0.0, max_start) as usize
}

/// Newton divided differences on integer nodes `0..ys.len()`.
fn newton_coefficients(ys: &[f64]) -> [f64; DEFAULT_SUPPORT] {
    let mut c = [0.0; DEFAULT_SUPPORT];
    c.copy_from_slice(ys);
    for level in 1..DEFAULT_SUPPORT {
        for i in (level..DEFAULT_SUPPORT).rev() {
            c[i] = (c[i] - c[i - 1]) / level as f64;
        }
    }
    c
}

/// Value and second derivative of the Newton-form polynomial at `x`.
fn newton_eval(c: &[f64; DEFAULT_SUPPORT], x: f64) -> (f64, f64) {
    let (mut p, mut d1, mut d2) = (c[DEFAULT_SUPPORT - 1], 0.0, 0.0);
    for k in (0..DEFAULT_SUPPORT - 1).rev() {
        let dx = x - k as f64;
        d2 = d2 * dx + 2.0 * d1;
        d1 = d1 * dx + p;
        p = p * dx + c[k];
    }
    (p, d2)
}

/// Least-squares degree-5 fit for supports wider than six samples, in local
/// coordinates centred on the support to keep the normal system well scaled.
fn least_squares_eval(ys: &[f64], x: f64) -> (f64, f64) {
    let n = ys.len();
    let centre = (n - 1) as f64 / 2.0;
    let scale = centre.max(1.0);
    let design = DMatrix::from_fn(n, DEFAULT_SUPPORT, |r, c| ((r as f64 - centre) / scale).powi(c as i32));
    let rhs = DVector::from_column_slice(ys);
    let coef = design.svd(true, true).solve(&rhs, 1e-14).expect("svd computed with both factors");
    let z = (x - centre) / scale;
    let mut value = 0.0;
    let mut second = 0.0;
    for k in 0..DEFAULT_SUPPORT {
        value += coef[k] * z.powi(k as i32);
        if k >= 2 {
            second += coef[k] * (k * (k - 1)) as f64 * z.powi(k as i32 - 2);
        }
    }
    (value, second / (scale * scale))
}

/// Evaluates the local quintic (or its second derivative) at each query time.
pub fn eval_piecewise_quintic(
    series: &ChannelSeries,
    query_times: &[f64],
    q: SplineQuery,
) -> Result<Vec<f64>, SignalError> {
    q.validate()?;
    let n = series.values.len();
    if n < q.support {
        return Err(SignalError::InsufficientSamples { needed: q.support, got: n });
    }
    let end = series.duration();
    let slack = 1e-9 * end.max(1.0);
    let mut out = Vec::with_capacity(query_times.len());
    let mut prev = f64::NEG_INFINITY;
    for (index, &t) in query_times.iter().enumerate() {
        if !(t >= prev) {
            return Err(SignalError::NonMonotoneQuery { index });
        }
        if t < -slack || t > end + slack {
            return Err(SignalError::QueryOutOfRange { time: t, end });
        }
        prev = t;
        let u = t * series.rate_hz;
        let start = window_start(u, q.support, n);
        let ys = &series.values[start..start + q.support];
        let x = u - start as f64;
        let (value, second) = if q.support == DEFAULT_SUPPORT {
            newton_eval(&newton_coefficients(ys), x)
        } else {
            least_squares_eval(ys, x)
        };
        out.push(match q.derivative {
            DerivativeOrder::Value => value,
            DerivativeOrder::Second => second * series.rate_hz * series.rate_hz,
        });
    }
    Ok(out)
}

/// Uniform grid at `rate_hz` spanning `[0, duration]`.
pub fn uniform_grid(duration: f64, rate_hz: f64) -> Vec<f64> {
    let count = (duration * rate_hz + 1e-9).floor() as usize + 1;
    (0..count).map(|k| k as f64 / rate_hz).collect()
}

/// Changes the sample rate by `factor` using local quintic interpolation.
pub fn resample(series: &ChannelSeries, factor: f64) -> Result<ChannelSeries, SignalError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(SignalError::InvalidFactor(factor));
    }
    if factor == 1.0 {
        return Ok(series.clone());
    }
    let rate = series.rate_hz * factor;
    let grid = uniform_grid(series.duration(), rate);
    if grid.len() < 2 {
        return Err(SignalError::TooShort(grid.len()));
    }
    let values = eval_piecewise_quintic(series, &grid, SplineQuery::value())?;
    ChannelSeries::new(values, rate, series.unit)
}

/// Simulated accelerometer trace: second derivative of the interpolated
/// position, evaluated on a uniform grid at `target_rate_hz`.
pub fn synthesize_obd(
    series: &ChannelSeries,
    target_rate_hz: f64,
    q: SplineQuery,
) -> Result<ChannelSeries, SignalError> {
    if series.unit != Unit::Position {
        return Err(SignalError::NotPosition);
    }
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(SignalError::InvalidRate(target_rate_hz));
    }
    let grid = uniform_grid(series.duration(), target_rate_hz);
    let q = SplineQuery { derivative: DerivativeOrder::Second, ..q };
    let values = eval_piecewise_quintic(series, &grid, q)?;
    ChannelSeries::new(values, target_rate_hz, Unit::Acceleration)
}

/// Per-channel population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn channel_stats<C: AsRef<[f64]>>(channels: &[C]) -> ChannelStats {
    let mut mean = Vec::with_capacity(channels.len());
    let mut std = Vec::with_capacity(channels.len());
    for ch in channels {
        let ch = ch.as_ref();
        let n = ch.len() as f64;
        let m = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    ChannelStats { mean, std }
}

/// Standardizes each channel with its own mean and population std.
pub fn zscore_channels<C: AsRef<[f64]>>(channels: &[C], epsilon: f64) -> (Vec<Vec<f64>>, ChannelStats) {
    let stats = channel_stats(channels);
    let normalized = channels
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            let denom = stats.std[c].max(epsilon);
            ch.as_ref().iter().map(|x| (x - stats.mean[c]) / denom).collect()
        })
        .collect();
    (normalized, stats)
}

/// Splits `joint.axis` at the last dot.
pub fn split_channel_name(name: &str) -> Result<(&str, &str), SignalError> {
    match name.rsplit_once('.') {
        Some((joint, axis)) if !joint.is_empty() && !axis.is_empty() => Ok((joint, axis)),
        _ => Err(SignalError::BadChannelName(name.to_string())),
    }
}

/// Subtracts the anchor joint's coordinate from every joint, axis by axis.
///
/// `names[i]` labels `channels[i]`; the anchor's own channels become zero.
pub fn anchor_normalize(
    names: &[String],
    channels: &[Vec<f64>],
    anchor_joint: &str,
) -> Result<Vec<Vec<f64>>, SignalError> {
    let parsed = names.iter().map(|n| split_channel_name(n)).collect::<Result<Vec<_>, _>>()?;
    let anchor_axes: Vec<(&str, usize)> = parsed
        .iter()
        .enumerate()
        .filter(|(_, (joint, _))| *joint == anchor_joint)
        .map(|(i, (_, axis))| (*axis, i))
        .collect();
    if anchor_axes.is_empty() {
        return Err(SignalError::MissingAnchor(anchor_joint.to_string()));
    }
    let mut out = Vec::with_capacity(channels.len());
    for (i, (joint, axis)) in parsed.iter().enumerate() {
        let Some(&(_, a)) = anchor_axes.iter().find(|(ax, _)| ax == axis) else {
            return Err(SignalError::MissingAxis { joint: joint.to_string(), axis: axis.to_string() });
        };
        out.push(channels[i].iter().zip(&channels[a]).map(|(x, r)| x - r).collect());
    }
    // every joint must carry every anchor axis
    for (axis, _) in &anchor_axes {
        let mut joints: Vec<&str> = parsed.iter().map(|(j, _)| *j).collect();
        joints.dedup();
        for joint in joints {
            if !parsed.iter().any(|(j, a)| *j == joint && a == axis) {
                return Err(SignalError::MissingAxis { joint: joint.to_string(), axis: axis.to_string() });
            }
        }
    }
    Ok(out)
}
