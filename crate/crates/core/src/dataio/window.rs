use serde::{Deserialize, Serialize};

use super::clip::PoseClip;
use super::DataError;

/// Sliding-window geometry in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub duration_sec: f64,
    pub window_len: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize, rate_hz: f64) -> Result<Self, DataError> {
        if window_len == 0 || stride == 0 {
            return Err(DataError::Window(format!("window_len {window_len} and stride {stride} must be ≥ 1")));
        }
        Ok(Self { duration_sec: window_len as f64 / rate_hz, window_len, stride })
    }

    /// `W = round(T · rate)`.
    pub fn from_duration(duration_sec: f64, rate_hz: f64, stride: usize) -> Result<Self, DataError> {
        let window_len = (duration_sec * rate_hz).round();
        if !(window_len >= 1.0) || stride == 0 {
            return Err(DataError::Window(format!(
                "duration {duration_sec} s at {rate_hz} Hz with stride {stride} gives no usable window"
            )));
        }
        Ok(Self { duration_sec, window_len: window_len as usize, stride })
    }

    pub fn count(&self, len: usize) -> usize {
        window_count(len, self.window_len, self.stride)
    }
}

pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// A `[window_len, channels]` row-major slice of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<f64>,
    pub window_len: usize,
    pub channels: usize,
    pub label: usize,
    pub clip_id: String,
}

impl Window {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.channels).copied()
    }
}

/// Majority label of a run of per-sample labels; ties go to the last
/// sample's label when it is among the tied, else to the smallest index.
pub fn majority_label(labels: &[usize]) -> usize {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    let last = *labels.last().expect("non-empty window");
    if counts[last] == best {
        last
    } else {
        counts.iter().position(|&c| c == best).unwrap_or(0)
    }
}

/// Cuts a clip into windows starting at `0, s, 2s, …`.
pub fn segment_windows(clip: &PoseClip, spec: &WindowSpec) -> Vec<Window> {
    let d = clip.num_channels();
    let w = spec.window_len;
    (0..spec.count(clip.len()))
        .map(|k| {
            let start = k * spec.stride;
            let mut values = Vec::with_capacity(w * d);
            for t in start..start + w {
                values.extend(clip.channels.iter().map(|ch| ch[t]));
            }
            let label = match &clip.sample_labels {
                Some(labels) => majority_label(&labels[start..start + w]),
                None => clip.label,
            };
            Window { values, window_len: w, channels: d, label, clip_id: clip.clip_id.clone() }
        })
        .collect()
}
