use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::clip::{load_all, PoseClip};
use super::manifest::{BranchLayout, DatasetManifest, LimbMap};
use super::split::{split_clips, SplitFractions};
use super::window::{segment_windows, Window, WindowSpec};
use super::DataError;
use crate::signal::{self, ChannelSeries, SplineQuery, Unit, ZSCORE_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    /// Resample the recorded values.
    Pose,
    /// Second derivative of the interpolated positions.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target_rate_hz: f64,
    pub mode: SignalMode,
    pub window_duration_sec: f64,
    /// Overrides `round(duration · rate)` when set.
    pub window_len: Option<usize>,
    pub stride: usize,
    pub anchor: Option<String>,
    pub fractions: SplitFractions,
    pub split_seed: u64,
    pub spline_support: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: 100.0,
            mode: SignalMode::Synthetic,
            window_duration_sec: 1.0,
            window_len: None,
            stride: 50,
            anchor: None,
            fractions: SplitFractions::default(),
            split_seed: 42,
            spline_support: signal::DEFAULT_SUPPORT,
        }
    }
}

impl PipelineConfig {
    pub fn window_spec(&self) -> Result<WindowSpec, DataError> {
        match self.window_len {
            Some(w) => WindowSpec::new(w, self.stride, self.target_rate_hz),
            None => WindowSpec::from_duration(self.window_duration_sec, self.target_rate_hz, self.stride),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: f64,
    pub std: f64,
}

/// Per-channel z-score statistics, keyed by channel name in column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormStats(pub IndexMap<String, ChannelNorm>);

impl NormStats {
    pub fn fit(windows: &[Window], names: &[String]) -> Result<Self, DataError> {
        if windows.is_empty() {
            return Err(DataError::Window("cannot fit normalization on zero training windows".into()));
        }
        let columns: Vec<Vec<f64>> =
            (0..names.len()).map(|c| windows.iter().flat_map(|w| w.column(c)).collect()).collect();
        let stats = signal::channel_stats(&columns);
        Ok(Self(
            names
                .iter()
                .enumerate()
                .map(|(c, n)| (n.clone(), ChannelNorm { mean: stats.mean[c], std: stats.std[c] }))
                .collect(),
        ))
    }

    /// Standardizes in place. Results are rounded to f32 precision so that
    /// windows survive a shard round-trip unchanged.
    pub fn apply(&self, window: &mut Window) {
        let norms: Vec<&ChannelNorm> = self.0.values().collect();
        for (i, v) in window.values.iter_mut().enumerate() {
            let n = norms[i % window.channels];
            *v = ((*v - n.mean) / n.std.max(ZSCORE_EPSILON)) as f32 as f64;
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("stats serialize");
        std::fs::write(path, text).map_err(|e| DataError::io(path, e))
    }
}

/// Normalized windows for the three splits.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub classes: Vec<String>,
    pub channel_names: Vec<String>,
    pub rate_hz: f64,
    pub spec: WindowSpec,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub stats: NormStats,
    pub limb_map: Option<LimbMap>,
}

impl WindowedDataset {
    pub fn branch_layout(&self) -> Option<Result<BranchLayout, DataError>> {
        self.limb_map.as_ref().map(|m| m.resolve(&self.channel_names))
    }
}

fn resample_labels(labels: &[usize], from_hz: f64, to_hz: f64, len: usize) -> Vec<usize> {
    (0..len)
        .map(|k| {
            let src = (k as f64 / to_hz * from_hz).round() as usize;
            labels[src.min(labels.len() - 1)]
        })
        .collect()
}

/// Anchor normalization followed by resampling or synthetic-signal generation.
pub fn transform_clip(clip: &PoseClip, cfg: &PipelineConfig) -> Result<PoseClip, DataError> {
    let anchored = match &cfg.anchor {
        Some(a) => signal::anchor_normalize(&clip.channel_names, &clip.channels, a)?,
        None => clip.channels.clone(),
    };
    let factor = cfg.target_rate_hz / clip.rate_hz;
    let mut channels = Vec::with_capacity(anchored.len());
    let mut unit = clip.unit;
    for values in anchored {
        let series = ChannelSeries::new(values, clip.rate_hz, clip.unit)?;
        let out = match cfg.mode {
            SignalMode::Pose => signal::resample(&series, factor)?,
            SignalMode::Synthetic => {
                let q = SplineQuery::second_derivative().with_support(cfg.spline_support);
                signal::synthesize_obd(&series, cfg.target_rate_hz, q)?
            }
        };
        unit = out.unit;
        channels.push(out.values);
    }
    let len = channels.first().map_or(0, Vec::len);
    let sample_labels = clip.sample_labels.as_ref().map(|l| resample_labels(l, clip.rate_hz, cfg.target_rate_hz, len));
    Ok(PoseClip {
        clip_id: clip.clip_id.clone(),
        label: clip.label,
        rate_hz: cfg.target_rate_hz,
        channel_names: clip.channel_names.clone(),
        channels,
        unit: if cfg.mode == SignalMode::Synthetic { Unit::Acceleration } else { unit },
        sample_labels,
        subject: clip.subject.clone(),
    })
}

/// Full preprocessing from loaded clips: split by clip, transform, window,
/// then z-score with statistics fit on the training windows only.
pub fn build_windows_from_clips(
    clips: &[PoseClip],
    classes: &[String],
    limb_map: Option<&LimbMap>,
    cfg: &PipelineConfig,
) -> Result<WindowedDataset, DataError> {
    let first = clips.first().ok_or(DataError::NoSamples)?;
    let channel_names = first.channel_names.clone();
    if let Some(map) = limb_map {
        map.resolve(&channel_names)?;
    }
    let spec = cfg.window_spec()?;
    let split = split_clips(clips, cfg.fractions, cfg.split_seed)?;
    let windows_for = |idx: &[usize]| -> Result<Vec<Window>, DataError> {
        let mut out = Vec::new();
        for &i in idx {
            out.extend(segment_windows(&transform_clip(&clips[i], cfg)?, &spec));
        }
        Ok(out)
    };
    // splits keep manifest order inside each partition
    let sorted = |v: &[usize]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    };
    let mut train = windows_for(&sorted(&split.train))?;
    let mut val = windows_for(&sorted(&split.val))?;
    let mut test = windows_for(&sorted(&split.test))?;
    let stats = NormStats::fit(&train, &channel_names)?;
    for w in train.iter_mut().chain(val.iter_mut()).chain(test.iter_mut()) {
        stats.apply(w);
    }
    Ok(WindowedDataset {
        classes: classes.to_vec(),
        channel_names,
        rate_hz: cfg.target_rate_hz,
        spec,
        train,
        val,
        test,
        stats,
        limb_map: limb_map.cloned(),
    })
}

pub fn build_windows_pipeline(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<WindowedDataset, DataError> {
    let clips = load_all(manifest)?;
    build_windows_from_clips(&clips, &manifest.classes, manifest.limb_map.as_ref(), cfg)
}
