//! Parametric limb trajectories for small reproducible experiments.
//!
//! Three joints (torso, hand, foot) move in the sagittal plane. Each of five
//! activity classes drives the joints with its own mix of sinusoids; every
//! clip draws its amplitude, tempo and phases at random. A domain can emit
//! either joint positions or their analytic accelerations, with amplitude and
//! tempo shifts to mimic a different recording setup.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{save_clip, ClipEntry, DataError, DatasetManifest, Limb, LimbMap, PoseClip};
use crate::nn::SeededRng;
use crate::signal::Unit;

pub const TOY_CLASSES: [&str; 5] = ["wave", "shake", "walk", "kick", "bend"];
pub const TOY_JOINTS: [&str; 3] = ["torso", "hand", "foot"];

/// Per-joint motion of one class: (amplitude, frequency in Hz, phase offset).
type Motion = [(f64, f64, f64); 3];

fn class_motion(class: usize) -> Motion {
    match class {
        0 => [(0.05, 0.4, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0)],
        1 => [(0.05, 0.4, 0.0), (0.35, 2.6, 0.0), (0.0, 1.0, 0.0)],
        2 => [(0.15, 2.4, 0.0), (0.5, 1.2, 0.5), (1.0, 1.2, 0.0)],
        3 => [(0.1, 0.8, 0.0), (0.1, 0.8, 0.0), (0.8, 2.0, 0.0)],
        _ => [(1.0, 0.6, 0.0), (0.6, 0.6, 0.25), (0.05, 0.6, 0.0)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDomain {
    pub clips_per_class: usize,
    pub clip_sec: f64,
    pub rate_hz: f64,
    pub unit: Unit,
    pub amplitude_scale: f64,
    pub tempo_scale: f64,
    /// Standard deviation of additive white noise, in output units.
    pub noise: f64,
    /// Number of simulated subjects; clips are assigned round-robin.
    pub subjects: usize,
    pub seed: u64,
}

impl ToyDomain {
    /// Pose-tracking source: positions at 30 Hz, 40 clips per class.
    pub fn source() -> Self {
        Self {
            clips_per_class: 40,
            clip_sec: 3.0,
            rate_hz: 30.0,
            unit: Unit::Position,
            amplitude_scale: 1.0,
            tempo_scale: 1.0,
            noise: 1e-4,
            subjects: 0,
            seed: 1,
        }
    }

    /// Inertial target: accelerations at 50 Hz with larger, faster movements
    /// and sensor noise.
    pub fn target() -> Self {
        Self {
            clips_per_class: 20,
            clip_sec: 3.0,
            rate_hz: 50.0,
            unit: Unit::Acceleration,
            amplitude_scale: 1.3,
            tempo_scale: 1.15,
            noise: 8.0,
            subjects: 0,
            seed: 2,
        }
    }

    pub fn classes(&self) -> Vec<String> {
        TOY_CLASSES.iter().map(|s| s.to_string()).collect()
    }

    pub fn channel_names(&self) -> Vec<String> {
        TOY_JOINTS.iter().flat_map(|j| ["x", "y"].map(|a| format!("{j}.{a}"))).collect()
    }

    pub fn limb_map(&self) -> LimbMap {
        let names = self.channel_names();
        LimbMap(BTreeMap::from([
            (Limb::N, names[0..2].to_vec()),
            (Limb::RA, names[2..4].to_vec()),
            (Limb::RL, names[4..6].to_vec()),
        ]))
    }

    /// Clips ordered by class, then by index within the class.
    pub fn generate(&self) -> Vec<PoseClip> {
        let mut rng = SeededRng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise");
        let n = (self.clip_sec * self.rate_hz).round() as usize;
        let mut clips = Vec::with_capacity(TOY_CLASSES.len() * self.clips_per_class);
        for (class, name) in TOY_CLASSES.iter().enumerate() {
            for i in 0..self.clips_per_class {
                let amp = self.amplitude_scale * rng.random_range(0.75..1.25);
                let tempo = self.tempo_scale * rng.random_range(0.9..1.1);
                let phase0 = rng.random_range(0.0..TAU);
                let aspect = rng.random_range(0.3..0.6);
                let mut channels = Vec::with_capacity(6);
                for &(a, f, p) in &class_motion(class) {
                    let (a, w, phase) = (a * amp, TAU * f * tempo, phase0 + TAU * p);
                    let gain = match self.unit {
                        Unit::Position => 1.0,
                        Unit::Acceleration => -w * w,
                    };
                    let x = (0..n).map(|k| gain * a * (w * k as f64 / self.rate_hz + phase).sin());
                    let y = (0..n).map(|k| gain * a * aspect * (w * k as f64 / self.rate_hz + phase).cos());
                    channels.push(x.map(|v| v + noise.sample(&mut rng)).collect());
                    channels.push(y.map(|v| v + noise.sample(&mut rng)).collect());
                }
                let idx = class * self.clips_per_class + i;
                clips.push(PoseClip {
                    clip_id: format!("{name}_{i:03}"),
                    label: class,
                    rate_hz: self.rate_hz,
                    channel_names: self.channel_names(),
                    channels,
                    unit: self.unit,
                    sample_labels: None,
                    subject: (self.subjects > 0).then(|| format!("s{}", idx % self.subjects)),
                });
            }
        }
        clips
    }

    /// Writes every clip as `clips/<id>.csv` under `dir` plus a
    /// `manifest.json` listing them, and returns the manifest path.
    pub fn write_dataset(&self, dir: &Path) -> Result<PathBuf, DataError> {
        let clip_dir = dir.join("clips");
        std::fs::create_dir_all(&clip_dir).map_err(|e| DataError::Io { path: clip_dir.clone(), source: e })?;
        let mut entries = Vec::new();
        for clip in self.generate() {
            let rel = format!("clips/{}.csv", clip.clip_id);
            save_clip(&clip, &dir.join(&rel))?;
            entries.push(ClipEntry { path: rel, label: clip.label, id: None, subject: clip.subject });
        }
        let manifest = DatasetManifest {
            classes: self.classes(),
            rate_hz: self.rate_hz,
            unit: self.unit,
            limb_map: Some(self.limb_map()),
            channels: Some(self.channel_names()),
            clips: entries,
            base_dir: dir.to_path_buf(),
        };
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let d = ToyDomain { clips_per_class: 2, ..ToyDomain::source() };
        let clips = d.generate();
        assert_eq!(clips.len(), 10);
        assert!(clips.iter().all(|c| c.num_channels() == 6 && c.len() == 90));
        assert_eq!(clips.iter().map(|c| c.label).collect::<Vec<_>>(), [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn generation_is_seeded() {
        let d = ToyDomain { clips_per_class: 1, ..ToyDomain::target() };
        assert_eq!(d.generate(), d.generate());
    }

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let d = ToyDomain { clips_per_class: 1, ..ToyDomain::source() };
        let path = d.write_dataset(dir.path()).unwrap();
        let manifest = DatasetManifest::load(&path).unwrap();
        let loaded = crate::dataio::load_all(&manifest).unwrap();
        assert_eq!(loaded.len(), 5);
        assert_eq!(loaded[3].label, 3);
        assert_eq!(loaded[3].channel_names, d.channel_names());
    }

    #[test]
    fn limb_map_covers_channels() {
        let d = ToyDomain::source();
        let layout = d.limb_map().resolve(&d.channel_names()).unwrap();
        let mut cols: Vec<usize> = layout.iter().flat_map(|(_, c)| c.clone()).collect();
        cols.sort_unstable();
        assert_eq!(cols, (0..6).collect::<Vec<_>>());
    }
}
