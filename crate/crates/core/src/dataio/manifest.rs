use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::signal::Unit;

/// Limb groups feeding the branches of the multi-branch network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Limb {
    LA,
    LL,
    RA,
    RL,
    N,
}

impl Limb {
    pub const ALL: [Limb; 5] = [Limb::LA, Limb::LL, Limb::RA, Limb::RL, Limb::N];

    pub fn as_str(&self) -> &'static str {
        match self {
            Limb::LA => "LA",
            Limb::LL => "LL",
            Limb::RA => "RA",
            Limb::RL => "RL",
            Limb::N => "N",
        }
    }
}

impl fmt::Display for Limb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Limb {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Limb::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| DataError::Manifest(format!("unknown limb `{s}`")))
    }
}

/// Channel names per limb group. Empty or missing groups have no branch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LimbMap(pub BTreeMap<Limb, Vec<String>>);

/// Limb groups resolved to column indices of a window, skipping empty ones.
pub type BranchLayout = Vec<(Limb, Vec<usize>)>;

impl LimbMap {
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen: BTreeMap<&str, Limb> = BTreeMap::new();
        for (limb, names) in &self.0 {
            for name in names {
                if let Some(prev) = seen.insert(name, *limb) {
                    return Err(DataError::Manifest(format!("channel `{name}` assigned to both {prev} and {limb}")));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, channel_names: &[String]) -> Result<BranchLayout, DataError> {
        self.validate()?;
        let mut layout = Vec::new();
        for (limb, names) in &self.0 {
            if names.is_empty() {
                continue;
            }
            let idx = names
                .iter()
                .map(|n| channel_names.iter().position(|c| c == n).ok_or_else(|| DataError::UnknownChannel(n.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            layout.push((*limb, idx));
        }
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub path: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl ClipEntry {
    pub fn clip_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            Path::new(&self.path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.clone())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub rate_hz: f64,
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limb_map: Option<LimbMap>,
    /// Expected channel order; when absent the first clip defines it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
    pub clips: Vec<ClipEntry>,
    /// Directory clip paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| DataError::io(path, e))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes.is_empty() {
            return Err(DataError::Manifest("class list is empty".into()));
        }
        if !(self.rate_hz > 0.0) {
            return Err(DataError::Manifest(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        for entry in &self.clips {
            if entry.label >= self.classes.len() {
                return Err(DataError::LabelOutOfRange { label: entry.label, classes: self.classes.len() });
            }
        }
        if let Some(map) = &self.limb_map {
            map.validate()?;
            if let Some(channels) = &self.channels {
                for name in map.0.values().flatten() {
                    if !channels.contains(name) {
                        return Err(DataError::UnknownChannel(name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, entry: &ClipEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_manifest_without_limb_map() {
        let m: DatasetManifest = serde_json::from_str(
            r#"{"classes":["walk","run"],"rate_hz":25,"unit":"position",
                "clips":[{"path":"a.csv","label":1}]}"#,
        )
        .unwrap();
        m.validate().unwrap();
        assert!(m.limb_map.is_none());
        assert_eq!(m.clips[0].clip_id(), "a");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let m: DatasetManifest = serde_json::from_str(
            r#"{"classes":["walk"],"rate_hz":25,"unit":"position","clips":[{"path":"a.csv","label":1}]}"#,
        )
        .unwrap();
        assert!(matches!(m.validate(), Err(DataError::LabelOutOfRange { .. })));
    }

    #[test]
    fn overlapping_limbs_are_rejected() {
        let map: LimbMap = serde_json::from_str(r#"{"LA":["a.x"],"RA":["a.x"]}"#).unwrap();
        assert!(map.validate().is_err());
    }

    #[test]
    fn resolve_skips_empty_limbs() {
        let map: LimbMap = serde_json::from_str(r#"{"LA":["a.x","a.y"],"LL":[],"N":["n.x"]}"#).unwrap();
        let names: Vec<String> = ["n.x", "a.x", "a.y"].iter().map(|s| s.to_string()).collect();
        let layout = map.resolve(&names).unwrap();
        assert_eq!(layout, vec![(Limb::LA, vec![1, 2]), (Limb::N, vec![0])]);
    }
}
