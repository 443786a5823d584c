use std::io::{Read, Write};
use std::path::Path;

use super::manifest::{ClipEntry, DatasetManifest};
use super::DataError;
use crate::signal::Unit;

/// Header name of the time column.
pub const TIME_COLUMN: &str = "t_sec";
/// Optional trailing column with a per-sample class index.
pub const LABEL_COLUMN: &str = "label";

const SPACING_TOLERANCE: f64 = 1e-6;

/// One labeled recording, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseClip {
    pub clip_id: String,
    pub label: usize,
    pub rate_hz: f64,
    pub channel_names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
    pub unit: Unit,
    /// Per-sample labels for continuous recordings.
    pub sample_labels: Option<Vec<usize>>,
    pub subject: Option<String>,
}

impl PoseClip {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

fn parse_err(line: u64, msg: impl Into<String>) -> DataError {
    DataError::Parse { line, msg: msg.into() }
}

/// Channel names, channel-major values and optional per-sample labels.
pub type ClipColumns = (Vec<String>, Vec<Vec<f64>>, Option<Vec<usize>>);

/// Parses the clip CSV body. `rate_hz` is checked against the time column.
pub fn read_clip_csv<R: Read>(reader: R, rate_hz: f64) -> Result<ClipColumns, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.get(0) != Some(TIME_COLUMN) {
        return Err(parse_err(1, format!("header must start with `{TIME_COLUMN}`")));
    }
    let has_labels = header.iter().next_back() == Some(LABEL_COLUMN);
    let data_cols = header.len() - 1 - usize::from(has_labels);
    if data_cols == 0 {
        return Err(parse_err(1, "no channel columns"));
    }
    let names: Vec<String> = header.iter().skip(1).take(data_cols).map(str::to_string).collect();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || names[..i].contains(n) {
            return Err(parse_err(1, format!("empty or duplicate channel name `{n}`")));
        }
    }

    let mut channels = vec![Vec::new(); data_cols];
    let mut labels = has_labels.then(Vec::new);
    let mut prev_t: Option<f64> = None;
    let step = 1.0 / rate_hz;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(row as u64 + 2, e.to_string()))?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let field = |i: usize| -> Result<f64, DataError> {
            let raw = record[i].trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid number `{raw}` in column {}", &header[i])))
        };
        let t = field(0)?;
        if let Some(p) = prev_t {
            if !(t > p) {
                return Err(parse_err(line, "t_sec must be strictly increasing"));
            }
            if ((t - p) - step).abs() > SPACING_TOLERANCE * step {
                return Err(parse_err(line, format!("sample spacing {} does not match 1/rate_hz = {step}", t - p)));
            }
        }
        prev_t = Some(t);
        for (c, ch) in channels.iter_mut().enumerate() {
            ch.push(field(c + 1)?);
        }
        if let Some(labels) = labels.as_mut() {
            let raw = record[header.len() - 1].trim();
            labels.push(raw.parse::<usize>().map_err(|_| parse_err(line, format!("invalid label `{raw}`")))?);
        }
    }
    if channels[0].is_empty() {
        return Err(DataError::NoSamples);
    }
    Ok((names, channels, labels))
}

/// Writes a clip in the canonical CSV layout. Values print in shortest
/// round-trip form, so reading back is bit-exact.
pub fn write_clip_csv<W: Write>(clip: &PoseClip, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(clip.channel_names.iter().cloned());
    if clip.sample_labels.is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    w.write_record(&header)?;
    for i in 0..clip.len() {
        let mut row = Vec::with_capacity(header.len());
        row.push(format!("{}", i as f64 / clip.rate_hz));
        row.extend(clip.channels.iter().map(|ch| format!("{}", ch[i])));
        if let Some(labels) = &clip.sample_labels {
            row.push(labels[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Io { path: "<writer>".into(), source: e })?;
    Ok(())
}

pub fn save_clip(clip: &PoseClip, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    write_clip_csv(clip, std::io::BufWriter::new(file))
}

/// Loads one manifest entry and checks it against the manifest schema.
pub fn load_clip(entry: &ClipEntry, manifest: &DatasetManifest) -> Result<PoseClip, DataError> {
    let path = manifest.resolve_path(entry);
    let file = std::fs::File::open(&path).map_err(|e| DataError::io(&path, e))?;
    let (names, channels, sample_labels) =
        read_clip_csv(std::io::BufReader::new(file), manifest.rate_hz).map_err(|e| e.in_file(&path))?;
    if let Some(schema) = &manifest.channels {
        if let Some(unknown) = names.iter().find(|n| !schema.contains(n)) {
            return Err(DataError::UnknownChannel(unknown.clone()).in_file(&path));
        }
        if &names != schema {
            return Err(DataError::Parse { line: 1, msg: "channel order differs from manifest".into() }.in_file(&path));
        }
    }
    if let Some(map) = &manifest.limb_map {
        if let Some(missing) = map.0.values().flatten().find(|n| !names.contains(n)) {
            return Err(DataError::UnknownChannel(missing.clone()).in_file(&path));
        }
    }
    if let Some(labels) = &sample_labels {
        if let Some(&bad) = labels.iter().find(|&&l| l >= manifest.classes.len()) {
            return Err(DataError::LabelOutOfRange { label: bad, classes: manifest.classes.len() });
        }
    }
    Ok(PoseClip {
        clip_id: entry.clip_id(),
        label: entry.label,
        rate_hz: manifest.rate_hz,
        channel_names: names,
        channels,
        unit: manifest.unit,
        sample_labels,
        subject: entry.subject.clone(),
    })
}

/// Loads every clip in manifest order, requiring a shared channel layout.
pub fn load_all(manifest: &DatasetManifest) -> Result<Vec<PoseClip>, DataError> {
    let mut clips: Vec<PoseClip> = Vec::with_capacity(manifest.clips.len());
    for entry in &manifest.clips {
        let clip = load_clip(entry, manifest)?;
        if let Some(first) = clips.first() {
            if first.channel_names != clip.channel_names {
                return Err(DataError::Parse {
                    line: 1,
                    msg: format!("clip `{}` has a different channel layout than `{}`", clip.clip_id, first.clip_id),
                });
            }
        }
        clips.push(clip);
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_clip() {
        let csv = "t_sec,hip.x,hip.y\n0,1.5,2\n0.04,1.6,2.1\n0.08,1.7,2.2\n";
        let (names, ch, labels) = read_clip_csv(csv.as_bytes(), 25.0).unwrap();
        assert_eq!(names, vec!["hip.x", "hip.y"]);
        assert_eq!(ch.len(), 2);
        assert_eq!(ch[0], vec![1.5, 1.6, 1.7]);
        assert!(labels.is_none());
    }

    #[test]
    fn empty_body_has_no_samples() {
        let err = read_clip_csv("t_sec,hip.x\n".as_bytes(), 25.0).unwrap_err();
        assert_eq!(err.to_string(), "no samples");
    }

    #[test]
    fn ragged_row_reports_line() {
        let csv = "t_sec,a.x,a.y\n0,1,2\n0.04,1\n";
        match read_clip_csv(csv.as_bytes(), 25.0).unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_clip_csv("time,a.x\n0,1\n".as_bytes(), 25.0).is_err());
    }

    #[test]
    fn irregular_spacing_is_rejected() {
        let csv = "t_sec,a.x\n0,1\n0.04,1\n0.09,1\n";
        match read_clip_csv(csv.as_bytes(), 25.0).unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn label_column_is_optional() {
        let csv = "t_sec,a.x,label\n0,1,0\n0.5,2,1\n";
        let (names, _, labels) = read_clip_csv(csv.as_bytes(), 2.0).unwrap();
        assert_eq!(names, vec!["a.x"]);
        assert_eq!(labels, Some(vec![0, 1]));
    }
}
