//! Dataset manifest: a TOML file naming each video's id, feature file,
//! label file, and split. Feature/label paths are resolved relative to the
//! manifest's directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{read_features, read_labels};
use super::{Dataset, Split, VideoRecord};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub features: String,
    pub labels: String,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub videos: Vec<ManifestEntry>,
}

pub(crate) fn toml_error(err: &toml::de::Error) -> Error {
    let offset = err.span().map(|s| s.start as u64).unwrap_or(0);
    Error::Format { offset, msg: err.message().to_string() }
}

/// Parses manifest text without touching the filesystem.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let manifest: Manifest = toml::from_str(text).map_err(|e| toml_error(&e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format {
            offset: 0,
            msg: format!("unsupported manifest version {}", manifest.version),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for v in &manifest.videos {
        if !seen.insert(v.id.as_str()) {
            return Err(Error::Config(format!("duplicate video id {}", v.id)));
        }
    }
    Ok(manifest)
}

/// Loads a manifest and every referenced video, enforcing one global (D, C)
/// and per-video feature/label alignment. An empty manifest is a valid,
/// empty dataset.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let manifest = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let mut features = read_features(&base.join(&entry.features))?;
        features.video_id = entry.id.clone();
        let labels = read_labels(&base.join(&entry.labels))?;
        videos.push(VideoRecord::new(entry.id.clone(), features, labels, entry.split)?);
    }
    Dataset::from_videos(videos)
}

/// Serializes and writes a manifest.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    Ok(std::fs::write(path, text)?)
}
