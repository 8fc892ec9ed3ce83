//! Dataset types, binary file formats, manifests, and the synthetic
//! generator.

pub mod convert;
pub mod format;
pub mod manifest;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// T×D matrix of per-segment input tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub t: usize,
    pub d: usize,
    /// Row-major T×D values.
    pub data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, t: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(Error::Contract(format!(
                "feature sequence needs t >= 1 and d >= 1, got {t}x{d}"
            )));
        }
        if data.len() != t * d {
            return Err(Error::Contract(format!(
                "feature payload holds {} values, expected {}",
                data.len(),
                t * d
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite feature value at index {i}")));
        }
        Ok(FeatureSequence { video_id: video_id.into(), t, d, data })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.d..(t + 1) * self.d]
    }
}

/// T×C binary matrix of ground-truth action occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub t: usize,
    pub c: usize,
    /// Row-major T×C values in {0, 1}.
    pub data: Vec<u8>,
}

impl LabelGrid {
    pub fn new(t: usize, c: usize, data: Vec<u8>) -> Result<Self> {
        if t == 0 || c == 0 {
            return Err(Error::Contract(format!(
                "label grid needs t >= 1 and c >= 1, got {t}x{c}"
            )));
        }
        if data.len() != t * c {
            return Err(Error::Contract(format!(
                "label payload holds {} values, expected {}",
                data.len(),
                t * c
            )));
        }
        if let Some(i) = data.iter().position(|v| *v > 1) {
            return Err(Error::Contract(format!("non-binary label {} at index {i}", data[i])));
        }
        Ok(LabelGrid { t, c, data })
    }

    pub fn get(&self, t: usize, c: usize) -> u8 {
        self.data[t * self.c + c]
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.c..(t + 1) * self.c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One video: features, aligned labels, and its split.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub id: String,
    pub features: FeatureSequence,
    pub labels: LabelGrid,
    pub split: Split,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, features: FeatureSequence, labels: LabelGrid, split: Split) -> Result<Self> {
        if features.t != labels.t {
            return Err(Error::Config(format!(
                "features span {} tokens but labels span {}",
                features.t, labels.t
            )));
        }
        Ok(VideoRecord { id: id.into(), features, labels, split })
    }

    pub fn len(&self) -> usize {
        self.features.t
    }

    pub fn is_empty(&self) -> bool {
        self.features.t == 0
    }
}

/// A loaded dataset with one global (D, C).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
    pub d: usize,
    pub c: usize,
}

impl Dataset {
    pub fn from_videos(videos: Vec<VideoRecord>) -> Result<Self> {
        let (mut d, mut c) = (0, 0);
        for v in &videos {
            if d == 0 {
                d = v.features.d;
                c = v.labels.c;
            } else if v.features.d != d {
                return Err(Error::Config(format!(
                    "video {} has feature dim {}, dataset uses {}",
                    v.id, v.features.d, d
                )));
            } else if v.labels.c != c {
                return Err(Error::Config(format!(
                    "video {} has {} classes, dataset uses {}",
                    v.id, v.labels.c, c
                )));
            }
        }
        Ok(Dataset { videos, d, c })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn train_len(&self) -> usize {
        self.split(Split::Train).count()
    }

    pub fn test_len(&self) -> usize {
        self.split(Split::Test).count()
    }
}
