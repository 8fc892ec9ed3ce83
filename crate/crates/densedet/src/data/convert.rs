//! Packing externally extracted video features into the dataset formats.
//!
//! An upstream video encoder (e.g. an I3D trunk pooled per 8-frame segment)
//! produces a T×D float matrix per video, D = 1024 for the standard setup.
//! [`pack_features`] wraps such a matrix for `write_features`, and
//! [`rasterize_intervals`] turns frame-level interval annotations into the
//! token-aligned binary label grid, with the frame→token policy exposed as
//! a flag since annotations rarely align with segment boundaries.

use serde::{Deserialize, Serialize};

use super::{FeatureSequence, LabelGrid};
use crate::error::{Error, Result};

/// How a frame-level interval claims the tokens it partially covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterizationPolicy {
    /// A token is positive if the interval overlaps any of its frames.
    AnyOverlap,
    /// A token is positive if the interval covers at least half its frames.
    Majority,
}

/// A frame-level annotation: class, first frame, last frame (exclusive).
#[derive(Debug, Clone, Copy)]
pub struct FrameInterval {
    pub class: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Wraps a row-major T×D matrix of encoder outputs as a feature sequence
/// ready for `write_features`.
pub fn pack_features(video_id: &str, t: usize, d: usize, tokens: Vec<f32>) -> Result<FeatureSequence> {
    FeatureSequence::new(video_id, t, d, tokens)
}

/// Rasterizes frame-level intervals onto `num_tokens` tokens of
/// `frames_per_token` frames each.
pub fn rasterize_intervals(
    intervals: &[FrameInterval],
    num_tokens: usize,
    frames_per_token: usize,
    num_classes: usize,
    policy: RasterizationPolicy,
) -> Result<LabelGrid> {
    if frames_per_token == 0 {
        return Err(Error::Contract("frames_per_token must be >= 1".into()));
    }
    let mut data = vec![0u8; num_tokens * num_classes];
    for iv in intervals {
        if iv.class >= num_classes {
            return Err(Error::Contract(format!(
                "interval class {} out of range (C = {num_classes})",
                iv.class
            )));
        }
        if iv.end_frame <= iv.start_frame {
            continue;
        }
        for token in 0..num_tokens {
            let tok_start = token * frames_per_token;
            let tok_end = tok_start + frames_per_token;
            let overlap = iv.end_frame.min(tok_end).saturating_sub(iv.start_frame.max(tok_start));
            let hit = match policy {
                RasterizationPolicy::AnyOverlap => overlap > 0,
                RasterizationPolicy::Majority => overlap * 2 >= frames_per_token,
            };
            if hit {
                data[token * num_classes + iv.class] = 1;
            }
        }
    }
    LabelGrid::new(num_tokens, num_classes, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn any_overlap_claims_partial_tokens() {
        let iv = [FrameInterval { class: 0, start_frame: 7, end_frame: 9 }];
        let grid = rasterize_intervals(&iv, 3, 8, 2, RasterizationPolicy::AnyOverlap).unwrap();
        // frames 7..9 touch token 0 (frames 0..8) and token 1 (8..16)
        assert_eq!(grid.get(0, 0), 1);
        assert_eq!(grid.get(1, 0), 1);
        assert_eq!(grid.get(2, 0), 0);
    }

    #[test]
    fn majority_requires_half_coverage() {
        let iv = [FrameInterval { class: 1, start_frame: 7, end_frame: 13 }];
        let grid = rasterize_intervals(&iv, 3, 8, 2, RasterizationPolicy::Majority).unwrap();
        // one frame of token 0, five frames of token 1
        assert_eq!(grid.get(0, 1), 0);
        assert_eq!(grid.get(1, 1), 1);
    }

    #[test]
    fn out_of_range_class_is_rejected() {
        let iv = [FrameInterval { class: 5, start_frame: 0, end_frame: 4 }];
        assert!(rasterize_intervals(&iv, 2, 8, 2, RasterizationPolicy::AnyOverlap).is_err());
    }
}
