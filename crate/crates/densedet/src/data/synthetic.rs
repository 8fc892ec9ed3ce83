//! Synthetic dense multi-label corpus generator.
//!
//! Labels are built by placing random intervals per class (durations drawn
//! from per-class ranges, so the corpus mixes short and long actions), with
//! configured co-occurrence pairs injected over the same span and a hard cap
//! on per-step concurrency. Features are the sum of fixed per-class
//! signature vectors over the active classes plus Gaussian noise, so labels
//! are recoverable from features: with zero noise and orthonormal
//! signatures, exactly so.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSequence, LabelGrid, Split, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub duration_min: usize,
    pub duration_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoOccurrence {
    /// Class whose intervals trigger the partner.
    pub cause: usize,
    /// Class switched on over the cause's span.
    pub partner: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_videos: usize,
    pub t_vid_min: usize,
    pub t_vid_max: usize,
    pub feature_dim: usize,
    /// Peak number of simultaneously active classes.
    pub max_concurrency: usize,
    pub classes: Vec<ClassProfile>,
    #[serde(default)]
    pub co_occurrence: Vec<CoOccurrence>,
    pub noise_sigma: f64,
    /// Leading fraction of videos marked `train`; the rest are `test`.
    pub train_fraction: f64,
}

impl SyntheticSpec {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(Error::Generation("num_videos must be >= 1".into()));
        }
        if self.t_vid_min == 0 || self.t_vid_min > self.t_vid_max {
            return Err(Error::Generation(format!(
                "bad video length range [{}, {}]",
                self.t_vid_min, self.t_vid_max
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::Generation("at least one class profile required".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Generation("feature_dim must be >= 1".into()));
        }
        if self.max_concurrency == 0 || self.max_concurrency > self.classes.len() {
            return Err(Error::Generation(format!(
                "max_concurrency {} outside [1, {}]",
                self.max_concurrency,
                self.classes.len()
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.duration_min == 0 || c.duration_min > c.duration_max {
                return Err(Error::Generation(format!(
                    "class {i}: bad duration range [{}, {}]",
                    c.duration_min, c.duration_max
                )));
            }
            if c.duration_max > self.t_vid_min {
                return Err(Error::Generation(format!(
                    "class {i}: duration {} exceeds the shortest video length {}",
                    c.duration_max, self.t_vid_min
                )));
            }
        }
        for (i, pair) in self.co_occurrence.iter().enumerate() {
            if pair.cause >= self.classes.len() || pair.partner >= self.classes.len() {
                return Err(Error::Generation(format!("pair {i}: class index out of range")));
            }
            if pair.cause == pair.partner {
                return Err(Error::Generation(format!("pair {i}: cause equals partner")));
            }
            if !(0.0..=1.0).contains(&pair.probability) {
                return Err(Error::Generation(format!(
                    "pair {i}: probability {} outside [0, 1]",
                    pair.probability
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Generation(format!(
                "train_fraction {} outside [0, 1]",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

pub struct SyntheticCorpus {
    pub videos: Vec<VideoRecord>,
    /// C×D class signature matrix used to build the features.
    pub signatures: Vec<f32>,
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One fixed random unit vector per class; rows are orthonormalized when
/// C <= D so zero-noise recovery is exact.
fn class_signatures(c: usize, d: usize, rng: &mut ChaCha20Rng) -> Vec<f32> {
    let mut rows: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| gaussian(rng)).collect())
        .collect();
    if c <= d {
        // Gram-Schmidt
        for i in 0..c {
            let (done, rest) = rows.split_at_mut(i);
            let row = &mut rest[0];
            for prev in done.iter() {
                let dot: f64 = row.iter().zip(prev.iter()).map(|(a, b)| a * b).sum();
                for (v, p) in row.iter_mut().zip(prev.iter()) {
                    *v -= dot * p;
                }
            }
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    } else {
        for row in &mut rows {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    rows.into_iter().flatten().map(|v| v as f32).collect()
}

struct IntervalPlacer<'a> {
    spec: &'a SyntheticSpec,
    labels: Vec<u8>,
    concurrency: Vec<usize>,
    t_vid: usize,
}

impl<'a> IntervalPlacer<'a> {
    fn new(spec: &'a SyntheticSpec, t_vid: usize) -> Self {
        IntervalPlacer {
            spec,
            labels: vec![0; t_vid * spec.num_classes()],
            concurrency: vec![0; t_vid],
            t_vid,
        }
    }

    fn active(&self, t: usize, class: usize) -> bool {
        self.labels[t * self.spec.num_classes() + class] == 1
    }

    /// Steps the placement would newly activate, per class.
    fn added_load(&self, start: usize, len: usize, classes: &[usize], t: usize) -> usize {
        debug_assert!(t >= start && t < start + len);
        classes.iter().filter(|&&c| !self.active(t, c)).count()
    }

    fn fits(&self, start: usize, len: usize, classes: &[usize]) -> bool {
        (start..start + len)
            .all(|t| self.concurrency[t] + self.added_load(start, len, classes, t) <= self.spec.max_concurrency)
    }

    fn place(&mut self, start: usize, len: usize, classes: &[usize]) {
        for t in start..start + len {
            for &c in classes {
                if !self.active(t, c) {
                    self.labels[t * self.spec.num_classes() + c] = 1;
                    self.concurrency[t] += 1;
                }
            }
        }
    }

    fn place_class_intervals(&mut self, class: usize, rng: &mut ChaCha20Rng) {
        let profile = &self.spec.classes[class];
        let mean_dur = (profile.duration_min + profile.duration_max).div_euclid(2).max(1);
        let cap = (self.t_vid / (3 * mean_dur)).clamp(1, 3);
        let instances = rng.gen_range(1..=cap);
        for _ in 0..instances {
            // partners are decided once per instance, before placement, so
            // budget rejections cannot skew the injection rate
            let mut group = vec![class];
            for pair in &self.spec.co_occurrence {
                if pair.cause == class && rng.gen_bool(pair.probability) {
                    group.push(pair.partner);
                }
            }
            for _attempt in 0..8 {
                let dur = rng.gen_range(profile.duration_min..=profile.duration_max);
                let start = rng.gen_range(0..=self.t_vid - dur);
                if self.fits(start, dur, &group) {
                    self.place(start, dur, &group);
                    break;
                }
            }
        }
    }
}

/// Deterministic corpus generation: the same spec and seed always produce
/// the same videos.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let c = spec.num_classes();
    let d = spec.feature_dim;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let signatures = class_signatures(c, d, &mut rng);

    let train_count = (spec.train_fraction * spec.num_videos as f64).round() as usize;
    let mut videos = Vec::with_capacity(spec.num_videos);
    for vid in 0..spec.num_videos {
        let t_vid = rng.gen_range(spec.t_vid_min..=spec.t_vid_max);
        let mut placer = IntervalPlacer::new(spec, t_vid);
        for class in 0..c {
            placer.place_class_intervals(class, &mut rng);
        }
        let labels = LabelGrid::new(t_vid, c, placer.labels)?;

        let mut features = vec![0f32; t_vid * d];
        for t in 0..t_vid {
            let row = &mut features[t * d..(t + 1) * d];
            for class in 0..c {
                if labels.get(t, class) == 1 {
                    let sig = &signatures[class * d..(class + 1) * d];
                    for (f, s) in row.iter_mut().zip(sig.iter()) {
                        *f += s;
                    }
                }
            }
            if spec.noise_sigma > 0.0 {
                for f in row.iter_mut() {
                    *f += (spec.noise_sigma * gaussian(&mut rng)) as f32;
                }
            }
        }
        let id = format!("vid_{vid:04}");
        let split = if vid < train_count { Split::Train } else { Split::Test };
        videos.push(VideoRecord::new(
            id.clone(),
            FeatureSequence::new(id, t_vid, d, features)?,
            labels,
            split,
        )?);
    }
    Ok(SyntheticCorpus { videos, signatures })
}

/// Parses a generator spec from TOML text.
pub fn parse_spec(text: &str) -> Result<SyntheticSpec> {
    let spec: SyntheticSpec = toml::from_str(text).map_err(|e| super::manifest::toml_error(&e))?;
    spec.validate()?;
    Ok(spec)
}
