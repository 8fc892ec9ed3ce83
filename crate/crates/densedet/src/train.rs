//! The learning paradigm: per sample, an Assistant step on the label grid,
//! a parameter copy into the frozen video classifier, then a Core step on
//! the video tokens. Assistant and Core own disjoint optimizer states; the
//! copied classifier is updated only through the Assistant.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSequence, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{assistant_loss, weighted_heads_loss, LossConfig};
use crate::net::Model;
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Learning rate divides by this factor every `lr_decay_every_epochs`.
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    pub seed: u64,
    /// Dataset profile name, recorded in logs.
    pub profile: String,
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 1,
            lr_initial: 1e-3,
            lr_decay_factor: 10.0,
            lr_decay_every_epochs: 1000,
            seed: 0,
            profile: "desk".into(),
        }
    }

    /// Full-size training schedule.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 3,
            lr_initial: 1e-4,
            lr_decay_factor: 10.0,
            lr_decay_every_epochs: 7,
            seed: 0,
            profile: "paper".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_initial <= 0.0 {
            return Err(Error::Config("lr_initial must be positive".into()));
        }
        if self.lr_decay_factor <= 1.0 {
            return Err(Error::Config("lr_decay_factor must exceed 1".into()));
        }
        if self.lr_decay_every_epochs == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "epochs, batch_size and lr_decay_every_epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Step-decay schedule; `epoch` is 1-based.
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> f64 {
    assert!(epoch >= 1, "epochs are 1-based");
    let decays = (epoch - 1) / cfg.lr_decay_every_epochs;
    cfg.lr_initial / cfg.lr_decay_factor.powi(decays as i32)
}

/// One training clip: T rows of features and labels plus a validity mask
/// (false on right-padded steps of short videos).
#[derive(Debug, Clone)]
pub struct ClipSample {
    pub t: usize,
    pub d: usize,
    pub c: usize,
    pub features: Vec<f32>,
    pub labels: Vec<f32>,
    pub mask: Vec<bool>,
    pub offset: usize,
}

impl ClipSample {
    pub fn feature_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(vec![self.t, self.d], self.features.clone())
    }

    pub fn label_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(vec![self.t, self.c], self.labels.clone())
    }

    pub fn loss_mask(&self) -> Option<&[bool]> {
        if self.mask.iter().all(|&m| m) {
            None
        } else {
            Some(&self.mask)
        }
    }
}

/// Uniformly samples a window of `t` consecutive tokens; videos shorter than
/// `t` are right-padded with zero features and labels, mask excluded.
pub fn sample_clip(video: &VideoRecord, t: usize, rng: &mut ChaCha20Rng) -> ClipSample {
    let d = video.features.d;
    let c = video.labels.c;
    let t_vid = video.len();
    let offset = if t_vid > t { rng.gen_range(0..=t_vid - t) } else { 0 };
    let copy_len = t_vid.min(t);
    let mut features = vec![0f32; t * d];
    let mut labels = vec![0f32; t * c];
    let mut mask = vec![false; t];
    for row in 0..copy_len {
        let src = row + offset;
        features[row * d..(row + 1) * d].copy_from_slice(video.features.row(src));
        for (j, &l) in video.labels.row(src).iter().enumerate() {
            labels[row * c + j] = l as f32;
        }
        mask[row] = true;
    }
    ClipSample { t, d, c, features, labels, mask, offset }
}

/// Per-step log record, one JSON line each in the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub assistant_loss: f64,
    pub core_loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub assistant: Option<f64>,
    pub core: f64,
}

pub struct Trainer {
    pub model: Model<f32>,
    pub train_cfg: TrainConfig,
    pub loss_cfg: LossConfig,
    adam_assistant: Option<Adam<f32>>,
    adam_core: Adam<f32>,
    rng: ChaCha20Rng,
    /// Video-classifier values installed by the most recent copy.
    pub last_copy_snapshot: Option<Vec<Vec<f32>>>,
    steps_done: usize,
}

impl Trainer {
    pub fn new(model: Model<f32>, train_cfg: TrainConfig, loss_cfg: LossConfig) -> Result<Self> {
        train_cfg.validate()?;
        loss_cfg.validate()?;
        let adam_assistant = if model.assistant.is_some() {
            Some(Adam::new(&model.assistant_params(), AdamConfig::default()))
        } else {
            None
        };
        let adam_core = Adam::new(&model.core_params(), AdamConfig::default());
        let rng = ChaCha20Rng::seed_from_u64(train_cfg.seed);
        Ok(Trainer {
            model,
            train_cfg,
            loss_cfg,
            adam_assistant,
            adam_core,
            rng,
            last_copy_snapshot: None,
            steps_done: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Current video-classifier values.
    pub fn vid_clas_values(&self) -> Vec<Vec<f32>> {
        self.model.core.clas.params().iter().map(|p| p.data_vec()).collect()
    }

    fn ensure_finite(loss: &Tensor<f32>) -> Result<f64> {
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: loss.first_non_finite_op().unwrap_or_else(|| "unknown".into()),
            });
        }
        Ok(value as f64)
    }

    /// Mean loss over the batch members under `build`, as one graph.
    fn batch_loss(
        batch: &[ClipSample],
        mut build: impl FnMut(&ClipSample) -> Result<Tensor<f32>>,
    ) -> Result<Tensor<f32>> {
        let mut total: Option<Tensor<f32>> = None;
        for sample in batch {
            let term = build(sample)?;
            total = Some(match total {
                Some(acc) => acc.add(&term)?,
                None => term,
            });
        }
        let total = total.ok_or_else(|| Error::Contract("empty training batch".into()))?;
        Ok(total.mul_scalar(1.0 / batch.len() as f32))
    }

    /// One paradigm step: Assistant forward/backward/update, parameter copy,
    /// then Core forward/backward/update with the classifier frozen.
    pub fn train_step(&mut self, batch: &[ClipSample], lr: f64) -> Result<StepLosses> {
        let assistant_value = if self.model.assistant.is_some() {
            self.model.zero_grads();
            let rng = &mut self.rng;
            let model = &self.model;
            let loss_cfg = &self.loss_cfg;
            let loss = Self::batch_loss(batch, |sample| {
                let g = sample.label_tensor();
                let y = model
                    .assistant
                    .as_ref()
                    .expect("assistant checked above")
                    .forward(&g, &mut Mode::Train(rng))?;
                assistant_loss(&y, &g, sample.loss_mask(), loss_cfg)
            })?;
            let value = Self::ensure_finite(&loss)?;
            loss.backward()?;
            let params = self.model.assistant_params();
            self.adam_assistant
                .as_mut()
                .expect("assistant optimizer exists")
                .step(&params, lr)?;
            self.model.copy_classifier_params()?;
            self.last_copy_snapshot = Some(self.vid_clas_values());
            Some(value)
        } else {
            None
        };

        self.model.zero_grads();
        let rng = &mut self.rng;
        let model = &self.model;
        let loss_cfg = &self.loss_cfg;
        let loss = Self::batch_loss(batch, |sample| {
            let tokens = sample.feature_tensor();
            let g = sample.label_tensor();
            let pred = model.core.forward(&tokens, &model.cfg, &mut Mode::Train(rng))?;
            let heads = pred.weighted_heads(&model.cfg);
            weighted_heads_loss(&heads, &g, sample.loss_mask(), loss_cfg)
        })?;
        let core_value = Self::ensure_finite(&loss)?;
        loss.backward()?;
        let params = self.model.core_params();
        self.adam_core.step(&params, lr)?;

        if let Some(snapshot) = &self.last_copy_snapshot {
            let now = self.vid_clas_values();
            let intact = snapshot.iter().zip(now.iter()).all(|(a, b)| {
                a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            });
            if !intact {
                return Err(Error::Contract(
                    "frozen video classifier changed during a core step".into(),
                ));
            }
        }
        self.steps_done += 1;
        Ok(StepLosses { assistant: assistant_value, core: core_value })
    }

    /// Full training run over the dataset's train split.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<Vec<StepRecord>> {
        let train_videos: Vec<&VideoRecord> = dataset.split(Split::Train).collect();
        if train_videos.is_empty() {
            return Err(Error::Config("dataset has no training videos".into()));
        }
        let t = self.model.cfg.t_train;
        let mut records = Vec::new();
        let mut step = 0usize;
        for epoch in 1..=self.train_cfg.epochs {
            let lr = lr_at_epoch(epoch, &self.train_cfg);
            let mut order: Vec<usize> = (0..train_videos.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.train_cfg.batch_size) {
                let batch: Vec<ClipSample> = chunk
                    .iter()
                    .map(|&i| sample_clip(train_videos[i], t, &mut self.rng))
                    .collect();
                let started = Instant::now();
                let losses = self.train_step(&batch, lr)?;
                step += 1;
                let record = StepRecord {
                    epoch,
                    step,
                    lr,
                    assistant_loss: losses.assistant.unwrap_or(f64::NAN),
                    core_loss: losses.core,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                };
                on_step(&record);
                records.push(record);
            }
        }
        Ok(records)
    }
}

/// Full-video inference: one Core pass over all tokens (relative-bias
/// clipping keeps lengths beyond the training window valid). The sequence is
/// right-padded with zeros to the next multiple of 2^F for the coarse
/// stage's stride chain and predictions are trimmed back.
pub fn infer_full_sequence(model: &Model<f32>, video: &FeatureSequence) -> Result<Vec<f32>> {
    let l = video.t;
    if l < 3 {
        return Err(Error::SequenceTooShort { len: l, min: 3 });
    }
    let padded_len = if model.cfg.coarse_enabled {
        let chunk = 1usize << model.cfg.branches;
        l.div_ceil(chunk) * chunk
    } else {
        l
    };
    let mut data = vec![0f32; padded_len * video.d];
    data[..l * video.d].copy_from_slice(&video.data);
    let tokens = Tensor::from_vec(vec![padded_len, video.d], data);
    let pred = model.core.forward(&tokens, &model.cfg, &mut Mode::Eval)?;
    let fused = pred.fused(&model.cfg)?;
    let out = fused.to_vec();
    Ok(out[..l * model.cfg.classes].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic, ClassProfile, SyntheticSpec};
    use crate::data::LabelGrid;
    use crate::net::NetworkConfig;

    fn tiny_spec(num_videos: usize, t: usize) -> SyntheticSpec {
        SyntheticSpec {
            num_videos,
            t_vid_min: t,
            t_vid_max: t,
            feature_dim: 32,
            max_concurrency: 3,
            classes: vec![
                ClassProfile { duration_min: 3, duration_max: 6 },
                ClassProfile { duration_min: 4, duration_max: 10 },
                ClassProfile { duration_min: 8, duration_max: 20 },
                ClassProfile { duration_min: 2, duration_max: 5 },
                ClassProfile { duration_min: 6, duration_max: 14 },
                ClassProfile { duration_min: 3, duration_max: 9 },
                ClassProfile { duration_min: 10, duration_max: 24 },
                ClassProfile { duration_min: 2, duration_max: 7 },
            ],
            co_occurrence: vec![],
            noise_sigma: 0.05,
            train_fraction: 1.0,
        }
    }

    fn tiny_dataset(seed: u64) -> Dataset {
        let corpus = generate_synthetic(&tiny_spec(4, 64), seed).unwrap();
        Dataset::from_videos(corpus.videos).unwrap()
    }

    fn desk_trainer(seed: u64) -> Trainer {
        let mut cfg = TrainConfig::desk();
        cfg.seed = seed;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let model = Model::new(NetworkConfig::desk(), &mut rng).unwrap();
        Trainer::new(model, cfg, LossConfig::default()).unwrap()
    }

    #[test]
    fn schedule_matches_the_paper_profile() {
        let cfg = TrainConfig::paper();
        assert_eq!(lr_at_epoch(1, &cfg), 1e-4);
        assert!((lr_at_epoch(8, &cfg) - 1e-5).abs() < 1e-18);
        assert!((lr_at_epoch(15, &cfg) - 1e-6).abs() < 1e-19);
    }

    #[test]
    fn whole_video_clip_when_lengths_match() {
        let ds = tiny_dataset(0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let clip = sample_clip(&ds.videos[0], 64, &mut rng);
        assert_eq!(clip.offset, 0);
        assert_eq!(clip.features, ds.videos[0].features.data);
        assert!(clip.mask.iter().all(|&m| m));
    }

    #[test]
    fn offsets_cover_the_valid_support() {
        let corpus = generate_synthetic(&tiny_spec(1, 70), 3).unwrap();
        let video = &corpus.videos[0];
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let clip = sample_clip(video, 64, &mut rng);
            assert!(clip.offset <= 6);
            seen.insert(clip.offset);
        }
        assert_eq!(seen.len(), 7, "every offset in [0, 6] should occur");
    }

    #[test]
    fn clip_rows_stay_aligned_with_the_source() {
        let corpus = generate_synthetic(&tiny_spec(1, 90), 5).unwrap();
        let video = &corpus.videos[0];
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let clip = sample_clip(video, 64, &mut rng);
        for row in 0..64 {
            assert_eq!(
                &clip.features[row * 32..(row + 1) * 32],
                video.features.row(row + clip.offset)
            );
            for j in 0..8 {
                assert_eq!(clip.labels[row * 8 + j], video.labels.get(row + clip.offset, j) as f32);
            }
        }
    }

    #[test]
    fn short_videos_are_padded_and_masked() {
        let corpus = generate_synthetic(&tiny_spec(1, 40), 7).unwrap();
        let video = &corpus.videos[0];
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let clip = sample_clip(video, 64, &mut rng);
        assert_eq!(clip.offset, 0);
        assert!(clip.mask[..40].iter().all(|&m| m));
        assert!(clip.mask[40..].iter().all(|&m| !m));
        assert!(clip.features[40 * 32..].iter().all(|&v| v == 0.0));
        assert!(clip.loss_mask().is_some());
    }

    #[test]
    fn losses_are_finite_and_nonnegative() {
        let ds = tiny_dataset(9);
        let mut trainer = desk_trainer(9);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let batch = vec![sample_clip(&ds.videos[0], 64, &mut rng)];
        let losses = trainer.train_step(&batch, 1e-3).unwrap();
        let a = losses.assistant.unwrap();
        assert!(a.is_finite() && a >= 0.0);
        assert!(losses.core.is_finite() && losses.core >= 0.0);
    }

    #[test]
    fn classifier_stays_bitwise_at_the_copy_snapshot() {
        let ds = tiny_dataset(11);
        let mut trainer = desk_trainer(11);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..5 {
            let batch = vec![sample_clip(&ds.videos[0], 64, &mut rng)];
            trainer.train_step(&batch, 1e-3).unwrap();
            let snapshot = trainer.last_copy_snapshot.clone().unwrap();
            let now = trainer.vid_clas_values();
            for (a, b) in snapshot.iter().zip(now.iter()) {
                assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            // the assistant classifier equals the copy right after the step
            // (the core step never touches it)
            let asst: Vec<Vec<f32>> = trainer
                .model
                .assistant
                .as_ref()
                .unwrap()
                .clas
                .params()
                .iter()
                .map(|p| p.data_vec())
                .collect();
            assert_eq!(asst, now);
        }
    }

    #[test]
    fn successive_copies_track_a_moving_assistant() {
        let ds = tiny_dataset(13);
        let mut trainer = desk_trainer(13);
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let batch = vec![sample_clip(&ds.videos[0], 64, &mut rng)];
        trainer.train_step(&batch, 1e-2).unwrap();
        let first = trainer.vid_clas_values();
        let batch = vec![sample_clip(&ds.videos[1], 64, &mut rng)];
        trainer.train_step(&batch, 1e-2).unwrap();
        let second = trainer.vid_clas_values();
        assert_ne!(first, second, "the copy should move with assistant training");
    }

    #[test]
    fn disabled_assistant_trains_the_classifier() {
        let ds = tiny_dataset(15);
        let mut net_cfg = NetworkConfig::desk();
        net_cfg.assistant_enabled = false;
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let model = Model::new(net_cfg, &mut rng).unwrap();
        let before: Vec<Vec<f32>> =
            model.core.clas.params().iter().map(|p| p.data_vec()).collect();
        let mut trainer = Trainer::new(model, TrainConfig::desk(), LossConfig::default()).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(16);
        let batch = vec![sample_clip(&ds.videos[0], 64, &mut rng2)];
        let losses = trainer.train_step(&batch, 1e-2).unwrap();
        assert!(losses.assistant.is_none());
        // gradient reached the classifier and the optimizer moved it
        let grads_nonzero = trainer
            .model
            .core
            .clas
            .params()
            .iter()
            .any(|p| p.grad().map(|g| g.iter().any(|v| *v != 0.0)).unwrap_or(false));
        assert!(grads_nonzero);
        let after: Vec<Vec<f32>> =
            trainer.model.core.clas.params().iter().map(|p| p.data_vec()).collect();
        assert_ne!(before, after);
    }

    #[test]
    fn nan_parameters_abort_with_a_diagnostic() {
        let ds = tiny_dataset(17);
        let mut trainer = desk_trainer(17);
        // poison one fine-stage weight
        let params = trainer.model.core_params();
        let victim = params.iter().find(|p| p.name() == "core.fine.conv.weight").unwrap();
        let mut data = victim.data_vec();
        data[0] = f32::NAN;
        victim.set_data(data);
        let mut rng = ChaCha20Rng::seed_from_u64(18);
        let batch = vec![sample_clip(&ds.videos[0], 64, &mut rng)];
        match trainer.train_step(&batch, 1e-3) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "leaf"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn smoothed_core_loss_decreases_over_200_steps() {
        let ds = tiny_dataset(19);
        let mut trainer = desk_trainer(19);
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let mut core_losses = Vec::new();
        for _ in 0..200 {
            let idx = rng.gen_range(0..ds.videos.len());
            let batch = vec![sample_clip(&ds.videos[idx], 64, &mut rng)];
            let losses = trainer.train_step(&batch, 1e-3).unwrap();
            core_losses.push(losses.core);
        }
        let head: f64 = core_losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = core_losses[180..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "smoothed loss went {head:.4} -> {tail:.4}");
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_runs() {
        let ds = tiny_dataset(21);
        let collect = |seed: u64| -> Vec<Vec<f32>> {
            let mut trainer = desk_trainer(seed);
            let mut cfg = trainer.train_cfg.clone();
            cfg.epochs = 3;
            trainer.train_cfg = cfg;
            trainer.run(&ds, |_| {}).unwrap();
            trainer.model.parameters().iter().map(|p| p.data_vec()).collect()
        };
        let a = collect(22);
        let b = collect(22);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn full_sequence_inference_handles_odd_lengths() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let model = Model::new(NetworkConfig::desk(), &mut rng).unwrap();
        for l in [64usize, 100, 300] {
            let data: Vec<f32> = (0..l * 32).map(|i| ((i * 37 % 113) as f32) / 113.0 - 0.5).collect();
            let video = FeatureSequence::new("v", l, 32, data).unwrap();
            let y = infer_full_sequence(&model, &video).unwrap();
            assert_eq!(y.len(), l * 8, "length {l}");
            assert!(y.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
            let y2 = infer_full_sequence(&model, &video).unwrap();
            assert_eq!(y, y2, "inference must be deterministic");
        }
    }

    #[test]
    fn too_short_videos_are_rejected_at_inference() {
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let model = Model::new(NetworkConfig::desk(), &mut rng).unwrap();
        let video = FeatureSequence::new("v", 2, 32, vec![0.0; 64]).unwrap();
        assert!(matches!(
            infer_full_sequence(&model, &video),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn training_labels_survive_grid_round_trip() {
        // guard against f32 label conversion drifting from the byte grid
        let grid = LabelGrid::new(2, 3, vec![1, 0, 1, 0, 1, 0]).unwrap();
        let video = VideoRecord::new(
            "v",
            FeatureSequence::new("v", 2, 4, vec![0.5; 8]).unwrap(),
            grid,
            Split::Train,
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        let clip = sample_clip(&video, 2, &mut rng);
        assert_eq!(clip.labels, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
