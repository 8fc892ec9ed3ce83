//! The two-branch detection network.
//!
//! The Assistant branch autoencodes ground-truth label grids (ML-Rel +
//! ML-CLAS) to learn class co-occurrence structure. The Core branch detects
//! actions from video tokens through a full-resolution fine stage, a
//! non-hierarchical multi-scale coarse stage, and a shared k=1 classifier
//! whose parameters are copied from the Assistant's classifier and frozen.
//! Only the Core branch runs at inference.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{sinusoidal_encoding, Activation, Conv1dLayer, LayerNormLayer, Mode};
use crate::rpt::{RptConfig, RptStack};
use crate::tensor::{Parameter, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalEncoding {
    /// No positional information (ablation).
    None,
    /// Sinusoidal encoding added to the input tokens (ablation).
    Absolute,
    /// Per-head relative embeddings inside every attention layer.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseWiring {
    /// Every granularity branch reads the same full-resolution features and
    /// subsamples once.
    NonHierarchical,
    /// Each branch reads the previous branch's output (chained subsampling).
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Tokens per training clip.
    pub t_train: usize,
    /// Input token dimension.
    pub d_in: usize,
    /// Number of action classes.
    pub classes: usize,
    /// Assistant internal width; must equal `d_star` for the parameter copy.
    pub c_star: usize,
    /// Core internal width.
    pub d_star: usize,
    /// RPT blocks per stage.
    pub blocks: usize,
    /// Attention heads.
    pub heads: usize,
    /// Granularity branches in the coarse stage.
    pub branches: usize,
    pub alpha_fine: f64,
    pub alpha_coarse: f64,
    pub r_clip: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub positional: PositionalEncoding,
    pub coarse_wiring: CoarseWiring,
    pub assistant_enabled: bool,
    pub fine_enabled: bool,
    pub coarse_enabled: bool,
    pub share_rel_tables: bool,
}

impl NetworkConfig {
    /// Desk-scale defaults: every structural ratio of the full-size network
    /// at a size a laptop can train in seconds.
    pub fn desk() -> Self {
        NetworkConfig {
            t_train: 64,
            d_in: 32,
            classes: 8,
            c_star: 16,
            d_star: 16,
            blocks: 2,
            heads: 4,
            branches: 3,
            alpha_fine: 0.7,
            alpha_coarse: 0.3,
            r_clip: 32,
            dropout: 0.1,
            activation: Activation::Gelu,
            positional: PositionalEncoding::Relative,
            coarse_wiring: CoarseWiring::NonHierarchical,
            assistant_enabled: true,
            fine_enabled: true,
            coarse_enabled: true,
            share_rel_tables: false,
        }
    }

    /// Full-size preset: 157 classes over 1024-dim tokens.
    pub fn paper() -> Self {
        NetworkConfig {
            t_train: 256,
            d_in: 1024,
            classes: 157,
            c_star: 512,
            d_star: 512,
            blocks: 3,
            heads: 8,
            branches: 3,
            alpha_fine: 0.1,
            alpha_coarse: 0.9,
            r_clip: 128,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_star != self.d_star {
            return Err(Error::Config(format!(
                "classifier copy requires c_star == d_star, got {} vs {}",
                self.c_star, self.d_star
            )));
        }
        if (self.alpha_fine + self.alpha_coarse - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "alpha_fine + alpha_coarse must equal 1, got {} + {}",
                self.alpha_fine, self.alpha_coarse
            )));
        }
        if self.heads == 0 || !self.d_star.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_star {} must be divisible by heads {}",
                self.d_star, self.heads
            )));
        }
        if self.blocks == 0 {
            return Err(Error::Config("at least one RPT block per stage".into()));
        }
        if self.classes == 0 || self.d_in == 0 {
            return Err(Error::Config("classes and d_in must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.t_train < 3 {
            return Err(Error::Config("training clips need at least 3 tokens".into()));
        }
        if self.coarse_enabled {
            if self.branches == 0 {
                return Err(Error::Config("coarse stage needs at least one branch".into()));
            }
            let chunk = 1usize << self.branches;
            if !self.t_train.is_multiple_of(chunk) {
                return Err(Error::Config(format!(
                    "t_train {} must be divisible by 2^branches = {}",
                    self.t_train, chunk
                )));
            }
        }
        if self.assistant_enabled && !self.fine_enabled && !self.coarse_enabled {
            return Err(Error::Config(
                "with fine and coarse stages disabled the classifier reads raw tokens; \
                 the assistant copy has no matching shape — disable the assistant"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn rpt_cfg(&self) -> RptConfig {
        RptConfig {
            dim: self.d_star,
            heads: self.heads,
            r_clip: self.r_clip,
            dropout: self.dropout,
            activation: self.activation,
            relative_bias: self.positional == PositionalEncoding::Relative,
        }
    }

    /// Input width of the shared classifier.
    fn clas_in_dim(&self) -> usize {
        if self.fine_enabled || self.coarse_enabled {
            self.d_star
        } else {
            self.d_in
        }
    }

    /// Input width of the coarse stage.
    fn coarse_in_dim(&self) -> usize {
        if self.fine_enabled {
            self.d_star
        } else {
            self.d_in
        }
    }
}

/// Stage entry: Conv(k=3) → Nrm → B RPT blocks.
pub struct Stage<F: Real = f32> {
    pub conv: Conv1dLayer<F>,
    pub norm: LayerNormLayer<F>,
    pub rpt: RptStack<F>,
}

impl<F: Real> Stage<F> {
    fn new(
        name: &str,
        c_in: usize,
        stride: usize,
        cfg: &NetworkConfig,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        Ok(Stage {
            conv: Conv1dLayer::new(&format!("{name}.conv"), 3, c_in, cfg.d_star, stride, 1, rng),
            norm: LayerNormLayer::new(&format!("{name}.norm"), cfg.d_star),
            rpt: RptStack::new(name, cfg.blocks, &cfg.rpt_cfg(), cfg.share_rel_tables, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        if x.rows() < 3 {
            return Err(Error::SequenceTooShort { len: x.rows(), min: 3 });
        }
        let h = self.conv.forward(x)?;
        let h = self.norm.forward(&h)?;
        self.rpt.forward(&h, mode)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = self.conv.params();
        out.extend(self.norm.params());
        out.extend(self.rpt.params());
        out
    }
}

/// Label autoencoder: ML-Rel stage plus the k=1 ML-CLAS decoder.
pub struct AssistantBranch<F: Real = f32> {
    pub stage: Stage<F>,
    pub clas: Conv1dLayer<F>,
}

impl<F: Real> AssistantBranch<F> {
    fn new(cfg: &NetworkConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        Ok(AssistantBranch {
            stage: Stage::new("assistant.ml_rel", cfg.classes, 1, cfg, rng)?,
            clas: Conv1dLayer::new("assistant.clas", 1, cfg.c_star, cfg.classes, 1, 0, rng),
        })
    }

    /// ML-Rel: encode a T×C label grid into T×C* relation features.
    pub fn ml_rel(&self, g: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        self.stage.forward(g, mode)
    }

    /// ML-CLAS: decode relation features back to class probabilities.
    pub fn ml_clas(&self, g_hat: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.clas.forward(g_hat)?.sigmoid())
    }

    pub fn forward(&self, g: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let g_hat = self.ml_rel(g, mode)?;
        self.ml_clas(&g_hat)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = self.stage.params();
        out.extend(self.clas.params());
        out
    }
}

/// Multi-scale coarse stage with F granularity branches.
pub struct CoarseDet<F: Real = f32> {
    pub branches: Vec<Stage<F>>,
    wiring: CoarseWiring,
}

impl<F: Real> CoarseDet<F> {
    fn new(cfg: &NetworkConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        let mut branches = Vec::with_capacity(cfg.branches);
        for i in 1..=cfg.branches {
            let (c_in, stride) = match cfg.coarse_wiring {
                // branch i reads the shared fine features at stride 2^i
                CoarseWiring::NonHierarchical => (cfg.coarse_in_dim(), 1usize << i),
                // chained: each branch halves the previous branch's output
                CoarseWiring::Hierarchical => {
                    (if i == 1 { cfg.coarse_in_dim() } else { cfg.d_star }, 2)
                }
            };
            branches.push(Stage::new(&format!("core.coarse.b{i}"), c_in, stride, cfg, rng)?);
        }
        Ok(CoarseDet { branches, wiring: cfg.coarse_wiring })
    }

    /// Per-branch outputs at their native scales, before upsampling and
    /// summation. Exposed so the wiring can be checked structurally.
    pub fn branch_outputs(&self, x: &Tensor<F>, mode: &mut Mode) -> Result<Vec<Tensor<F>>> {
        let min_len = 1usize << self.branches.len();
        if x.rows() < min_len {
            return Err(Error::SequenceTooShort { len: x.rows(), min: min_len });
        }
        let mut outputs = Vec::with_capacity(self.branches.len());
        for (i, branch) in self.branches.iter().enumerate() {
            let input = match self.wiring {
                CoarseWiring::NonHierarchical => x,
                CoarseWiring::Hierarchical => {
                    if i == 0 {
                        x
                    } else {
                        &outputs[i - 1]
                    }
                }
            };
            outputs.push(branch.forward(input, mode)?);
        }
        Ok(outputs)
    }

    /// Upsampled sum of all branch outputs at the input resolution.
    pub fn forward(&self, x: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let target = x.rows();
        let outputs = self.branch_outputs(x, mode)?;
        let mut total: Option<Tensor<F>> = None;
        for out in &outputs {
            let up = out.upsample_linear(target)?;
            total = Some(match total {
                Some(acc) => acc.add(&up)?,
                None => up,
            });
        }
        Ok(total.unwrap())
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        self.branches.iter().flat_map(|b| b.params()).collect()
    }
}

/// Head probabilities produced by one Core forward pass.
pub struct CorePrediction<F: Real = f32> {
    pub y_fine: Option<Tensor<F>>,
    pub y_coarse: Option<Tensor<F>>,
    /// Raw-token probe used when both stages are disabled.
    pub y_direct: Option<Tensor<F>>,
}

impl<F: Real> CorePrediction<F> {
    /// Heads entering the loss, with their weights. With both stages present
    /// these are the configured fusion weights; a lone head gets weight 1.
    pub fn weighted_heads(&self, cfg: &NetworkConfig) -> Vec<(f64, &Tensor<F>)> {
        match (&self.y_fine, &self.y_coarse, &self.y_direct) {
            (Some(f), Some(c), _) => vec![(cfg.alpha_fine, f), (cfg.alpha_coarse, c)],
            (Some(f), None, _) => vec![(1.0, f)],
            (None, Some(c), _) => vec![(1.0, c)],
            (None, None, Some(d)) => vec![(1.0, d)],
            (None, None, None) => vec![],
        }
    }

    /// Final probabilities: the weighted fusion when both heads exist,
    /// otherwise the lone head.
    pub fn fused(&self, cfg: &NetworkConfig) -> Result<Tensor<F>> {
        match (&self.y_fine, &self.y_coarse, &self.y_direct) {
            (Some(f), Some(c), _) => fuse_predictions(f, c, cfg.alpha_fine, cfg.alpha_coarse),
            (Some(f), None, _) => Ok(f.clone()),
            (None, Some(c), _) => Ok(c.clone()),
            (None, None, Some(d)) => Ok(d.clone()),
            (None, None, None) => Err(Error::Contract("core produced no prediction head".into())),
        }
    }
}

/// Weighted fusion of the fine and coarse probability heads.
pub fn fuse_predictions<F: Real>(
    y_fine: &Tensor<F>,
    y_coarse: &Tensor<F>,
    alpha_fine: f64,
    alpha_coarse: f64,
) -> Result<Tensor<F>> {
    if (alpha_fine + alpha_coarse - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "fusion weights must sum to 1, got {alpha_fine} + {alpha_coarse}"
        )));
    }
    y_fine
        .mul_scalar(F::c(alpha_fine))
        .add(&y_coarse.mul_scalar(F::c(alpha_coarse)))
}

/// Video detector: Fine-Det, Coarse-Det and the shared frozen classifier.
pub struct CoreBranch<F: Real = f32> {
    pub fine: Option<Stage<F>>,
    pub coarse: Option<CoarseDet<F>>,
    pub clas: Conv1dLayer<F>,
}

impl<F: Real> CoreBranch<F> {
    fn new(cfg: &NetworkConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        let fine = if cfg.fine_enabled {
            Some(Stage::new("core.fine", cfg.d_in, 1, cfg, rng)?)
        } else {
            None
        };
        let coarse = if cfg.coarse_enabled { Some(CoarseDet::new(cfg, rng)?) } else { None };
        Ok(CoreBranch {
            fine,
            coarse,
            clas: Conv1dLayer::new("core.clas", 1, cfg.clas_in_dim(), cfg.classes, 1, 0, rng),
        })
    }

    /// Fine-Det: full-resolution features for the coarse stage and classifier.
    pub fn fine_det(&self, tokens: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let stage = self
            .fine
            .as_ref()
            .ok_or_else(|| Error::Contract("fine stage is disabled".into()))?;
        stage.forward(tokens, mode)
    }

    /// Coarse-Det: multi-scale summary at the input resolution.
    pub fn coarse_det(&self, fine_feats: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let coarse = self
            .coarse
            .as_ref()
            .ok_or_else(|| Error::Contract("coarse stage is disabled".into()))?;
        coarse.forward(fine_feats, mode)
    }

    /// Vid-CLAS: the shared k=1 classifier, applied to fine and coarse
    /// features alike.
    pub fn vid_clas(&self, feats: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.clas.forward(feats)?.sigmoid())
    }

    pub fn forward(
        &self,
        tokens: &Tensor<F>,
        cfg: &NetworkConfig,
        mode: &mut Mode,
    ) -> Result<CorePrediction<F>> {
        let tokens = match cfg.positional {
            PositionalEncoding::Absolute => {
                tokens.add(&sinusoidal_encoding(tokens.rows(), tokens.cols()))?
            }
            _ => tokens.clone(),
        };
        let fine_out = match &self.fine {
            Some(stage) => Some(stage.forward(&tokens, mode)?),
            None => None,
        };
        let coarse_in = fine_out.as_ref().unwrap_or(&tokens);
        let coarse_out = match &self.coarse {
            Some(coarse) => Some(coarse.forward(coarse_in, mode)?),
            None => None,
        };
        let y_fine = match &fine_out {
            Some(f) => Some(self.vid_clas(f)?),
            None => None,
        };
        let y_coarse = match &coarse_out {
            Some(c) => Some(self.vid_clas(c)?),
            None => None,
        };
        let y_direct = if fine_out.is_none() && coarse_out.is_none() {
            Some(self.vid_clas(&tokens)?)
        } else {
            None
        };
        Ok(CorePrediction { y_fine, y_coarse, y_direct })
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = Vec::new();
        if let Some(f) = &self.fine {
            out.extend(f.params());
        }
        if let Some(c) = &self.coarse {
            out.extend(c.params());
        }
        out.extend(self.clas.params());
        out
    }
}

/// All learnable state of both branches.
pub struct Model<F: Real = f32> {
    pub cfg: NetworkConfig,
    pub assistant: Option<AssistantBranch<F>>,
    pub core: CoreBranch<F>,
}

impl<F: Real> Model<F> {
    pub fn new(cfg: NetworkConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let assistant =
            if cfg.assistant_enabled { Some(AssistantBranch::new(&cfg, rng)?) } else { None };
        let core = CoreBranch::new(&cfg, rng)?;
        let model = Model { cfg, assistant, core };
        if model.assistant.is_some() {
            // Freeze the video classifier for the whole run and start it from
            // the assistant's weights so the two never diverge.
            for p in model.core.clas.params() {
                p.set_frozen(true);
            }
            model.copy_classifier_params()?;
        }
        Ok(model)
    }

    /// Copies ML-CLAS weights into Vid-CLAS, bitwise.
    pub fn copy_classifier_params(&self) -> Result<()> {
        let assistant = self
            .assistant
            .as_ref()
            .ok_or_else(|| Error::Contract("assistant branch is disabled; nothing to copy".into()))?;
        let src = assistant.clas.params();
        let dst = self.core.clas.params();
        for (s, d) in src.iter().zip(dst.iter()) {
            if s.shape() != d.shape() {
                return Err(Error::Config(format!(
                    "classifier copy shape mismatch: {} {:?} vs {} {:?} (c_star must equal d_star)",
                    s.name(),
                    s.shape(),
                    d.name(),
                    d.shape()
                )));
            }
            d.set_data(s.data_vec());
        }
        Ok(())
    }

    pub fn assistant_params(&self) -> Vec<&Parameter<F>> {
        self.assistant.as_ref().map(|a| a.params()).unwrap_or_default()
    }

    pub fn core_params(&self) -> Vec<&Parameter<F>> {
        self.core.params()
    }

    pub fn parameters(&self) -> Vec<&Parameter<F>> {
        let mut out = self.assistant_params();
        out.extend(self.core_params());
        out
    }

    pub fn zero_grads(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn desk_model(seed: u64) -> Model<f32> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Model::new(NetworkConfig::desk(), &mut rng).unwrap()
    }

    fn rand_mat32(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f32) -> Tensor<f32> {
        Tensor::from_vec(
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
        )
    }

    fn zero_params(params: &[&Parameter<f32>]) {
        for p in params {
            p.set_data(vec![0.0; p.numel()]);
        }
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut bad = NetworkConfig::desk();
        bad.c_star = 8;
        assert!(bad.validate().is_err());

        let mut bad = NetworkConfig::desk();
        bad.alpha_fine = 0.5;
        bad.alpha_coarse = 0.6;
        assert!(bad.validate().is_err());

        let mut bad = NetworkConfig::desk();
        bad.t_train = 60; // not divisible by 2^3
        assert!(bad.validate().is_err());

        let mut bad = NetworkConfig::desk();
        bad.fine_enabled = false;
        bad.coarse_enabled = false;
        assert!(bad.validate().is_err()); // assistant copy has no matching shape
        bad.assistant_enabled = false;
        assert!(bad.validate().is_ok());
    }

    #[test]
    fn paper_dims_flow_through_both_branches() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let cfg = NetworkConfig::paper();
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();

        // ML-Rel: 256×157 -> 256×512, then ML-CLAS back to 256×157 in (0,1)
        let g = Tensor::<f32>::zeros(vec![256, 157]);
        let g_hat = model.assistant.as_ref().unwrap().ml_rel(&g, &mut Mode::Eval).unwrap();
        assert_eq!(g_hat.shape(), &[256, 512]);
        assert!(g_hat.to_vec().iter().all(|v| v.is_finite()));
        let y_star = model.assistant.as_ref().unwrap().ml_clas(&g_hat).unwrap();
        assert_eq!(y_star.shape(), &[256, 157]);
        assert!(y_star.to_vec().iter().all(|v| *v > 0.0 && *v < 1.0));

        // Fine-Det: 256×1024 -> 256×512
        let tokens = rand_mat32(&mut rng, 256, 1024, 0.5);
        let fine = model.core.fine_det(&tokens, &mut Mode::Eval).unwrap();
        assert_eq!(fine.shape(), &[256, 512]);

        // Coarse-Det branch lengths 128/64/32, output back at 256×512
        let outs = model.core.coarse.as_ref().unwrap().branch_outputs(&fine, &mut Mode::Eval).unwrap();
        assert_eq!(outs[0].rows(), 128);
        assert_eq!(outs[1].rows(), 64);
        assert_eq!(outs[2].rows(), 32);
        let coarse = model.core.coarse_det(&fine, &mut Mode::Eval).unwrap();
        assert_eq!(coarse.shape(), &[256, 512]);

        // Vid-CLAS on both feature kinds
        let y = model.core.vid_clas(&coarse).unwrap();
        assert_eq!(y.shape(), &[256, 157]);
    }

    #[test]
    fn ml_rel_gradients_reach_conv_and_every_block() {
        let model = desk_model(1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let t = 16;
        let gdata: Vec<f32> = (0..t * 8).map(|_| f32::from(rng.gen_bool(0.3) as u8)).collect();
        let g = Tensor::from_vec(vec![t, 8], gdata);
        let assistant = model.assistant.as_ref().unwrap();
        model.zero_grads();
        let y = assistant.forward(&g, &mut Mode::Eval).unwrap();
        y.sum().backward().unwrap();
        for p in assistant.params() {
            let grad = p.grad().unwrap_or_default();
            assert!(
                grad.iter().any(|v| *v != 0.0),
                "no gradient reached {}",
                p.name()
            );
        }
    }

    #[test]
    fn ml_rel_rejects_too_short_sequences() {
        let model = desk_model(1);
        let g = Tensor::<f32>::zeros(vec![2, 8]);
        let err = model.assistant.as_ref().unwrap().ml_rel(&g, &mut Mode::Eval);
        assert!(matches!(err, Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn ml_clas_with_zero_weights_outputs_half() {
        let model = desk_model(3);
        let assistant = model.assistant.as_ref().unwrap();
        zero_params(&assistant.clas.params());
        let feats = rand_mat32(&mut ChaCha20Rng::seed_from_u64(4), 10, 16, 1.0);
        let y = assistant.ml_clas(&feats).unwrap();
        assert!(y.to_vec().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn ml_clas_is_per_timestep_local() {
        let model = desk_model(5);
        let assistant = model.assistant.as_ref().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let base = rand_mat32(&mut rng, 8, 16, 1.0);
        let y0 = assistant.ml_clas(&base).unwrap().to_vec();
        let mut perturbed = base.to_vec();
        for v in &mut perturbed[3 * 16..4 * 16] {
            *v += 0.5;
        }
        let y1 = assistant.ml_clas(&Tensor::from_vec(vec![8, 16], perturbed)).unwrap().to_vec();
        for t in 0..8 {
            let changed = y0[t * 8..(t + 1) * 8] != y1[t * 8..(t + 1) * 8];
            assert_eq!(changed, t == 3, "timestep {t}");
        }
    }

    #[test]
    fn fine_det_preserves_length_and_is_deterministic_in_eval() {
        let model = desk_model(7);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for t in [3usize, 5, 17, 64] {
            let x = rand_mat32(&mut rng, t, 32, 1.0);
            let y = model.core.fine_det(&x, &mut Mode::Eval).unwrap();
            assert_eq!(y.shape(), &[t, 16]);
            let y2 = model.core.fine_det(&x, &mut Mode::Eval).unwrap();
            assert_eq!(y.to_vec(), y2.to_vec());
        }
    }

    #[test]
    fn coarse_det_zero_input_zero_biases_gives_zero() {
        // biases and tables are zero-initialized; only weights are random
        let model = desk_model(9);
        let zero = Tensor::<f32>::zeros(vec![64, 16]);
        let y = model.core.coarse_det(&zero, &mut Mode::Eval).unwrap();
        assert!(y.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_branch_coarse_config_works() {
        let mut cfg = NetworkConfig::desk();
        cfg.branches = 1;
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let x = rand_mat32(&mut rng, 64, 32, 1.0);
        let pred = model.core.forward(&x, &cfg, &mut Mode::Eval).unwrap();
        assert_eq!(pred.y_coarse.unwrap().shape(), &[64, 8]);
    }

    #[test]
    fn vid_clas_is_shared_between_heads() {
        let model = desk_model(11);
        // exactly one classifier parameter pair lives in the core
        let clas_params: Vec<_> = model
            .core_params()
            .into_iter()
            .filter(|p| p.name().starts_with("core.clas"))
            .collect();
        assert_eq!(clas_params.len(), 2);
        // identical features give identical probabilities on both call sites
        let feats = rand_mat32(&mut ChaCha20Rng::seed_from_u64(12), 6, 16, 1.0);
        let a = model.core.vid_clas(&feats).unwrap().to_vec();
        let b = model.core.vid_clas(&feats).unwrap().to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn classifier_copy_is_bitwise() {
        let model = desk_model(13);
        let assistant = model.assistant.as_ref().unwrap();
        // diverge the assistant weights, then copy
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        for p in assistant.clas.params() {
            p.set_data((0..p.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        model.copy_classifier_params().unwrap();
        for (s, d) in assistant.clas.params().iter().zip(model.core.clas.params().iter()) {
            let sv = s.data_vec();
            let dv = d.data_vec();
            assert_eq!(sv, dv, "copy not bitwise for {}", d.name());
        }
        assert!(model.core.clas.params().iter().all(|p| p.frozen()));
    }

    #[test]
    fn assistant_disabled_leaves_classifier_unfrozen() {
        let mut cfg = NetworkConfig::desk();
        cfg.assistant_enabled = false;
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let model = Model::<f32>::new(cfg, &mut rng).unwrap();
        assert!(model.assistant.is_none());
        assert!(model.core.clas.params().iter().all(|p| !p.frozen()));
        assert!(model.copy_classifier_params().is_err());
    }

    #[test]
    fn fusion_weights_behave() {
        let yf = Tensor::<f32>::from_vec(vec![1, 2], vec![0.2, 0.4]);
        let yc = Tensor::<f32>::from_vec(vec![1, 2], vec![0.8, 0.4]);
        let all_fine = fuse_predictions(&yf, &yc, 1.0, 0.0).unwrap();
        assert_eq!(all_fine.to_vec(), yf.to_vec());
        let mix = fuse_predictions(&yf, &yc, 0.5, 0.5).unwrap();
        assert!((mix.to_vec()[0] - 0.5).abs() < 1e-6);
        assert!(matches!(fuse_predictions(&yf, &yc, 0.5, 0.6), Err(Error::Config(_))));
    }

    #[test]
    fn paper_profile_fusion_weights() {
        let cfg = NetworkConfig::paper();
        assert!((cfg.alpha_fine - 0.1).abs() < 1e-12);
        assert!((cfg.alpha_coarse - 0.9).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn non_hierarchical_branches_are_independent() {
        let model = desk_model(16);
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let fine = rand_mat32(&mut rng, 64, 16, 1.0);
        let coarse = model.core.coarse.as_ref().unwrap();
        let baseline: Vec<Vec<f32>> = coarse
            .branch_outputs(&fine, &mut Mode::Eval)
            .unwrap()
            .iter()
            .map(|t| t.to_vec())
            .collect();
        for zeroed in 0..3 {
            let model2 = desk_model(16); // identical init
            let coarse2 = model2.core.coarse.as_ref().unwrap();
            zero_params(&coarse2.branches[zeroed].params());
            let outs = coarse2.branch_outputs(&fine, &mut Mode::Eval).unwrap();
            for (j, out) in outs.iter().enumerate() {
                if j == zeroed {
                    continue;
                }
                assert_eq!(
                    out.to_vec(),
                    baseline[j],
                    "zeroing branch {zeroed} changed branch {j}"
                );
            }
        }
    }

    #[test]
    fn hierarchical_branches_are_chained() {
        let mut cfg = NetworkConfig::desk();
        cfg.coarse_wiring = CoarseWiring::Hierarchical;
        let mut rng = ChaCha20Rng::seed_from_u64(18);
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(19);
        let fine = rand_mat32(&mut rng2, 64, 16, 1.0);
        let coarse = model.core.coarse.as_ref().unwrap();
        // lengths still halve per level
        let outs = coarse.branch_outputs(&fine, &mut Mode::Eval).unwrap();
        assert_eq!(outs[0].rows(), 32);
        assert_eq!(outs[1].rows(), 16);
        assert_eq!(outs[2].rows(), 8);
        let baseline: Vec<Vec<f32>> = outs.iter().map(|t| t.to_vec()).collect();
        // zeroing branch 0 must change downstream branches
        let mut rng3 = ChaCha20Rng::seed_from_u64(18);
        let model2 = Model::<f32>::new(cfg, &mut rng3).unwrap();
        let coarse2 = model2.core.coarse.as_ref().unwrap();
        zero_params(&coarse2.branches[0].params());
        let outs2 = coarse2.branch_outputs(&fine, &mut Mode::Eval).unwrap();
        for j in 1..3 {
            assert_ne!(outs2[j].to_vec(), baseline[j], "branch {j} did not react");
        }
    }

    #[test]
    fn disabled_fine_routes_tokens_to_coarse() {
        let mut cfg = NetworkConfig::desk();
        cfg.fine_enabled = false;
        cfg.assistant_enabled = true; // still valid: coarse provides d_star features
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let x = rand_mat32(&mut rng, 64, 32, 1.0);
        let pred = model.core.forward(&x, &cfg, &mut Mode::Eval).unwrap();
        assert!(pred.y_fine.is_none());
        assert_eq!(pred.y_coarse.unwrap().shape(), &[64, 8]);
    }

    #[test]
    fn disabled_both_uses_direct_probe() {
        let mut cfg = NetworkConfig::desk();
        cfg.fine_enabled = false;
        cfg.coarse_enabled = false;
        cfg.assistant_enabled = false;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let x = rand_mat32(&mut rng, 16, 32, 1.0);
        let pred = model.core.forward(&x, &cfg, &mut Mode::Eval).unwrap();
        assert!(pred.y_fine.is_none() && pred.y_coarse.is_none());
        let y = pred.y_direct.as_ref().unwrap();
        assert_eq!(y.shape(), &[16, 8]);
        let heads = pred.weighted_heads(&cfg);
        assert_eq!(heads.len(), 1);
        assert!((heads[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absolute_encoding_changes_core_outputs_only_when_selected() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let mut cfg = NetworkConfig::desk();
        cfg.positional = PositionalEncoding::None;
        let model = Model::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let x = rand_mat32(&mut rng, 64, 32, 0.5);
        let plain = model.core.forward(&x, &cfg, &mut Mode::Eval).unwrap();
        let mut abs_cfg = cfg.clone();
        abs_cfg.positional = PositionalEncoding::Absolute;
        let with_pe = model.core.forward(&x, &abs_cfg, &mut Mode::Eval).unwrap();
        assert_ne!(
            plain.y_fine.unwrap().to_vec(),
            with_pe.y_fine.unwrap().to_vec()
        );
    }
}
