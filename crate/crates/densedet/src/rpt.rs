//! Relative positional transformer (RPT) block: multi-head self-attention
//! with a query-dependent relative positional bias, followed by a local
//! relational (LR) refinement stack.
//!
//! The bias is P(n,m) = Σ_d Q(n,d)·Ω_d(n−m) with offsets clipped to ±R, so
//! sequences longer than the training length remain valid at inference.
//! Production attention computes it with the skewing trick (one N×(2R+1)
//! product plus an index re-alignment); [`relative_bias_direct`] is the
//! O(N²·D_h) reference kept as an oracle.

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::layers::{apply_dropout, Activation, Conv1dLayer, LayerNormLayer, LinearLayer, Mode};
use crate::tensor::ops_relative_bias;
use crate::tensor::{concat_cols, Parameter, Real, Tensor};

#[derive(Debug, Clone)]
pub struct RptConfig {
    /// Model width D of the token stream entering the block.
    pub dim: usize,
    /// Number of attention heads.
    pub heads: usize,
    /// Max relative distance kept distinct by the embedding tables.
    pub r_clip: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// When false the bias term is omitted (ablation modes).
    pub relative_bias: bool,
}

impl RptConfig {
    pub fn head_dim(&self) -> Result<usize> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(self.dim / self.heads)
    }
}

/// Per-head table of relative positional embeddings, one row per clipped
/// offset in [−R, +R].
pub struct RelativeEmbeddingTable<F: Real = f32> {
    pub omega: Parameter<F>,
    pub r_clip: usize,
}

impl<F: Real> RelativeEmbeddingTable<F> {
    /// Zero-initialized table: attention starts unbiased.
    pub fn new(name: &str, r_clip: usize, head_dim: usize) -> Self {
        let rows = 2 * r_clip + 1;
        RelativeEmbeddingTable {
            omega: Parameter::new(
                format!("{name}.omega"),
                vec![rows, head_dim],
                vec![F::zero(); rows * head_dim],
            ),
            r_clip,
        }
    }

    /// Table row index for query position `n` attending to position `m`.
    pub fn lookup_index(&self, n: usize, m: usize) -> usize {
        crate::tensor::rel_table_index(n, m, self.r_clip)
    }
}

/// Reference O(N²·D_h) bias. Kept deliberately naive; the skewed route is
/// validated against it.
pub fn relative_bias_direct<F: Real>(
    q: &Tensor<F>,
    table: &RelativeEmbeddingTable<F>,
) -> Result<Tensor<F>> {
    ops_relative_bias(q, table.omega.tensor(), table.r_clip, false)
}

/// Memory-efficient bias: one N×(2R+1) product followed by index
/// re-alignment, never materializing the N×N×D_h intermediate.
pub fn relative_bias_skewed<F: Real>(
    q: &Tensor<F>,
    table: &RelativeEmbeddingTable<F>,
) -> Result<Tensor<F>> {
    ops_relative_bias(q, table.omega.tensor(), table.r_clip, true)
}

/// Softmaxed attention rows for one head: softmax((q·kᵀ + P)/√D_h).
pub fn head_attention<F: Real>(
    q_h: &Tensor<F>,
    k_h: &Tensor<F>,
    table: Option<&RelativeEmbeddingTable<F>>,
    head_dim: usize,
) -> Result<Tensor<F>> {
    let mut scores = q_h.matmul_nt(k_h)?;
    if let Some(table) = table {
        scores = scores.add(&relative_bias_skewed(q_h, table)?)?;
    }
    let scale = F::one() / F::c(head_dim as f64).sqrt();
    scores.mul_scalar(scale).softmax_rows()
}

/// Pre-norm multi-head self-attention with relative positional bias and a
/// residual connection.
pub struct MultiHeadAttention<F: Real = f32> {
    pub norm: LayerNormLayer<F>,
    pub wq: LinearLayer<F>,
    pub wk: LinearLayer<F>,
    pub wv: LinearLayer<F>,
    pub wo: LinearLayer<F>,
    heads: usize,
    head_dim: usize,
    relative: bool,
}

impl<F: Real> MultiHeadAttention<F> {
    pub fn new(name: &str, cfg: &RptConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        let head_dim = cfg.head_dim()?;
        Ok(MultiHeadAttention {
            norm: LayerNormLayer::new(&format!("{name}.norm"), cfg.dim),
            wq: LinearLayer::new(&format!("{name}.wq"), cfg.dim, cfg.dim, rng),
            // A key bias shifts every score in a row uniformly, which row
            // softmax cancels; leave it out.
            wk: LinearLayer::new_no_bias(&format!("{name}.wk"), cfg.dim, cfg.dim, rng),
            wv: LinearLayer::new(&format!("{name}.wv"), cfg.dim, cfg.dim, rng),
            wo: LinearLayer::new(&format!("{name}.wo"), cfg.dim, cfg.dim, rng),
            heads: cfg.heads,
            head_dim,
            relative: cfg.relative_bias,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        tables: &[RelativeEmbeddingTable<F>],
    ) -> Result<Tensor<F>> {
        if x.shape().len() != 2 || x.cols() != self.heads * self.head_dim {
            return Err(Error::Contract(format!(
                "attention input shape {:?} does not match configured dim {}",
                x.shape(),
                self.heads * self.head_dim
            )));
        }
        if self.relative && tables.len() != self.heads {
            return Err(Error::Contract(format!(
                "expected {} relative tables, got {}",
                self.heads,
                tables.len()
            )));
        }
        let xn = self.norm.forward(x)?;
        let q = self.wq.forward(&xn)?;
        let k = self.wk.forward(&xn)?;
        let v = self.wv.forward(&xn)?;
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let q_h = q.slice_cols(h * self.head_dim, self.head_dim)?;
            let k_h = k.slice_cols(h * self.head_dim, self.head_dim)?;
            let v_h = v.slice_cols(h * self.head_dim, self.head_dim)?;
            let table = tables.get(h).filter(|_| self.relative);
            let attn = head_attention(&q_h, &k_h, table, self.head_dim)?;
            heads.push(attn.matmul(&v_h)?);
        }
        let concatenated = concat_cols(&heads)?;
        self.wo.forward(&concatenated)?.add(x)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = self.norm.params();
        out.extend(self.wq.params());
        out.extend(self.wk.params());
        out.extend(self.wv.params());
        out.extend(self.wo.params());
        out
    }
}

/// LR stack: Nrm, Linear, Conv(k=3, s=1), activation, Drp, Linear, Drp, with a
/// residual around the whole stack. Length-preserving.
pub struct LocalRelational<F: Real = f32> {
    pub norm: LayerNormLayer<F>,
    pub lin1: LinearLayer<F>,
    pub conv: Conv1dLayer<F>,
    pub lin2: LinearLayer<F>,
    dropout: f64,
    activation: Activation,
}

impl<F: Real> LocalRelational<F> {
    pub fn new(name: &str, cfg: &RptConfig, rng: &mut ChaCha20Rng) -> Self {
        LocalRelational {
            norm: LayerNormLayer::new(&format!("{name}.norm"), cfg.dim),
            lin1: LinearLayer::new(&format!("{name}.lin1"), cfg.dim, cfg.dim, rng),
            conv: Conv1dLayer::new(&format!("{name}.conv"), 3, cfg.dim, cfg.dim, 1, 1, rng),
            lin2: LinearLayer::new(&format!("{name}.lin2"), cfg.dim, cfg.dim, rng),
            dropout: cfg.dropout,
            activation: cfg.activation,
        }
    }

    pub fn forward(&self, x: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let mut h = self.norm.forward(x)?;
        h = self.lin1.forward(&h)?;
        h = self.conv.forward(&h)?;
        h = self.activation.apply(&h);
        h = apply_dropout(&h, self.dropout, mode)?;
        h = self.lin2.forward(&h)?;
        h = apply_dropout(&h, self.dropout, mode)?;
        h.add(x)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = self.norm.params();
        out.extend(self.lin1.params());
        out.extend(self.conv.params());
        out.extend(self.lin2.params());
        out
    }
}

pub struct RptBlock<F: Real = f32> {
    pub attn: MultiHeadAttention<F>,
    pub lr: LocalRelational<F>,
}

impl<F: Real> RptBlock<F> {
    pub fn new(name: &str, cfg: &RptConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        Ok(RptBlock {
            attn: MultiHeadAttention::new(&format!("{name}.attn"), cfg, rng)?,
            lr: LocalRelational::new(&format!("{name}.lr"), cfg, rng),
        })
    }

    pub fn forward(
        &self,
        x: &Tensor<F>,
        tables: &[RelativeEmbeddingTable<F>],
        mode: &mut Mode,
    ) -> Result<Tensor<F>> {
        let attended = self.attn.forward(x, tables)?;
        self.lr.forward(&attended, mode)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = self.attn.params();
        out.extend(self.lr.params());
        out
    }
}

/// B stacked RPT blocks. Relative tables default to one set per block; the
/// `share_tables` flag makes every block read the first set instead.
pub struct RptStack<F: Real = f32> {
    pub blocks: Vec<RptBlock<F>>,
    tables: Vec<Vec<RelativeEmbeddingTable<F>>>,
    shared: bool,
}

impl<F: Real> RptStack<F> {
    pub fn new(
        name: &str,
        depth: usize,
        cfg: &RptConfig,
        share_tables: bool,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        let head_dim = cfg.head_dim()?;
        let mut blocks = Vec::with_capacity(depth);
        for b in 0..depth {
            blocks.push(RptBlock::new(&format!("{name}.rpt{b}"), cfg, rng)?);
        }
        let table_sets = if !cfg.relative_bias {
            0
        } else if share_tables {
            1
        } else {
            depth
        };
        let tables = (0..table_sets)
            .map(|b| {
                (0..cfg.heads)
                    .map(|h| {
                        RelativeEmbeddingTable::new(
                            &format!("{name}.rpt{b}.head{h}"),
                            cfg.r_clip,
                            head_dim,
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(RptStack { blocks, tables, shared: share_tables })
    }

    pub fn tables_for(&self, block: usize) -> &[RelativeEmbeddingTable<F>] {
        if self.tables.is_empty() {
            &[]
        } else if self.shared {
            &self.tables[0]
        } else {
            &self.tables[block]
        }
    }

    pub fn forward(&self, x: &Tensor<F>, mode: &mut Mode) -> Result<Tensor<F>> {
        let mut h = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(&h, self.tables_for(i), mode)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = Vec::new();
        for set in &self.tables {
            for t in set {
                out.push(&t.omega);
            }
        }
        for b in &self.blocks {
            out.extend(b.params());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{check_params_gradient, finite_difference_check};
    use rand::{Rng, SeedableRng};

    fn cfg(dim: usize, heads: usize, r_clip: usize) -> RptConfig {
        RptConfig {
            dim,
            heads,
            r_clip,
            dropout: 0.1,
            activation: Activation::Gelu,
            relative_bias: true,
        }
    }

    fn table_from(values: &[f64], r_clip: usize, d_h: usize) -> RelativeEmbeddingTable<f64> {
        let t = RelativeEmbeddingTable::new("t", r_clip, d_h);
        t.omega.set_data(values.to_vec());
        t
    }

    fn rand_mat(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f64) -> Tensor<f64> {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor::from_vec(vec![rows, cols], data)
    }

    #[test]
    fn direct_bias_of_zero_queries_is_zero() {
        let q = Tensor::<f64>::zeros(vec![4, 2]);
        let t = table_from(&[1.0; 10], 2, 2);
        let p = relative_bias_direct(&q, &t).unwrap();
        assert!(p.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn direct_bias_hand_value() {
        // N=2, D_h=1, Q=[[1],[2]], omega(-1)=3, omega(0)=5, omega(1)=7
        let q = Tensor::<f64>::from_vec(vec![2, 1], vec![1.0, 2.0]);
        let t = table_from(&[3.0, 5.0, 7.0], 1, 1);
        let p = relative_bias_direct(&q, &t).unwrap();
        assert_eq!(p.to_vec(), vec![5.0, 3.0, 14.0, 10.0]);
    }

    #[test]
    fn equal_query_rows_give_equal_bias_at_equal_offsets() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let d_h = 3;
        let n = 8;
        let qrow: Vec<f64> = (0..d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut qdata = Vec::new();
        for _ in 0..n {
            qdata.extend_from_slice(&qrow);
        }
        let q = Tensor::from_vec(vec![n, d_h], qdata);
        let t = table_from(
            &(0..(2 * 3 + 1) * d_h).map(|i| (i as f64).sin()).collect::<Vec<_>>(),
            3,
            d_h,
        );
        let p = relative_bias_direct(&q, &t).unwrap().to_vec();
        for n1 in 0..n {
            for n2 in 0..n {
                for k in 0..=3usize {
                    if k <= n1 && k <= n2 {
                        let a = p[n1 * n + (n1 - k)];
                        let b = p[n2 * n + (n2 - k)];
                        assert!((a - b).abs() < 1e-12, "offset {k}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn skewed_equals_direct_on_random_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..10 {
            let n = rng.gen_range(1..=32);
            let d_h = rng.gen_range(1..=8);
            let r_clip = rng.gen_range(1..=16);
            let q = rand_mat(&mut rng, n, d_h, 2.0);
            let t = RelativeEmbeddingTable::new("t", r_clip, d_h);
            t.omega.set_data(
                (0..(2 * r_clip + 1) * d_h).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            );
            let direct = relative_bias_direct(&q, &t).unwrap().to_vec();
            let skewed = relative_bias_skewed(&q, &t).unwrap().to_vec();
            for (a, b) in direct.iter().zip(skewed.iter()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn skewed_bias_single_token() {
        let q = Tensor::<f64>::from_vec(vec![1, 2], vec![2.0, -1.0]);
        let t = table_from(&[0.5, 0.5, 3.0, 4.0, 0.25, 0.25], 1, 2);
        // N=1: only offset 0 is used -> q(0)·omega(0) = 2*3 + (-1)*4 = 2
        let p = relative_bias_skewed(&q, &t).unwrap();
        assert_eq!(p.shape(), &[1, 1]);
        assert!((p.item() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mhsa_output_shape_matches_paper_dims() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let c = cfg(512, 8, 16);
        let attn = MultiHeadAttention::<f32>::new("a", &c, &mut rng).unwrap();
        let tables: Vec<_> = (0..8).map(|h| RelativeEmbeddingTable::new(&format!("t{h}"), 16, 64)).collect();
        let x = Tensor::<f32>::from_vec(
            vec![64, 512],
            (0..64 * 512).map(|i| ((i % 100) as f32) / 100.0 - 0.5).collect(),
        );
        let y = attn.forward(&x, &tables).unwrap();
        assert_eq!(y.shape(), &[64, 512]);
    }

    #[test]
    fn zero_output_projection_reduces_to_residual() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let c = cfg(8, 2, 4);
        let attn = MultiHeadAttention::<f64>::new("a", &c, &mut rng).unwrap();
        attn.wo.weight.set_data(vec![0.0; 64]);
        attn.wo.bias.as_ref().unwrap().set_data(vec![0.0; 8]);
        let tables: Vec<_> = (0..2).map(|h| RelativeEmbeddingTable::new(&format!("t{h}"), 4, 4)).collect();
        let x = rand_mat(&mut ChaCha20Rng::seed_from_u64(6), 5, 8, 1.0);
        let y = attn.forward(&x, &tables).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn equal_keys_and_zero_bias_give_uniform_attention() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 6;
        let d_h = 3;
        let q = rand_mat(&mut rng, n, d_h, 1.0);
        let krow: Vec<f64> = (0..d_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut kdata = Vec::new();
        for _ in 0..n {
            kdata.extend_from_slice(&krow);
        }
        let k = Tensor::from_vec(vec![n, d_h], kdata);
        let t = RelativeEmbeddingTable::new("t", 2, d_h); // zero-init table
        let a = head_attention(&q, &k, Some(&t), d_h).unwrap().to_vec();
        for v in a {
            assert!((v - 1.0 / n as f64).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let q = rand_mat(&mut rng, 7, 4, 2.0);
        let k = rand_mat(&mut rng, 7, 4, 2.0);
        let t = table_from(
            &(0..(2 * 3 + 1) * 4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
            3,
            4,
        );
        let a = head_attention(&q, &k, Some(&t), 4).unwrap().to_vec();
        for r in 0..7 {
            let s: f64 = a[r * 7..(r + 1) * 7].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lr_with_zero_weights_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let c = cfg(6, 2, 4);
        let lr = LocalRelational::<f64>::new("lr", &c, &mut rng);
        for p in lr.params() {
            p.set_data(vec![0.0; p.numel()]);
        }
        let x = rand_mat(&mut rng, 5, 6, 1.0);
        let y = lr.forward(&x, &mut Mode::Eval).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let c = cfg(8, 2, 4);
        let stack = RptStack::<f64>::new("s", 2, &c, false, &mut rng).unwrap();
        let x = rand_mat(&mut rng, 9, 8, 1.0);
        let y1 = stack.forward(&x, &mut Mode::Eval).unwrap().to_vec();
        let y2 = stack.forward(&x, &mut Mode::Eval).unwrap().to_vec();
        assert_eq!(y1, y2);
    }

    #[test]
    fn training_mode_dropout_draws_from_rng() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let c = RptConfig { dropout: 0.5, ..cfg(8, 2, 4) };
        let stack = RptStack::<f64>::new("s", 1, &c, false, &mut rng).unwrap();
        let x = rand_mat(&mut rng, 9, 8, 1.0);
        let mut r1 = ChaCha20Rng::seed_from_u64(100);
        let mut r2 = ChaCha20Rng::seed_from_u64(100);
        let mut r3 = ChaCha20Rng::seed_from_u64(101);
        let y1 = stack.forward(&x, &mut Mode::Train(&mut r1)).unwrap().to_vec();
        let y2 = stack.forward(&x, &mut Mode::Train(&mut r2)).unwrap().to_vec();
        let y3 = stack.forward(&x, &mut Mode::Train(&mut r3)).unwrap().to_vec();
        assert_eq!(y1, y2);
        assert_ne!(y1, y3);
    }

    #[test]
    fn stacked_blocks_preserve_shape() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let c = cfg(16, 4, 8);
        let stack = RptStack::<f32>::new("s", 3, &c, false, &mut rng).unwrap();
        let x = Tensor::<f32>::from_vec(
            vec![24, 16],
            (0..24 * 16).map(|i| (i as f32 * 0.013).sin()).collect(),
        );
        let y = stack.forward(&x, &mut Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[24, 16]);
    }

    #[test]
    fn shared_tables_reuse_one_set() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let c = cfg(8, 2, 4);
        let shared = RptStack::<f64>::new("s", 3, &c, true, &mut rng).unwrap();
        let unshared = RptStack::<f64>::new("u", 3, &c, false, &mut rng).unwrap();
        assert_eq!(shared.tables_for(0).len(), 2);
        assert!(std::ptr::eq(
            shared.tables_for(0).as_ptr(),
            shared.tables_for(2).as_ptr()
        ));
        assert!(!std::ptr::eq(
            unshared.tables_for(0).as_ptr(),
            unshared.tables_for(2).as_ptr()
        ));
        // parameter count: shared carries H tables, unshared B·H
        let shared_tables = shared.params().iter().filter(|p| p.name().contains("omega")).count();
        let unshared_tables = unshared.params().iter().filter(|p| p.name().contains("omega")).count();
        assert_eq!(shared_tables, 2);
        assert_eq!(unshared_tables, 6);
    }

    #[test]
    fn block_gradient_check_input_and_params() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let c = RptConfig { dropout: 0.0, ..cfg(16, 4, 4) };
        let stack = RptStack::<f64>::new("s", 1, &c, false, &mut rng).unwrap();
        let x = rand_mat(&mut rng, 8, 16, 1.0);
        let w = rand_mat(&mut rng, 8, 16, 1.0);

        let err = finite_difference_check(
            &mut |t| Ok(stack.forward(t, &mut Mode::Eval)?.mul(&w)?.sum()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "input gradient err = {err}");

        let params = stack.params();
        let err = check_params_gradient(
            &mut || Ok(stack.forward(&x, &mut Mode::Eval)?.mul(&w)?.sum()),
            &params,
            1e-5,
            4,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-4, "param gradient err = {err}");
    }

    #[test]
    fn forward_backward_fits_time_budget_at_paper_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let c = cfg(512, 8, 128);
        let block = RptBlock::<f32>::new("b", &c, &mut rng).unwrap();
        let tables: Vec<_> =
            (0..8).map(|h| RelativeEmbeddingTable::new(&format!("t{h}"), 128, 64)).collect();
        let x = Tensor::<f32>::leaf(
            vec![256, 512],
            (0..256 * 512).map(|i| (i as f32 * 0.00017).sin()).collect(),
            true,
        );
        // min over repeats to shrug off scheduler noise from parallel tests
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = std::time::Instant::now();
            let y = block.forward(&x, &tables, &mut Mode::Eval).unwrap();
            y.sum().backward().unwrap();
            best = best.min(start.elapsed().as_secs_f64());
        }
        assert!(x.grad().is_some());
        assert!(best < 1.0, "forward+backward took {best:.3}s");
    }
}
