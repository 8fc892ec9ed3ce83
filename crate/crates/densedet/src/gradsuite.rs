//! The gradient verification suite: finite-difference checks of every
//! primitive op and of the composed block/branch losses, run in the engine's
//! double-precision mode so the comparison is limited by the math, not by
//! evaluation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::layers::Mode;
use crate::loss::{assistant_loss, weighted_heads_loss, LossConfig};
use crate::net::{Model, NetworkConfig};
use crate::rpt::{RptConfig, RptStack};
use crate::tensor::gradcheck::{check_params_gradient, finite_difference_check};
use crate::tensor::{ops_relative_bias, Tensor};
use crate::Result;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn row(name: &str, err: f64, threshold: f64) -> GradcheckRow {
    GradcheckRow { name: name.to_string(), max_rel_err: err, threshold, pass: err < threshold }
}

fn rand_mat(rng: &mut ChaCha20Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_vec(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Network dims small enough for coordinate-dense checks. Structural
/// switches (activation, positional mode, wiring) come from the caller's
/// configuration; dropout is irrelevant because checks run in eval mode.
fn tiny_net(cfg: &NetworkConfig) -> NetworkConfig {
    NetworkConfig {
        t_train: 8,
        d_in: 6,
        classes: 3,
        c_star: 8,
        d_star: 8,
        blocks: 1,
        heads: 2,
        branches: 2,
        alpha_fine: 0.4,
        alpha_coarse: 0.6,
        r_clip: 4,
        dropout: 0.0,
        ..cfg.clone()
    }
}

/// Moves every parameter to a generic point. Zero-initialized biases and
/// tables sit exactly where layer norm's epsilon guard makes the loss
/// surface ill-conditioned for finite differences (an all-zero conv window
/// yields a constant row); a small jitter steps off that measure-zero set
/// without changing what is being verified.
fn jitter_params(params: &[&crate::tensor::Parameter<f64>], rng: &mut ChaCha20Rng) {
    for p in params {
        let data = p
            .data_vec()
            .into_iter()
            .map(|v| v + rng.gen_range(-0.05..0.05))
            .collect();
        p.set_data(data);
    }
}

/// Runs the whole suite once for a seed. Includes a deliberately corrupted
/// negative-control row whose "pass" means the checker detected the
/// corruption.
pub fn gradient_suite(cfg: &NetworkConfig, seed: u64) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(1));
    let mut rows = Vec::new();

    // --- primitive ops ---
    {
        let b = rand_mat(&mut rng, 4, 5, -1.0, 1.0);
        let w = rand_mat(&mut rng, 3, 5, 0.5, 1.5);
        let x = rand_mat(&mut rng, 3, 4, -1.0, 1.0);
        let err =
            finite_difference_check(&mut |t| Ok(t.matmul(&b)?.mul(&w)?.sum()), &x, EPS)?;
        rows.push(row("op.matmul", err, OP_TOLERANCE));
    }
    {
        let w = rand_mat(&mut rng, 4, 6, 0.5, 1.5);
        let x = rand_mat(&mut rng, 4, 6, -2.0, 2.0);
        let err =
            finite_difference_check(&mut |t| Ok(t.softmax_rows()?.mul(&w)?.sum()), &x, EPS)?;
        rows.push(row("op.softmax_rows", err, OP_TOLERANCE));
    }
    {
        let w = rand_mat(&mut rng, 4, 4, 0.5, 1.5);
        let x = rand_mat(&mut rng, 4, 4, -3.0, 3.0);
        let err = finite_difference_check(&mut |t| Ok(t.sigmoid().mul(&w)?.sum()), &x, EPS)?;
        rows.push(row("op.sigmoid", err, OP_TOLERANCE));
    }
    {
        let w = rand_mat(&mut rng, 4, 4, 0.5, 1.5);
        let x = rand_mat(&mut rng, 4, 4, -3.0, 3.0);
        let err = finite_difference_check(&mut |t| Ok(t.gelu().mul(&w)?.sum()), &x, EPS)?;
        rows.push(row("op.gelu", err, OP_TOLERANCE));
    }
    {
        let gain = rand_mat(&mut rng, 1, 6, 0.5, 1.5);
        let gain = Tensor::from_vec(vec![6], gain.to_vec());
        let bias = Tensor::from_vec(vec![6], vec![0.1; 6]);
        let w = rand_mat(&mut rng, 3, 6, 0.5, 1.5);
        let x = rand_mat(&mut rng, 3, 6, -2.0, 2.0);
        let err = finite_difference_check(
            &mut |t| Ok(t.layer_norm(&gain, &bias, 1e-5)?.mul(&w)?.sum()),
            &x,
            EPS,
        )?;
        rows.push(row("op.layer_norm", err, OP_TOLERANCE));
    }
    {
        let kernel = rand_mat(&mut rng, 3, 2 * 3, -1.0, 1.0);
        let kernel = Tensor::from_vec(vec![3, 2, 3], kernel.to_vec());
        let bias = Tensor::from_vec(vec![3], vec![0.05; 3]);
        let w = rand_mat(&mut rng, 3, 3, 0.5, 1.5);
        let x = rand_mat(&mut rng, 6, 2, -1.0, 1.0);
        let err = finite_difference_check(
            &mut |t| Ok(t.conv1d(&kernel, &bias, 2, 1)?.mul(&w)?.sum()),
            &x,
            EPS,
        )?;
        rows.push(row("op.conv1d", err, OP_TOLERANCE));
    }
    {
        let w = rand_mat(&mut rng, 9, 3, 0.5, 1.5);
        let x = rand_mat(&mut rng, 4, 3, -1.0, 1.0);
        let err = finite_difference_check(
            &mut |t| Ok(t.upsample_linear(9)?.mul(&w)?.sum()),
            &x,
            EPS,
        )?;
        rows.push(row("op.upsample_linear", err, OP_TOLERANCE));
    }
    {
        let x = rand_mat(&mut rng, 5, 4, -1.0, 1.0);
        let mask_seed = rng.gen::<u64>();
        let err = finite_difference_check(
            &mut |t| {
                let mut mask_rng = ChaCha20Rng::seed_from_u64(mask_seed);
                Ok(t.dropout(0.3, true, &mut mask_rng)?.sum())
            },
            &x,
            EPS,
        )?;
        rows.push(row("op.dropout", err, OP_TOLERANCE));
    }
    for (name, skewed) in [("op.relative_bias_direct", false), ("op.relative_bias_skewed", true)] {
        let omega = rand_mat(&mut rng, 2 * 4 + 1, 3, -1.0, 1.0);
        let w = rand_mat(&mut rng, 6, 6, 0.5, 1.5);
        let q = rand_mat(&mut rng, 6, 3, -1.0, 1.0);
        let err = finite_difference_check(
            &mut |t| Ok(ops_relative_bias(t, &omega, 4, skewed)?.mul(&w)?.sum()),
            &q,
            EPS,
        )?;
        rows.push(row(name, err, OP_TOLERANCE));
    }
    {
        // asymmetric loss on random logits
        let loss_cfg = LossConfig::default();
        let g = Tensor::from_vec(
            vec![4, 3],
            (0..12).map(|_| f64::from(rng.gen_bool(0.4))).collect(),
        );
        let x = rand_mat(&mut rng, 4, 3, -2.0, 2.0);
        let err = finite_difference_check(
            &mut |t| assistant_loss(&t.sigmoid(), &g, None, &loss_cfg),
            &x,
            EPS,
        )?;
        rows.push(row("op.asymmetric_loss", err, OP_TOLERANCE));
    }

    // --- composites ---
    let tiny = tiny_net(cfg);
    {
        let rpt_cfg = RptConfig { dropout: 0.0, ..tiny.rpt_cfg() };
        let stack = RptStack::<f64>::new("g", 1, &rpt_cfg, false, &mut rng)?;
        jitter_params(&stack.params(), &mut rng);
        let x = rand_mat(&mut rng, 8, tiny.d_star, -1.0, 1.0);
        let w = rand_mat(&mut rng, 8, tiny.d_star, 0.5, 1.5);
        let err = finite_difference_check(
            &mut |t| Ok(stack.forward(t, &mut Mode::Eval)?.mul(&w)?.sum()),
            &x,
            EPS,
        )?;
        let params = stack.params();
        let perr = check_params_gradient(
            &mut || Ok(stack.forward(&x, &mut Mode::Eval)?.mul(&w)?.sum()),
            &params,
            EPS,
            4,
            &mut rng,
        )?;
        rows.push(row("composite.rpt_block", err.max(perr), COMPOSITE_TOLERANCE));
    }
    {
        let model = Model::<f64>::new(tiny.clone(), &mut rng)?;
        jitter_params(&model.parameters(), &mut rng);
        let loss_cfg = LossConfig::default();
        let g = Tensor::from_vec(
            vec![tiny.t_train, tiny.classes],
            (0..tiny.t_train * tiny.classes).map(|_| f64::from(rng.gen_bool(0.3))).collect(),
        );
        let assistant = model.assistant.as_ref().expect("assistant enabled in tiny cfg");
        let params = assistant.params();
        let err = check_params_gradient(
            &mut || {
                let y = assistant.forward(&g, &mut Mode::Eval)?;
                assistant_loss(&y, &g, None, &loss_cfg)
            },
            &params,
            EPS,
            4,
            &mut rng,
        )?;
        rows.push(row("composite.assistant_branch", err, COMPOSITE_TOLERANCE));

        let tokens = rand_mat(&mut rng, tiny.t_train, tiny.d_in, -1.0, 1.0);
        // the frozen classifier is excluded: its gradient is legitimately
        // unused by the optimizer
        let params: Vec<_> =
            model.core_params().into_iter().filter(|p| !p.frozen()).collect();
        let err = check_params_gradient(
            &mut || {
                let pred = model.core.forward(&tokens, &tiny, &mut Mode::Eval)?;
                let heads = pred.weighted_heads(&tiny);
                weighted_heads_loss(&heads, &g, None, &loss_cfg)
            },
            &params,
            EPS,
            4,
            &mut rng,
        )?;
        rows.push(row("composite.core_branch", err, COMPOSITE_TOLERANCE));
    }

    // --- negative control: a corrupted gradient must be flagged ---
    {
        let x = rand_mat(&mut rng, 3, 3, -1.0, 1.0);
        let tracked = Tensor::leaf(vec![3, 3], x.to_vec(), true);
        let loss = tracked.mul(&tracked)?.sum();
        loss.backward()?;
        let mut corrupted = tracked.grad().expect("grad exists");
        corrupted[4] += 0.25;
        let base = x.to_vec();
        let mut worst = 0.0f64;
        for (i, base_i) in base.iter().enumerate() {
            let mut plus = base.clone();
            plus[i] += EPS;
            let mut minus = base.clone();
            minus[i] -= EPS;
            let fp: f64 = plus.iter().map(|v| v * v).sum();
            let fm: f64 = minus.iter().map(|v| v * v).sum();
            let numeric = (fp - fm) / (2.0 * EPS);
            let denom = corrupted[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((corrupted[i] - numeric).abs() / denom);
            let _ = base_i;
        }
        rows.push(GradcheckRow {
            name: "negative_control.corrupted_gradient".into(),
            max_rel_err: worst,
            threshold: OP_TOLERANCE,
            pass: worst > OP_TOLERANCE, // detection is the success condition
        });
    }

    Ok(rows)
}

/// Text table for the CLI.
pub fn render_rows(rows: &[GradcheckRow]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "{:<42} {:>12} {:>10} result", "check", "max_rel_err", "threshold");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<42} {:>12.3e} {:>10.0e} {}",
            r.name,
            r.max_rel_err,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    out
}
