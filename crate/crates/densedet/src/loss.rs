//! Asymmetric loss with per-sign focusing exponents and the two branch
//! objectives. Setting both exponents to zero recovers plain binary
//! cross-entropy, which is how the BCE ablation is wired.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Asymmetric,
    Bce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Focusing exponent on positive labels.
    pub gamma_plus: f64,
    /// Focusing exponent on negative labels.
    pub gamma_minus: f64,
    /// Probabilities are clamped to [eps, 1−eps] before the logs.
    pub clamp_eps: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma_plus: 1.0,
            gamma_minus: 3.0,
            clamp_eps: 1e-7,
            variant: LossVariant::Asymmetric,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config(format!(
                "clamp_eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        if self.gamma_plus < 0.0 || self.gamma_minus < 0.0 {
            return Err(Error::Config("focusing exponents must be >= 0".into()));
        }
        Ok(())
    }

    /// Exponents actually applied; the BCE variant collapses both to zero.
    pub fn effective_gammas(&self) -> (f64, f64) {
        match self.variant {
            LossVariant::Asymmetric => (self.gamma_plus, self.gamma_minus),
            LossVariant::Bce => (0.0, 0.0),
        }
    }
}

/// Per-entry loss: −g·(1−y)^γ₊·log(y) − (1−g)·y^γ₋·log(1−y).
pub fn asl_scalar(g: f64, y: f64, cfg: &LossConfig) -> f64 {
    let (gp, gm) = cfg.effective_gammas();
    let yc = y.clamp(cfg.clamp_eps, 1.0 - cfg.clamp_eps);
    -(g * (1.0 - yc).powf(gp) * yc.ln()) - ((1.0 - g) * yc.powf(gm) * (1.0 - yc).ln())
}

/// Differentiable per-entry loss grid; `g` must be binary and is treated as a
/// constant.
pub fn asl_grid<F: Real>(y: &Tensor<F>, g: &Tensor<F>, cfg: &LossConfig) -> Result<Tensor<F>> {
    if y.shape() != g.shape() {
        return Err(Error::Shape {
            op: "asl_grid",
            left: y.shape().to_vec(),
            right: g.shape().to_vec(),
        });
    }
    let (gp, gm) = cfg.effective_gammas();
    let eps = F::c(cfg.clamp_eps);
    let yc = y.clamp_values(eps, F::one() - eps);
    let one_minus_y = yc.rsub_scalar(F::one());
    let pos = g
        .mul(&one_minus_y.powf_scalar(F::c(gp)))?
        .mul(&yc.ln())?;
    let neg = g
        .rsub_scalar(F::one())
        .mul(&yc.powf_scalar(F::c(gm)))?
        .mul(&one_minus_y.ln())?;
    Ok(pos.add(&neg)?.mul_scalar(-F::one()))
}

fn masked_time_mean<F: Real>(grid: &Tensor<F>, mask: Option<&[bool]>) -> Result<Tensor<F>> {
    let t = grid.rows();
    let c = grid.cols();
    match mask {
        None => Ok(grid.sum().mul_scalar(F::one() / F::c(t as f64))),
        Some(m) => {
            if m.len() != t {
                return Err(Error::Contract(format!(
                    "mask length {} does not match {} timesteps",
                    m.len(),
                    t
                )));
            }
            let valid = m.iter().filter(|&&b| b).count();
            if valid == 0 {
                return Err(Error::Contract("loss mask excludes every timestep".into()));
            }
            let mut mdata = vec![F::zero(); t * c];
            for (row, &keep) in m.iter().enumerate() {
                if keep {
                    mdata[row * c..(row + 1) * c].fill(F::one());
                }
            }
            let mgrid = Tensor::from_vec(vec![t, c], mdata);
            Ok(grid.mul(&mgrid)?.sum().mul_scalar(F::one() / F::c(valid as f64)))
        }
    }
}

/// Branch objective: class-summed loss averaged over (unmasked) timesteps.
pub fn assistant_loss<F: Real>(
    y: &Tensor<F>,
    g: &Tensor<F>,
    mask: Option<&[bool]>,
    cfg: &LossConfig,
) -> Result<Tensor<F>> {
    masked_time_mean(&asl_grid(y, g, cfg)?, mask)
}

/// Core objective: convex combination of the fine and coarse head losses.
#[allow(clippy::too_many_arguments)]
pub fn core_loss<F: Real>(
    y_fine: &Tensor<F>,
    y_coarse: &Tensor<F>,
    g: &Tensor<F>,
    mask: Option<&[bool]>,
    cfg: &LossConfig,
    alpha_fine: f64,
    alpha_coarse: f64,
) -> Result<Tensor<F>> {
    if (alpha_fine + alpha_coarse - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "fusion weights must sum to 1, got {alpha_fine} + {alpha_coarse}"
        )));
    }
    weighted_heads_loss(&[(alpha_fine, y_fine), (alpha_coarse, y_coarse)], g, mask, cfg)
}

/// Generalization used by the module-ablation configs where only one head
/// exists.
pub fn weighted_heads_loss<F: Real>(
    heads: &[(f64, &Tensor<F>)],
    g: &Tensor<F>,
    mask: Option<&[bool]>,
    cfg: &LossConfig,
) -> Result<Tensor<F>> {
    if heads.is_empty() {
        return Err(Error::Contract("no prediction heads supplied".into()));
    }
    let mut total: Option<Tensor<F>> = None;
    for (alpha, y) in heads {
        let term = assistant_loss(y, g, mask, cfg)?.mul_scalar(F::c(*alpha));
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    Ok(total.unwrap())
}
