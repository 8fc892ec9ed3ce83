//! Central-difference gradient verification.
//!
//! The relative error of a coordinate is |analytic − numeric| divided by
//! max(|analytic|, |numeric|, 1e-8). Checks of full modules subsample
//! coordinates per parameter to stay inside the runtime budget.

use rand::Rng;

use super::{Parameter, Real, Tensor};
use crate::error::Result;

fn rel_err<F: Real>(analytic: F, numeric: F) -> F {
    let denom = analytic.abs().max(numeric.abs()).max(F::c(1e-8));
    (analytic - numeric).abs() / denom
}

/// Max relative error between the analytic gradient of `f` at `x` and a
/// central finite difference over every coordinate.
pub fn finite_difference_check<F: Real>(
    f: &mut dyn FnMut(&Tensor<F>) -> Result<Tensor<F>>,
    x: &Tensor<F>,
    eps: F,
) -> Result<F> {
    let base = x.to_vec();
    let tracked = Tensor::leaf(x.shape().to_vec(), base.clone(), true);
    let loss = f(&tracked)?;
    loss.backward()?;
    let analytic = tracked
        .grad()
        .unwrap_or_else(|| vec![F::zero(); tracked.numel()]);

    let mut max_err = F::zero();
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = plus[i] + eps;
        let mut minus = base.clone();
        minus[i] = minus[i] - eps;
        let fp = f(&Tensor::from_vec(x.shape().to_vec(), plus))?.item();
        let fm = f(&Tensor::from_vec(x.shape().to_vec(), minus))?.item();
        let numeric = (fp - fm) / (F::c(2.0) * eps);
        let e = rel_err(analytic[i], numeric);
        if e > max_err {
            max_err = e;
        }
    }
    Ok(max_err)
}

/// Verifies parameter gradients of a scalar loss by in-place perturbation.
/// `loss_fn` must be deterministic across calls (evaluation mode, or a
/// re-seeded RNG). At most `max_coords` coordinates are probed per parameter.
pub fn check_params_gradient<F: Real, R: Rng>(
    loss_fn: &mut dyn FnMut() -> Result<Tensor<F>>,
    params: &[&Parameter<F>],
    eps: F,
    max_coords: usize,
    rng: &mut R,
) -> Result<F> {
    for p in params {
        p.zero_grad();
    }
    let loss = loss_fn()?;
    loss.backward()?;
    let analytic: Vec<Vec<F>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![F::zero(); p.numel()]))
        .collect();

    let mut max_err = F::zero();
    for (pi, p) in params.iter().enumerate() {
        let base = p.data_vec();
        let coords: Vec<usize> = if base.len() <= max_coords {
            (0..base.len()).collect()
        } else {
            (0..max_coords).map(|_| rng.gen_range(0..base.len())).collect()
        };
        for &i in &coords {
            let mut plus = base.clone();
            plus[i] = plus[i] + eps;
            p.set_data(plus);
            let fp = loss_fn()?.item();
            let mut minus = base.clone();
            minus[i] = minus[i] - eps;
            p.set_data(minus);
            let fm = loss_fn()?.item();
            p.set_data(base.clone());
            let numeric = (fp - fm) / (F::c(2.0) * eps);
            let e = rel_err(analytic[pi][i], numeric);
            if e > max_err {
                max_err = e;
            }
        }
    }
    Ok(max_err)
}
