//! Parameterized layers shared by the transformer blocks and both branches.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Parameter, Real, Tensor};

/// Nonlinearity inside the local-relational stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<F: Real>(&self, x: &Tensor<F>) -> Tensor<F> {
        match self {
            Activation::Gelu => x.gelu(),
            Activation::Relu => x.relu(),
            Activation::Identity => x.clone(),
        }
    }
}

/// Forward mode: training carries the RNG that drives dropout.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha20Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Dropout that is the identity in eval mode.
pub fn apply_dropout<F: Real>(x: &Tensor<F>, rate: f64, mode: &mut Mode) -> Result<Tensor<F>> {
    match mode {
        Mode::Train(rng) => x.dropout(rate, true, rng),
        Mode::Eval => Ok(x.clone()),
    }
}

fn xavier_uniform<F: Real>(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| F::c(rng.gen_range(-bound..bound))).collect()
}

pub struct LinearLayer<F: Real = f32> {
    pub weight: Parameter<F>,       // in×out
    pub bias: Option<Parameter<F>>, // out
}

impl<F: Real> LinearLayer<F> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut layer = Self::new_no_bias(name, d_in, d_out, rng);
        layer.bias = Some(Parameter::new(
            format!("{name}.bias"),
            vec![d_out],
            vec![F::zero(); d_out],
        ));
        layer
    }

    pub fn new_no_bias(name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha20Rng) -> Self {
        LinearLayer {
            weight: Parameter::new(
                format!("{name}.weight"),
                vec![d_in, d_out],
                xavier_uniform(rng, d_in, d_out, d_in * d_out),
            ),
            bias: None,
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        match &self.bias {
            Some(b) => x.linear(self.weight.tensor(), b.tensor()),
            None => x.matmul(self.weight.tensor()),
        }
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = vec![&self.weight];
        if let Some(b) = &self.bias {
            out.push(b);
        }
        out
    }
}

pub struct Conv1dLayer<F: Real = f32> {
    pub weight: Parameter<F>, // k×in×out
    pub bias: Parameter<F>,   // out
    pub stride: usize,
    pub padding: usize,
}

impl<F: Real> Conv1dLayer<F> {
    pub fn new(
        name: &str,
        k: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        Conv1dLayer {
            weight: Parameter::new(
                format!("{name}.weight"),
                vec![k, c_in, c_out],
                xavier_uniform(rng, k * c_in, k * c_out, k * c_in * c_out),
            ),
            bias: Parameter::new(format!("{name}.bias"), vec![c_out], vec![F::zero(); c_out]),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.conv1d(self.weight.tensor(), self.bias.tensor(), self.stride, self.padding)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.weight, &self.bias]
    }
}

pub struct LayerNormLayer<F: Real = f32> {
    pub gain: Parameter<F>,
    pub bias: Parameter<F>,
    pub eps: F,
}

impl<F: Real> LayerNormLayer<F> {
    pub fn new(name: &str, d: usize) -> Self {
        LayerNormLayer {
            gain: Parameter::new(format!("{name}.gain"), vec![d], vec![F::one(); d]),
            bias: Parameter::new(format!("{name}.bias"), vec![d], vec![F::zero(); d]),
            eps: F::c(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.layer_norm(self.gain.tensor(), self.bias.tensor(), self.eps)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.gain, &self.bias]
    }
}

/// Sinusoidal absolute positional encoding added to input tokens in the
/// `absolute` ablation mode.
pub fn sinusoidal_encoding<F: Real>(len: usize, dim: usize) -> Tensor<F> {
    let mut data = vec![F::zero(); len * dim];
    for t in 0..len {
        for j in 0..dim {
            let pair = (j / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            data[t * dim + j] = F::c(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::from_vec(vec![len, dim], data)
}
