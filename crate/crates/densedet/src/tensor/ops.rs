//! Forward op constructors and their reverse-mode rules.

use rand::Rng;

use super::kernels as k;
use super::{Node, Real, Tensor};
use crate::error::{Error, Result};

pub(super) enum Op<F: Real> {
    Add,
    Sub,
    Mul,
    AddScalar,
    MulScalar(F),
    RsubScalar,
    PowScalar(F),
    Ln,
    Sigmoid,
    Gelu,
    Relu,
    Clamp(F, F),
    Sum,
    Matmul { m: usize, k: usize, n: usize },
    MatmulNT { m: usize, k: usize, n: usize },
    Linear { m: usize, k: usize, n: usize },
    SoftmaxRows { rows: usize, cols: usize },
    LayerNorm { rows: usize, cols: usize, mean: Vec<F>, inv_std: Vec<F> },
    Conv1d { t: usize, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize },
    UpsampleLinear { src: usize, dst: usize, cols: usize },
    Dropout { mask: Vec<F> },
    SliceCols { start: usize, width: usize },
    ConcatCols { widths: Vec<usize> },
    RelBias { r_clip: usize, skewed: bool },
}

fn same_shape<F: Real>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Lookup row in a relative-embedding table for query position `n` attending
/// to position `m`, with offsets clipped to ±r.
pub fn rel_table_index(n: usize, m: usize, r_clip: usize) -> usize {
    let r = r_clip as isize;
    let delta = (n as isize - m as isize).clamp(-r, r);
    (delta + r) as usize
}

impl<F: Real> Tensor<F> {
    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Op::Add,
            "add",
        ))
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Op::Sub,
            "sub",
        ))
    }

    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Op::Mul,
            "mul",
        ))
    }

    pub fn add_scalar(&self, c: F) -> Tensor<F> {
        let data = self.data().iter().map(|&a| a + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::AddScalar,
            "add_scalar",
        )
    }

    pub fn mul_scalar(&self, c: F) -> Tensor<F> {
        let data = self.data().iter().map(|&a| a * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::MulScalar(c),
            "mul_scalar",
        )
    }

    /// c − x, elementwise.
    pub fn rsub_scalar(&self, c: F) -> Tensor<F> {
        let data = self.data().iter().map(|&a| c - a).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::RsubScalar,
            "rsub_scalar",
        )
    }

    /// x^a elementwise. For fractional exponents the input must be positive.
    pub fn powf_scalar(&self, a: F) -> Tensor<F> {
        let data = self.data().iter().map(|&x| x.powf(a)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::PowScalar(a),
            "powf_scalar",
        )
    }

    pub fn ln(&self) -> Tensor<F> {
        let data = self.data().iter().map(|&x| x.ln()).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Op::Ln, "ln")
    }

    pub fn sigmoid(&self) -> Tensor<F> {
        let data = self.data().iter().map(|&x| k::sigmoid_scalar(x)).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::Sigmoid,
            "sigmoid",
        )
    }

    pub fn gelu(&self) -> Tensor<F> {
        let data = self.data().iter().map(|&x| k::gelu_scalar(x)).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Op::Gelu, "gelu")
    }

    pub fn relu(&self) -> Tensor<F> {
        let data = self
            .data()
            .iter()
            .map(|&x| if x > F::zero() { x } else { F::zero() })
            .collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Op::Relu, "relu")
    }

    pub fn clamp_values(&self, lo: F, hi: F) -> Tensor<F> {
        let data = self
            .data()
            .iter()
            .map(|&x| if x < lo { lo } else if x > hi { hi } else { x })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::Clamp(lo, hi),
            "clamp",
        )
    }

    /// Sum of all elements, as a 1-element tensor.
    pub fn sum(&self) -> Tensor<F> {
        let mut acc = F::zero();
        for &v in self.data().iter() {
            acc = acc + v;
        }
        Tensor::from_op(vec![1], vec![acc], vec![self.clone()], Op::Sum, "sum")
    }

    /// Standard matrix product a(m×k)·b(k×n).
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.shape().len() != 2 || other.shape().len() != 2 || self.cols() != other.rows() {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape().to_vec(),
                right: other.shape().to_vec(),
            });
        }
        let (m, kk, n) = (self.rows(), self.cols(), other.cols());
        let mut data = vec![F::zero(); m * n];
        k::matmul_acc(&self.data(), &other.data(), &mut data, m, kk, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Op::Matmul { m, k: kk, n },
            "matmul",
        ))
    }

    /// a(m×k)·b(n×k)ᵀ — the transposed product used for attention scores.
    pub fn matmul_nt(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.shape().len() != 2 || other.shape().len() != 2 || self.cols() != other.cols() {
            return Err(Error::Shape {
                op: "matmul_nt",
                left: self.shape().to_vec(),
                right: other.shape().to_vec(),
            });
        }
        let (m, kk, n) = (self.rows(), self.cols(), other.rows());
        let mut data = vec![F::zero(); m * n];
        k::matmul_nt_acc(&self.data(), &other.data(), &mut data, m, kk, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Op::MatmulNT { m, k: kk, n },
            "matmul_nt",
        ))
    }

    /// x(m×k)·w(k×n) + b(n) broadcast over rows.
    pub fn linear(&self, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        if self.shape().len() != 2
            || w.shape().len() != 2
            || self.cols() != w.rows()
            || b.numel() != w.cols()
        {
            return Err(Error::Shape {
                op: "linear",
                left: self.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let (m, kk, n) = (self.rows(), self.cols(), w.cols());
        let mut data = vec![F::zero(); m * n];
        {
            let bias = b.data();
            for r in 0..m {
                data[r * n..(r + 1) * n].copy_from_slice(&bias);
            }
        }
        k::matmul_acc(&self.data(), &w.data(), &mut data, m, kk, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), w.clone(), b.clone()],
            Op::Linear { m, k: kk, n },
            "linear",
        ))
    }

    /// Row-wise softmax with max-subtraction stabilization.
    pub fn softmax_rows(&self) -> Result<Tensor<F>> {
        if self.shape().len() != 2 {
            return Err(Error::Shape {
                op: "softmax_rows",
                left: self.shape().to_vec(),
                right: vec![],
            });
        }
        let (rows, cols) = (self.rows(), self.cols());
        let mut data = self.to_vec();
        k::softmax_rows_inplace(&mut data, rows, cols);
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            vec![self.clone()],
            Op::SoftmaxRows { rows, cols },
            "softmax_rows",
        ))
    }

    /// Normalization over the last dimension with learned affine.
    pub fn layer_norm(&self, gain: &Tensor<F>, bias: &Tensor<F>, eps: F) -> Result<Tensor<F>> {
        if self.shape().is_empty() {
            return Err(Error::Shape {
                op: "layer_norm",
                left: self.shape().to_vec(),
                right: gain.shape().to_vec(),
            });
        }
        let cols = *self.shape().last().unwrap();
        if gain.numel() != cols || bias.numel() != cols || cols == 0 {
            return Err(Error::Shape {
                op: "layer_norm",
                left: self.shape().to_vec(),
                right: gain.shape().to_vec(),
            });
        }
        let rows = self.numel() / cols;
        let x = self.data();
        let g = gain.data();
        let b = bias.data();
        let mut data = vec![F::zero(); x.len()];
        let mut means = vec![F::zero(); rows];
        let mut inv_stds = vec![F::zero(); rows];
        let d = F::c(cols as f64);
        for r in 0..rows {
            let xr = &x[r * cols..(r + 1) * cols];
            let mut mean = F::zero();
            for &v in xr {
                mean = mean + v;
            }
            mean = mean / d;
            let mut var = F::zero();
            for &v in xr {
                let c = v - mean;
                var = var + c * c;
            }
            var = var / d;
            let inv = F::one() / (var + eps).sqrt();
            means[r] = mean;
            inv_stds[r] = inv;
            let out = &mut data[r * cols..(r + 1) * cols];
            for j in 0..cols {
                out[j] = (xr[j] - mean) * inv * g[j] + b[j];
            }
        }
        drop(x);
        drop(g);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), gain.clone(), bias.clone()],
            Op::LayerNorm { rows, cols, mean: means, inv_std: inv_stds },
            "layer_norm",
        ))
    }

    /// Temporal cross-correlation: x(t×c_in) * w(k×c_in×c_out) + b(c_out),
    /// zero padding on both sides.
    pub fn conv1d(
        &self,
        w: &Tensor<F>,
        b: &Tensor<F>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<F>> {
        if self.shape().len() != 2 || w.shape().len() != 3 {
            return Err(Error::Shape {
                op: "conv1d",
                left: self.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let (t, c_in) = (self.rows(), self.cols());
        let (kk, wc_in, c_out) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if wc_in != c_in || b.numel() != c_out {
            return Err(Error::Shape {
                op: "conv1d",
                left: self.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::Contract("conv1d stride must be >= 1".into()));
        }
        let t_out = match k::conv1d_out_len(t, kk, stride, padding) {
            Some(len) if len >= 1 => len,
            _ => {
                return Err(Error::SequenceTooShort {
                    len: t,
                    min: kk.saturating_sub(2 * padding),
                })
            }
        };
        let mut data = vec![F::zero(); t_out * c_out];
        k::conv1d_forward(
            &self.data(),
            &w.data(),
            &b.data(),
            t,
            c_in,
            c_out,
            kk,
            stride,
            padding,
            &mut data,
        );
        Ok(Tensor::from_op(
            vec![t_out, c_out],
            data,
            vec![self.clone(), w.clone(), b.clone()],
            Op::Conv1d { t, c_in, c_out, k: kk, stride, padding },
            "conv1d",
        ))
    }

    /// Per-channel 1-D linear interpolation to `target_len` rows,
    /// align-corners sampling.
    pub fn upsample_linear(&self, target_len: usize) -> Result<Tensor<F>> {
        if self.shape().len() != 2 || self.rows() == 0 || target_len == 0 {
            return Err(Error::Contract(format!(
                "upsample_linear needs a non-empty 2-D input and target >= 1, got {:?} -> {target_len}",
                self.shape()
            )));
        }
        let (src, cols) = (self.rows(), self.cols());
        let x = self.data();
        let mut data = vec![F::zero(); target_len * cols];
        for t in 0..target_len {
            let (i0, i1, w) = k::upsample_coords::<F>(t, src, target_len);
            let lo = &x[i0 * cols..(i0 + 1) * cols];
            let hi = &x[i1 * cols..(i1 + 1) * cols];
            let out = &mut data[t * cols..(t + 1) * cols];
            let wl = F::one() - w;
            for j in 0..cols {
                out[j] = wl * lo[j] + w * hi[j];
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            vec![target_len, cols],
            data,
            vec![self.clone()],
            Op::UpsampleLinear { src, dst: target_len, cols },
            "upsample_linear",
        ))
    }

    /// Inverted dropout: in training mode surviving entries are scaled by
    /// 1/(1−rate); in eval mode this is the identity.
    pub fn dropout<R: Rng>(&self, rate: f64, training: bool, rng: &mut R) -> Result<Tensor<F>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let scale = F::c(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { scale })
            .collect();
        let data = self
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| x * m)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Op::Dropout { mask },
            "dropout",
        ))
    }

    /// Column band [start, start+width) of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Tensor<F>> {
        if self.shape().len() != 2 || start + width > self.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                left: self.shape().to_vec(),
                right: vec![start, width],
            });
        }
        let (rows, cols) = (self.rows(), self.cols());
        let x = self.data();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&x[r * cols + start..r * cols + start + width]);
        }
        drop(x);
        Ok(Tensor::from_op(
            vec![rows, width],
            data,
            vec![self.clone()],
            Op::SliceCols { start, width },
            "slice_cols",
        ))
    }
}

/// Concatenates 2-D tensors along columns.
pub fn concat_cols<F: Real>(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
    if parts.is_empty() {
        return Err(Error::Contract("concat_cols of zero tensors".into()));
    }
    let rows = parts[0].rows();
    for p in parts {
        if p.shape().len() != 2 || p.rows() != rows {
            return Err(Error::Shape {
                op: "concat_cols",
                left: parts[0].shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    let borrowed: Vec<_> = parts.iter().map(|p| p.data()).collect();
    for r in 0..rows {
        for (p, w) in borrowed.iter().zip(widths.iter()) {
            data.extend_from_slice(&p[r * w..(r + 1) * w]);
        }
    }
    drop(borrowed);
    Ok(Tensor::from_op(
        vec![rows, total],
        data,
        parts.to_vec(),
        Op::ConcatCols { widths },
        "concat_cols",
    ))
}

/// Query-dependent relative positional bias: P(n,m) = Σ_d q(n,d)·ω_d(n−m)
/// with offsets clipped to ±r_clip.
///
/// `skewed` computes one q·ωᵀ product followed by an index re-alignment;
/// the direct form materializes every (n, m) inner product and serves as the
/// reference oracle.
pub fn relative_bias<F: Real>(
    q: &Tensor<F>,
    omega: &Tensor<F>,
    r_clip: usize,
    skewed: bool,
) -> Result<Tensor<F>> {
    if q.shape().len() != 2 || omega.shape().len() != 2 {
        return Err(Error::Shape {
            op: "relative_bias",
            left: q.shape().to_vec(),
            right: omega.shape().to_vec(),
        });
    }
    let (n, d_h) = (q.rows(), q.cols());
    if omega.rows() != 2 * r_clip + 1 || omega.cols() != d_h {
        return Err(Error::Shape {
            op: "relative_bias",
            left: q.shape().to_vec(),
            right: omega.shape().to_vec(),
        });
    }
    let qd = q.data();
    let od = omega.data();
    let mut data = vec![F::zero(); n * n];
    if skewed {
        // One N×(2R+1) product, then re-align offsets into the N×N grid.
        let table_rows = 2 * r_clip + 1;
        let mut e = vec![F::zero(); n * table_rows];
        k::matmul_nt_acc(&qd, &od, &mut e, n, d_h, table_rows);
        for row in 0..n {
            let erow = &e[row * table_rows..(row + 1) * table_rows];
            let prow = &mut data[row * n..(row + 1) * n];
            for (m, pv) in prow.iter_mut().enumerate() {
                *pv = erow[rel_table_index(row, m, r_clip)];
            }
        }
    } else {
        for row in 0..n {
            let qrow = &qd[row * d_h..(row + 1) * d_h];
            let prow = &mut data[row * n..(row + 1) * n];
            for (m, pv) in prow.iter_mut().enumerate() {
                let orow = &od[rel_table_index(row, m, r_clip) * d_h..];
                let mut acc = F::zero();
                for d in 0..d_h {
                    acc = acc + qrow[d] * orow[d];
                }
                *pv = acc;
            }
        }
    }
    drop(qd);
    drop(od);
    Ok(Tensor::from_op(
        vec![n, n],
        data,
        vec![q.clone(), omega.clone()],
        Op::RelBias { r_clip, skewed },
        if skewed { "relative_bias_skewed" } else { "relative_bias_direct" },
    ))
}

pub(super) fn backward_op<F: Real>(op: &Op<F>, node: &Node<F>, dy: &[F]) {
    let parents = &node.parents;
    match op {
        Op::Add => {
            parents[0].accumulate_grad(dy);
            parents[1].accumulate_grad(dy);
        }
        Op::Sub => {
            parents[0].accumulate_grad(dy);
            let neg: Vec<F> = dy.iter().map(|&g| -g).collect();
            parents[1].accumulate_grad(&neg);
        }
        Op::Mul => {
            let a = parents[0].data();
            let b = parents[1].data();
            let da: Vec<F> = dy.iter().zip(b.iter()).map(|(&g, &bv)| g * bv).collect();
            let db: Vec<F> = dy.iter().zip(a.iter()).map(|(&g, &av)| g * av).collect();
            drop(a);
            drop(b);
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        }
        Op::AddScalar => parents[0].accumulate_grad(dy),
        Op::MulScalar(c) => {
            let dx: Vec<F> = dy.iter().map(|&g| g * *c).collect();
            parents[0].accumulate_grad(&dx);
        }
        Op::RsubScalar => {
            let dx: Vec<F> = dy.iter().map(|&g| -g).collect();
            parents[0].accumulate_grad(&dx);
        }
        Op::PowScalar(a) => {
            let x = parents[0].data();
            let dx: Vec<F> = if *a == F::zero() {
                vec![F::zero(); dy.len()]
            } else {
                dy.iter()
                    .zip(x.iter())
                    .map(|(&g, &xv)| g * *a * xv.powf(*a - F::one()))
                    .collect()
            };
            drop(x);
            parents[0].accumulate_grad(&dx);
        }
        Op::Ln => {
            let x = parents[0].data();
            let dx: Vec<F> = dy.iter().zip(x.iter()).map(|(&g, &xv)| g / xv).collect();
            drop(x);
            parents[0].accumulate_grad(&dx);
        }
        Op::Sigmoid => {
            let y = node.data.borrow();
            let dx: Vec<F> = dy
                .iter()
                .zip(y.iter())
                .map(|(&g, &yv)| g * yv * (F::one() - yv))
                .collect();
            drop(y);
            parents[0].accumulate_grad(&dx);
        }
        Op::Gelu => {
            let x = parents[0].data();
            let dx: Vec<F> = dy
                .iter()
                .zip(x.iter())
                .map(|(&g, &xv)| g * k::gelu_grad_scalar(xv))
                .collect();
            drop(x);
            parents[0].accumulate_grad(&dx);
        }
        Op::Relu => {
            let x = parents[0].data();
            let dx: Vec<F> = dy
                .iter()
                .zip(x.iter())
                .map(|(&g, &xv)| if xv > F::zero() { g } else { F::zero() })
                .collect();
            drop(x);
            parents[0].accumulate_grad(&dx);
        }
        Op::Clamp(lo, hi) => {
            let x = parents[0].data();
            let dx: Vec<F> = dy
                .iter()
                .zip(x.iter())
                .map(|(&g, &xv)| if xv > *lo && xv < *hi { g } else { F::zero() })
                .collect();
            drop(x);
            parents[0].accumulate_grad(&dx);
        }
        Op::Sum => {
            let dx = vec![dy[0]; parents[0].numel()];
            parents[0].accumulate_grad(&dx);
        }
        Op::Matmul { m, k: kk, n } => {
            let a = parents[0].data();
            let b = parents[1].data();
            let mut da = vec![F::zero(); *m * *kk];
            let mut db = vec![F::zero(); *kk * *n];
            k::matmul_nt_acc(dy, &b, &mut da, *m, *n, *kk);
            k::matmul_tn_acc(&a, dy, &mut db, *kk, *m, *n);
            drop(a);
            drop(b);
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        }
        Op::MatmulNT { m, k: kk, n } => {
            let a = parents[0].data();
            let b = parents[1].data();
            let mut da = vec![F::zero(); *m * *kk];
            let mut db = vec![F::zero(); *n * *kk];
            k::matmul_acc(dy, &b, &mut da, *m, *n, *kk);
            k::matmul_tn_acc(dy, &a, &mut db, *n, *m, *kk);
            drop(a);
            drop(b);
            parents[0].accumulate_grad(&da);
            parents[1].accumulate_grad(&db);
        }
        Op::Linear { m, k: kk, n } => {
            let x = parents[0].data();
            let w = parents[1].data();
            let mut dx = vec![F::zero(); *m * *kk];
            let mut dw = vec![F::zero(); *kk * *n];
            let mut dbias = vec![F::zero(); *n];
            k::matmul_nt_acc(dy, &w, &mut dx, *m, *n, *kk);
            k::matmul_tn_acc(&x, dy, &mut dw, *kk, *m, *n);
            for r in 0..*m {
                let row = &dy[r * *n..(r + 1) * *n];
                for j in 0..*n {
                    dbias[j] = dbias[j] + row[j];
                }
            }
            drop(x);
            drop(w);
            parents[0].accumulate_grad(&dx);
            parents[1].accumulate_grad(&dw);
            parents[2].accumulate_grad(&dbias);
        }
        Op::SoftmaxRows { rows, cols } => {
            let y = node.data.borrow();
            let mut dx = vec![F::zero(); rows * cols];
            for r in 0..*rows {
                let yr = &y[r * cols..(r + 1) * cols];
                let gr = &dy[r * cols..(r + 1) * cols];
                let mut dot = F::zero();
                for j in 0..*cols {
                    dot = dot + gr[j] * yr[j];
                }
                let out = &mut dx[r * cols..(r + 1) * cols];
                for j in 0..*cols {
                    out[j] = yr[j] * (gr[j] - dot);
                }
            }
            drop(y);
            parents[0].accumulate_grad(&dx);
        }
        Op::LayerNorm { rows, cols, mean, inv_std } => {
            let x = parents[0].data();
            let g = parents[1].data();
            let mut dx = vec![F::zero(); rows * cols];
            let mut dgain = vec![F::zero(); *cols];
            let mut dbias = vec![F::zero(); *cols];
            let d = F::c(*cols as f64);
            for r in 0..*rows {
                let xr = &x[r * cols..(r + 1) * cols];
                let gr = &dy[r * cols..(r + 1) * cols];
                let inv = inv_std[r];
                let mu = mean[r];
                let mut sum_dxhat = F::zero();
                let mut sum_dxhat_xhat = F::zero();
                for j in 0..*cols {
                    let xhat = (xr[j] - mu) * inv;
                    let dxhat = gr[j] * g[j];
                    dgain[j] = dgain[j] + gr[j] * xhat;
                    dbias[j] = dbias[j] + gr[j];
                    sum_dxhat = sum_dxhat + dxhat;
                    sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                }
                let out = &mut dx[r * cols..(r + 1) * cols];
                for j in 0..*cols {
                    let xhat = (xr[j] - mu) * inv;
                    let dxhat = gr[j] * g[j];
                    out[j] = inv * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
                }
            }
            drop(x);
            drop(g);
            parents[0].accumulate_grad(&dx);
            parents[1].accumulate_grad(&dgain);
            parents[2].accumulate_grad(&dbias);
        }
        Op::Conv1d { t, c_in, c_out, k: kk, stride, padding } => {
            let x = parents[0].data();
            let w = parents[1].data();
            let mut dx = vec![F::zero(); t * c_in];
            let mut dw = vec![F::zero(); kk * c_in * c_out];
            let mut db = vec![F::zero(); *c_out];
            k::conv1d_backward(
                &x, &w, dy, *t, *c_in, *c_out, *kk, *stride, *padding, &mut dx, &mut dw, &mut db,
            );
            drop(x);
            drop(w);
            parents[0].accumulate_grad(&dx);
            parents[1].accumulate_grad(&dw);
            parents[2].accumulate_grad(&db);
        }
        Op::UpsampleLinear { src, dst, cols } => {
            let mut dx = vec![F::zero(); src * cols];
            for tpos in 0..*dst {
                let (i0, i1, w) = k::upsample_coords::<F>(tpos, *src, *dst);
                let gr = &dy[tpos * cols..(tpos + 1) * cols];
                let wl = F::one() - w;
                for j in 0..*cols {
                    dx[i0 * cols + j] = dx[i0 * cols + j] + wl * gr[j];
                    dx[i1 * cols + j] = dx[i1 * cols + j] + w * gr[j];
                }
            }
            parents[0].accumulate_grad(&dx);
        }
        Op::Dropout { mask } => {
            let dx: Vec<F> = dy.iter().zip(mask.iter()).map(|(&g, &m)| g * m).collect();
            parents[0].accumulate_grad(&dx);
        }
        Op::SliceCols { start, width } => {
            let rows = parents[0].rows();
            let cols = parents[0].cols();
            let mut dx = vec![F::zero(); rows * cols];
            for r in 0..rows {
                for j in 0..*width {
                    dx[r * cols + start + j] = dy[r * width + j];
                }
            }
            parents[0].accumulate_grad(&dx);
        }
        Op::ConcatCols { widths } => {
            let rows = node.shape[0];
            let total: usize = widths.iter().sum();
            let mut offset = 0;
            for (p, w) in parents.iter().zip(widths.iter()) {
                let mut dp = vec![F::zero(); rows * w];
                for r in 0..rows {
                    dp[r * w..(r + 1) * w]
                        .copy_from_slice(&dy[r * total + offset..r * total + offset + w]);
                }
                p.accumulate_grad(&dp);
                offset += w;
            }
        }
        Op::RelBias { r_clip, skewed } => {
            let q = parents[0].data();
            let omega = parents[1].data();
            let n = parents[0].rows();
            let d_h = parents[0].cols();
            let table_rows = 2 * r_clip + 1;
            let mut dq = vec![F::zero(); n * d_h];
            let mut domega = vec![F::zero(); table_rows * d_h];
            if *skewed {
                // Scatter dP into dE, then two matmuls.
                let mut de = vec![F::zero(); n * table_rows];
                for row in 0..n {
                    for m in 0..n {
                        let j = rel_table_index(row, m, *r_clip);
                        de[row * table_rows + j] = de[row * table_rows + j] + dy[row * n + m];
                    }
                }
                k::matmul_acc(&de, &omega, &mut dq, n, table_rows, d_h);
                k::matmul_tn_acc(&de, &q, &mut domega, table_rows, n, d_h);
            } else {
                for row in 0..n {
                    let qrow = &q[row * d_h..(row + 1) * d_h];
                    for m in 0..n {
                        let g = dy[row * n + m];
                        let idx = rel_table_index(row, m, *r_clip);
                        for d in 0..d_h {
                            dq[row * d_h + d] = dq[row * d_h + d] + g * omega[idx * d_h + d];
                            domega[idx * d_h + d] = domega[idx * d_h + d] + g * qrow[d];
                        }
                    }
                }
            }
            drop(q);
            drop(omega);
            parents[0].accumulate_grad(&dq);
            parents[1].accumulate_grad(&domega);
        }
    }
}
