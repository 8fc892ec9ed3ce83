//! Raw slice-level math shared by forward ops, their backward passes, and
//! test oracles. No graph bookkeeping here.

use super::Real;

/// c += a(m×k) · b(k×n)
pub fn matmul_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

/// c += a(m×k) · b(n×k)ᵀ
pub fn matmul_nt_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for p in 0..k {
                acc = acc + arow[p] * brow[p];
            }
            crow[j] = crow[j] + acc;
        }
    }
}

/// c += a(k×m)ᵀ · b(k×n)
pub fn matmul_tn_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

/// Output length of a 1-D convolution; `None` when the window does not fit.
pub fn conv1d_out_len(t: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = t + 2 * padding;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// y(t_out×c_out) = conv1d(x(t×c_in), w(k×c_in×c_out)) + b, zero padding,
/// cross-correlation convention.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward<F: Real>(
    x: &[F],
    w: &[F],
    b: &[F],
    t: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    y: &mut [F],
) {
    let t_out = conv1d_out_len(t, k, stride, padding).expect("conv1d length");
    debug_assert_eq!(y.len(), t_out * c_out);
    for to in 0..t_out {
        let yrow = &mut y[to * c_out..(to + 1) * c_out];
        yrow.copy_from_slice(b);
        for j in 0..k {
            let pos = (to * stride + j) as isize - padding as isize;
            if pos < 0 || pos >= t as isize {
                continue;
            }
            let xrow = &x[pos as usize * c_in..(pos as usize + 1) * c_in];
            let wplane = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
            for (i, &xv) in xrow.iter().enumerate() {
                let wrow = &wplane[i * c_out..(i + 1) * c_out];
                for o in 0..c_out {
                    yrow[o] = yrow[o] + xv * wrow[o];
                }
            }
        }
    }
}

/// Accumulates conv1d input/weight/bias gradients from dy.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<F: Real>(
    x: &[F],
    w: &[F],
    dy: &[F],
    t: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dx: &mut [F],
    dw: &mut [F],
    db: &mut [F],
) {
    let t_out = conv1d_out_len(t, k, stride, padding).expect("conv1d length");
    for to in 0..t_out {
        let dyrow = &dy[to * c_out..(to + 1) * c_out];
        for o in 0..c_out {
            db[o] = db[o] + dyrow[o];
        }
        for j in 0..k {
            let pos = (to * stride + j) as isize - padding as isize;
            if pos < 0 || pos >= t as isize {
                continue;
            }
            let p = pos as usize;
            let xrow = &x[p * c_in..(p + 1) * c_in];
            let wplane = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
            let dxrow = &mut dx[p * c_in..(p + 1) * c_in];
            let dwplane = &mut dw[j * c_in * c_out..(j + 1) * c_in * c_out];
            for i in 0..c_in {
                let wrow = &wplane[i * c_out..(i + 1) * c_out];
                let dwrow = &mut dwplane[i * c_out..(i + 1) * c_out];
                let mut acc = F::zero();
                for o in 0..c_out {
                    acc = acc + dyrow[o] * wrow[o];
                    dwrow[o] = dwrow[o] + dyrow[o] * xrow[i];
                }
                dxrow[i] = dxrow[i] + acc;
            }
        }
    }
}

/// Row-wise softmax with max subtraction, in place.
pub fn softmax_rows_inplace<F: Real>(x: &mut [F], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Sampling position for align-corners linear interpolation:
/// (low index, high index, weight of high).
pub fn upsample_coords<F: Real>(t: usize, src: usize, dst: usize) -> (usize, usize, F) {
    if src == 1 || dst == 1 {
        return (0, 0, F::zero());
    }
    let scale = (src - 1) as f64 / (dst - 1) as f64;
    let pos = t as f64 * scale;
    let i0 = (pos.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, F::c(pos - i0 as f64))
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// tanh-form gaussian error linear unit.
pub fn gelu_scalar<F: Real>(x: F) -> F {
    let c0 = F::c(0.7978845608028654); // sqrt(2/pi)
    let c1 = F::c(0.044715);
    let u = c0 * (x + c1 * x * x * x);
    F::c(0.5) * x * (F::one() + u.tanh())
}

pub fn gelu_grad_scalar<F: Real>(x: F) -> F {
    let c0 = F::c(0.7978845608028654);
    let c1 = F::c(0.044715);
    let u = c0 * (x + c1 * x * x * x);
    let th = u.tanh();
    let sech2 = F::one() - th * th;
    let du = c0 * (F::one() + F::c(3.0) * c1 * x * x);
    F::c(0.5) * (F::one() + th) + F::c(0.5) * x * sech2 * du
}
