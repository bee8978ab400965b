//! Row-major dense kernels used by the forward and backward passes.

use crate::scalar::Scalar;

/// `a[m×k] · w[k×n] + bias`, bias broadcast over rows.
pub(crate) fn affine<T: Scalar>(
    a: &[T],
    m: usize,
    k: usize,
    w: &[T],
    n: usize,
    bias: &[T],
) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        out.extend_from_slice(bias);
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (o, &wv) in row.iter_mut().zip(&w[p * n..(p + 1) * n]) {
                *o += x * wv;
            }
        }
    }
    out
}

/// `dw[k×n] += aᵀ · g` for `a[m×k]`, `g[m×n]`.
pub(crate) fn acc_at_b<T: Scalar>(a: &[T], m: usize, k: usize, g: &[T], n: usize, dw: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (d, &gv) in dw[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *d += x * gv;
            }
        }
    }
}

/// `dx[m×k] += g[m×n] · wᵀ` for `w[k×n]`.
pub(crate) fn acc_a_bt<T: Scalar>(g: &[T], m: usize, n: usize, w: &[T], k: usize, dx: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            dx[i * k + p] += crate::scalar::dot(grow, &w[p * n..(p + 1) * n]);
        }
    }
}

pub(crate) fn acc_colsum<T: Scalar>(g: &[T], n: usize, db: &mut [T]) {
    for row in g.chunks_exact(n) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
}

pub(crate) struct NormTape<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) const NORM_EPS: f64 = 1e-5;

pub(crate) fn layer_norm<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    bias: &[T],
) -> (Vec<T>, NormTape<T>) {
    let rows = x.len() / d;
    let inv_d = T::one() / T::of(d as f64);
    let eps = T::of(NORM_EPS);
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(rows);
    for row in x.chunks_exact(d) {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for (t, &v) in row.iter().enumerate() {
            let h = (v - mean) * r;
            xhat.push(h);
            y.push(h * gain[t] + bias[t]);
        }
    }
    (y, NormTape { xhat, rstd })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    tape: &NormTape<T>,
    d: usize,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let inv_d = T::one() / T::of(d as f64);
    let mut dx = Vec::with_capacity(dy.len());
    let mut dxhat = vec![T::zero(); d];
    for ((drow, xrow), &r) in dy
        .chunks_exact(d)
        .zip(tape.xhat.chunks_exact(d))
        .zip(&tape.rstd)
    {
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for t in 0..d {
            dgain[t] += drow[t] * xrow[t];
            dbias[t] += drow[t];
            dxhat[t] = drow[t] * gain[t];
            mean_dxhat += dxhat[t];
            mean_dxhat_xhat += dxhat[t] * xrow[t];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        for t in 0..d {
            dx.push(r * (dxhat[t] - mean_dxhat - xrow[t] * mean_dxhat_xhat));
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu_k<T: Scalar>() -> T {
    T::of((2.0 / std::f64::consts::PI).sqrt())
}

/// tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(u: T) -> T {
    let half = T::of(0.5);
    half * u * (T::one() + (gelu_k::<T>() * (u + T::of(GELU_C) * u * u * u)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(u: T) -> T {
    let half = T::of(0.5);
    let c = T::of(GELU_C);
    let t = (gelu_k::<T>() * (u + c * u * u * u)).tanh();
    half * (T::one() + t)
        + half * u * (T::one() - t * t) * gelu_k::<T>() * (T::one() + T::of(3.0) * c * u * u)
}
