//! Differentiable primitives.
//!
//! The vector forms mirror the textbook definitions and are what the
//! gradient tests exercise. The `*_batch` forms operate on `B x n` matrices
//! (one sample per row) and are what the networks use.

use super::{Matrix, Real};
use crate::error::{NvpError, Result};

/// Default negative slope for [`leaky_relu`].
pub const LEAKY_SLOPE: Real = 0.01;

/// `W x + b`.
pub fn linear_forward(x: &[Real], w: &Matrix, b: &[Real]) -> Result<Vec<Real>> {
    if x.len() != w.cols() {
        return Err(NvpError::shape("linear_forward(x)", w.cols(), x.len()));
    }
    if b.len() != w.rows() {
        return Err(NvpError::shape("linear_forward(b)", w.rows(), b.len()));
    }
    Ok((0..w.rows())
        .map(|r| {
            w.row(r)
                .iter()
                .zip(x)
                .map(|(wi, xi)| wi * xi)
                .sum::<Real>()
                + b[r]
        })
        .collect())
}

/// Gradients of `W x + b` given the upstream gradient: `(dW, db, dx)`.
pub fn linear_backward(
    x: &[Real],
    w: &Matrix,
    upstream: &[Real],
) -> Result<(Matrix, Vec<Real>, Vec<Real>)> {
    if x.len() != w.cols() {
        return Err(NvpError::shape("linear_backward(x)", w.cols(), x.len()));
    }
    if upstream.len() != w.rows() {
        return Err(NvpError::shape(
            "linear_backward(upstream)",
            w.rows(),
            upstream.len(),
        ));
    }
    let mut dw = Matrix::zeros(w.rows(), w.cols());
    for (r, g) in upstream.iter().enumerate() {
        for (d, xi) in dw.row_mut(r).iter_mut().zip(x) {
            *d = g * xi;
        }
    }
    let mut dx = vec![0.0; w.cols()];
    for (r, g) in upstream.iter().enumerate() {
        for (d, wi) in dx.iter_mut().zip(w.row(r)) {
            *d += wi * g;
        }
    }
    Ok((dw, upstream.to_vec(), dx))
}

/// Elementwise `sin(sigma * x)`.
pub fn sin_act(x: &[Real], sigma: Real) -> Vec<Real> {
    x.iter().map(|v| (sigma * v).sin()).collect()
}

pub fn sin_act_backward(x: &[Real], sigma: Real, upstream: &[Real]) -> Vec<Real> {
    x.iter()
        .zip(upstream)
        .map(|(v, g)| g * sigma * (sigma * v).cos())
        .collect()
}

/// `x` for `x >= 0`, `slope * x` otherwise. The derivative at 0 is taken as 1.
pub fn leaky_relu(x: &[Real], slope: Real) -> Vec<Real> {
    x.iter()
        .map(|&v| if v >= 0.0 { v } else { slope * v })
        .collect()
}

pub fn leaky_relu_backward(x: &[Real], slope: Real, upstream: &[Real]) -> Vec<Real> {
    x.iter()
        .zip(upstream)
        .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
        .collect()
}

/// Batched affine map: rows of `x` are samples, `w` is `out x in`.
pub(crate) fn affine_batch(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut y = Matrix::zeros(x.rows(), w.rows());
    for r in 0..y.rows() {
        y.row_mut(r).copy_from_slice(b.as_slice());
    }
    Matrix::gemm(1.0, x, false, w, true, 1.0, &mut y)?;
    Ok(y)
}

/// Accumulates `dW += dYᵀ X` and `db += colsum(dY)`; returns `dX` when requested.
pub(crate) fn affine_batch_backward(
    x: &Matrix,
    w: &Matrix,
    dy: &Matrix,
    dw: &mut Matrix,
    db: &mut Matrix,
    want_dx: bool,
) -> Result<Option<Matrix>> {
    Matrix::gemm(1.0, dy, true, x, false, 1.0, dw)?;
    for r in 0..dy.rows() {
        for (acc, g) in db.as_mut_slice().iter_mut().zip(dy.row(r)) {
            *acc += *g;
        }
    }
    if want_dx {
        Ok(Some(dy.matmul(w)?))
    } else {
        Ok(None)
    }
}
