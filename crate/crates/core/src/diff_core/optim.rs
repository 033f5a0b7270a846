use super::{Matrix, Real};
use crate::error::{NvpError, Result};

/// A trainable tensor with its gradient buffer and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
    pub step_count: u64,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (r, c) = value.shape();
        ParamBlock {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        ParamBlock::new(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// AdamW hyperparameters (decoupled weight decay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub weight_decay: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            weight_decay: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamW {
    pub fn step(&self, p: &mut ParamBlock, lr: Real) -> Result<()> {
        adamw_step(p, lr, self.weight_decay, self.beta1, self.beta2, self.eps)
    }
}

/// One AdamW update of `p` using its current gradient. The gradient is left
/// in place; callers zero it before the next accumulation.
pub fn adamw_step(
    p: &mut ParamBlock,
    lr: Real,
    weight_decay: Real,
    beta1: Real,
    beta2: Real,
    eps: Real,
) -> Result<()> {
    if !p.grad.is_finite() {
        return Err(NvpError::NonFiniteGradient(p.name.clone()));
    }
    if !(lr > 0.0) {
        return Err(NvpError::OutOfRange("learning rate", lr.to_string()));
    }
    p.step_count += 1;
    let step = p.step_count as i32;
    let bias1 = 1.0 - beta1.powi(step);
    let bias2 = 1.0 - beta2.powi(step);
    let value = p.value.as_mut_slice();
    let grad = p.grad.as_slice();
    let m = p.adam_m.as_mut_slice();
    let v = p.adam_v.as_mut_slice();
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        value[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * value[i]);
    }
    Ok(())
}

/// Cosine annealing from `eta` at `t = 0` down to `eta_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, eta: Real, eta_min: Real) -> Result<Real> {
    if t > total {
        return Err(NvpError::OutOfRange(
            "cosine_lr iteration",
            format!("{t} > {total}"),
        ));
    }
    if total == 0 {
        return Ok(eta);
    }
    let phase = (t as Real / total as Real) * std::f64::consts::PI as Real;
    Ok(eta_min + 0.5 * (eta - eta_min) * (1.0 + phase.cos()))
}
