use crate::diff_core::ops::{affine_batch, affine_batch_backward};
use crate::diff_core::{Matrix, ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};

/// Pointwise nonlinearity applied after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    /// `sin(sigma * x)`.
    Sine(Real),
    Relu,
    LeakyRelu(Real),
}

impl Activation {
    #[inline]
    pub fn apply(self, x: Real) -> Real {
        match self {
            Activation::Identity => x,
            Activation::Sine(s) => (s * x).sin(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, x: Real) -> Real {
        match self {
            Activation::Identity => 1.0,
            Activation::Sine(s) => s * (s * x).cos(),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

/// Affine layer `y = x Wᵀ + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamBlock,
    pub bias: ParamBlock,
}

impl Dense {
    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Dense {
            weight: ParamBlock::zeros(format!("{name}.weight"), output, input),
            bias: ParamBlock::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(NvpError::shape(
                "Dense::forward",
                self.input_dim(),
                x.cols(),
            ));
        }
        affine_batch(x, &self.weight.value, &self.bias.value)
    }

    /// Gradients `(dW, db)` in fresh buffers, plus `dX` when requested.
    pub fn backward(
        &self,
        x: &Matrix,
        dy: &Matrix,
        want_dx: bool,
    ) -> Result<(Matrix, Matrix, Option<Matrix>)> {
        let mut dw = Matrix::zeros(self.output_dim(), self.input_dim());
        let mut db = Matrix::zeros(1, self.output_dim());
        let dx = affine_batch_backward(x, &self.weight.value, dy, &mut dw, &mut db, want_dx)?;
        Ok((dw, db, dx))
    }

    pub fn init_uniform(&mut self, rng: &mut Rng, weight_bound: Real, bias_bound: Real) {
        for v in self.weight.value.as_mut_slice() {
            *v = rng.uniform(-weight_bound, weight_bound);
        }
        for v in self.bias.value.as_mut_slice() {
            *v = rng.uniform(-bias_bound, bias_bound);
        }
    }

    /// Kaiming-normal (fan-in) weights with zero bias.
    pub fn init_kaiming_normal(&mut self, rng: &mut Rng) {
        let std = (2.0 / self.input_dim() as Real).sqrt();
        for v in self.weight.value.as_mut_slice() {
            *v = rng.normal(0.0, std);
        }
        self.bias.value.fill(0.0);
    }

    pub fn params(&self) -> [&ParamBlock; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut ParamBlock; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn map(x: &Matrix, f: impl Fn(Real) -> Real) -> Matrix {
    let data = x.as_slice().iter().map(|v| f(*v)).collect();
    Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// Plain feed-forward stack; `activations[i]` follows `layers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activations: Vec<Activation>,
}

/// Cached inputs and pre-activations of one [`Mlp`] forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
}

impl Mlp {
    /// Layer widths `dims[0] -> dims[1] -> ... -> dims[n]`, with `hidden`
    /// after every layer but the last and `output` after the last.
    pub fn new(name: &str, dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| Dense::zeros(&format!("{name}.{i}"), dims[i], dims[i + 1]))
            .collect();
        let activations = (0..n)
            .map(|i| if i + 1 == n { output } else { hidden })
            .collect();
        Mlp {
            layers,
            activations,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpTape)> {
        let mut tape = MlpTape {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let pre = layer.forward(&h)?;
            let next = match act {
                Activation::Identity => pre.clone(),
                a => map(&pre, |v| a.apply(v)),
            };
            tape.inputs.push(h);
            tape.preacts.push(pre);
            h = next;
        }
        Ok((h, tape))
    }

    /// Parameter gradients in [`Self::params`] order, plus `dX`.
    pub fn backward(&self, tape: &MlpTape, upstream: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(NvpError::StaleTape("MLP tape depth does not match network".into()));
        }
        let mut grads = vec![Matrix::zeros(0, 0); 2 * self.layers.len()];
        let mut dy = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activations[i];
            if act != Activation::Identity {
                let pre = tape.preacts[i].as_slice();
                for (g, p) in dy.as_mut_slice().iter_mut().zip(pre) {
                    *g *= act.derivative(*p);
                }
            }
            let (dw, db, dx) = self.layers[i].backward(&tape.inputs[i], &dy, true)?;
            grads[2 * i] = dw;
            grads[2 * i + 1] = db;
            dy = dx.expect("requested");
        }
        Ok((grads, dy))
    }

    pub fn params(&self) -> Vec<&ParamBlock> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let mut mlp = Mlp::new(
            "t",
            &[3, 5, 4, 2],
            Activation::Sine(2.0),
            Activation::Identity,
        );
        for l in &mut mlp.layers {
            l.init_uniform(&mut rng, 0.8, 0.5);
        }
        let mut x = Matrix::zeros(4, 3);
        x.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.uniform(-1.0, 1.0));
        let mut up = Matrix::zeros(4, 2);
        up.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.uniform(-1.0, 1.0));

        let loss = |m: &Mlp, x: &Matrix| m.forward(x).unwrap().0.frobenius_dot(&up);
        let (_, tape) = mlp.forward(&x).unwrap();
        let (grads, dx) = mlp.backward(&tape, &up).unwrap();
        let h = 1e-5;
        for (pi, g) in grads.iter().enumerate() {
            for k in 0..g.len() {
                let mut p = mlp.clone();
                p.params_mut()[pi].value.as_mut_slice()[k] += h;
                let lp = loss(&p, &x);
                let mut m = mlp.clone();
                m.params_mut()[pi].value.as_mut_slice()[k] -= h;
                let lm = loss(&m, &x);
                let fd = (lp - lm) / (2.0 * h);
                let an = g.as_slice()[k];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");
            }
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[k] -= h;
            let fd = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
            assert!((fd - dx.as_slice()[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn kaiming_variance() {
        let mut rng = Rng::new(4);
        let mut d = Dense::zeros("m", 50, 200);
        d.init_kaiming_normal(&mut rng);
        let w = d.weight.value.as_slice();
        let mean = w.iter().sum::<Real>() / w.len() as Real;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<Real>() / w.len() as Real;
        let expected = 2.0 / 50.0;
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
        assert!(d.bias.value.as_slice().iter().all(|b| *b == 0.0));
    }
}
