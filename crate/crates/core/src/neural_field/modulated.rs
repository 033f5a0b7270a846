use super::mlp::{map, Dense};
use crate::diff_core::{Matrix, ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};

/// Sinusoidal synthesizer on `t` whose hidden activations are gated by a
/// LeakyReLU modulator network fed with the latent vector `z`:
///
/// ```text
/// z_1 = lrelu(B_1 z + c_1),  z_k = lrelu(B_k z_{k-1} + c_k)          k < K
/// a_0 = t,                   a_k = z_k * sin(s_k (A_k a_{k-1} + b_k))  k < K
/// rgb = A_K a_{K-1} + b_K
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedField {
    pub synth: Vec<Dense>,
    pub modulator: Vec<Dense>,
    pub sigmas: Vec<Real>,
    pub slope: Real,
}

/// Activations cached by [`ModulatedField::forward`].
#[derive(Debug, Clone)]
pub struct FieldTape {
    mod_inputs: Vec<Matrix>,
    mod_pre: Vec<Matrix>,
    mod_out: Vec<Matrix>,
    synth_inputs: Vec<Matrix>,
    synth_pre: Vec<Matrix>,
}

impl ModulatedField {
    /// `depth` synthesizer layers (`K >= 2`) of width `hidden`, and `K - 1`
    /// modulator layers of the same width reading a `z_dim` latent.
    pub fn new(
        z_dim: usize,
        depth: usize,
        hidden: usize,
        sigmas: &[Real],
        slope: Real,
    ) -> Result<Self> {
        if depth < 2 {
            return Err(NvpError::Config(format!(
                "modulated field needs depth >= 2, got {depth}"
            )));
        }
        if sigmas.len() != depth - 1 {
            return Err(NvpError::Config(format!(
                "expected {} layer frequencies, got {}",
                depth - 1,
                sigmas.len()
            )));
        }
        if z_dim == 0 || hidden == 0 {
            return Err(NvpError::Config("field widths must be positive".into()));
        }
        let synth = (0..depth)
            .map(|k| {
                let input = if k == 0 { 1 } else { hidden };
                let output = if k + 1 == depth { 3 } else { hidden };
                Dense::zeros(&format!("synth.{k}"), input, output)
            })
            .collect();
        let modulator = (0..depth - 1)
            .map(|k| {
                let input = if k == 0 { z_dim } else { hidden };
                Dense::zeros(&format!("modulator.{k}"), input, hidden)
            })
            .collect();
        Ok(ModulatedField {
            synth,
            modulator,
            sigmas: sigmas.to_vec(),
            slope,
        })
    }

    pub fn depth(&self) -> usize {
        self.synth.len()
    }

    pub fn z_dim(&self) -> usize {
        self.modulator[0].input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.modulator[0].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// SIREN-style synthesizer and Kaiming-normal modulator.
    pub fn init(&mut self, rng: &mut Rng) {
        for (k, layer) in self.synth.iter_mut().enumerate() {
            let fan_in = layer.input_dim() as Real;
            let bound = if k == 0 {
                1.0 / fan_in
            } else {
                let sigma = self.sigmas.get(k).copied().unwrap_or(1.0);
                (6.0 / fan_in).sqrt() / sigma
            };
            layer.init_uniform(rng, bound, 1.0 / fan_in.sqrt());
        }
        for layer in &mut self.modulator {
            layer.init_kaiming_normal(rng);
        }
    }

    fn lrelu(&self, v: Real) -> Real {
        if v >= 0.0 {
            v
        } else {
            self.slope * v
        }
    }

    fn lrelu_grad(&self, v: Real) -> Real {
        if v >= 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Batched forward: `z` is `B x z_dim`, `t` is `B x 1`; returns `B x 3`.
    pub fn forward(&self, z: &Matrix, t: &Matrix) -> Result<(Matrix, FieldTape)> {
        if z.cols() != self.z_dim() {
            return Err(NvpError::shape("field_forward(z)", self.z_dim(), z.cols()));
        }
        if t.cols() != 1 || t.rows() != z.rows() {
            return Err(NvpError::shape(
                "field_forward(t)",
                format!("{}x1", z.rows()),
                format!("{}x{}", t.rows(), t.cols()),
            ));
        }
        let k_mod = self.modulator.len();
        let mut tape = FieldTape {
            mod_inputs: Vec::with_capacity(k_mod),
            mod_pre: Vec::with_capacity(k_mod),
            mod_out: Vec::with_capacity(k_mod),
            synth_inputs: Vec::with_capacity(self.synth.len()),
            synth_pre: Vec::with_capacity(k_mod),
        };
        let mut h = z.clone();
        for layer in &self.modulator {
            let pre = layer.forward(&h)?;
            let out = map(&pre, |v| self.lrelu(v));
            tape.mod_inputs.push(std::mem::replace(&mut h, out.clone()));
            tape.mod_pre.push(pre);
            tape.mod_out.push(out);
        }
        let mut alpha = t.clone();
        for (k, layer) in self.synth[..k_mod].iter().enumerate() {
            let pre = layer.forward(&alpha)?;
            let sigma = self.sigmas[k];
            let gate = tape.mod_out[k].as_slice();
            let data = pre
                .as_slice()
                .iter()
                .zip(gate)
                .map(|(p, g)| g * (sigma * p).sin())
                .collect();
            let next = Matrix::from_vec(pre.rows(), pre.cols(), data)?;
            tape.synth_inputs.push(std::mem::replace(&mut alpha, next));
            tape.synth_pre.push(pre);
        }
        let out = self.synth[k_mod].forward(&alpha)?;
        tape.synth_inputs.push(alpha);
        Ok((out, tape))
    }

    /// Parameter gradients in [`Self::params`] order, plus `dz`.
    pub fn backward(&self, tape: &FieldTape, upstream: &Matrix) -> Result<(Vec<Matrix>, Matrix)> {
        let k_mod = self.modulator.len();
        if tape.synth_inputs.len() != self.synth.len() || tape.mod_out.len() != k_mod {
            return Err(NvpError::StaleTape(
                "field tape does not match network depth".into(),
            ));
        }
        let mut synth_grads = vec![Matrix::zeros(0, 0); 2 * self.synth.len()];
        let mut mod_grads = vec![Matrix::zeros(0, 0); 2 * k_mod];

        let (dw, db, dx) = self.synth[k_mod].backward(&tape.synth_inputs[k_mod], upstream, true)?;
        synth_grads[2 * k_mod] = dw;
        synth_grads[2 * k_mod + 1] = db;
        let mut d_alpha = dx.expect("requested");

        let mut d_gate: Vec<Matrix> = Vec::with_capacity(k_mod);
        for k in (0..k_mod).rev() {
            let sigma = self.sigmas[k];
            let pre = tape.synth_pre[k].as_slice();
            let gate = tape.mod_out[k].as_slice();
            let mut dg = Matrix::zeros(d_alpha.rows(), d_alpha.cols());
            let mut dpre = Matrix::zeros(d_alpha.rows(), d_alpha.cols());
            for i in 0..pre.len() {
                let (s, c) = (sigma * pre[i]).sin_cos();
                let da = d_alpha.as_slice()[i];
                dg.as_mut_slice()[i] = da * s;
                dpre.as_mut_slice()[i] = da * gate[i] * sigma * c;
            }
            let (dw, db, dx) = self.synth[k].backward(&tape.synth_inputs[k], &dpre, k > 0)?;
            synth_grads[2 * k] = dw;
            synth_grads[2 * k + 1] = db;
            if let Some(dx) = dx {
                d_alpha = dx;
            }
            d_gate.push(dg);
        }
        d_gate.reverse();

        let mut carry: Option<Matrix> = None;
        for k in (0..k_mod).rev() {
            let mut dq = d_gate[k].clone();
            if let Some(c) = carry.take() {
                dq.add_assign(&c)?;
            }
            for (g, p) in dq.as_mut_slice().iter_mut().zip(tape.mod_pre[k].as_slice()) {
                *g *= self.lrelu_grad(*p);
            }
            let (dw, db, dx) = self.modulator[k].backward(&tape.mod_inputs[k], &dq, true)?;
            mod_grads[2 * k] = dw;
            mod_grads[2 * k + 1] = db;
            carry = dx;
        }
        synth_grads.extend(mod_grads);
        Ok((synth_grads, carry.expect("at least one modulator layer")))
    }

    pub fn params(&self) -> Vec<&ParamBlock> {
        self.synth
            .iter()
            .chain(&self.modulator)
            .flat_map(|l| l.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.synth
            .iter_mut()
            .chain(self.modulator.iter_mut())
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

/// Single-sample forward `field(z, t) -> rgb`.
pub fn field_forward(f: &ModulatedField, z: &[Real], t: Real) -> Result<([Real; 3], FieldTape)> {
    let zm = Matrix::from_vec(1, z.len(), z.to_vec())?;
    let tm = Matrix::from_vec(1, 1, vec![t])?;
    let (out, tape) = f.forward(&zm, &tm)?;
    Ok(([out.get(0, 0), out.get(0, 1), out.get(0, 2)], tape))
}

/// Single-sample backward; returns parameter gradients and `dz`.
pub fn field_backward(
    f: &ModulatedField,
    tape: &FieldTape,
    upstream: [Real; 3],
) -> Result<(Vec<Matrix>, Vec<Real>)> {
    let up = Matrix::from_vec(1, 3, upstream.to_vec())?;
    let (grads, dz) = f.backward(tape, &up)?;
    Ok((grads, dz.into_vec()))
}
