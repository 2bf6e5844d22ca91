//! Fully connected field network with a flat parameter vector and a manual
//! reverse pass.
//!
//! Trunk: `hidden_layers` dense layers with softplus activations on the
//! encoded position concatenated with image features. Heads: one linear unit
//! for occupancy (sigmoid) or density (softplus), and a color branch fed by
//! the last trunk activation concatenated with the view direction, ending in
//! three sigmoid units.
//!
//! Weights are stored input-major (`w[i * out + j]`) so that both passes are
//! contiguous row updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::PosEncoding;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::num::{sigmoid, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Head output is an occupancy probability in (0, 1).
    Occupancy,
    /// Head output is a non-negative volume density.
    Density,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldArch {
    pub encoding: PosEncoding,
    /// Length of the image feature vector appended to the encoding.
    pub feature_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Width of the hidden layer in the color branch; 0 makes it linear.
    pub color_hidden: usize,
    pub softplus_beta: f64,
    pub mode: FieldMode,
}

impl Default for FieldArch {
    fn default() -> Self {
        Self {
            encoding: PosEncoding::default(),
            feature_dim: 9,
            hidden_width: 128,
            hidden_layers: 4,
            color_hidden: 64,
            softplus_beta: 100.0,
            mode: FieldMode::Occupancy,
        }
    }
}

impl FieldArch {
    pub fn input_dim(&self) -> usize {
        self.encoding.output_dim() + self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::validation("field network needs at least one non-empty hidden layer"));
        }
        if !(self.softplus_beta > 0.0 && self.softplus_beta.is_finite()) {
            return Err(Error::validation("softplus beta must be positive"));
        }
        Ok(())
    }

    /// Dense layer shapes in parameter order: trunk, occupancy head, color branch.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let h = self.hidden_width;
        let mut v = vec![(self.input_dim(), h)];
        v.extend(std::iter::repeat_n((h, h), self.hidden_layers - 1));
        v.push((h, 1));
        if self.color_hidden > 0 {
            v.push((h + 3, self.color_hidden));
            v.push((self.color_hidden, 3));
        } else {
            v.push((h + 3, 3));
        }
        v
    }
}

/// Dot product with independent partial sums, so it vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Start of the weights in the parameter vector; biases follow them.
    param: usize,
    /// Start of this layer's input activations in the tape; pre-activations follow.
    tape: usize,
}

impl Layer {
    fn weights(&self) -> std::ops::Range<usize> {
        self.param..self.param + self.inputs * self.outputs
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let s = self.param + self.inputs * self.outputs;
        s..s + self.outputs
    }

    fn input(&self) -> std::ops::Range<usize> {
        self.tape..self.tape + self.inputs
    }

    fn pre(&self) -> std::ops::Range<usize> {
        let s = self.tape + self.inputs;
        s..s + self.outputs
    }
}

/// Network parameters plus the derived layer layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams<T> {
    arch: FieldArch,
    layers: Vec<Layer>,
    tape_len: usize,
    beta: T,
    pub data: Vec<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn zeros(arch: FieldArch) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::new();
        let (mut p, mut t) = (0, 0);
        for (inputs, outputs) in arch.layer_shapes() {
            layers.push(Layer { inputs, outputs, param: p, tape: t });
            p += inputs * outputs + outputs;
            t += inputs + outputs;
        }
        Ok(Self { arch, layers, tape_len: t, beta: T::lit(arch.softplus_beta), data: vec![T::zero(); p] })
    }

    /// Uniform Glorot weights and zero biases.
    pub fn random(arch: FieldArch, rng: &mut impl Rng) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        for l in params.layers.clone() {
            let bound = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut params.data[l.weights()] {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(params)
    }

    pub fn from_data(arch: FieldArch, data: Vec<T>) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        if data.len() != params.data.len() {
            return Err(Error::validation(format!(
                "parameter vector has {} entries, architecture needs {}",
                data.len(),
                params.data.len()
            )));
        }
        params.data = data;
        Ok(params)
    }

    pub fn arch(&self) -> &FieldArch {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    /// Scratch length needed by one forward/backward evaluation.
    pub fn tape_len(&self) -> usize {
        self.tape_len
    }

    pub fn new_tape(&self) -> Vec<T> {
        vec![T::zero(); self.tape_len]
    }

    /// The network input slot of a tape; fill it before [`Self::forward`].
    pub fn input_mut<'t>(&self, tape: &'t mut [T]) -> &'t mut [T] {
        &mut tape[self.layers[0].input()]
    }

    fn trunk(&self) -> &[Layer] {
        &self.layers[..self.arch.hidden_layers]
    }

    fn head(&self) -> Layer {
        self.layers[self.arch.hidden_layers]
    }

    fn color_layers(&self) -> &[Layer] {
        &self.layers[self.arch.hidden_layers + 1..]
    }

    fn act(&self, z: T) -> T {
        let bz = self.beta * z;
        if bz > T::lit(20.0) {
            z
        } else {
            bz.exp().ln_1p() / self.beta
        }
    }

    fn act_grad(&self, z: T) -> T {
        sigmoid(self.beta * z)
    }

    fn dense(&self, layer: Layer, tape: &mut [T]) {
        let (head, tail) = tape.split_at_mut(layer.tape + layer.inputs);
        let x = &head[layer.tape..];
        let z = &mut tail[..layer.outputs];
        z.copy_from_slice(&self.data[layer.biases()]);
        let w = &self.data[layer.weights()];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &w[i * layer.outputs..(i + 1) * layer.outputs];
            for (zj, &wij) in z.iter_mut().zip(row) {
                *zj += xi * wij;
            }
        }
    }

    /// Copies `act(pre-activations of from)` into the first slots of `to`'s input.
    fn activate_into(&self, from: Layer, to: Layer, tape: &mut [T]) {
        debug_assert!(to.tape >= from.tape + from.inputs + from.outputs);
        let (head, tail) = tape.split_at_mut(to.tape);
        let z = &head[from.pre()];
        for (dst, &zj) in tail[..from.outputs].iter_mut().zip(z) {
            *dst = self.act(zj);
        }
    }

    fn head_value(&self, z: T) -> T {
        match self.arch.mode {
            FieldMode::Occupancy => sigmoid(z),
            FieldMode::Density => crate::num::softplus(z),
        }
    }

    /// Runs the network on the input already written into `tape`. Returns the
    /// head value (occupancy or density) and, when requested, the color.
    pub fn forward(&self, tape: &mut [T], dir: Vec3<T>, with_color: bool) -> (T, Option<[T; 3]>) {
        let trunk = self.trunk();
        for (k, &l) in trunk.iter().enumerate() {
            self.dense(l, tape);
            let next = if k + 1 < trunk.len() { trunk[k + 1] } else { self.head() };
            self.activate_into(l, next, tape);
        }
        let head = self.head();
        self.dense(head, tape);
        let value = self.head_value(tape[head.pre().start]);
        if !with_color {
            return (value, None);
        }
        let color = self.color_layers();
        let last = *trunk.last().expect("at least one trunk layer");
        self.activate_into(last, color[0], tape);
        let h = self.arch.hidden_width;
        tape[color[0].tape + h..color[0].tape + h + 3].copy_from_slice(&dir.to_array());
        self.dense(color[0], tape);
        if color.len() == 2 {
            self.activate_into(color[0], color[1], tape);
            self.dense(color[1], tape);
        }
        let out = &tape[color[color.len() - 1].pre()];
        (value, Some([sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])]))
    }

    /// Accumulates into `grad` the parameter gradient of a scalar loss given
    /// its derivative with respect to the head value and (optionally) the
    /// color. `tape` must hold the matching [`Self::forward`] evaluation
    /// (with color, if `d_color` is given).
    pub fn backward(&self, tape: &[T], d_value: T, d_color: Option<[T; 3]>, grad: &mut [T]) {
        let h = self.arch.hidden_width;
        // gradient w.r.t. the last trunk activation
        let mut d_act = vec![T::zero(); h];

        if let Some(dc) = d_color {
            let color = self.color_layers();
            let out_layer = color[color.len() - 1];
            let zo = &tape[out_layer.pre()];
            let mut dz: Vec<T> = (0..3)
                .map(|k| {
                    let s = sigmoid(zo[k]);
                    dc[k] * s * (T::one() - s)
                })
                .collect();
            if color.len() == 2 {
                let mut dx = self.dense_backward(out_layer, tape, &dz, grad);
                let hid = color[0];
                for (dxi, &z) in dx.iter_mut().zip(&tape[hid.pre()]) {
                    *dxi *= self.act_grad(z);
                }
                dz = dx;
            }
            let dx = self.dense_backward(color[0], tape, &dz, grad);
            for (a, &b) in d_act.iter_mut().zip(&dx[..h]) {
                *a += b;
            }
        }

        let head = self.head();
        let zh = tape[head.pre().start];
        let dz_head = d_value
            * match self.arch.mode {
                FieldMode::Occupancy => {
                    let s = sigmoid(zh);
                    s * (T::one() - s)
                }
                FieldMode::Density => sigmoid(zh),
            };
        let dx = self.dense_backward(head, tape, &[dz_head], grad);
        for (a, &b) in d_act.iter_mut().zip(&dx) {
            *a += b;
        }

        let trunk = self.trunk();
        for (k, &l) in trunk.iter().enumerate().rev() {
            for (a, &z) in d_act.iter_mut().zip(&tape[l.pre()]) {
                *a *= self.act_grad(z);
            }
            if k == 0 {
                self.dense_backward_params(l, tape, &d_act, grad);
            } else {
                d_act = self.dense_backward(l, tape, &d_act, grad);
            }
        }
    }

    fn dense_backward_params(&self, layer: Layer, tape: &[T], dz: &[T], grad: &mut [T]) {
        let x = &tape[layer.input()];
        let gw = &mut grad[layer.weights()];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
            for (g, &d) in row.iter_mut().zip(dz) {
                *g += xi * d;
            }
        }
        for (g, &d) in grad[layer.biases()].iter_mut().zip(dz) {
            *g += d;
        }
    }

    /// Parameter gradient plus the gradient with respect to the layer input.
    fn dense_backward(&self, layer: Layer, tape: &[T], dz: &[T], grad: &mut [T]) -> Vec<T> {
        self.dense_backward_params(layer, tape, dz, grad);
        let w = &self.data[layer.weights()];
        (0..layer.inputs)
            .map(|i| dot(&w[i * layer.outputs..(i + 1) * layer.outputs], dz))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> FieldParams<U> {
        FieldParams {
            arch: self.arch,
            layers: self.layers.clone(),
            tape_len: self.tape_len,
            beta: U::lit(self.arch.softplus_beta),
            data: self.data.iter().map(|&v| crate::num::cast(v)).collect(),
        }
    }

    /// Sets every head weight and bias to zero, making occupancy and color 1/2 everywhere.
    pub fn zero_heads(&mut self) {
        let head = self.head();
        for r in [head.weights(), head.biases()] {
            self.data[r].fill(T::zero());
        }
        let out = self.color_layers()[self.color_layers().len() - 1];
        for r in [out.weights(), out.biases()] {
            self.data[r].fill(T::zero());
        }
    }
}
