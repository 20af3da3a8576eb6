//! Dense layers, a PointNet-style encoder, reverse-mode gradients and Adam.
//!
//! Every layer keeps its parameters in [`Tensor`]s that own a gradient
//! buffer. `forward` returns a trace; `backward` consumes that trace and
//! accumulates into the gradient buffers, so a layer shared between two
//! inputs (the Siamese case) simply sees two backward calls.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rng};

/// Named parameter array with a gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Uniform in `[-limit, limit]`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], limit: f64, rng: &mut Rng) -> Self {
        let mut t = Self::zeros(name, shape);
        for v in &mut t.values {
            *v = rng.range(-limit, limit);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters, in a fixed declaration order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// `c = a * b + beta * c` for row-major `a: m x k`, `b: k x n`, either
/// operand optionally transposed in place.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every buffer to the extent dgemm reads
    // or writes for these dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(),
            n as isize, 1,
        );
    }
}

/// Fully connected layer; `weight` is stored `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// He-uniform weights, zero bias.
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        Self {
            weight: Tensor::uniform(format!("{name}.weight"), &[inputs, outputs], limit, rng),
            bias: Tensor::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn zeroed(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(format!("{name}.weight"), &[inputs, outputs]),
            bias: Tensor::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[1]
    }

    /// `rows x inputs` to `rows x outputs`.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (i, o) = (self.inputs(), self.outputs());
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(&self.bias.values);
        }
        gemm(rows, i, o, x, false, &self.weight.values, false, 1.0, &mut y);
        y
    }

    /// Accumulate parameter gradients; return the gradient w.r.t. `x`.
    pub fn backward(&mut self, x: &[f64], rows: usize, grad_y: &[f64]) -> Vec<f64> {
        let (i, o) = (self.inputs(), self.outputs());
        gemm(i, rows, o, x, true, grad_y, false, 1.0, &mut self.weight.grad);
        for r in 0..rows {
            for (b, g) in self.bias.grad.iter_mut().zip(&grad_y[r * o..(r + 1) * o]) {
                *b += g;
            }
        }
        let mut grad_x = vec![0.0; rows * i];
        gemm(rows, o, i, grad_y, false, &self.weight.values, true, 0.0, &mut grad_x);
        grad_x
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn relu_backward_in_place(activation: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Shared per-point layers with ReLU, then a channel-wise max over points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEncoder {
    pub layers: Vec<Dense>,
}

/// Intermediates recorded by [`PointEncoder::forward`].
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    rows: usize,
    /// Input followed by each layer's post-activation output.
    activations: Vec<Vec<f64>>,
    /// Point index that won the max for each channel.
    argmax: Vec<usize>,
}

impl PointEncoder {
    /// `widths` excludes the 3 input coordinates, e.g. `[64, 128, 256]`.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut inputs = 3;
        for (l, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(&format!("encoder.{l}"), inputs, w, rng));
            inputs = w;
        }
        Self { layers }
    }

    pub fn feature_size(&self) -> usize {
        self.layers.last().map_or(3, Dense::outputs)
    }

    pub fn forward(&self, points: &[[f64; 3]]) -> Result<(Vec<f64>, EncoderTrace)> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let rows = points.len();
        let mut activations = vec![points.iter().flatten().copied().collect::<Vec<f64>>()];
        for layer in &self.layers {
            let mut y = layer.forward(activations.last().expect("input recorded"), rows);
            relu_in_place(&mut y);
            activations.push(y);
        }
        let width = self.feature_size();
        let last = activations.last().expect("at least the input");
        let mut feature = last[..width].to_vec();
        let mut argmax = vec![0; width];
        for r in 1..rows {
            for (c, v) in last[r * width..(r + 1) * width].iter().enumerate() {
                // strict comparison keeps the first maximal index on ties
                if *v > feature[c] {
                    feature[c] = *v;
                    argmax[c] = r;
                }
            }
        }
        Ok((
            feature,
            EncoderTrace {
                rows,
                activations,
                argmax,
            },
        ))
    }

    pub fn backward(&mut self, trace: &EncoderTrace, grad_feature: &[f64]) {
        let width = self.feature_size();
        let mut grad = vec![0.0; trace.rows * width];
        for (c, (&r, g)) in trace.argmax.iter().zip(grad_feature).enumerate() {
            grad[r * width + c] = *g;
        }
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            relu_backward_in_place(&trace.activations[l + 1], &mut grad);
            grad = layer.backward(&trace.activations[l], trace.rows, &grad);
        }
    }
}

impl Parameters for PointEncoder {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Two dense layers with a ReLU between them and an optional `bound * tanh`
/// squash on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Dense,
    pub output: Dense,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    input: Vec<f64>,
    hidden: Vec<f64>,
    output: Vec<f64>,
}

impl Head {
    pub fn forward(&self, feature: &[f64]) -> Result<(Vec<f64>, HeadTrace)> {
        if feature.len() != self.hidden.inputs() {
            return Err(Error::Dimension(format!(
                "head expects {} features, got {}",
                self.hidden.inputs(),
                feature.len()
            )));
        }
        let mut hidden = self.hidden.forward(feature, 1);
        relu_in_place(&mut hidden);
        let mut output = self.output.forward(&hidden, 1);
        if let Some(b) = self.bound {
            output.iter_mut().for_each(|v| *v = b * v.tanh());
        }
        Ok((
            output.clone(),
            HeadTrace {
                input: feature.to_vec(),
                hidden,
                output,
            },
        ))
    }

    /// Returns the gradient with respect to the input feature.
    pub fn backward(&mut self, trace: &HeadTrace, grad_output: &[f64]) -> Vec<f64> {
        let mut g = grad_output.to_vec();
        if let Some(b) = self.bound {
            for (gi, y) in g.iter_mut().zip(&trace.output) {
                let t = y / b;
                *gi *= b * (1.0 - t * t);
            }
        }
        let mut gh = self.output.backward(&trace.hidden, 1, &g);
        relu_backward_in_place(&trace.hidden, &mut gh);
        self.hidden.backward(&trace.input, 1, &gh)
    }
}

impl Parameters for Head {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.hidden.tensors();
        v.extend(self.output.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.hidden.tensors_mut();
        v.extend(self.output.tensors_mut());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            second: params.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// One bias-corrected Adam update from each tensor's gradient buffer.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if params.len() != self.first.len()
            || params.iter().zip(&self.first).any(|(p, m)| p.len() != m.len())
        {
            return Err(Error::Dimension("parameter list does not match Adam state".into()));
        }
        if let Some(bad) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.values.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
