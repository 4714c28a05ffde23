//! Sparse ReLU multilayer perceptron over a flat parameter vector.
//!
//! Parameters are stored layer-major: for each layer `l = 1..=L` the weight
//! matrix `W_l` (shape `p_l x p_{l-1}`, row-major, row = output unit) is
//! followed by the bias `b_l`. Hidden layers use ReLU, the output layer is
//! affine.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SviError};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
}

/// Offsets of one affine layer inside the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSpan {
    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

/// Structured coordinate of a flat parameter index. Layers are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamIndex {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize) -> Result<Self> {
        let shape = NetworkShape {
            input_dim,
            hidden_widths,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Single-output regression network.
    pub fn regression(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        Self::new(input_dim, hidden_widths, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(SviError::Shape(format!(
                "input and output dims must be positive, got {}->{}",
                self.input_dim, self.output_dim
            )));
        }
        if let Some(i) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(SviError::Shape(format!("hidden layer {i} has zero width")));
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `[p_0, p_1, ..., p_L]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.depth() + 1);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.layer_dims()
            .windows(2)
            .map(|w| {
                let span = LayerSpan {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = span.end();
                span
            })
            .collect()
    }

    pub fn locate(&self, index: usize) -> Option<ParamIndex> {
        for (layer, span) in self.spans().into_iter().enumerate() {
            if index < span.bias_offset {
                let local = index - span.weight_offset;
                return Some(ParamIndex::Weight {
                    layer,
                    row: local / span.fan_in,
                    col: local % span.fan_in,
                });
            }
            if index < span.end() {
                return Some(ParamIndex::Bias {
                    layer,
                    row: index - span.bias_offset,
                });
            }
        }
        None
    }

    pub fn flat_index(&self, at: ParamIndex) -> Option<usize> {
        let spans = self.spans();
        match at {
            ParamIndex::Weight { layer, row, col } => {
                let s = spans.get(layer)?;
                (row < s.fan_out && col < s.fan_in).then(|| s.weight_offset + row * s.fan_in + col)
            }
            ParamIndex::Bias { layer, row } => {
                let s = spans.get(layer)?;
                (row < s.fan_out).then(|| s.bias_offset + row)
            }
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let h = self.param_count();
        if theta.len() != h {
            return Err(SviError::Shape(format!(
                "theta has length {}, shape needs {h}",
                theta.len()
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(SviError::Shape(format!(
                "input has length {}, shape needs {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

pub fn param_count(shape: &NetworkShape) -> usize {
    shape.param_count()
}

/// Flat parameter vector in canonical layer-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(pub Vec<f64>);

impl ThetaVector {
    pub fn zeros(shape: &NetworkShape) -> Self {
        ThetaVector(vec![0.0; shape.param_count()])
    }

    pub fn from_vec(shape: &NetworkShape, values: Vec<f64>) -> Result<Self> {
        shape.check_theta(&values)?;
        Ok(ThetaVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ThetaVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ThetaVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Reusable forward/backward buffers for one shape.
///
/// `acts[0]` holds the input, `acts[l]` the post-ReLU activations of hidden
/// layer `l`, and `acts[L]` the network output.
#[derive(Clone, Debug)]
pub struct Evaluator {
    shape: NetworkShape,
    spans: Vec<LayerSpan>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Evaluator {
    pub fn new(shape: &NetworkShape) -> Self {
        let acts = shape.layer_dims().into_iter().map(|d| vec![0.0; d]).collect();
        let widest = shape.layer_dims().into_iter().max().unwrap_or(1);
        Evaluator {
            shape: shape.clone(),
            spans: shape.spans(),
            acts,
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
        }
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    /// Runs the network and returns the output slice. Lengths are the
    /// caller's responsibility (checked in debug builds).
    pub fn forward(&mut self, theta: &[f64], x: &[f64]) -> &[f64] {
        debug_assert_eq!(theta.len(), self.shape.param_count());
        debug_assert_eq!(x.len(), self.shape.input_dim);
        self.acts[0].copy_from_slice(x);
        let last = self.spans.len() - 1;
        for (l, span) in self.spans.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            let weights = &theta[span.weight_offset..span.bias_offset];
            let bias = &theta[span.bias_offset..span.end()];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &weights[r * span.fan_in..(r + 1) * span.fan_in];
                let z = bias[r] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                *o = if l == last { z } else { z.max(0.0) };
            }
        }
        &self.acts[last + 1]
    }

    /// Adds `d(upstream . f(x)) / d theta` into `grad`, using the
    /// activations of the most recent [`Evaluator::forward`] call with the
    /// same `theta`.
    pub fn backward_accumulate(&mut self, theta: &[f64], upstream: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.shape.output_dim);
        self.delta.clear();
        self.delta.extend_from_slice(upstream);
        for l in (0..self.spans.len()).rev() {
            let span = self.spans[l];
            let input = &self.acts[l];
            for (r, &d) in self.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let w0 = span.weight_offset + r * span.fan_in;
                for (g, a) in grad[w0..w0 + span.fan_in].iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[span.bias_offset + r] += d;
            }
            if l == 0 {
                break;
            }
            self.delta_prev.clear();
            self.delta_prev.resize(span.fan_in, 0.0);
            for (r, &d) in self.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let w0 = span.weight_offset + r * span.fan_in;
                for (dp, w) in self.delta_prev.iter_mut().zip(&theta[w0..w0 + span.fan_in]) {
                    *dp += w * d;
                }
            }
            // ReLU'(0) = 0: a unit with zero activation passes no gradient.
            for (dp, a) in self.delta_prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *dp = 0.0;
                }
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }
    }

    /// Pre-activation values of every hidden unit, layer by layer.
    pub fn hidden_preactivations(&self, theta: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut input = x.to_vec();
        let mut out = Vec::new();
        for span in &self.spans[..self.spans.len() - 1] {
            let z: Vec<f64> = (0..span.fan_out)
                .map(|r| {
                    let w0 = span.weight_offset + r * span.fan_in;
                    theta[span.bias_offset + r]
                        + theta[w0..w0 + span.fan_in]
                            .iter()
                            .zip(&input)
                            .map(|(w, a)| w * a)
                            .sum::<f64>()
                })
                .collect();
            input = z.iter().map(|v| v.max(0.0)).collect();
            out.push(z);
        }
        out
    }
}

pub fn forward(shape: &NetworkShape, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    shape.validate()?;
    shape.check_theta(theta)?;
    shape.check_input(x)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SviError::Argument("input contains non-finite values".into()));
    }
    Ok(Evaluator::new(shape).forward(theta, x).to_vec())
}

/// Gradient of `upstream . f_theta(x)` with respect to `theta`.
pub fn backward(
    shape: &NetworkShape,
    theta: &[f64],
    x: &[f64],
    upstream: &[f64],
) -> Result<ThetaVector> {
    shape.validate()?;
    shape.check_theta(theta)?;
    shape.check_input(x)?;
    if upstream.len() != shape.output_dim {
        return Err(SviError::Shape(format!(
            "upstream has length {}, output dim is {}",
            upstream.len(),
            shape.output_dim
        )));
    }
    let mut eval = Evaluator::new(shape);
    eval.forward(theta, x);
    let mut grad = vec![0.0; theta.len()];
    eval.backward_accumulate(theta, upstream, &mut grad);
    Ok(ThetaVector(grad))
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian log-density of `y` around `y_pred` with std `sigma_eps`.
pub fn gaussian_log_lik(y_pred: f64, y: f64, sigma_eps: f64) -> Result<f64> {
    if !(sigma_eps > 0.0) {
        return Err(SviError::Argument(format!(
            "sigma_eps must be positive, got {sigma_eps}"
        )));
    }
    Ok(gaussian_log_lik_unchecked(y_pred, y, sigma_eps))
}

#[inline]
pub(crate) fn gaussian_log_lik_unchecked(y_pred: f64, y: f64, sigma_eps: f64) -> f64 {
    let r = y - y_pred;
    -0.5 * (LN_2PI + 2.0 * sigma_eps.ln()) - r * r / (2.0 * sigma_eps * sigma_eps)
}
