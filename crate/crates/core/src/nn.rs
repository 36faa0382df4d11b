//! Feed-forward encoder with explicit reverse-mode gradients.
//!
//! Parameters live in one flat buffer: for each layer, the row-major weight
//! matrix `(out, in)` followed by the bias vector. Hidden layers apply the
//! configured activation; the output layer is affine.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Layer outputs recorded by [`EncoderParams::forward_trace`]; entry 0 is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    pub layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace holds the input at least")
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl EncoderParams {
    /// All-zero parameters for `dims = [input, hidden.., output]`.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "encoder dims {dims:?} need at least input and output, all nonzero"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            activation,
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut enc = Self::zeros(dims, activation)?;
        for l in 0..enc.n_layers() {
            let (fan_in, fan_out) = (enc.dims[l], enc.dims[l + 1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let (w, _) = enc.layer_range(l);
            for p in &mut enc.params[w] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(enc)
    }

    /// Single affine layer with identity weights and zero bias.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut enc = Self::zeros(&[dim, dim], Activation::Identity)?;
        for i in 0..dim {
            enc.params[i * dim + i] = 1.0;
        }
        Ok(enc)
    }

    pub fn from_parts(dims: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut enc = Self::zeros(&dims, activation)?;
        if params.len() != enc.params.len() {
            return Err(Error::DimensionMismatch {
                expected: enc.params.len(),
                got: params.len(),
            });
        }
        enc.params = params;
        Ok(enc)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Weight and bias ranges of layer `l` in the flat buffer.
    fn layer_range(&self, l: usize) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        let start = param_count(&self.dims[..=l]);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (start..start + o * i, start + o * i..start + o * i + o)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.layers.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(self.dims.len());
        layers.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (wr, br) = self.layer_range(l);
            let (w, b) = (&self.params[wr], &self.params[br]);
            let input = &layers[l];
            let n_in = input.len();
            let hidden = l + 1 < self.n_layers();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let z = bias + crate::math::dot(&w[o * n_in..(o + 1) * n_in], input);
                    if hidden {
                        self.activation.apply(z)
                    } else {
                        z
                    }
                })
                .collect();
            layers.push(out);
        }
        Ok(Trace { layers })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    /// Returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer shape");
        assert_eq!(grad_out.len(), self.output_dim(), "output gradient shape");
        let mut delta = grad_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (wr, br) = self.layer_range(l);
            let input = &trace.layers[l];
            let n_in = input.len();
            for (o, d) in delta.iter().enumerate() {
                grads[br.start + o] += d;
                crate::math::axpy(
                    *d,
                    input,
                    &mut grads[wr.start + o * n_in..wr.start + (o + 1) * n_in],
                );
            }
            let w = &self.params[wr];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                crate::math::axpy(*d, &w[o * n_in..(o + 1) * n_in], &mut prev);
            }
            if l > 0 {
                for (p, y) in prev.iter_mut().zip(input) {
                    *p *= self.activation.derivative_from_output(*y);
                }
            }
            delta = prev;
        }
        delta
    }
}
