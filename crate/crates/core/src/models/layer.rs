use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sgd_step, Matrix, Rng};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `y = act(x · Wᵀ + b)` with `W` stored as `out x in`.
#[derive(Clone, Debug)]
pub struct AffineLayer {
    weights: Matrix,
    bias: Option<Matrix>,
    activation: Activation,
    /// Bumped on every parameter mutation; forward caches record it.
    generation: u64,
}

/// What one layer needs to differentiate a forward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    input: Matrix,
    pre_activation: Matrix,
    generation: u64,
}

impl LayerCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn pre_activation(&self) -> &Matrix {
        &self.pre_activation
    }
}

#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Option<Matrix>,
}

impl LayerGrads {
    pub fn add_assign(&mut self, other: &LayerGrads) -> Result<()> {
        self.weights.add_assign(&other.weights)?;
        match (&mut self.bias, &other.bias) {
            (Some(a), Some(b)) => a.add_assign(b),
            (None, None) => Ok(()),
            _ => Err(Error::StaleCache(
                "bias presence differs between gradients".into(),
            )),
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        if let Some(b) = &self.bias {
            out.extend_from_slice(b.as_slice());
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.norm_sq() + self.bias.as_ref().map_or(0.0, Matrix::norm_sq)
    }
}

impl AffineLayer {
    pub fn new(weights: Matrix, bias: Option<Matrix>, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::config(format!(
                "layer with zero width: {:?}",
                weights.shape()
            )));
        }
        if let Some(b) = &bias {
            if b.shape() != (1, weights.rows()) {
                return Err(Error::ShapeMismatch {
                    op: "AffineLayer::new bias",
                    left: weights.shape(),
                    right: b.shape(),
                });
            }
        }
        weights.ensure_finite("layer weights")?;
        Ok(Self {
            weights,
            bias,
            activation,
            generation: next_generation(),
        })
    }

    /// Uniform init in `±limit` with zero bias (when `with_bias`).
    pub fn uniform(
        in_dim: usize,
        out_dim: usize,
        limit: f64,
        with_bias: bool,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config(format!(
                "layer with zero width: {in_dim} -> {out_dim}"
            )));
        }
        let weights = Matrix::from_fn(out_dim, in_dim, |_, _| rng.uniform(-limit, limit));
        let bias = with_bias.then(|| Matrix::zeros(1, out_dim));
        Self::new(weights, bias, activation)
    }

    /// He-uniform: `limit = sqrt(6 / fan_in)`.
    pub fn he_uniform(
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let limit = (6.0 / in_dim.max(1) as f64).sqrt();
        Self::uniform(in_dim, out_dim, limit, with_bias, activation, rng)
    }

    /// Xavier/Glorot-uniform: `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier_uniform(
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let limit = (6.0 / (in_dim + out_dim).max(1) as f64).sqrt();
        Self::uniform(in_dim, out_dim, limit, with_bias, activation, rng)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> Option<&Matrix> {
        self.bias.as_ref()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Matrix::len)
    }

    /// Replaces the weights; the shape must not change.
    pub fn set_weights(&mut self, weights: Matrix) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_weights",
                left: self.weights.shape(),
                right: weights.shape(),
            });
        }
        weights.ensure_finite("set_weights")?;
        self.weights = weights;
        self.generation = next_generation();
        Ok(())
    }

    pub fn set_bias(&mut self, bias: Matrix) -> Result<()> {
        match &self.bias {
            Some(b) if b.shape() == bias.shape() => {
                bias.ensure_finite("set_bias")?;
                self.bias = Some(bias);
                self.generation = next_generation();
                Ok(())
            }
            Some(b) => Err(Error::ShapeMismatch {
                op: "set_bias",
                left: b.shape(),
                right: bias.shape(),
            }),
            None => Err(Error::config("layer has no bias")),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LayerCache)> {
        if x.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "affine forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut z = x.matmul_t(&self.weights)?;
        if let Some(b) = &self.bias {
            z.add_row_broadcast(b)?;
        }
        let act = self.activation;
        let y = match act {
            Activation::Identity => z.clone(),
            Activation::Relu => z.map(|v| act.apply(v)),
        };
        Ok((
            y,
            LayerCache {
                input: x.clone(),
                pre_activation: z,
                generation: self.generation,
            },
        ))
    }

    /// Forward pass without retaining a cache.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Gradients for `W`, `b` and the layer input given `d loss / d output`.
    pub fn backward(&self, cache: &LayerCache, upstream: &Matrix) -> Result<(LayerGrads, Matrix)> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache(format!(
                "layer parameters changed since forward (cache gen {}, layer gen {})",
                cache.generation, self.generation
            )));
        }
        if upstream.shape() != cache.pre_activation.shape() {
            return Err(Error::ShapeMismatch {
                op: "affine backward",
                left: cache.pre_activation.shape(),
                right: upstream.shape(),
            });
        }
        let dz = match self.activation {
            Activation::Identity => upstream.clone(),
            Activation::Relu => {
                let mut dz = upstream.clone();
                for (g, &z) in dz
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre_activation.as_slice())
                {
                    *g *= Activation::Relu.derivative(z);
                }
                dz
            }
        };
        let d_weights = dz.t_matmul(&cache.input)?;
        let d_bias = self.bias.as_ref().map(|_| dz.sum_rows());
        let d_input = dz.matmul(&self.weights)?;
        Ok((
            LayerGrads {
                weights: d_weights,
                bias: d_bias,
            },
            d_input,
        ))
    }

    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads {
            weights: Matrix::zeros(self.out_dim(), self.in_dim()),
            bias: self.bias.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn sgd(&mut self, grads: &LayerGrads, lr: f64) -> Result<()> {
        sgd_step(&mut self.weights, &grads.weights, lr)?;
        match (&mut self.bias, &grads.bias) {
            (Some(b), Some(g)) => sgd_step(b, g, lr)?,
            (None, None) => {}
            _ => {
                return Err(Error::StaleCache(
                    "bias presence differs from gradient".into(),
                ))
            }
        }
        if lr != 0.0 {
            self.generation = next_generation();
        }
        Ok(())
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        if let Some(b) = &self.bias {
            out.extend_from_slice(b.as_slice());
        }
    }

    /// Overwrites parameters from the front of `src`; returns how many were read.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let n = self.param_count();
        if src.len() < n {
            return Err(Error::DataLength {
                rows: self.out_dim(),
                cols: self.in_dim(),
                len: src.len(),
            });
        }
        let w = self.weights.len();
        self.weights.as_mut_slice().copy_from_slice(&src[..w]);
        if let Some(b) = &mut self.bias {
            b.as_mut_slice().copy_from_slice(&src[w..n]);
        }
        self.generation = next_generation();
        Ok(n)
    }

    /// Bitwise comparison of parameters and structure.
    pub fn params_bit_eq(&self, other: &AffineLayer) -> bool {
        self.activation == other.activation
            && self.weights.bit_eq(&other.weights)
            && match (&self.bias, &other.bias) {
                (Some(a), Some(b)) => a.bit_eq(b),
                (None, None) => true,
                _ => false,
            }
    }
}
