use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    init_model, Activation, AffineLayer, Extractor, ExtractorGrads, ForwardCache, Header,
    LayerCache, LayerGrads, ModelConfig,
};
use crate::numerics::{cross_entropy, Matrix, Rng};

/// Gradients of a plain extractor + header model.
#[derive(Clone, Debug)]
pub struct SplitModelGrads {
    pub extractor: ExtractorGrads,
    pub header: LayerGrads,
}

impl SplitModelGrads {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        self.extractor.write_flat(out);
        self.header.write_flat(out);
    }

    pub fn norm_sq(&self) -> f64 {
        self.extractor.norm_sq() + self.header.norm_sq()
    }
}

/// Cache of a single-model forward pass (extractor then header).
#[derive(Clone, Debug)]
pub struct SplitModelCache {
    extractor: ForwardCache,
    header: LayerCache,
    d_logits: Matrix,
}

macro_rules! split_model {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug)]
        pub struct $name {
            extractor: Extractor,
            header: Header,
        }

        impl $name {
            pub fn new(extractor: Extractor, header: Header) -> Result<Self> {
                if header.in_dim() != extractor.rep_dim() {
                    return Err(Error::ShapeMismatch {
                        op: concat!(stringify!($name), "::new"),
                        left: (1, extractor.rep_dim()),
                        right: (header.in_dim(), header.classes()),
                    });
                }
                Ok(Self { extractor, header })
            }

            pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
                let (extractor, header) = init_model(cfg, rng)?;
                Self::new(extractor, header)
            }

            pub fn extractor(&self) -> &Extractor {
                &self.extractor
            }

            pub fn header(&self) -> &Header {
                &self.header
            }

            pub fn extractor_mut(&mut self) -> &mut Extractor {
                &mut self.extractor
            }

            pub fn header_mut(&mut self) -> &mut Header {
                &mut self.header
            }

            pub fn input_dim(&self) -> usize {
                self.extractor.input_dim()
            }

            pub fn rep_dim(&self) -> usize {
                self.extractor.rep_dim()
            }

            pub fn classes(&self) -> usize {
                self.header.classes()
            }

            pub fn param_count(&self) -> usize {
                self.extractor.param_count() + self.header.param_count()
            }

            /// Parameters flattened as extractor layers (weights, bias) then header.
            pub fn write_params(&self, out: &mut Vec<f64>) {
                self.extractor.write_params(out);
                self.header.write_params(out);
            }

            pub fn params(&self) -> Vec<f64> {
                let mut out = Vec::with_capacity(self.param_count());
                self.write_params(&mut out);
                out
            }

            pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
                let n = self.extractor.read_params(src)?;
                Ok(n + self.header.read_params(&src[n..])?)
            }

            pub fn params_bit_eq(&self, other: &Self) -> bool {
                self.extractor.params_bit_eq(&other.extractor)
                    && self.header.params_bit_eq(&other.header)
            }

            /// Logits of the model on its own (extractor then header).
            pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
                self.header.logits(&self.extractor.represent(x)?)
            }

            /// Mean cross-entropy of the model on its own, with a cache for
            /// [`Self::gradients`].
            pub fn forward_loss(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, SplitModelCache)> {
                let (rep, extractor) = self.extractor.extract(x)?;
                let (logits, header) = self.header.forward(&rep)?;
                let (loss, d_logits) = cross_entropy(&logits, labels)?;
                Ok((loss, SplitModelCache { extractor, header, d_logits }))
            }

            pub fn gradients(&self, cache: &SplitModelCache) -> Result<SplitModelGrads> {
                let (header, d_rep) = self.header.backward(&cache.header, &cache.d_logits)?;
                let (extractor, _) = self.extractor.backward(&cache.extractor, &d_rep)?;
                Ok(SplitModelGrads { extractor, header })
            }

            pub fn sgd(&mut self, grads: &SplitModelGrads, lr: f64) -> Result<()> {
                self.extractor.sgd(&grads.extractor, lr)?;
                self.header.sgd(&grads.header, lr)
            }

            /// One standalone SGD step on `(x, labels)`; returns the pre-step loss.
            pub fn train_step(&mut self, x: &Matrix, labels: &[usize], lr: f64) -> Result<f64> {
                let (loss, cache) = self.forward_loss(x, labels)?;
                let grads = self.gradients(&cache)?;
                self.sgd(&grads, lr)?;
                Ok(loss)
            }
        }
    };
}

split_model! {
    /// The homogeneous small model shared through the server: extractor with
    /// representation width `d1` and a `d1 x L` header.
    GlobalSmallModel
}

split_model! {
    /// A client's private heterogeneous model: extractor with representation
    /// width `d2` and a `d2 x L` header. Never leaves its client.
    LocalHeteroModel
}

/// Bias-free linear map from the spliced `d1 + d2` representation to the
/// fused `d2` representation. Weights are stored `d2 x (d1 + d2)`.
#[derive(Clone, Debug)]
pub struct Projector {
    layer: AffineLayer,
    d1: usize,
}

impl Projector {
    /// Xavier-uniform initialisation.
    pub fn init(d1: usize, d2: usize, rng: &mut Rng) -> Result<Self> {
        validate_dims(d1, d2)?;
        let layer = AffineLayer::xavier_uniform(d1 + d2, d2, false, Activation::Identity, rng)?;
        Ok(Self { layer, d1 })
    }

    pub fn from_weights(weights: Matrix, d1: usize) -> Result<Self> {
        let d2 = weights.rows();
        validate_dims(d1, d2)?;
        if weights.cols() != d1 + d2 {
            return Err(Error::ShapeMismatch {
                op: "Projector::from_weights",
                left: weights.shape(),
                right: (d2, d1 + d2),
            });
        }
        Ok(Self {
            layer: AffineLayer::new(weights, None, Activation::Identity)?,
            d1,
        })
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.layer.out_dim()
    }

    pub fn weights(&self) -> &Matrix {
        self.layer.weights()
    }

    pub fn layer(&self) -> &AffineLayer {
        &self.layer
    }

    pub fn set_weights(&mut self, weights: Matrix) -> Result<()> {
        self.layer.set_weights(weights)
    }

    pub fn param_count(&self) -> usize {
        self.layer.param_count()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.layer.write_params(out)
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        self.layer.read_params(src)
    }

    pub fn params_bit_eq(&self, other: &Projector) -> bool {
        self.d1 == other.d1 && self.layer.params_bit_eq(&other.layer)
    }

    pub fn forward(&self, spliced: &Matrix) -> Result<(Matrix, LayerCache)> {
        if spliced.cols() != self.d1 + self.d2() {
            return Err(Error::ShapeMismatch {
                op: "project",
                left: spliced.shape(),
                right: self.layer.weights().shape(),
            });
        }
        self.layer.forward(spliced)
    }

    pub fn backward(&self, cache: &LayerCache, d_fused: &Matrix) -> Result<(LayerGrads, Matrix)> {
        self.layer.backward(cache, d_fused)
    }

    pub fn sgd(&mut self, grads: &LayerGrads, lr: f64) -> Result<()> {
        self.layer.sgd(grads, lr)
    }
}

pub(crate) fn validate_dims(d1: usize, d2: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::config(format!(
            "representation widths must be positive (d1={d1}, d2={d2})"
        )));
    }
    if d1 > d2 {
        return Err(Error::config(format!(
            "d1 ({d1}) must not exceed d2 ({d2})"
        )));
    }
    Ok(())
}

/// Importance weights of the global-header and local-header losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub global: f64,
    pub local: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            global: 1.0,
            local: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(global: f64, local: f64) -> Result<Self> {
        let w = Self { global, local };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("global", self.global), ("local", self.local)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "loss weight {name}={v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Step sizes for the small model, the local model, and the projector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub theta: f64,
    pub omega: f64,
    pub phi: f64,
}

impl LearningRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            theta: lr,
            omega: lr,
            phi: lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("omega", self.omega),
            ("phi", self.phi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "learning rate {name}={v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}
