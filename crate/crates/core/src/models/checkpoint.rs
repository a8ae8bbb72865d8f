//! JSON checkpoints for one extractor + header pair.
//!
//! Layout (format version 1):
//!
//! ```text
//! {
//!   "format": "fedmrl-checkpoint",
//!   "version": 1,
//!   "config": { "input_dim", "hidden_widths", "rep_dim", "classes" },
//!   "extractor": [ layer, ... ],      // input side first
//!   "header": layer
//! }
//! layer = { "out_dim", "in_dim", "activation": "relu" | "identity",
//!           "weights": [out_dim * in_dim, row-major],
//!           "bias": [out_dim] | null }
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a load
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Activation, AffineLayer};
use super::network::{Extractor, Header, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_FORMAT: &str = "fedmrl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerRecord {
    pub out_dim: usize,
    pub in_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub extractor: Vec<LayerRecord>,
    pub header: LayerRecord,
}

impl LayerRecord {
    fn from_layer(l: &AffineLayer) -> Self {
        Self {
            out_dim: l.out_dim(),
            in_dim: l.in_dim(),
            activation: l.activation(),
            weights: l.weights().as_slice().to_vec(),
            bias: l.bias().map(|b| b.as_slice().to_vec()),
        }
    }

    fn to_layer(&self) -> Result<AffineLayer> {
        let weights = Matrix::new(self.out_dim, self.in_dim, self.weights.clone())?;
        let bias = self
            .bias
            .as_ref()
            .map(|b| Matrix::new(1, b.len(), b.clone()))
            .transpose()?;
        AffineLayer::new(weights, bias, self.activation)
    }
}

impl Checkpoint {
    pub fn capture(config: &ModelConfig, extractor: &Extractor, header: &Header) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            extractor: extractor
                .layers()
                .iter()
                .map(LayerRecord::from_layer)
                .collect(),
            header: LayerRecord::from_layer(header.layer()),
        }
    }

    pub fn restore(&self) -> Result<(ModelConfig, Extractor, Header)> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let layers = self
            .extractor
            .iter()
            .map(LayerRecord::to_layer)
            .collect::<Result<Vec<_>>>()?;
        let extractor = Extractor::new(layers)?;
        let header = Header::from_layer(self.header.to_layer()?)?;
        let dims: Vec<_> = extractor
            .layers()
            .iter()
            .map(|l| (l.in_dim(), l.out_dim()))
            .collect();
        if dims != self.config.extractor_dims()
            || header.in_dim() != self.config.rep_dim
            || header.classes() != self.config.classes
        {
            return Err(Error::config("checkpoint layers disagree with its config"));
        }
        Ok((self.config.clone(), extractor, header))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
