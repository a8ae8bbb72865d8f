use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{InferenceVariant, LearningRates, LossWeights};
use crate::models::ModelConfig;

/// Training protocol run by every client.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Fused representations with both Matryoshka heads; the small model is aggregated.
    #[default]
    FedMrl,
    /// Each client trains its own model with no communication.
    Standalone,
    /// Fused representation straight into the local header; the small model is aggregated.
    NoMrl,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::FedMrl, Mode::Standalone, Mode::NoMrl];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FedMrl => "fedmrl",
            Mode::Standalone => "standalone",
            Mode::NoMrl => "no-mrl",
        }
    }

    pub fn communicates(self) -> bool {
        !matches!(self, Mode::Standalone)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode `{s}` (fedmrl|standalone|no-mrl)")))
    }
}

/// Everything the federation loop needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_clients: usize,
    /// Fraction of clients sampled per round, in (0, 1].
    pub participation: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lrs: LearningRates,
    /// Representation width of the shared small model.
    pub d1: usize,
    /// Representation width of every local model.
    pub d2: usize,
    pub global_hidden: Vec<usize>,
    /// Hidden-width archetypes for local models; client `k` uses entry `k mod len`.
    pub local_hidden: Vec<Vec<usize>>,
    pub loss_weights: LossWeights,
    pub mode: Mode,
    pub seed: u64,
    pub eval_variant: InferenceVariant,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_clients: 10,
            participation: 1.0,
            rounds: 50,
            local_epochs: 1,
            batch_size: 16,
            lrs: LearningRates::uniform(0.01),
            d1: 8,
            d2: 16,
            global_hidden: vec![32],
            local_hidden: vec![vec![40], vec![40], vec![20], vec![16], vec![10]],
            loss_weights: LossWeights::default(),
            mode: Mode::FedMrl,
            seed: 0,
            eval_variant: InferenceVariant::MixLarge,
        }
    }
}

impl RunConfig {
    /// Clients sampled per round, `K = round(C · N)`.
    pub fn clients_per_round(&self) -> usize {
        (self.participation * self.n_clients as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::config("n_clients must be >= 1"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::config(format!(
                "participation {} must be in (0, 1]",
                self.participation
            )));
        }
        if self.clients_per_round() == 0 {
            return Err(Error::config(
                "participation samples zero clients per round",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.d1 == 0 || self.d2 == 0 || self.d1 > self.d2 {
            return Err(Error::config(format!(
                "need 1 <= d1 <= d2 (got d1={}, d2={})",
                self.d1, self.d2
            )));
        }
        if self.local_hidden.is_empty() {
            return Err(Error::config(
                "local_hidden needs at least one archetype (may be empty widths)",
            ));
        }
        self.lrs.validate()?;
        self.loss_weights.validate()
    }

    pub fn global_model(&self, input_dim: usize, classes: usize) -> ModelConfig {
        ModelConfig::new(input_dim, self.global_hidden.clone(), self.d1, classes)
    }

    pub fn local_model(&self, client: usize, input_dim: usize, classes: usize) -> ModelConfig {
        let hidden = self.local_hidden[client % self.local_hidden.len()].clone();
        ModelConfig::new(input_dim, hidden, self.d2, classes)
    }

    /// The variant used for evaluation; standalone clients only have their own model.
    pub fn effective_eval_variant(&self) -> InferenceVariant {
        match self.mode {
            Mode::Standalone => InferenceVariant::SingleLarge,
            _ => self.eval_variant,
        }
    }
}
