use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::{GlobalSmallModel, LocalHeteroModel, Projector};
use super::step::{check_compatible, matryoshka_prefixes, project, splice};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Which assembled model answers queries after training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceVariant {
    /// Both extractors, projector, local header (global header dropped).
    #[default]
    MixLarge,
    /// Both extractors, projector, coarse prefix, global header (local header dropped).
    MixSmall,
    /// The homogeneous small model alone.
    SingleSmall,
    /// The client's heterogeneous model alone.
    SingleLarge,
}

impl InferenceVariant {
    pub const ALL: [InferenceVariant; 4] = [
        InferenceVariant::MixLarge,
        InferenceVariant::MixSmall,
        InferenceVariant::SingleSmall,
        InferenceVariant::SingleLarge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceVariant::MixLarge => "mix-large",
            InferenceVariant::MixSmall => "mix-small",
            InferenceVariant::SingleSmall => "single-small",
            InferenceVariant::SingleLarge => "single-large",
        }
    }
}

impl fmt::Display for InferenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown inference variant `{s}`")))
    }
}

/// Logits of the chosen inference model for each row of `x`.
pub fn infer_logits(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
    variant: InferenceVariant,
) -> Result<Matrix> {
    match variant {
        InferenceVariant::MixLarge => {
            check_compatible(g, f, p)?;
            let spliced = splice(&g.extractor().represent(x)?, &f.extractor().represent(x)?)?;
            f.header().logits(&project(p, &spliced)?)
        }
        InferenceVariant::MixSmall => {
            check_compatible(g, f, p)?;
            let spliced = splice(&g.extractor().represent(x)?, &f.extractor().represent(x)?)?;
            let (lc, _) = matryoshka_prefixes(&project(p, &spliced)?, g.rep_dim())?;
            g.header().logits(&lc)
        }
        InferenceVariant::SingleSmall => g.logits(x),
        InferenceVariant::SingleLarge => f.logits(x),
    }
}

/// Predicted class per row; ties resolve to the lowest class index.
pub fn infer(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
    variant: InferenceVariant,
) -> Result<Vec<usize>> {
    Ok(infer_logits(g, f, p, x, variant)?.argmax_rows())
}
