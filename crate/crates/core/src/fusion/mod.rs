//! Client-side representation fusion with Matryoshka dual-head learning.
//!
//! A client holds three parameter groups: the shared small model θ
//! ([`GlobalSmallModel`]), its private model ω ([`LocalHeteroModel`]) and a
//! private [`Projector`] φ. Both extractors see the same input; their
//! representations are spliced, projected to width `d2`, and the fused vector
//! is read at two nested prefixes: `d1` by the global header and `d2` by the
//! local header. One weighted loss trains all three groups at once.

mod infer;
mod model;
mod step;
mod theory;

pub use infer::{infer, infer_logits, InferenceVariant};
pub use model::{
    GlobalSmallModel, LearningRates, LocalHeteroModel, LossWeights, Projector, SplitModelCache,
    SplitModelGrads,
};
pub use step::{
    apply_gradients, backward_and_step, check_compatible, flat_params, forward_loss,
    forward_loss_ablation_no_mrl, forward_objective, gradients, load_flat_params,
    matryoshka_prefixes, project, splice, FusionCache, FusionGrads, LossBreakdown, Objective,
};
pub use theory::{lr_bound, TheoryConstants};

use crate::error::Result;
use crate::models::ModelConfig;
use crate::numerics::{mix_seed, Rng};

/// Freshly initialised `(θ, ω, φ)` triple for one client.
pub fn init_triple(
    global: &ModelConfig,
    local: &ModelConfig,
    seed: u64,
) -> Result<(GlobalSmallModel, LocalHeteroModel, Projector)> {
    let g = GlobalSmallModel::init(global, &mut Rng::derive(seed, 1))?;
    let f = LocalHeteroModel::init(local, &mut Rng::derive(seed, 2))?;
    let p = Projector::init(
        global.rep_dim,
        local.rep_dim,
        &mut Rng::new(mix_seed(seed, 3)),
    )?;
    check_compatible(&g, &f, &p)?;
    Ok((g, f, p))
}
