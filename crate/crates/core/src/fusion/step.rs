//! Forward loss and joint backward pass of the fused dual-head graph.
//!
//! ```text
//! x ─► global extractor ─► rep_g (d1) ┐
//!                                     ├─ splice (d1+d2) ─► projector ─► fused (d2)
//! x ─► local extractor  ─► rep_f (d2) ┘
//! fused[..d1] = lc ─► global header ─► CE · m_global
//! fused[..d2] = hf ─► local header  ─► CE · m_local
//! ```
//!
//! Batch losses are means over rows.

use super::model::{GlobalSmallModel, LearningRates, LocalHeteroModel, LossWeights, Projector};
use crate::error::{Error, Result};
use crate::models::{ExtractorGrads, ForwardCache, LayerCache, LayerGrads};
use crate::numerics::{cross_entropy, Matrix};

/// `[rep_g | rep_f]`, global representation first.
pub fn splice(rep_global: &Matrix, rep_local: &Matrix) -> Result<Matrix> {
    if rep_global.cols() == 0 || rep_local.cols() == 0 {
        return Err(Error::config("cannot splice an empty representation"));
    }
    rep_global.hcat(rep_local)
}

/// Fused representation `spliced · Wᵀ`.
pub fn project(projector: &Projector, spliced: &Matrix) -> Result<Matrix> {
    projector.forward(spliced).map(|(f, _)| f)
}

/// The two nested prefixes of the fused representation: the first `d1`
/// columns (coarse) and the first `d2` columns, i.e. all of it (fine).
pub fn matryoshka_prefixes(fused: &Matrix, d1: usize) -> Result<(Matrix, Matrix)> {
    let d2 = fused.cols();
    if d1 == 0 || d1 > d2 {
        return Err(Error::config(format!(
            "prefix width d1={d1} must be in 1..={d2}"
        )));
    }
    Ok((fused.columns(0, d1)?, fused.columns(0, d2)?))
}

/// Which loss the fused graph is trained with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Both heads on their Matryoshka prefixes, weighted.
    Matryoshka(LossWeights),
    /// Local header on the whole fused representation only; global header unused.
    NoMatryoshka,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Global-header loss; `None` when the global header is not in the graph.
    pub global: Option<f64>,
    pub local: f64,
}

/// Everything needed for one exact backward pass of the fused graph.
#[derive(Clone, Debug)]
pub struct FusionCache {
    d1: usize,
    global_extractor: ForwardCache,
    local_extractor: ForwardCache,
    projector: LayerCache,
    fused: Matrix,
    global_head: Option<(LayerCache, Matrix)>,
    local_head: LayerCache,
    local_logits: Matrix,
    d_local_logits: Matrix,
}

impl FusionCache {
    pub fn fused(&self) -> &Matrix {
        &self.fused
    }

    /// Logits of the local header on the fine prefix.
    pub fn local_logits(&self) -> &Matrix {
        &self.local_logits
    }
}

/// Gradients for every parameter group of the fused graph.
#[derive(Clone, Debug)]
pub struct FusionGrads {
    pub global_extractor: ExtractorGrads,
    pub global_header: LayerGrads,
    pub local_extractor: ExtractorGrads,
    pub local_header: LayerGrads,
    pub projector: LayerGrads,
}

impl FusionGrads {
    pub fn theta_norm_sq(&self) -> f64 {
        self.global_extractor.norm_sq() + self.global_header.norm_sq()
    }

    pub fn omega_norm_sq(&self) -> f64 {
        self.local_extractor.norm_sq() + self.local_header.norm_sq()
    }

    pub fn phi_norm_sq(&self) -> f64 {
        self.projector.norm_sq()
    }

    /// Flattened in the order of [`flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.global_extractor.write_flat(&mut out);
        self.global_header.write_flat(&mut out);
        self.local_extractor.write_flat(&mut out);
        self.local_header.write_flat(&mut out);
        self.projector.write_flat(&mut out);
        out
    }
}

/// All trainable parameters: θ, then ω, then φ.
pub fn flat_params(g: &GlobalSmallModel, f: &LocalHeteroModel, p: &Projector) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.param_count() + f.param_count() + p.param_count());
    g.write_params(&mut out);
    f.write_params(&mut out);
    p.write_params(&mut out);
    out
}

/// Inverse of [`flat_params`].
pub fn load_flat_params(
    g: &mut GlobalSmallModel,
    f: &mut LocalHeteroModel,
    p: &mut Projector,
    src: &[f64],
) -> Result<()> {
    let expected = g.param_count() + f.param_count() + p.param_count();
    if src.len() != expected {
        return Err(Error::DataLength {
            rows: 1,
            cols: expected,
            len: src.len(),
        });
    }
    let mut at = g.read_params(src)?;
    at += f.read_params(&src[at..])?;
    p.read_params(&src[at..])?;
    Ok(())
}

/// Checks that the three components fit together.
pub fn check_compatible(g: &GlobalSmallModel, f: &LocalHeteroModel, p: &Projector) -> Result<()> {
    let (d1, d2) = (g.rep_dim(), f.rep_dim());
    super::model::validate_dims(d1, d2)?;
    if g.input_dim() != f.input_dim() {
        return Err(Error::config(format!(
            "global and local extractors read different input widths ({} vs {})",
            g.input_dim(),
            f.input_dim()
        )));
    }
    if g.classes() != f.classes() {
        return Err(Error::config(
            "global and local headers disagree on class count",
        ));
    }
    if p.d1() != d1 || p.d2() != d2 {
        return Err(Error::ShapeMismatch {
            op: "projector",
            left: (p.d2(), p.d1() + p.d2()),
            right: (d2, d1 + d2),
        });
    }
    Ok(())
}

fn forward_fused(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
) -> Result<(Matrix, ForwardCache, ForwardCache, LayerCache)> {
    check_compatible(g, f, p)?;
    let (rep_g, global_extractor) = g.extractor().extract(x)?;
    let (rep_f, local_extractor) = f.extractor().extract(x)?;
    let spliced = splice(&rep_g, &rep_f)?;
    debug_assert_eq!(spliced.cols(), g.rep_dim() + f.rep_dim());
    let (fused, projector) = p.forward(&spliced)?;
    if fused.cols() != f.rep_dim() {
        return Err(Error::ShapeMismatch {
            op: "fused width",
            left: fused.shape(),
            right: (fused.rows(), f.rep_dim()),
        });
    }
    Ok((fused, global_extractor, local_extractor, projector))
}

/// Loss of the fused graph on a batch under `objective`.
pub fn forward_objective(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
    labels: &[usize],
    objective: Objective,
) -> Result<(LossBreakdown, FusionCache)> {
    let (fused, global_extractor, local_extractor, projector) = forward_fused(g, f, p, x)?;
    let d1 = g.rep_dim();

    let (lc, hf) = match objective {
        Objective::Matryoshka(_) => {
            let (lc, hf) = matryoshka_prefixes(&fused, d1)?;
            (Some(lc), hf)
        }
        Objective::NoMatryoshka => (None, fused.clone()),
    };

    let (local_logits, local_head) = f.header().forward(&hf)?;
    let (local_loss, d_local) = cross_entropy(&local_logits, labels)?;

    let (breakdown, global_head, d_local_logits) = match (objective, lc) {
        (Objective::Matryoshka(w), Some(lc)) => {
            w.validate()?;
            let (global_logits, head_cache) = g.header().forward(&lc)?;
            let (global_loss, d_global) = cross_entropy(&global_logits, labels)?;
            let total = w.global * global_loss + w.local * local_loss;
            (
                LossBreakdown {
                    total,
                    global: Some(global_loss),
                    local: local_loss,
                },
                Some((head_cache, d_global.scale(w.global))),
                d_local.scale(w.local),
            )
        }
        _ => (
            LossBreakdown {
                total: local_loss,
                global: None,
                local: local_loss,
            },
            None,
            d_local,
        ),
    };

    Ok((
        breakdown,
        FusionCache {
            d1,
            global_extractor,
            local_extractor,
            projector,
            fused,
            global_head,
            local_head,
            local_logits,
            d_local_logits,
        },
    ))
}

/// Weighted dual-head loss `m_g · CE(global_head(lc), y) + m_l · CE(local_head(hf), y)`.
pub fn forward_loss(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
    labels: &[usize],
    weights: LossWeights,
) -> Result<(LossBreakdown, FusionCache)> {
    forward_objective(g, f, p, x, labels, Objective::Matryoshka(weights))
}

/// Ablation without nested prefixes: `CE(local_head(fused), y)`. The global
/// extractor still feeds the splice; the global header is not used.
pub fn forward_loss_ablation_no_mrl(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    x: &Matrix,
    labels: &[usize],
) -> Result<(f64, FusionCache)> {
    forward_objective(g, f, p, x, labels, Objective::NoMatryoshka).map(|(l, c)| (l.total, c))
}

/// Exact gradients of the cached loss w.r.t. θ, ω and φ.
pub fn gradients(
    g: &GlobalSmallModel,
    f: &LocalHeteroModel,
    p: &Projector,
    cache: &FusionCache,
) -> Result<FusionGrads> {
    if cache.d1 != g.rep_dim() || cache.fused.cols() != f.rep_dim() {
        return Err(Error::StaleCache(
            "cache built for different model widths".into(),
        ));
    }
    let (local_header, mut d_fused) = f
        .header()
        .backward(&cache.local_head, &cache.d_local_logits)?;

    let global_header = match &cache.global_head {
        Some((head_cache, d_logits)) => {
            let (grads, d_lc) = g.header().backward(head_cache, d_logits)?;
            // lc is the first d1 columns of fused: its gradient lands there.
            let d2 = d_fused.cols();
            let d1 = d_lc.cols();
            for r in 0..d_fused.rows() {
                let row = &mut d_fused.as_mut_slice()[r * d2..r * d2 + d1];
                for (a, b) in row.iter_mut().zip(d_lc.row(r)) {
                    *a += b;
                }
            }
            grads
        }
        None => g.header().zero_grads(),
    };

    let (projector, d_spliced) = p.backward(&cache.projector, &d_fused)?;
    let d1 = cache.d1;
    let d_rep_g = d_spliced.columns(0, d1)?;
    let d_rep_f = d_spliced.columns(d1, d_spliced.cols())?;
    let (global_extractor, _) = g.extractor().backward(&cache.global_extractor, &d_rep_g)?;
    let (local_extractor, _) = f.extractor().backward(&cache.local_extractor, &d_rep_f)?;

    Ok(FusionGrads {
        global_extractor,
        global_header,
        local_extractor,
        local_header,
        projector,
    })
}

/// Simultaneous SGD update of θ, ω and φ with their own step sizes.
pub fn apply_gradients(
    g: &mut GlobalSmallModel,
    f: &mut LocalHeteroModel,
    p: &mut Projector,
    grads: &FusionGrads,
    lrs: LearningRates,
) -> Result<()> {
    lrs.validate()?;
    g.extractor_mut().sgd(&grads.global_extractor, lrs.theta)?;
    g.header_mut().sgd(&grads.global_header, lrs.theta)?;
    f.extractor_mut().sgd(&grads.local_extractor, lrs.omega)?;
    f.header_mut().sgd(&grads.local_header, lrs.omega)?;
    p.sgd(&grads.projector, lrs.phi)
}

/// Backward pass through the cached forward, then one SGD step on all three
/// parameter groups. Returns the gradients that were applied.
pub fn backward_and_step(
    g: &mut GlobalSmallModel,
    f: &mut LocalHeteroModel,
    p: &mut Projector,
    cache: &FusionCache,
    lrs: LearningRates,
) -> Result<FusionGrads> {
    let grads = gradients(g, f, p, cache)?;
    apply_gradients(g, f, p, &grads, lrs)?;
    Ok(grads)
}
