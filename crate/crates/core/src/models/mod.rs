//! Dense feature extractors, bias-free prediction headers, and their backprop.

mod checkpoint;
mod layer;
mod network;

pub use checkpoint::{Checkpoint, LayerRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layer::{Activation, AffineLayer, LayerCache, LayerGrads};
pub use network::{
    init_model, Extractor, ExtractorGrads, ForwardCache, Header, ModelConfig,
    REFERENCE_HIDDEN_WIDTHS, REFERENCE_REP_DIM,
};
