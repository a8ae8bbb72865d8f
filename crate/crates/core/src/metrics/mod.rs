//! Evaluation, communication and compute ledgers, and round reports.

mod ledger;
mod report;

pub use ledger::{comm_cost_round, flops_round, CommCost, TrainingGraph};
pub use report::{
    export_reports, load_reports, rounds_to_target, ReportFormat, RoundReport, CSV_HEADER,
};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::federation::ClientState;
use crate::fusion::{infer, InferenceVariant};

/// Fraction of positions where `predicted` equals `labels`.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: (predicted.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("accuracy of zero samples".into()));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Test accuracy of a client's assembled model.
pub fn evaluate(
    client: &ClientState,
    ds: &LabeledDataset,
    variant: InferenceVariant,
) -> Result<f64> {
    if client.test_indices().is_empty() {
        return Err(Error::Empty(format!(
            "client {} has no test samples",
            client.id()
        )));
    }
    let (x, y) = ds.batch(client.test_indices());
    let predicted = infer(
        client.global_copy(),
        client.local_model(),
        client.projector(),
        &x,
        variant,
    )?;
    accuracy(&predicted, &y)
}

/// Arithmetic mean of per-client accuracies.
pub fn average_accuracy(per_client: &[f64]) -> Result<f64> {
    if per_client.is_empty() {
        return Err(Error::Empty("no client accuracies".into()));
    }
    Ok(report::mean(per_client))
}
