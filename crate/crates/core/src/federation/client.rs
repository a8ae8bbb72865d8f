use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fusion::{
    backward_and_step, forward_objective, GlobalSmallModel, LearningRates, LocalHeteroModel,
    LossWeights, Objective, Projector,
};
use crate::numerics::Rng;

use super::config::Mode;

/// A client's private state. Only [`Upload`] ever leaves it.
#[derive(Clone, Debug)]
pub struct ClientState {
    id: usize,
    pub(crate) local_model: LocalHeteroModel,
    pub(crate) projector: Projector,
    pub(crate) global_copy: GlobalSmallModel,
    train: Vec<usize>,
    test: Vec<usize>,
}

/// What a client sends to the server after local training.
///
/// The payload is the homogeneous small model plus scalars. There is no field
/// that could carry the local model or the projector.
#[derive(Clone, Debug)]
pub struct Upload {
    pub client_id: usize,
    pub theta: GlobalSmallModel,
    pub n_k: usize,
    pub mean_loss: f64,
}

/// Per-client hyperparameters of one local update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lrs: LearningRates,
    pub mode: Mode,
    pub loss_weights: LossWeights,
}

/// Result of [`client_update`]: the upload (absent in standalone mode) and the
/// mean training loss of each epoch.
#[derive(Clone, Debug)]
pub struct LocalOutcome {
    pub upload: Option<Upload>,
    pub loss_trace: Vec<f64>,
    /// Mean loss over the last epoch, or the current loss when no epoch ran.
    pub mean_loss: f64,
}

impl ClientState {
    pub fn new(
        id: usize,
        local_model: LocalHeteroModel,
        projector: Projector,
        global_copy: GlobalSmallModel,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        crate::fusion::check_compatible(&global_copy, &local_model, &projector)?;
        Ok(Self {
            id,
            local_model,
            projector,
            global_copy,
            train,
            test,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn n_k(&self) -> usize {
        self.train.len()
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn local_model(&self) -> &LocalHeteroModel {
        &self.local_model
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn global_copy(&self) -> &GlobalSmallModel {
        &self.global_copy
    }

    /// Replaces the client's copy of the shared model.
    pub fn receive(&mut self, theta: &GlobalSmallModel) -> Result<()> {
        if theta.param_count() != self.global_copy.param_count()
            || theta.rep_dim() != self.global_copy.rep_dim()
        {
            return Err(Error::ShapeMismatch {
                op: "ClientState::receive",
                left: (1, self.global_copy.param_count()),
                right: (1, theta.param_count()),
            });
        }
        self.global_copy = theta.clone();
        Ok(())
    }

    fn batch_loss(
        &mut self,
        ds: &LabeledDataset,
        batch: &[usize],
        spec: &LocalSpec,
        step: bool,
    ) -> Result<f64> {
        let (x, y) = ds.batch(batch);
        match spec.mode {
            Mode::Standalone => {
                if step {
                    self.local_model.train_step(&x, &y, spec.lrs.omega)
                } else {
                    Ok(self.local_model.forward_loss(&x, &y)?.0)
                }
            }
            Mode::FedMrl | Mode::NoMrl => {
                let objective = match spec.mode {
                    Mode::NoMrl => Objective::NoMatryoshka,
                    _ => Objective::Matryoshka(spec.loss_weights),
                };
                let (loss, cache) = forward_objective(
                    &self.global_copy,
                    &self.local_model,
                    &self.projector,
                    &x,
                    &y,
                    objective,
                )?;
                if step {
                    backward_and_step(
                        &mut self.global_copy,
                        &mut self.local_model,
                        &mut self.projector,
                        &cache,
                        spec.lrs,
                    )?;
                }
                Ok(loss.total)
            }
        }
    }
}

/// Runs `spec.epochs` passes over the client's training split with a fresh
/// shuffle per epoch drawn from `rng`. Each pass visits every sample once and
/// keeps the final short batch.
pub fn client_update(
    client: &mut ClientState,
    ds: &LabeledDataset,
    spec: &LocalSpec,
    rng: &mut Rng,
) -> Result<LocalOutcome> {
    if client.train.is_empty() {
        return Err(Error::Empty(format!(
            "client {} has no training samples",
            client.id
        )));
    }
    if spec.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    spec.lrs.validate()?;

    let n = client.train.len();
    let mut order = client.train.clone();
    let mut loss_trace = Vec::with_capacity(spec.epochs);
    for _ in 0..spec.epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(spec.batch_size) {
            weighted += client.batch_loss(ds, batch, spec, true)? * batch.len() as f64;
        }
        loss_trace.push(weighted / n as f64);
    }

    let mean_loss = match loss_trace.last() {
        Some(&l) => l,
        None => {
            let train = client.train.clone();
            client.batch_loss(ds, &train, spec, false)?
        }
    };

    let upload = spec.mode.communicates().then(|| Upload {
        client_id: client.id,
        theta: client.global_copy.clone(),
        n_k: n,
        mean_loss,
    });
    Ok(LocalOutcome {
        upload,
        loss_trace,
        mean_loss,
    })
}
