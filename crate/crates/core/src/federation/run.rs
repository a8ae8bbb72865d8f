use rayon::prelude::*;

use crate::data::{LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::fusion::{GlobalSmallModel, LocalHeteroModel, Projector};
use crate::metrics::{self, comm_cost_round, flops_round, RoundReport, TrainingGraph};
use crate::numerics::{mix_seed, Rng};

use super::client::{client_update, ClientState, LocalSpec, Upload};
use super::config::RunConfig;
use super::server::{aggregate, broadcast, sample_clients, ServerState};

const STREAM_THETA: u64 = 0x7e7a;
const STREAM_SAMPLING: u64 = 0x5a3b;
const STREAM_CLIENTS: u64 = 0xc11e;
const STREAM_SHUFFLE: u64 = 0x5f1e;

/// A running federation: one server, `N` clients and the shared dataset.
#[derive(Debug)]
pub struct Federation<'a> {
    cfg: RunConfig,
    dataset: &'a LabeledDataset,
    pub(super) server: ServerState,
    pub(super) clients: Vec<ClientState>,
}

impl<'a> Federation<'a> {
    /// Initialises the server model and every client. All clients start with
    /// a copy of the initial shared model.
    pub fn new(cfg: RunConfig, dataset: &'a LabeledDataset, plan: &PartitionPlan) -> Result<Self> {
        cfg.validate()?;
        plan.validate(dataset.len())?;
        if plan.n_clients() != cfg.n_clients {
            return Err(Error::Partition(format!(
                "plan has {} clients, config expects {}",
                plan.n_clients(),
                cfg.n_clients
            )));
        }
        let (dim, classes) = (dataset.dim(), dataset.classes());
        let global_cfg = cfg.global_model(dim, classes);
        let theta = GlobalSmallModel::init(&global_cfg, &mut Rng::derive(cfg.seed, STREAM_THETA))?;

        let client_seed = mix_seed(cfg.seed, STREAM_CLIENTS);
        let clients = plan
            .clients
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                if idx.train.is_empty() || idx.test.is_empty() {
                    return Err(Error::Partition(format!(
                        "client {k} needs non-empty train and test splits"
                    )));
                }
                let local_cfg = cfg.local_model(k, dim, classes);
                let f = LocalHeteroModel::init(
                    &local_cfg,
                    &mut Rng::derive(client_seed, 2 * k as u64),
                )?;
                let p = Projector::init(
                    cfg.d1,
                    cfg.d2,
                    &mut Rng::derive(client_seed, 2 * k as u64 + 1),
                )?;
                ClientState::new(k, f, p, theta.clone(), idx.train.clone(), idx.test.clone())
            })
            .collect::<Result<Vec<_>>>()?;

        let server = ServerState::new(theta, Rng::derive(cfg.seed, STREAM_SAMPLING));
        Ok(Self {
            cfg,
            dataset,
            server,
            clients,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    /// Hyperparameters each sampled client trains with.
    pub fn local_spec(&self) -> LocalSpec {
        LocalSpec {
            epochs: self.cfg.local_epochs,
            batch_size: self.cfg.batch_size,
            lrs: self.cfg.lrs,
            mode: self.cfg.mode,
            loss_weights: self.cfg.loss_weights,
        }
    }

    /// Test accuracy of every client with its current models.
    pub fn evaluate_all(&self) -> Result<Vec<f64>> {
        let variant = self.cfg.effective_eval_variant();
        self.clients
            .par_iter()
            .map(|c| metrics::evaluate(c, self.dataset, variant))
            .collect()
    }

    /// One round: sample, broadcast, local training, aggregation, evaluation.
    /// Standalone mode samples and trains but never broadcasts or aggregates.
    pub fn step_round(&mut self) -> Result<RoundReport> {
        let n = self.cfg.n_clients;
        let ids = sample_clients(&mut self.server, n, self.cfg.clients_per_round())?;
        let communicates = self.cfg.mode.communicates();
        if communicates {
            broadcast(&self.server, &mut self.clients, &ids)?;
        }

        let mut sampled = vec![false; n];
        for &id in &ids {
            sampled[id] = true;
        }
        let spec = self.local_spec();
        let round = self.server.round() as u64;
        let shuffle_seed = mix_seed(mix_seed(self.cfg.seed, STREAM_SHUFFLE), round);
        let dataset = self.dataset;
        let outcomes = self
            .clients
            .par_iter_mut()
            .filter(|c| sampled[c.id()])
            .map(|c| {
                let mut rng = Rng::derive(shuffle_seed, c.id() as u64);
                let graph = TrainingGraph::for_mode(
                    spec.mode,
                    &c.global_copy,
                    &c.local_model,
                    &c.projector,
                );
                let outcome = client_update(c, dataset, &spec, &mut rng)?;
                Ok((outcome, flops_round(&graph, c.n_k(), spec.epochs)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mean_loss =
            outcomes.iter().map(|(o, _)| o.mean_loss).sum::<f64>() / outcomes.len() as f64;
        let flops = outcomes.iter().map(|(_, f)| f).sum();
        let uploads: Vec<Upload> = outcomes.into_iter().filter_map(|(o, _)| o.upload).collect();
        if communicates {
            aggregate(&mut self.server, &uploads)?;
        }
        self.server.advance_round();

        let per_client = self.evaluate_all()?;
        let comm = comm_cost_round(
            self.server.global_model().param_count(),
            ids.len(),
            self.cfg.mode,
        );
        Ok(RoundReport {
            round: self.server.round(),
            avg_test_accuracy: metrics::average_accuracy(&per_client)?,
            per_client_accuracy: per_client,
            mean_train_loss: mean_loss,
            uplink_params: comm.round_uplink,
            downlink_params: comm.round_downlink,
            flops,
        })
    }
}

/// Runs `cfg.rounds` rounds and returns one report per round; report `t`
/// describes the state after `t` completed rounds, starting at 1.
pub fn run_training(
    cfg: &RunConfig,
    dataset: &LabeledDataset,
    plan: &PartitionPlan,
) -> Result<Vec<RoundReport>> {
    let mut fed = Federation::new(cfg.clone(), dataset, plan)?;
    (0..cfg.rounds).map(|_| fed.step_round()).collect()
}
