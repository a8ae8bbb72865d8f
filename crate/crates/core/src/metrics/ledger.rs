//! Analytic communication and compute ledgers.
//!
//! FLOP convention: a multiply-add counts as 2 FLOPs, so an affine layer
//! costs `2 · in · out` per sample forward; activations, biases and the loss
//! are ignored. A backward pass costs twice its forward pass, giving
//! `6 · in · out` per sample per training pass. The count does not depend on
//! the batch size.

use serde::{Deserialize, Serialize};

use crate::federation::Mode;
use crate::fusion::{GlobalSmallModel, LocalHeteroModel, Projector};
use crate::models::{Extractor, Header};

/// Parameters moved between the server and the clients in one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommCost {
    pub per_client_uplink: u64,
    pub per_client_downlink: u64,
    pub round_uplink: u64,
    pub round_downlink: u64,
}

/// Each of `k` clients downloads and uploads the `theta_params` shared
/// parameters once; standalone training moves nothing.
pub fn comm_cost_round(theta_params: usize, k: usize, mode: Mode) -> CommCost {
    if !mode.communicates() {
        return CommCost::default();
    }
    let per = theta_params as u64;
    CommCost {
        per_client_uplink: per,
        per_client_downlink: per,
        round_uplink: per * k as u64,
        round_downlink: per * k as u64,
    }
}

/// The affine layers one training sample passes through, as `(in, out)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainingGraph {
    pub layers: Vec<(usize, usize)>,
}

impl TrainingGraph {
    pub fn push_extractor(&mut self, e: &Extractor) {
        self.layers
            .extend(e.layers().iter().map(|l| (l.in_dim(), l.out_dim())));
    }

    pub fn push_header(&mut self, h: &Header) {
        self.layers.push((h.in_dim(), h.classes()));
    }

    /// Layers exercised by one client's local training under `mode`.
    pub fn for_mode(mode: Mode, g: &GlobalSmallModel, f: &LocalHeteroModel, p: &Projector) -> Self {
        let mut graph = Self::default();
        graph.push_extractor(f.extractor());
        graph.push_header(f.header());
        if mode.communicates() {
            graph.push_extractor(g.extractor());
            graph.layers.push((p.d1() + p.d2(), p.d2()));
            if mode == Mode::FedMrl {
                graph.push_header(g.header());
            }
        }
        graph
    }

    pub fn forward_flops_per_sample(&self) -> u64 {
        self.layers.iter().map(|&(i, o)| 2 * (i * o) as u64).sum()
    }

    /// Forward plus backward.
    pub fn train_flops_per_sample(&self) -> u64 {
        3 * self.forward_flops_per_sample()
    }
}

/// FLOPs of `epochs` training passes over `n_train` samples.
pub fn flops_round(graph: &TrainingGraph, n_train: usize, epochs: usize) -> u64 {
    graph.train_flops_per_sample() * n_train as u64 * epochs as u64
}
