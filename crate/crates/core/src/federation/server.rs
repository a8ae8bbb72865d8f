use crate::error::{Error, Result};
use crate::fusion::GlobalSmallModel;
use crate::numerics::Rng;

use super::client::{ClientState, Upload};

/// Server-side state. It owns the shared small model and nothing else.
#[derive(Clone, Debug)]
pub struct ServerState {
    global_model: GlobalSmallModel,
    round: usize,
    rng: Rng,
}

impl ServerState {
    pub fn new(global_model: GlobalSmallModel, rng: Rng) -> Self {
        Self {
            global_model,
            round: 0,
            rng,
        }
    }

    pub fn global_model(&self) -> &GlobalSmallModel {
        &self.global_model
    }

    pub fn global_model_mut(&mut self) -> &mut GlobalSmallModel {
        &mut self.global_model
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub(crate) fn advance_round(&mut self) {
        self.round += 1;
    }
}

/// `k` distinct client ids drawn uniformly from `0..n`, sorted ascending.
pub fn sample_clients(server: &mut ServerState, n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::config(format!("cannot sample {k} of {n} clients")));
    }
    let mut ids = if k == n {
        (0..n).collect()
    } else {
        server.rng.sample_indices(n, k)
    };
    ids.sort_unstable();
    Ok(ids)
}

/// Gives every listed client its own copy of the server's shared model.
pub fn broadcast(server: &ServerState, clients: &mut [ClientState], ids: &[usize]) -> Result<()> {
    for &id in ids {
        let client = clients
            .get_mut(id)
            .ok_or_else(|| Error::config(format!("client id {id} out of range")))?;
        client.receive(&server.global_model)?;
    }
    Ok(())
}

/// `n_k / n` for each upload, with `n` summed over these uploads.
pub fn aggregation_weights(uploads: &[Upload]) -> Result<Vec<f64>> {
    let n: usize = uploads.iter().map(|u| u.n_k).sum();
    if n == 0 {
        return Err(Error::Empty("uploads carry no samples".into()));
    }
    Ok(uploads.iter().map(|u| u.n_k as f64 / n as f64).collect())
}

/// Replaces the server model with the sample-weighted mean of the uploads.
///
/// Uploads are summed in ascending client id as a running mean
/// `acc += (n_k / n_seen) (θ_k − acc)`, which equals `Σ (n_k / n) θ_k` and
/// returns a single upload, or identical uploads, bit for bit.
pub fn aggregate(server: &mut ServerState, uploads: &[Upload]) -> Result<()> {
    if uploads.is_empty() {
        return Err(Error::Empty("aggregate needs at least one upload".into()));
    }
    let mut order: Vec<&Upload> = uploads.iter().collect();
    order.sort_by_key(|u| u.client_id);

    let expected = server.global_model.param_count();
    for u in &order {
        if u.theta.param_count() != expected || u.theta.rep_dim() != server.global_model.rep_dim() {
            return Err(Error::ShapeMismatch {
                op: "aggregate",
                left: (1, expected),
                right: (1, u.theta.param_count()),
            });
        }
    }
    if order.iter().all(|u| u.n_k == 0) {
        return Err(Error::Empty("uploads carry no samples".into()));
    }

    let mut acc = order[0].theta.params();
    let mut seen = order[0].n_k as f64;
    let mut buf = Vec::with_capacity(expected);
    for u in &order[1..] {
        if u.n_k == 0 {
            continue;
        }
        seen += u.n_k as f64;
        let w = u.n_k as f64 / seen;
        buf.clear();
        u.theta.write_params(&mut buf);
        for (a, &t) in acc.iter_mut().zip(&buf) {
            *a += w * (t - *a);
        }
    }
    server.global_model.read_params(&acc)?;
    Ok(())
}
