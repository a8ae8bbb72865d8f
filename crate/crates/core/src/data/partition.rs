use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Attempts allowed before a Dirichlet draw with an empty client is an error.
pub const DIRICHLET_MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NonIidVariant {
    /// Every client holds samples from exactly `classes_per_client` classes.
    ClassCount { classes_per_client: usize },
    /// Per-class client shares drawn from a symmetric Dirichlet(alpha).
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonIidSpec {
    pub variant: NonIidVariant,
    pub seed: u64,
}

impl NonIidSpec {
    pub fn class_count(classes_per_client: usize, seed: u64) -> Self {
        Self {
            variant: NonIidVariant::ClassCount { classes_per_client },
            seed,
        }
    }

    pub fn dirichlet(alpha: f64, seed: u64) -> Self {
        Self {
            variant: NonIidVariant::Dirichlet { alpha },
            seed,
        }
    }

    pub fn partition(&self, ds: &LabeledDataset, n_clients: usize) -> Result<PartitionPlan> {
        match self.variant {
            NonIidVariant::ClassCount { classes_per_client } => {
                partition_class_count(ds, n_clients, classes_per_client, self.seed)
            }
            NonIidVariant::Dirichlet { alpha } => {
                partition_dirichlet(ds, n_clients, alpha, self.seed)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientIndices {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.train.iter().chain(&self.test).copied()
    }
}

/// Per-client index lists into a parent dataset. Partitioners place every
/// index in `train`; [`split_train_test`] then carves out the test share.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub clients: Vec<ClientIndices>,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Checks index validity, per-client train/test disjointness, and that
    /// no index is held by two clients.
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let mut owner = vec![usize::MAX; dataset_len];
        for (k, c) in self.clients.iter().enumerate() {
            for i in c.all() {
                if i >= dataset_len {
                    return Err(Error::Partition(format!(
                        "client {k} holds index {i} beyond dataset length {dataset_len}"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "index {i} held twice (clients {} and {k})",
                        owner[i]
                    )));
                }
                owner[i] = k;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the client count and every index list, in order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.clients.len() as u64).to_le_bytes());
        for c in &self.clients {
            for list in [&c.train, &c.test] {
                h.update((list.len() as u64).to_le_bytes());
                for &i in list {
                    h.update((i as u64).to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Label histogram of each client's samples (train and test together).
    pub fn label_counts(&self, ds: &LabeledDataset) -> Vec<Vec<usize>> {
        self.clients
            .iter()
            .map(|c| {
                let mut counts = vec![0; ds.classes()];
                for i in c.all() {
                    counts[ds.labels()[i]] += 1;
                }
                counts
            })
            .collect()
    }
}

/// Shannon entropy (nats) of a count histogram.
pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn check_clients(n_clients: usize) -> Result<()> {
    if n_clients == 0 {
        return Err(Error::config("need at least one client"));
    }
    Ok(())
}

/// Each client is assigned `c` distinct classes: with a seeded class
/// permutation `π` and offset `o`, client `k` gets `π[(o + k·c + j) mod L]`
/// for `j < c`. A class shared by `m` clients is shuffled and dealt into `m`
/// near-equal chunks. Classes assigned to nobody (only possible when
/// `N·c < L`) are left out of the plan.
pub fn partition_class_count(
    ds: &LabeledDataset,
    n_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    check_clients(n_clients)?;
    let classes = ds.classes();
    if classes_per_client == 0 || classes_per_client > classes {
        return Err(Error::config(format!(
            "classes per client {classes_per_client} must be in 1..={classes}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut perm: Vec<usize> = (0..classes).collect();
    rng.shuffle(&mut perm);
    let offset = rng.below(classes);

    let assigned: Vec<Vec<usize>> = (0..n_clients)
        .map(|k| {
            (0..classes_per_client)
                .map(|j| perm[(offset + k * classes_per_client + j) % classes])
                .collect()
        })
        .collect();
    let mut holders = vec![Vec::new(); classes];
    for (k, cls) in assigned.iter().enumerate() {
        for &c in cls {
            holders[c].push(k);
        }
    }

    let mut clients = vec![ClientIndices::default(); n_clients];
    for (c, mut idx) in ds.indices_by_class().into_iter().enumerate() {
        let owners = &holders[c];
        if owners.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        let (base, extra) = (idx.len() / owners.len(), idx.len() % owners.len());
        let mut start = 0;
        for (j, &k) in owners.iter().enumerate() {
            let take = base + usize::from(j < extra);
            clients[k]
                .train
                .extend_from_slice(&idx[start..start + take]);
            start += take;
        }
    }
    finish(clients)
}

/// For each class, draws shares `p ~ Dirichlet(alpha·1_N)` (normalised
/// Gamma(alpha, 1) variates) and cuts the shuffled class indices at
/// `round(n_c · cumsum(p))`. Draws that leave any client with fewer than
/// [`MIN_CLIENT_SAMPLES`] samples are redrawn, so the result always admits the
/// 8:2 split.
pub fn partition_dirichlet(
    ds: &LabeledDataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    check_clients(n_clients)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!(
            "dirichlet alpha {alpha} must be > 0"
        )));
    }
    let by_class = ds.indices_by_class();
    let mut rng = Rng::new(seed);
    'attempt: for _ in 0..DIRICHLET_MAX_ATTEMPTS {
        let mut clients = vec![ClientIndices::default(); n_clients];
        for class_idx in &by_class {
            if class_idx.is_empty() {
                continue;
            }
            let draws: Vec<f64> = (0..n_clients).map(|_| rng.gamma(alpha)).collect();
            let total: f64 = draws.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                continue 'attempt;
            }
            let mut idx = class_idx.clone();
            rng.shuffle(&mut idx);
            let n = idx.len() as f64;
            let mut cum = 0.0;
            let mut start = 0;
            for (k, d) in draws.iter().enumerate() {
                cum += d / total;
                let end = if k + 1 == n_clients {
                    idx.len()
                } else {
                    ((cum * n).round() as usize).clamp(start, idx.len())
                };
                clients[k].train.extend_from_slice(&idx[start..end]);
                start = end;
            }
        }
        if clients.iter().all(|c| c.len() >= MIN_CLIENT_SAMPLES) {
            return finish(clients);
        }
    }
    Err(Error::Partition(format!(
        "dirichlet(alpha={alpha}) left a client with fewer than {MIN_CLIENT_SAMPLES} samples \
         after {DIRICHLET_MAX_ATTEMPTS} attempts; use fewer clients, more data or a larger alpha"
    )))
}

fn finish(mut clients: Vec<ClientIndices>) -> Result<PartitionPlan> {
    if let Some(k) = clients.iter().position(ClientIndices::is_empty) {
        return Err(Error::Partition(format!("client {k} received no samples")));
    }
    for c in &mut clients {
        c.train.sort_unstable();
    }
    Ok(PartitionPlan { clients })
}

/// Smallest client the 8:2 split accepts.
pub const MIN_CLIENT_SAMPLES: usize = 5;

/// Per client: seeded shuffle, then `max(1, floor(0.2·n))` samples to test
/// and the rest to train. Index lists come out sorted.
pub fn split_train_test(plan: &PartitionPlan, seed: u64) -> Result<PartitionPlan> {
    let clients = plan
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut all: Vec<usize> = c.all().collect();
            all.sort_unstable();
            if all.len() < MIN_CLIENT_SAMPLES {
                return Err(Error::Partition(format!(
                    "client {k} has {} samples; the 8:2 split needs at least {MIN_CLIENT_SAMPLES}",
                    all.len()
                )));
            }
            Rng::derive(seed, k as u64).shuffle(&mut all);
            let n_test = (all.len() / 5).max(1);
            let mut test = all[..n_test].to_vec();
            let mut train = all[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            Ok(ClientIndices { train, test })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionPlan { clients })
}
