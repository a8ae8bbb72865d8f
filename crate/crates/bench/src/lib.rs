//! Shared workloads for the criterion benches.

use fedmrl::data::{gen_synthetic, split_train_test, LabeledDataset, NonIidSpec, PartitionPlan};
use fedmrl::federation::{Mode, RunConfig};
use fedmrl::fusion::LearningRates;
use fedmrl::numerics::Rng;

/// 10 classes in 64 dimensions split over 10 clients, 2 classes each.
pub fn workload(seed: u64) -> (LabeledDataset, PartitionPlan) {
    let ds = gen_synthetic(10, 64, 100, 4.5, &mut Rng::new(seed)).expect("valid synthetic spec");
    let plan = NonIidSpec::class_count(2, seed)
        .partition(&ds, 10)
        .and_then(|p| split_train_test(&p, seed))
        .expect("valid partition");
    (ds, plan)
}

pub fn round_config(mode: Mode) -> RunConfig {
    RunConfig {
        n_clients: 10,
        rounds: 1,
        lrs: LearningRates::uniform(0.05),
        d1: 4,
        d2: 16,
        global_hidden: vec![32],
        local_hidden: vec![vec![40], vec![40], vec![20], vec![16], vec![10]],
        mode,
        ..RunConfig::default()
    }
}
