use std::path::PathBuf;

use fedmrl::data::{gen_synthetic, split_train_test, LabeledDataset, NonIidSpec};
use fedmrl::federation::{run_training, Mode, RunConfig};
use fedmrl::numerics::Rng;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/blobs_4x8.csv")
}

#[test]
fn fixture_matches_its_generator() {
    let loaded = LabeledDataset::load_csv(&fixture(), Some(4)).unwrap();
    let regenerated = gen_synthetic(4, 8, 25, 1.0, &mut Rng::new(7)).unwrap();
    assert_eq!(loaded.labels(), regenerated.labels());
    assert!(
        loaded
            .features()
            .max_abs_diff(regenerated.features())
            .unwrap()
            == 0.0
    );
}

#[test]
fn short_federation_on_fixture() {
    let ds = LabeledDataset::load_csv(&fixture(), None).unwrap();
    let plan = NonIidSpec::class_count(2, 1).partition(&ds, 4).unwrap();
    let plan = split_train_test(&plan, 1).unwrap();
    for mode in Mode::ALL {
        let cfg = RunConfig {
            n_clients: 4,
            rounds: 5,
            batch_size: 8,
            d1: 2,
            d2: 6,
            global_hidden: vec![8],
            local_hidden: vec![vec![10], vec![6]],
            lrs: fedmrl::fusion::LearningRates::uniform(0.05),
            mode,
            ..RunConfig::default()
        };
        let reports = run_training(&cfg, &ds, &plan).unwrap();
        assert_eq!(reports.len(), 5);
        for r in &reports {
            r.validate().unwrap();
        }
        let first = reports[0].mean_train_loss;
        let last = reports[4].mean_train_loss;
        assert!(last < first, "{mode}: {first} -> {last}");
    }
}
