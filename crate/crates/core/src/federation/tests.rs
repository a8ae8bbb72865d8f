use super::*;
use crate::data::{gen_synthetic, split_train_test, LabeledDataset, NonIidSpec, PartitionPlan};
use crate::error::Error;
use crate::fusion::{GlobalSmallModel, LearningRates};
use crate::models::ModelConfig;
use crate::numerics::Rng;

fn setup(n_clients: usize, seed: u64) -> (LabeledDataset, PartitionPlan) {
    let ds = gen_synthetic(4, 6, 40, 0.6, &mut Rng::new(seed)).unwrap();
    let plan = NonIidSpec::class_count(2, seed)
        .partition(&ds, n_clients)
        .unwrap();
    let plan = split_train_test(&plan, seed).unwrap();
    (ds, plan)
}

fn small_cfg(mode: Mode) -> RunConfig {
    RunConfig {
        n_clients: 4,
        rounds: 3,
        batch_size: 8,
        d1: 2,
        d2: 4,
        global_hidden: vec![5],
        local_hidden: vec![vec![6], vec![8, 5]],
        lrs: LearningRates::uniform(0.05),
        mode,
        ..RunConfig::default()
    }
}

fn theta(cfg: &ModelConfig, value: f64) -> GlobalSmallModel {
    let mut g = GlobalSmallModel::init(cfg, &mut Rng::new(0)).unwrap();
    g.read_params(&vec![value; g.param_count()]).unwrap();
    g
}

fn upload(id: usize, value: f64, n_k: usize) -> Upload {
    Upload {
        client_id: id,
        theta: theta(&ModelConfig::new(3, vec![4], 2, 3), value),
        n_k,
        mean_loss: 0.0,
    }
}

fn server() -> ServerState {
    ServerState::new(
        theta(&ModelConfig::new(3, vec![4], 2, 3), -7.0),
        Rng::new(1),
    )
}

#[test]
fn sample_all_and_too_many() {
    let mut s = server();
    assert_eq!(sample_clients(&mut s, 5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
    assert!(sample_clients(&mut s, 5, 6).is_err());
    assert!(sample_clients(&mut s, 5, 0).is_err());
    let ids = sample_clients(&mut s, 20, 7).unwrap();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn sample_same_seed_same_ids() {
    let a = sample_clients(&mut server(), 30, 9).unwrap();
    let b = sample_clients(&mut server(), 30, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_sample_frequency_uniform() {
    let n = 4;
    let mut counts = vec![0usize; n];
    for seed in 0..1000 {
        let mut s = ServerState::new(server().global_model().clone(), Rng::new(seed));
        counts[sample_clients(&mut s, n, 1).unwrap()[0]] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1000.0 - 0.25).abs() <= 0.05, "{c}");
    }
}

#[test]
fn aggregate_hand_values() {
    let mut s = server();
    aggregate(&mut s, &[upload(0, 0.0, 5), upload(1, 2.0, 5)]).unwrap();
    assert!(s.global_model().params().iter().all(|&v| v == 1.0));

    aggregate(&mut s, &[upload(3, 4.0, 3), upload(1, 0.0, 1)]).unwrap();
    assert!(s.global_model().params().iter().all(|&v| v == 3.0));
}

#[test]
fn aggregate_identity_cases_are_bitwise() {
    let mut s = server();
    let mut one = upload(2, 0.0, 17);
    let mut rng = Rng::new(9);
    let values: Vec<f64> = (0..one.theta.param_count()).map(|_| rng.normal()).collect();
    one.theta.read_params(&values).unwrap();
    aggregate(&mut s, std::slice::from_ref(&one)).unwrap();
    assert!(s.global_model().params_bit_eq(&one.theta));

    let copies: Vec<Upload> = [3, 11, 1, 6]
        .iter()
        .enumerate()
        .map(|(i, &n)| Upload {
            client_id: i,
            n_k: n,
            ..one.clone()
        })
        .collect();
    let mut s = server();
    aggregate(&mut s, &copies).unwrap();
    assert!(s.global_model().params_bit_eq(&one.theta));
}

#[test]
fn aggregate_equal_sizes_is_plain_mean() {
    let mut rng = Rng::new(4);
    let uploads: Vec<Upload> = (0..6)
        .map(|i| {
            let mut u = upload(i, 0.0, 10);
            let v: Vec<f64> = (0..u.theta.param_count()).map(|_| rng.normal()).collect();
            u.theta.read_params(&v).unwrap();
            u
        })
        .collect();
    let mut s = server();
    aggregate(&mut s, &uploads).unwrap();
    let got = s.global_model().params();
    for (j, &g) in got.iter().enumerate() {
        let mean = uploads.iter().map(|u| u.theta.params()[j]).sum::<f64>() / 6.0;
        assert!((g - mean).abs() < 1e-12);
    }
    let w =
        aggregation_weights(&[upload(0, 0.0, 3), upload(1, 0.0, 7), upload(2, 0.0, 13)]).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn aggregate_rejects_bad_input() {
    let mut s = server();
    assert!(matches!(aggregate(&mut s, &[]), Err(Error::Empty(_))));
    let odd = Upload {
        theta: theta(&ModelConfig::new(3, vec![5], 2, 3), 1.0),
        ..upload(1, 0.0, 2)
    };
    assert!(matches!(
        aggregate(&mut s, &[upload(0, 1.0, 2), odd]),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn broadcast_copies_are_exact_and_independent() {
    let (ds, plan) = setup(4, 0);
    let mut fed = Federation::new(small_cfg(Mode::FedMrl), &ds, &plan).unwrap();
    let mut server = fed.server.clone();
    let mut v = server.global_model().params();
    v.iter_mut().for_each(|x| *x += 0.5);
    server.global_model_mut().read_params(&v).unwrap();

    let before_untouched = fed.clients[3].global_copy().clone();
    broadcast(&server, &mut fed.clients, &[0, 2]).unwrap();
    for k in [0, 2] {
        assert!(fed.clients[k]
            .global_copy()
            .params_bit_eq(server.global_model()));
    }
    assert!(fed.clients[3]
        .global_copy()
        .params_bit_eq(&before_untouched));

    let spec = fed.local_spec();
    client_update(&mut fed.clients[0], &ds, &spec, &mut Rng::new(0)).unwrap();
    assert!(!fed.clients[0]
        .global_copy()
        .params_bit_eq(server.global_model()));
    assert!(fed.clients[2]
        .global_copy()
        .params_bit_eq(server.global_model()));
    assert!(broadcast(&server, &mut fed.clients, &[9]).is_err());
}

#[test]
fn zero_epochs_and_zero_lr_leave_theta() {
    let (ds, plan) = setup(4, 1);
    let fed = Federation::new(small_cfg(Mode::FedMrl), &ds, &plan).unwrap();
    let base = fed.local_spec();

    let mut c = fed.clients[1].clone();
    let out = client_update(
        &mut c,
        &ds,
        &LocalSpec { epochs: 0, ..base },
        &mut Rng::new(2),
    )
    .unwrap();
    assert!(out.loss_trace.is_empty());
    assert!(out
        .upload
        .unwrap()
        .theta
        .params_bit_eq(fed.clients[1].global_copy()));

    let mut c = fed.clients[1].clone();
    let frozen = LocalSpec {
        epochs: 3,
        lrs: LearningRates::uniform(0.0),
        ..base
    };
    let out = client_update(&mut c, &ds, &frozen, &mut Rng::new(2)).unwrap();
    assert!(out
        .upload
        .unwrap()
        .theta
        .params_bit_eq(fed.clients[1].global_copy()));
    let t = &out.loss_trace;
    assert_eq!(t.len(), 3);
    assert!(t.iter().all(|&l| (l - t[0]).abs() < 1e-12), "{t:?}");
}

#[test]
fn empty_training_split_is_an_error() {
    let (ds, plan) = setup(4, 1);
    let fed = Federation::new(small_cfg(Mode::FedMrl), &ds, &plan).unwrap();
    let c = &fed.clients[0];
    let mut empty = ClientState::new(
        0,
        c.local_model().clone(),
        c.projector().clone(),
        c.global_copy().clone(),
        vec![],
        c.test_indices().to_vec(),
    )
    .unwrap();
    assert!(matches!(
        client_update(&mut empty, &ds, &fed.local_spec(), &mut Rng::new(0)),
        Err(Error::Empty(_))
    ));
}

#[test]
fn epoch_loss_mostly_non_increasing() {
    let mut good = 0;
    let trials = 20;
    for seed in 0..trials {
        let ds = gen_synthetic(3, 6, 30, 0.3, &mut Rng::new(100 + seed)).unwrap();
        let plan = NonIidSpec::class_count(3, seed).partition(&ds, 1).unwrap();
        let plan = split_train_test(&plan, seed).unwrap();
        let cfg = RunConfig {
            n_clients: 1,
            seed,
            lrs: LearningRates::uniform(0.01),
            ..small_cfg(Mode::FedMrl)
        };
        let mut fed = Federation::new(cfg, &ds, &plan).unwrap();
        let spec = LocalSpec {
            epochs: 5,
            ..fed.local_spec()
        };
        let out = client_update(&mut fed.clients[0], &ds, &spec, &mut Rng::new(seed)).unwrap();
        if out.loss_trace.windows(2).all(|w| w[1] <= w[0]) {
            good += 1;
        }
    }
    assert!(good * 10 >= trials * 9, "{good}/{trials}");
}

#[test]
fn upload_only_in_communicating_modes() {
    let (ds, plan) = setup(4, 2);
    for mode in Mode::ALL {
        let fed = Federation::new(small_cfg(mode), &ds, &plan).unwrap();
        let mut c = fed.clients[0].clone();
        let out = client_update(&mut c, &ds, &fed.local_spec(), &mut Rng::new(0)).unwrap();
        assert_eq!(out.upload.is_some(), mode != Mode::Standalone);
        if let Some(u) = out.upload {
            assert_eq!(u.n_k, c.n_k());
            assert_eq!(
                u.theta.param_count(),
                fed.server().global_model().param_count()
            );
        }
    }
}

#[test]
fn zero_rounds_empty_reports() {
    let (ds, plan) = setup(4, 0);
    let cfg = RunConfig {
        rounds: 0,
        ..small_cfg(Mode::FedMrl)
    };
    assert!(run_training(&cfg, &ds, &plan).unwrap().is_empty());
}

#[test]
fn standalone_never_moves_server() {
    let (ds, plan) = setup(4, 0);
    let mut fed = Federation::new(small_cfg(Mode::Standalone), &ds, &plan).unwrap();
    let start = fed.server().global_model().clone();
    for _ in 0..3 {
        let r = fed.step_round().unwrap();
        assert_eq!((r.uplink_params, r.downlink_params), (0, 0));
    }
    assert!(fed.server().global_model().params_bit_eq(&start));
    assert_eq!(fed.server().round(), 3);
}

#[test]
fn fedmrl_moves_server_and_reports() {
    let (ds, plan) = setup(4, 0);
    let cfg = small_cfg(Mode::FedMrl);
    let mut fed = Federation::new(cfg.clone(), &ds, &plan).unwrap();
    let start = fed.server().global_model().clone();
    let r = fed.step_round().unwrap();
    assert!(!fed.server().global_model().params_bit_eq(&start));
    assert_eq!(r.round, 1);
    assert_eq!(r.per_client_accuracy.len(), 4);
    r.validate().unwrap();
    assert_eq!(r.uplink_params, 4 * start.param_count() as u64);
}

#[test]
fn runs_are_deterministic_and_thread_count_invariant() {
    let (ds, plan) = setup(4, 3);
    let cfg = RunConfig {
        participation: 0.5,
        ..small_cfg(Mode::FedMrl)
    };
    let a = run_training(&cfg, &ds, &plan).unwrap();
    let b = run_training(&cfg, &ds, &plan).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c = pool.install(|| run_training(&cfg, &ds, &plan).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn plan_must_match_client_count() {
    let (ds, plan) = setup(4, 0);
    let cfg = RunConfig {
        n_clients: 5,
        ..small_cfg(Mode::FedMrl)
    };
    assert!(matches!(
        Federation::new(cfg, &ds, &plan),
        Err(Error::Partition(_))
    ));
}
