mod common;

use common::{abac_oracle, forward_oracle, merkle_oracle, rbac_oracle, sha256};
use dlacb_core::bench::{abac_check, rbac_check, AbacPolicy, RbacPolicy};
use dlacb_core::canonical::to_canonical_bytes;
use dlacb_core::config::Config;
use dlacb_core::contracts::{ContractOutput, DenialReason};
use dlacb_core::crypto::{hash, Digest};
use dlacb_core::merkle::merkle_root;
use dlacb_core::model::{
    accuracy, encode_pair, generate_dataset, gradient_check, gradient_check_report, train, DecisionModel, Dense,
    EntityMetadata, Operation, OperationMask, TrainConfig,
};
use dlacb_core::storage::{recompute_root, roll_root, MaliciousLog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_meta(rng: &mut ChaCha20Rng) -> EntityMetadata {
    EntityMetadata::new(std::array::from_fn(|_| rng.gen_range(0..16))).unwrap()
}

fn random_input(rng: &mut ChaCha20Rng) -> Vec<f64> {
    (0..64).map(|_| rng.gen_range(0..2) as f64).collect()
}

#[test]
fn forward_pass_matches_scalar_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    let trained = {
        let ds = generate_dataset(30, 15, 5);
        train(&ds, &TrainConfig { epochs: 20, ..TrainConfig::default() }).unwrap()
    };
    for case in 0..100u64 {
        let model = if case % 4 == 0 {
            trained.clone()
        } else {
            DecisionModel::seeded(&[64, 32, 16, 4], case).unwrap()
        };
        let x = random_input(&mut rng);
        let got = model.forward(&x).unwrap();
        let want = forward_oracle(&model, &x);
        for k in 0..4 {
            assert!((got[k] - want[k]).abs() < 1e-9, "case {case} output {k}: {} vs {}", got[k], want[k]);
        }
    }
}

#[test]
fn forward_pass_with_random_biases() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let layers = [(32, 64), (16, 32), (4, 16)]
        .into_iter()
        .map(|(rows, cols)| {
            let mut d = Dense::zeros(rows, cols);
            d.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
            d.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            d
        })
        .collect();
    let model = DecisionModel::new(layers).unwrap();
    for _ in 0..20 {
        let u = random_meta(&mut rng);
        let r = random_meta(&mut rng);
        let got = model.infer(&encode_pair(&u, &r)).unwrap().0;
        let want = forward_oracle(&model, &encode_pair(&u, &r).as_f64());
        for k in 0..4 {
            assert!((got[k] - want[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn gradient_check_on_seeded_configurations() {
    let mut rng = ChaCha20Rng::seed_from_u64(20);
    let shapes: [&[usize]; 4] = [&[64, 32, 16, 4], &[64, 8, 4], &[64, 4], &[64, 16, 8, 4]];
    for cfg in 0..20u64 {
        let model = DecisionModel::seeded(shapes[cfg as usize % 4], 1000 + cfg).unwrap();
        let x = random_input(&mut rng);
        let label = std::array::from_fn(|_| rng.gen_range(0..2) as f64);
        let report = gradient_check_report(&model, &x, &label);
        assert!(report.max_rel_error < 1e-4, "configuration {cfg}: {report:?}");
        assert!(report.kinks * 100 <= model.parameter_count(), "configuration {cfg}: {report:?}");
        assert_eq!(report.compared + report.kinks, model.parameter_count());
    }
}

#[test]
fn gradient_check_is_permutation_invariant() {
    let model = DecisionModel::seeded(&[64, 8, 4], 3).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let x = random_input(&mut rng);
    let label = [1.0, 0.0, 1.0, 0.0];
    // Swap input columns 0 and 5 in the first layer and in the input.
    let mut layers = model.layers().to_vec();
    for r in 0..layers[0].rows {
        layers[0].weights.swap(r * 64, r * 64 + 5);
    }
    let permuted = DecisionModel::new(layers).unwrap();
    let mut px = x.clone();
    px.swap(0, 5);
    assert_eq!(model.forward(&x).unwrap(), permuted.forward(&px).unwrap());
    let a = gradient_check(&model, &x, &label);
    let b = gradient_check(&permuted, &px, &label);
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn default_dataset_accuracy() {
    let c = Config::default();
    let ds = generate_dataset(c.n_users, c.n_resources, c.seed);
    let model = train(&ds, &c.train_config()).unwrap();
    let tr = accuracy(&model, &ds.train(), c.threshold);
    let te = accuracy(&model, &ds.test(), c.threshold);
    assert!(tr >= 0.95, "train accuracy {tr}");
    assert!(te >= 0.90, "test accuracy {te}");
}

#[test]
fn constant_labels_are_fit() {
    let mut ds = generate_dataset(20, 10, 8);
    for t in &mut ds.tuples {
        t.label = OperationMask::ALL;
    }
    let model = train(&ds, &TrainConfig { epochs: 50, ..TrainConfig::default() }).unwrap();
    for t in ds.train() {
        let s = model.infer(&t.input()).unwrap();
        assert!(s.0.iter().all(|&p| p > 0.9), "{:?}", s.0);
    }
}

#[test]
fn labels_follow_the_hidden_rules() {
    let ds = generate_dataset(40, 20, 9);
    for t in &ds.tuples {
        assert_eq!(t.label, ds.ground_truth.label(&t.user, &t.resource));
        assert_eq!(t.user, ds.users[t.user_id as usize]);
        assert_eq!(t.resource, ds.resources[t.resource_id as usize]);
    }
}

fn random_queries(n: usize, seed: u64) -> Vec<(EntityMetadata, u32, EntityMetadata, Operation)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                random_meta(&mut rng),
                rng.gen_range(0..1000),
                random_meta(&mut rng),
                Operation::ALL[rng.gen_range(0..4)],
            )
        })
        .collect()
}

#[test]
fn rbac_matches_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for (scale, per_attr) in [(1, 3), (3, 3), (1, 1), (2, 0)] {
        let policy = RbacPolicy::random(&mut rng, scale, per_attr, 7);
        let queries = random_queries(1000, scale as u64 * 10 + per_attr as u64);
        let mut granted = 0;
        for (u, rid, _, op) in &queries {
            let got = rbac_check(&policy, u, *rid, *op);
            assert_eq!(got, rbac_oracle(&policy, u, *rid, *op));
            granted += got as usize;
        }
        if per_attr > 0 {
            assert!(granted > 0 && granted < 1000, "degenerate policy: {granted}");
        }
    }
}

#[test]
fn abac_matches_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    for (scale, per_attr) in [(1, 6), (5, 6), (2, 1), (1, 0)] {
        let policy = AbacPolicy::random(&mut rng, scale, per_attr);
        let queries = random_queries(1000, 99 + scale as u64);
        let mut granted = 0;
        for (u, _, r, op) in &queries {
            let got = abac_check(&policy, u, r, *op);
            assert_eq!(got, abac_oracle(&policy, u, r, *op));
            granted += got as usize;
        }
        if per_attr > 0 {
            assert!(granted > 0 && granted < 1000, "degenerate policy: {granted}");
        }
    }
}

#[test]
fn merkle_root_matches_recursive_oracle() {
    for n in 0..40u8 {
        let leaves: Vec<[u8; 32]> = (0..n).map(|i| sha256(&[&[i, n]])).collect();
        let digests: Vec<Digest> = leaves.iter().map(|l| Digest(*l)).collect();
        assert_eq!(merkle_root(&digests).map(|d| d.0), merkle_oracle(&leaves), "{n} leaves");
    }
}

#[test]
fn sha256_reference_vectors() {
    for msg in [&b""[..], b"abc", b"The quick brown fox jumps over the lazy dog"] {
        assert_eq!(hash(msg).0, sha256(&[msg]));
    }
    assert_eq!(
        hash(b"abc").to_hex(),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn rolling_root_over_blocks_matches_hand_chain() {
    let mut log = MaliciousLog::new();
    let reasons = [DenialReason::ModelDenied, DenialReason::WrongResource, DenialReason::Replay];
    let mut expected = [0u8; 32];
    for (height, count) in [(3u64, 1usize), (5, 3), (9, 2)] {
        for i in 0..count {
            let reason = reasons[i % 3];
            log.record(vec![height as u8, i as u8], None, ContractOutput::new(reason, OperationMask::NONE), 100 + height);
        }
        log.seal(height);
        let block: Vec<_> = log.records().iter().filter(|r| r.height == height).cloned().collect();
        let leaves: Vec<[u8; 32]> = block.iter().map(|r| sha256(&[&to_canonical_bytes(r)])).collect();
        let mblock = merkle_oracle(&leaves).unwrap();
        let outputs: Vec<u8> = block.iter().flat_map(|r| r.output.to_bytes()).collect();
        let prev = expected;
        expected = sha256(&[&prev, &mblock, &outputs]);
        assert_eq!(roll_root(&Digest(prev), &block).unwrap().0, expected);
        assert_eq!(log.root().0, expected, "after height {height}");
    }
    assert_eq!(recompute_root(log.records()).0, expected);
}
