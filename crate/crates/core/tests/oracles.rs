mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use policy_distill::gbm::{fit_gbm, GbmParams};
use policy_distill::symreg::{evolve, GpParams};
use policy_distill::trees::{fit_tree, TreeNode, TreeParams};

#[test]
fn tree_builder_matches_brute_force_on_small_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..500 {
        let n = rng.gen_range(1..=10);
        let d = rng.gen_range(1..=3);
        let params = TreeParams {
            max_depth: rng.gen_range(0..=3),
            min_samples_leaf: rng.gen_range(1..=3),
        };
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tree = fit_tree(&x, &y, params).unwrap();
        assert!(common::agrees_with_oracle(&x, &y, params, &tree), "case {case}: {x:?} {y:?} {params:?}");
    }
}

#[test]
fn oracle_is_sane_on_a_hand_worked_example() {
    // One split separates the two clusters exactly.
    let x = vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]];
    let y = vec![1.0, 1.0, 3.0, 3.0];
    let node = common::oracle_tree(&x, &y, TreeParams { max_depth: 2, min_samples_leaf: 1 });
    match &node {
        TreeNode::Split { feature, threshold, gain, .. } => {
            assert_eq!((*feature, *threshold), (0, 3.0));
            assert!((gain - 4.0).abs() < 1e-12);
        }
        _ => panic!("expected a split"),
    }
    assert_eq!(common::training_sse(&node, &x, &y), 0.0);
}

#[test]
fn gbm_training_error_never_increases_with_stages() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[2]).collect();
    let mut last = f64::INFINITY;
    for stages in [1, 5, 20, 80] {
        let m = fit_gbm(&x, &y, &GbmParams { n_stages: stages, ..GbmParams::default() }).unwrap();
        let p: Vec<f64> = x.iter().map(|r| m.predict(r).unwrap()).collect();
        let e = common::mse(&p, &y);
        assert!(e <= last + 1e-12);
        last = e;
    }
    assert!(last < 0.05);
}

#[test]
fn gp_recovers_a_linear_target_quickly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Vec<f64>> = (0..100).map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
    let params = GpParams { population_size: 300, iterations: 10, ..GpParams::default() };
    let r = evolve(&x, &y, &params, 1, &[]).unwrap();
    assert!(*r.best_loss_history.last().unwrap() < 1e-6);
    assert!(r.best_loss_history.windows(2).all(|w| w[1] <= w[0]));
}
