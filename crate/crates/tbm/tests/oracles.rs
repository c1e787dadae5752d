//! Spot checks of the closed-form marginals against the independent oracles
//! in `common`; the full randomized suites run in the acceptance target.

mod common;

use topic_blockmodel::model::{block_topic_log_marginal, single_pair_dirmult_form};

#[test]
fn quadrature_matches_closed_form_on_hand_cases() {
    let cases: [(&[u64], f64, f64); 6] = [
        (&[3], 1.0, 1.0),
        (&[0], 0.5, 2.0),
        (&[0, 2, 5], 1.3, 0.7),
        (&[1, 1, 1, 1], 2.0, 0.1),
        (&[10, 0], 0.2, 3.0),
        (&[7], 5.0, 5.0),
    ];
    for (counts, alpha, beta) in cases {
        let exact = block_topic_log_marginal(counts, alpha, beta).unwrap();
        let quad = common::quadrature_log_marginal(counts, alpha, beta);
        assert!(
            (exact - quad).abs() <= 1e-6,
            "counts {counts:?} alpha {alpha} beta {beta}: exact {exact} quad {quad}"
        );
    }
}

#[test]
fn per_topic_product_equals_total_count_times_split_worked_case() {
    // alpha=1, beta=1, T=2, counts (1,0): both factorizations give 1/8
    let counts = [1u64, 0];
    let product: f64 = counts
        .iter()
        .map(|&n| block_topic_log_marginal(&[n], 1.0, 1.0).unwrap())
        .sum();
    let split = single_pair_dirmult_form(&counts, 1.0, 1.0).unwrap();
    assert!((product - (1.0f64 / 8.0).ln()).abs() < 1e-12);
    assert!((split - (1.0f64 / 8.0).ln()).abs() < 1e-12);
}

#[test]
fn conditionals_match_exhaustive_joint_ratios_on_small_suite() {
    for seed in 0..5 {
        let inst = common::random_instance(1000 + seed);
        let err = common::conditional_vs_joint_max_rel_err(&inst);
        assert!(err <= 1e-9, "instance {seed}: max rel err {err}");
    }
}
