//! Randomized invariants across the crate.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use boxworld::boxes::{BiasVector, NamedBox, NonlocalBox, Violation};
use boxworld::collapse::{
    canonical_params, iterate, recursion_params, steps_to_target, DEFAULT_MAX_STEPS,
};
use boxworld::protocol::{p1_enumerate, p1_formula};
use boxworld::sampling::{random_collapsing_bias, random_ns_box};

fn seeded_box(seed: u64) -> NonlocalBox {
    random_ns_box(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #[test]
    fn uniformization_preserves_bias(seed: u64) {
        let nlb = seeded_box(seed);
        let before = nlb.bias_vector().as_array();
        let after = nlb.locally_uniformize().bias_vector().as_array();
        for (u, v) in before.iter().zip(after.iter()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn uniformization_is_idempotent(seed: u64) {
        let once = seeded_box(seed).locally_uniformize();
        let twice = once.locally_uniformize();
        for (u, v) in once.probs().iter().zip(twice.probs().iter()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        prop_assert!(once.is_locally_uniform(1e-12));
    }

    #[test]
    fn mixing_commutes_with_bias(seed_a: u64, seed_b: u64, t in 0.0f64..=1.0) {
        let first = seeded_box(seed_a);
        let second = seeded_box(seed_b);
        let mixed = NonlocalBox::mix(&[first, second], &[t, 1.0 - t]).unwrap();
        let expected: Vec<f64> = first
            .bias_vector()
            .as_array()
            .iter()
            .zip(second.bias_vector().as_array())
            .map(|(u, v)| t * u + (1.0 - t) * v)
            .collect();
        for (got, want) in mixed.bias_vector().as_array().iter().zip(expected) {
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn random_mixtures_validate(seed: u64) {
        prop_assert!(seeded_box(seed).is_valid(1e-9));
    }

    #[test]
    fn signalling_perturbations_are_rejected(seed: u64, eps in 0.01f64..0.1) {
        // Blend toward the uniform box so every entry has room, then move
        // weight within one context only: normalization survives, but
        // Alice's marginal at x=0 now depends on y.
        let base = NonlocalBox::mix(
            &[seeded_box(seed), NonlocalBox::named(NamedBox::I)],
            &[0.5, 0.5],
        )
        .unwrap();
        let mut probs = *base.probs();
        probs[0] += eps; // P(0,0|0,0)
        probs[2] -= eps; // P(1,0|0,0)
        let report = NonlocalBox::from_probs(probs).validate(1e-9);
        prop_assert!(!report.is_valid());
        let flags_alice = report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::AliceMarginal { .. }));
        prop_assert!(flags_alice);
    }

    #[test]
    fn bias_map_is_odd(seed: u64, mu in -1.0f64..=1.0) {
        let params = recursion_params(&seeded_box(seed).bias_vector());
        prop_assert_eq!(params.apply(-mu), -params.apply(mu));
    }

    #[test]
    fn derivative_at_zero_matches_slope(seed: u64) {
        let params = recursion_params(&seeded_box(seed).bias_vector());
        let h = 1e-6;
        let slope = (params.apply(h) - params.apply(-h)) / (2.0 * h);
        prop_assert!((slope - params.a_plus_b() / 16.0).abs() < 1e-8);
        // The origin is repulsive exactly for collapsing parameters.
        prop_assert_eq!(params.a_plus_b() / 16.0 > 1.0, params.collapses);
    }

    #[test]
    fn monotone_convergence_from_below(seed: u64, frac in 0.05f64..0.95) {
        let eta = random_collapsing_bias(&mut ChaCha8Rng::seed_from_u64(seed), 0.1);
        let params = recursion_params(&eta);
        let mu_star = params.mu_star.unwrap();
        let trace = iterate(frac * mu_star, &params, 1e-9, DEFAULT_MAX_STEPS);
        prop_assert!(trace.converged);
        prop_assert_eq!(trace.clamps, 0);
        for pair in trace.mus.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-12);
            prop_assert!(pair[1] <= mu_star + 1e-12);
        }
    }

    #[test]
    fn mu_star_below_mu_max(seed: u64) {
        let eta = random_collapsing_bias(&mut ChaCha8Rng::seed_from_u64(seed), 0.0);
        let params = recursion_params(&eta);
        prop_assert!(params.mu_star.unwrap() <= params.mu_max.unwrap() + 1e-12);
    }

    #[test]
    fn canonical_criterion_dominates_raw(seed: u64) {
        let eta = seeded_box(seed).bias_vector();
        let raw = recursion_params(&eta);
        let canonical = canonical_params(&eta);
        prop_assert!(canonical.params.a_plus_b() >= raw.a_plus_b() - 1e-12);
        prop_assert!(canonical.representative.in_range());
    }

    #[test]
    fn oracle_equivalence_spot(seed: u64, p0 in 0.5f64..1.0) {
        let nlb = seeded_box(seed);
        let enumerated = p1_enumerate(p0, &nlb).unwrap();
        let formula = p1_formula(p0, &nlb.bias_vector());
        prop_assert!((enumerated.probability - formula.probability).abs() < 1e-12);
        let params = recursion_params(&nlb.bias_vector());
        prop_assert!((formula.bias - params.apply(2.0 * p0 - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn fixed_point_identity_over_a_thousand_biases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let eta = random_collapsing_bias(&mut rng, 0.0);
        let params = recursion_params(&eta);
        let mu_star = params.mu_star.unwrap();
        worst = worst.max((params.apply(mu_star) - mu_star).abs());
    }
    assert!(worst < 1e-12, "worst fixed-point residual {worst:e}");
}

#[test]
fn validate_accepts_all_named_boxes_and_their_mixes() {
    let named: Vec<NonlocalBox> = NamedBox::ALL.iter().map(|&n| NonlocalBox::named(n)).collect();
    for nlb in &named {
        assert!(nlb.is_valid(1e-12));
    }
    let weights = [0.25, 0.05, 0.1, 0.2, 0.15, 0.25];
    let mixed = NonlocalBox::mix(&named, &weights).unwrap();
    assert!(mixed.is_valid(1e-9));
}

#[test]
fn steps_to_target_is_monotone_in_target() {
    let eta = BiasVector::new(0.9, 0.9, 0.9, 0.9);
    let params = recursion_params(&eta);
    let mu_star = params.mu_star.unwrap();
    let mut last = 0;
    for i in 1..10 {
        let target = mu_star * f64::from(i) / 10.0;
        let k = steps_to_target(mu_star / 100.0, target, &params).unwrap();
        assert!(k >= last);
        last = k;
    }
}
