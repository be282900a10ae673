//! Seeded random boxes for cross-checks and property tests.
//!
//! Random non-signalling boxes are drawn as convex combinations of the 16
//! local deterministic boxes and the 8 perfect game-winning boxes; any such
//! mixture is non-signalling by convexity.

use rand::Rng;

use crate::boxes::{BiasVector, NonlocalBox};
use crate::collapse::recursion_params;

/// The 16 local deterministic boxes followed by the 8 game-winning boxes.
pub fn extreme_boxes() -> Vec<NonlocalBox> {
    let mut out = Vec::with_capacity(24);
    for a0 in 0..2 {
        for a1 in 0..2 {
            for b0 in 0..2 {
                for b1 in 0..2 {
                    out.push(NonlocalBox::deterministic(a0, a1, b0, b1));
                }
            }
        }
    }
    for p in 0..2 {
        for q in 0..2 {
            for c in 0..2 {
                out.push(NonlocalBox::pr_family(p, q, c));
            }
        }
    }
    out
}

/// A random non-signalling box: exponential weights over [`extreme_boxes`],
/// normalized (a flat Dirichlet draw over the mixture simplex).
pub fn random_ns_box<R: Rng + ?Sized>(rng: &mut R) -> NonlocalBox {
    let generators = extreme_boxes();
    let mut weights: Vec<f64> = (0..generators.len())
        .map(|_| -f64::ln(1.0 - rng.random::<f64>()))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    NonlocalBox::mix(&generators, &weights).expect("normalized weights mix cleanly")
}

/// A random box whose raw coefficients satisfy `A + B > 16 + min_excess`.
///
/// Drawn by pulling a random non-signalling box toward `PR` until the
/// criterion holds with the requested margin; the margin keeps iteration
/// tests away from the threshold, where convergence is legitimately slow.
pub fn random_collapsing_box<R: Rng + ?Sized>(rng: &mut R, min_excess: f64) -> NonlocalBox {
    assert!(min_excess >= 0.0 && min_excess < 8.0);
    let pr = NonlocalBox::named(crate::boxes::NamedBox::Pr);
    for _ in 0..10_000 {
        let noise = random_ns_box(rng);
        let t = rng.random_range(0.82..1.0);
        let candidate = NonlocalBox::mix(&[pr, noise], &[t, 1.0 - t]).expect("valid mix");
        let params = recursion_params(&candidate.bias_vector());
        if params.a_plus_b() > 16.0 + min_excess {
            return candidate;
        }
    }
    unreachable!("mixtures arbitrarily close to PR must exceed the criterion")
}

/// A random bias vector with `A + B > 16 + min_excess`, by rejection from
/// the uniform cube.
pub fn random_collapsing_bias<R: Rng + ?Sized>(rng: &mut R, min_excess: f64) -> BiasVector {
    assert!(min_excess >= 0.0 && min_excess < 8.0);
    loop {
        let eta = BiasVector::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if recursion_params(&eta).a_plus_b() > 16.0 + min_excess {
            return eta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_generators_are_valid() {
        for nlb in extreme_boxes() {
            assert!(nlb.is_valid(1e-12));
        }
    }

    #[test]
    fn random_boxes_are_valid_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let first = random_ns_box(&mut rng);
        assert!(first.is_valid(1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let again = random_ns_box(&mut rng);
        assert_eq!(first, again);
    }

    #[test]
    fn collapsing_samples_exceed_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let nlb = random_collapsing_box(&mut rng, 0.1);
            assert!(nlb.is_valid(1e-9));
            let params = recursion_params(&nlb.bias_vector());
            assert!(params.a_plus_b() > 16.1);
            let eta = random_collapsing_bias(&mut rng, 0.0);
            assert!(recursion_params(&eta).a_plus_b() > 16.0);
        }
    }
}
