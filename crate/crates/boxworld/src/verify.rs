//! Built-in self-checks: every closed form against its independent
//! enumeration, plus the slice scans against the general criterion.
//!
//! These back the CLI `verify` subcommand; each check family returns a
//! [`CheckOutcome`] rather than panicking so the CLI can print one line per
//! family and exit nonzero on any failure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collapse::{iterate, recursion_params, RecursionParams, DEFAULT_MAX_STEPS};
use crate::protocol::{
    conditional_distribution_check, maj_identity_check, p0_alice_marginal, p0_enumerate,
    p1_enumerate, p1_formula, BooleanFunction,
};
use crate::sampling::{random_collapsing_box, random_ns_box};
use crate::slices::{scan, SliceSpec};

/// Result of one check family.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(name: &'static str, detail: String) -> Self {
        CheckOutcome {
            name,
            passed: true,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        CheckOutcome {
            name,
            passed: false,
            detail,
        }
    }
}

/// Run every check family with randomness derived from `seed`.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        majority_identity(),
        error_pattern_conditionals(),
        oracle_equivalence(seed),
        base_protocol_reproduction(),
        slice_consistency(),
        fixed_point_convergence(seed),
    ]
}

pub fn majority_identity() -> CheckOutcome {
    const NAME: &str = "majority-identity";
    if maj_identity_check() {
        CheckOutcome::pass(NAME, "64/64 assignments".into())
    } else {
        CheckOutcome::fail(NAME, "cross-term decomposition failed".into())
    }
}

pub fn error_pattern_conditionals() -> CheckOutcome {
    const NAME: &str = "error-pattern-conditionals";
    let p0s = [0.51, 0.6, 0.75, 0.9, 0.99];
    for &p0 in &p0s {
        if !conditional_distribution_check(p0) {
            return CheckOutcome::fail(NAME, format!("conditional mismatch at p0 = {p0}"));
        }
    }
    CheckOutcome::pass(NAME, format!("8 error patterns x {} base rates", p0s.len()))
}

pub fn oracle_equivalence(seed: u64) -> CheckOutcome {
    oracle_equivalence_with(seed, |mu, params| params.apply(mu))
}

/// Oracle equivalence with a swappable bias map, so tests can prove that a
/// corrupted map is actually caught.
pub fn oracle_equivalence_with(
    seed: u64,
    bias_map: impl Fn(f64, &RecursionParams) -> f64,
) -> CheckOutcome {
    const NAME: &str = "oracle-equivalence";
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for index in 0..25 {
        let nlb = random_ns_box(&mut rng);
        let eta = nlb.bias_vector();
        let params = recursion_params(&eta);
        for &p0 in &[0.51, 0.6, 0.75, 0.9] {
            let enumerated = match p1_enumerate(p0, &nlb) {
                Ok(report) => report,
                Err(err) => return CheckOutcome::fail(NAME, format!("box #{index}: {err}")),
            };
            let formula = p1_formula(p0, &eta);
            let mapped = bias_map(2.0 * p0 - 1.0, &params);
            worst = worst
                .max((enumerated.probability - formula.probability).abs())
                .max((formula.bias - mapped).abs());
            if worst > TOL {
                return CheckOutcome::fail(
                    NAME,
                    format!("box #{index} at p0 = {p0}: residual {worst:e}"),
                );
            }
        }
    }
    CheckOutcome::pass(NAME, format!("25 boxes x 4 base rates, worst {worst:.3e}"))
}

pub fn base_protocol_reproduction() -> CheckOutcome {
    const NAME: &str = "base-protocol";
    let f = match BooleanFunction::xor_all(2, 2) {
        Ok(f) => f,
        Err(err) => return CheckOutcome::fail(NAME, err.to_string()),
    };
    for x in 0..4 {
        match p0_enumerate(&f, x) {
            Ok(report) if report.probability == 0.625 => {}
            Ok(report) => {
                return CheckOutcome::fail(
                    NAME,
                    format!("X = {x}: got {}, want 0.625", report.probability),
                )
            }
            Err(err) => return CheckOutcome::fail(NAME, err.to_string()),
        }
        let marginal = p0_alice_marginal(&f, x);
        if marginal != 0.5 {
            return CheckOutcome::fail(NAME, format!("X = {x}: marginal {marginal} != 1/2"));
        }
    }
    CheckOutcome::pass(NAME, "enumeration equals 0.625, marginals exactly 1/2".into())
}

pub fn slice_consistency() -> CheckOutcome {
    const NAME: &str = "slice-consistency";
    for (label, spec) in [("case1", SliceSpec::case1(101)), ("case2", SliceSpec::case2(101))] {
        let points = match scan(&spec) {
            Ok(points) => points,
            Err(err) => return CheckOutcome::fail(NAME, format!("{label}: {err}")),
        };
        for p in &points {
            if p.collapses_analytic != Some(p.collapses_general) {
                return CheckOutcome::fail(
                    NAME,
                    format!("{label}: disagreement at ({}, {})", p.w1, p.w2),
                );
            }
        }
    }
    CheckOutcome::pass(NAME, "two 101x101 scans, zero disagreements".into())
}

pub fn fixed_point_convergence(seed: u64) -> CheckOutcome {
    const NAME: &str = "fixed-point-convergence";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
    for index in 0..20 {
        let nlb = random_collapsing_box(&mut rng, 0.1);
        let params = recursion_params(&nlb.bias_vector());
        let mu_star = params.mu_star.expect("sampled collapsing");
        if (params.apply(mu_star) - mu_star).abs() > 1e-12 {
            return CheckOutcome::fail(NAME, format!("box #{index}: fixed point drifts"));
        }
        let trace = iterate(mu_star / 4.0, &params, 1e-9, DEFAULT_MAX_STEPS);
        if !trace.converged || trace.clamps != 0 {
            return CheckOutcome::fail(
                NAME,
                format!(
                    "box #{index}: converged = {}, clamps = {}",
                    trace.converged, trace.clamps
                ),
            );
        }
    }
    CheckOutcome::pass(NAME, "20 collapsing boxes reach their fixed point".into())
}
