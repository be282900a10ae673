//! The recursive distributed-computation protocols.
//!
//! Level 0 computes `f(X, Y)` distributively (Alice holds `a`, Bob holds
//! `b`, `a ^ b = f(X,Y)`) with probability `1/2 + 2^-(m+1)` from `m+1`
//! shared random bits. Each level above runs the previous level three times,
//! decodes by majority vote, and repairs the majority's cross terms
//! `r1 s1 ^ r2 s2` with two box calls. This module executes the protocols
//! exactly by enumeration where feasible and by seeded sampling otherwise;
//! the enumerations double as independent oracles for every closed-form
//! success probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{BiasVector, NonlocalBox, ValidationReport};
use crate::collapse::ResourceUsage;
use crate::DEFAULT_TOL;

/// Truth tables larger than `2^20` entries are refused.
pub const ENUMERATION_BIT_LIMIT: u32 = 20;

/// Deepest level for which exact protocol evaluation is offered.
pub const MAX_EXACT_LEVEL: u32 = 2;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("truth table must have 2^(n+m) = {expected} entries, got {got}")]
    TableLength { expected: usize, got: usize },
    #[error("n+m = {0} exceeds the enumeration bound of {ENUMERATION_BIT_LIMIT} bits")]
    TooManyBits(u32),
    #[error("truth table may contain only '0' and '1', found {0:?}")]
    BadTableChar(char),
    #[error("question length m must be at least 1")]
    ZeroLengthQuestion,
    #[error("exact mode supports levels up to {MAX_EXACT_LEVEL}, got {0}")]
    ExactLevelTooDeep(u32),
    #[error("monte-carlo mode needs at least one sample")]
    ZeroSamples,
    #[error("invalid box: {0}")]
    InvalidBox(ValidationReport),
    #[error("malformed function JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A Boolean function `f : {0,1}^n x {0,1}^m -> {0,1}` as a flat truth
/// table indexed by `X * 2^m + Y` (Alice's bits high).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanFunction {
    n: u32,
    m: u32,
    table: Vec<bool>,
}

impl BooleanFunction {
    pub fn new(n: u32, m: u32, table: Vec<bool>) -> Result<Self, ProtocolError> {
        if n + m > ENUMERATION_BIT_LIMIT {
            return Err(ProtocolError::TooManyBits(n + m));
        }
        if m == 0 {
            return Err(ProtocolError::ZeroLengthQuestion);
        }
        let expected = 1usize << (n + m);
        if table.len() != expected {
            return Err(ProtocolError::TableLength {
                expected,
                got: table.len(),
            });
        }
        Ok(BooleanFunction { n, m, table })
    }

    /// Parity of all `n + m` input bits.
    pub fn xor_all(n: u32, m: u32) -> Result<Self, ProtocolError> {
        let table = (0..1usize << (n + m))
            .map(|i| i.count_ones() % 2 == 1)
            .collect();
        Self::new(n, m, table)
    }

    pub fn constant(n: u32, m: u32, value: bool) -> Result<Self, ProtocolError> {
        Self::new(n, m, vec![value; 1 << (n + m)])
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    #[inline]
    pub fn eval(&self, x: u32, y: u32) -> bool {
        self.table[((x as usize) << self.m) | y as usize]
    }

    /// Parse from the JSON function file format:
    /// `{"n": .., "m": .., "truth_table": "0110..."}` with the table indexed
    /// by `X * 2^m + Y`.
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let file: FunctionFile = serde_json::from_str(text)?;
        let mut table = Vec::with_capacity(file.truth_table.len());
        for ch in file.truth_table.chars() {
            match ch {
                '0' => table.push(false),
                '1' => table.push(true),
                other => return Err(ProtocolError::BadTableChar(other)),
            }
        }
        Self::new(file.n, file.m, table)
    }

    pub fn to_json(&self) -> String {
        let file = FunctionFile {
            n: self.n,
            m: self.m,
            truth_table: self.table.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        };
        serde_json::to_string(&file).expect("function file serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionFile {
    n: u32,
    m: u32,
    truth_table: String,
}

/// How a protocol run is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// A protocol instance: recursion level, question length, base box, and
/// evaluation mode.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub level: u32,
    pub input_length: u32,
    pub base: NonlocalBox,
    pub mode: SimMode,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.input_length == 0 {
            return Err(ProtocolError::ZeroLengthQuestion);
        }
        match self.mode {
            SimMode::Exact if self.level > MAX_EXACT_LEVEL => {
                Err(ProtocolError::ExactLevelTooDeep(self.level))
            }
            SimMode::MonteCarlo { samples: 0, .. } => Err(ProtocolError::ZeroSamples),
            _ => {
                let report = self.base.validate(DEFAULT_TOL);
                if report.is_valid() {
                    Ok(())
                } else {
                    Err(ProtocolError::InvalidBox(report))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Exact,
    Estimated,
}

/// Success probability of a protocol run, with its bias `2p - 1` and, for
/// sampled runs, the standard error and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub probability: f64,
    pub bias: f64,
    pub mode: ReportKind,
    pub stderr: Option<f64>,
    pub seed: Option<u64>,
    pub resources: Option<ResourceUsage>,
}

impl SuccessReport {
    fn exact(probability: f64) -> Self {
        SuccessReport {
            probability,
            bias: 2.0 * probability - 1.0,
            mode: ReportKind::Exact,
            stderr: None,
            seed: None,
            resources: None,
        }
    }
}

/// Majority vote of three bits.
#[inline]
pub fn maj(a: u8, b: u8, c: u8) -> u8 {
    (a & b) | (a & c) | (b & c)
}

/// Worst-case success probability of the base protocol: `1/2 + 2^-(m+1)`.
pub fn p0_exact(m: u32) -> SuccessReport {
    assert!(m >= 1, "question length m must be at least 1");
    SuccessReport::exact(0.5 + (0.5f64).powi(m as i32 + 1))
}

/// Exact output marginal `P(a = 0 | X)` of the base protocol, by counting
/// over the shared randomness. The masking bit makes this 1/2 exactly.
pub fn p0_alice_marginal(f: &BooleanFunction, x: u32) -> f64 {
    let m = f.m();
    let mut zeros = 0u64;
    for z in 0..1u32 << m {
        for r in 0..2u8 {
            let a = u8::from(f.eval(x, z)) ^ r;
            if a == 0 {
                zeros += 1;
            }
        }
    }
    zeros as f64 / f64::from(1u32 << (m + 1))
}

/// Run the base protocol literally over all shared randomness `Z`, `r`, all
/// of Bob's local bits, and all questions `Y`; return the minimum over `Y`
/// of the exact success probability.
///
/// Alice answers `a = f(X,Z) ^ r`; Bob answers `r` when his question equals
/// `Z` and a fresh local bit otherwise, so the success probability is
/// `1/2 + 2^-(m+1)` for every `f`, `X` and `Y`.
pub fn p0_enumerate(f: &BooleanFunction, x: u32) -> Result<SuccessReport, ProtocolError> {
    if f.n() + f.m() > ENUMERATION_BIT_LIMIT {
        return Err(ProtocolError::TooManyBits(f.n() + f.m()));
    }
    let m = f.m();
    let z_count = 1u32 << m;
    let weight = 1.0 / f64::from(z_count) / 4.0;
    let marginal = p0_alice_marginal(f, x);
    assert_eq!(marginal, 0.5, "base-protocol output must be locally uniform");

    let mut worst: Option<f64> = None;
    for y in 0..z_count {
        let target = u8::from(f.eval(x, y));
        let mut success = 0.0;
        for z in 0..z_count {
            for r in 0..2u8 {
                let a = u8::from(f.eval(x, z)) ^ r;
                for r_bob in 0..2u8 {
                    let b = if z == y { r } else { r_bob };
                    if a ^ b == target {
                        success += weight;
                    }
                }
            }
        }
        worst = Some(match worst {
            Some(w) => w.min(success),
            None => success,
        });
    }
    Ok(SuccessReport::exact(worst.expect("m >= 1 guarantees questions")))
}

/// Closed-form success probability of one amplification level: the 32-term
/// sum over the three error bits and the two box-input labels,
/// `sum p0^(3-a-b-c) (1-p0)^(a+b+c)
///      (1 + (-1)^maj(a,b,c) eta_{d, b^c^e} eta_{e, a^b^d}) / 8`.
pub fn p1_formula(p0: f64, eta: &BiasVector) -> SuccessReport {
    let mut total = 0.0;
    for e1 in 0..2u8 {
        for e2 in 0..2u8 {
            for e3 in 0..2u8 {
                let errors = u32::from(e1 + e2 + e3);
                let weight = p0.powi(3 - errors as i32) * (1.0 - p0).powi(errors as i32);
                let sign = if maj(e1, e2, e3) == 1 { -1.0 } else { 1.0 };
                for d in 0..2u8 {
                    for e in 0..2u8 {
                        let product = eta.get(d, e2 ^ e3 ^ e) * eta.get(e, e1 ^ e2 ^ d);
                        total += weight * (1.0 + sign * product) / 8.0;
                    }
                }
            }
        }
    }
    SuccessReport::exact(total)
}

/// Independent oracle for one amplification level, never touching the
/// closed form: enumerate the three distributed bits, their error bits, and
/// both outcomes of each of the two (uniformized) box calls, and add up the
/// probability that the corrected pair still XORs to `f`.
///
/// Both values of `f(X,Y)` are enumerated; the masking bits make the two
/// slices agree exactly, which is asserted rather than assumed.
pub fn p1_enumerate(p0: f64, nlb: &NonlocalBox) -> Result<SuccessReport, ProtocolError> {
    let report = nlb.validate(DEFAULT_TOL);
    if !report.is_valid() {
        return Err(ProtocolError::InvalidBox(report));
    }
    let uniform = nlb.locally_uniformize();
    let p_zero = p1_enumerate_slice(p0, &uniform, 0);
    let p_one = p1_enumerate_slice(p0, &uniform, 1);
    assert!(
        (p_zero - p_one).abs() < 1e-14,
        "success must not depend on the computed value: {p_zero} vs {p_one}"
    );
    Ok(SuccessReport::exact(p_zero))
}

/// One level of amplification with the target value of `f` pinned.
fn p1_enumerate_slice(p0: f64, uniform: &NonlocalBox, f_value: u8) -> f64 {
    let mut total = 0.0;
    for a_bits in 0..8u8 {
        let (a1, a2, a3) = (a_bits & 1, (a_bits >> 1) & 1, (a_bits >> 2) & 1);
        let alice_weight = 1.0 / 8.0;
        for e_bits in 0..8u8 {
            let (e1, e2, e3) = (e_bits & 1, (e_bits >> 1) & 1, (e_bits >> 2) & 1);
            let errors = u32::from(e1 + e2 + e3);
            let error_weight = p0.powi(3 - errors as i32) * (1.0 - p0).powi(errors as i32);
            let (b1, b2, b3) = (a1 ^ e1 ^ f_value, a2 ^ e2 ^ f_value, a3 ^ e3 ^ f_value);
            let (r1, s1) = (a1 ^ a2, b2 ^ b3);
            let (r2, s2) = (a2 ^ a3, b1 ^ b2);
            let maj_a = maj(a1, a2, a3);
            let maj_b = maj(b1, b2, b3);
            for a_out1 in 0..2u8 {
                for b_out1 in 0..2u8 {
                    let w1 = uniform.prob(r1, s1, a_out1, b_out1);
                    if w1 == 0.0 {
                        continue;
                    }
                    for a_out2 in 0..2u8 {
                        for b_out2 in 0..2u8 {
                            let w2 = uniform.prob(r2, s2, a_out2, b_out2);
                            if w2 == 0.0 {
                                continue;
                            }
                            let a_tilde = maj_a ^ a_out1 ^ a_out2;
                            let b_tilde = maj_b ^ b_out1 ^ b_out2;
                            if a_tilde ^ b_tilde == f_value {
                                total += alice_weight * error_weight * w1 * w2;
                            }
                        }
                    }
                }
            }
        }
    }
    total
}

/// Exhaustively verify, over all 64 assignments, that
/// `maj(a1^b1, a2^b2, a3^b3) =
///  maj(a1,a2,a3) ^ maj(b1,b2,b3) ^ (a1^a2)(b2^b3) ^ (a2^a3)(b1^b2)`.
///
/// The protocol's box inputs are exactly the factors of the two cross
/// terms, so a false return would be a build-breaking defect.
pub fn maj_identity_check() -> bool {
    for bits in 0..64u8 {
        let a = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
        let b = [(bits >> 3) & 1, (bits >> 4) & 1, (bits >> 5) & 1];
        let lhs = maj(a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2]);
        let rhs = maj(a[0], a[1], a[2])
            ^ maj(b[0], b[1], b[2])
            ^ ((a[0] ^ a[1]) & (b[1] ^ b[2]))
            ^ ((a[1] ^ a[2]) & (b[0] ^ b[1]));
        if lhs != rhs {
            return false;
        }
    }
    true
}

/// Enumerate the level-1 randomness and confirm that, conditioned on each
/// error pattern `(e1,e2,e3)`, the box-input tuple `(r1,r2,s1,s2)` is
/// distributed as `1/4` on exactly the cells with `s1 = e2^e3^r2` and
/// `s2 = e1^e2^r1`, and zero elsewhere, within `1e-12`.
///
/// The conditional is computed honestly as joint over marginal, which is
/// why an interior `p0` is required.
pub fn conditional_distribution_check(p0: f64) -> bool {
    assert!(
        p0 > 0.5 && p0 < 1.0,
        "conditioning needs every error pattern to have positive probability"
    );
    for e_bits in 0..8u8 {
        let (e1, e2, e3) = (e_bits & 1, (e_bits >> 1) & 1, (e_bits >> 2) & 1);
        let errors = u32::from(e1 + e2 + e3);
        let mut joint = [0.0f64; 16];
        let mut event_prob = 0.0;
        for a_bits in 0..8u8 {
            let (a1, a2, a3) = (a_bits & 1, (a_bits >> 1) & 1, (a_bits >> 2) & 1);
            let weight =
                (1.0 / 8.0) * p0.powi(3 - errors as i32) * (1.0 - p0).powi(errors as i32);
            event_prob += weight;
            let (b1, b2, b3) = (a1 ^ e1, a2 ^ e2, a3 ^ e3);
            let (r1, s1) = (a1 ^ a2, b2 ^ b3);
            let (r2, s2) = (a2 ^ a3, b1 ^ b2);
            joint[usize::from(8 * r1 + 4 * r2 + 2 * s1 + s2)] += weight;
        }
        for cell in 0..16usize {
            let (r1, r2, s1, s2) = (
                (cell >> 3) as u8 & 1,
                (cell >> 2) as u8 & 1,
                (cell >> 1) as u8 & 1,
                cell as u8 & 1,
            );
            let conditional = joint[cell] / event_prob;
            let expected = if s1 == e2 ^ e3 ^ r2 && s2 == e1 ^ e2 ^ r1 {
                0.25
            } else {
                0.0
            };
            if (conditional - expected).abs() > 1e-12 {
                return false;
            }
        }
    }
    true
}

/// Execute the full protocol described by `config`.
///
/// Exact mode starts from the base probability and composes the level
/// enumeration once per level; the three sub-runs of a level are
/// independent, so the level-`k` error bits are i.i.d. Bernoulli and a
/// single running probability captures them. Monte-Carlo mode simulates the
/// protocol tree literally — shared bits, box draws, masking — and counts
/// every resource it consumes.
pub fn run_protocol(
    config: &ProtocolConfig,
    f: &BooleanFunction,
) -> Result<SuccessReport, ProtocolError> {
    config.validate()?;
    let m = config.input_length;
    match config.mode {
        SimMode::Exact => {
            let mut probability = p0_exact(m).probability;
            for _ in 0..config.level {
                probability = p1_enumerate(probability, &config.base)?.probability;
            }
            let mut report = SuccessReport::exact(probability);
            report.resources = Some(walk_resources(config.level, m));
            Ok(report)
        }
        SimMode::MonteCarlo { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let uniform = config.base.locally_uniformize();
            // Box outcomes are drawn by inverse transform; precompute the
            // cumulative table per input pair.
            let mut cumulative = [[0.0f64; 4]; 4];
            for x in 0..2u8 {
                for y in 0..2u8 {
                    let mut acc = 0.0;
                    for o in 0..4u8 {
                        acc += uniform.prob(x, y, o >> 1, o & 1);
                        cumulative[usize::from(2 * x + y)][usize::from(o)] = acc;
                    }
                }
            }
            let mut successes = 0u64;
            let mut used = ResourceUsage::default();
            for _ in 0..samples {
                let x = rng.random_range(0..1u32 << f.n());
                let y = rng.random_range(0..1u32 << f.m());
                let (a, b) = simulate_level(
                    config.level,
                    f,
                    x,
                    y,
                    &cumulative,
                    &mut rng,
                    &mut used,
                );
                if a ^ b == u8::from(f.eval(x, y)) {
                    successes += 1;
                }
            }
            // The protocol tree is the same shape every trial.
            debug_assert_eq!(used.shared_bits % samples, 0);
            debug_assert_eq!(used.box_copies % samples, 0);
            let probability = successes as f64 / samples as f64;
            let stderr = (probability * (1.0 - probability) / samples as f64).sqrt();
            Ok(SuccessReport {
                probability,
                bias: 2.0 * probability - 1.0,
                mode: ReportKind::Estimated,
                stderr: Some(stderr),
                seed: Some(seed),
                resources: Some(ResourceUsage {
                    shared_bits: used.shared_bits / samples,
                    box_copies: used.box_copies / samples,
                }),
            })
        }
    }
}

/// Accumulate resources by walking the protocol tree (deliberately not the
/// closed form, so the closed form can be cross-checked against it).
fn walk_resources(level: u32, m: u32) -> ResourceUsage {
    if level == 0 {
        return ResourceUsage {
            shared_bits: u64::from(m) + 1,
            box_copies: 0,
        };
    }
    let sub = walk_resources(level - 1, m);
    ResourceUsage {
        shared_bits: 3 * sub.shared_bits + 2,
        box_copies: 3 * sub.box_copies + 2,
    }
}

/// One protocol run at `level`, returning Alice's and Bob's bits.
fn simulate_level(
    level: u32,
    f: &BooleanFunction,
    x: u32,
    y: u32,
    cumulative: &[[f64; 4]; 4],
    rng: &mut ChaCha8Rng,
    used: &mut ResourceUsage,
) -> (u8, u8) {
    if level == 0 {
        let m = f.m();
        let z = rng.random_range(0..1u32 << m);
        let r = u8::from(rng.random::<bool>());
        used.shared_bits += u64::from(m) + 1;
        let a = u8::from(f.eval(x, z)) ^ r;
        let b = if z == y {
            r
        } else {
            // Bob's fallback bit is local randomness, not a shared resource.
            u8::from(rng.random::<bool>())
        };
        return (a, b);
    }
    let (a1, b1) = simulate_level(level - 1, f, x, y, cumulative, rng, used);
    let (a2, b2) = simulate_level(level - 1, f, x, y, cumulative, rng, used);
    let (a3, b3) = simulate_level(level - 1, f, x, y, cumulative, rng, used);
    let (a_out1, b_out1) = invoke_box(a1 ^ a2, b2 ^ b3, cumulative, rng, used);
    let (a_out2, b_out2) = invoke_box(a2 ^ a3, b1 ^ b2, cumulative, rng, used);
    (
        maj(a1, a2, a3) ^ a_out1 ^ a_out2,
        maj(b1, b2, b3) ^ b_out1 ^ b_out2,
    )
}

/// Sample one box use at inputs `(x, y)`, masking both outputs with a fresh
/// shared bit (the on-the-fly local uniformization).
fn invoke_box(
    x: u8,
    y: u8,
    cumulative: &[[f64; 4]; 4],
    rng: &mut ChaCha8Rng,
    used: &mut ResourceUsage,
) -> (u8, u8) {
    used.box_copies += 1;
    used.shared_bits += 1;
    let u: f64 = rng.random();
    let row = &cumulative[usize::from(2 * x + y)];
    let mut outcome = 3u8;
    for (i, &threshold) in row.iter().enumerate() {
        if u < threshold {
            outcome = i as u8;
            break;
        }
    }
    let mask = u8::from(rng.random::<bool>());
    ((outcome >> 1) ^ mask, (outcome & 1) ^ mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::NamedBox;
    use crate::collapse::{recursion_params, resource_count};
    use crate::sampling::random_ns_box;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn p0_exact_values() {
        assert_eq!(p0_exact(1).probability, 0.75);
        assert_eq!(p0_exact(3).probability, 0.5625);
        assert!(p0_exact(30).probability > 0.5);
        assert!(p0_exact(30).probability < 0.5 + 1e-9);
    }

    #[test]
    fn p0_enumeration_matches_closed_form() {
        let f = BooleanFunction::xor_all(2, 2).unwrap();
        for x in 0..4 {
            let report = p0_enumerate(&f, x).unwrap();
            assert_eq!(report.probability, 0.625);
        }
    }

    #[test]
    fn p0_enumeration_does_not_exploit_constant_functions() {
        let f = BooleanFunction::constant(2, 2, false).unwrap();
        for x in 0..4 {
            assert_eq!(p0_enumerate(&f, x).unwrap().probability, 0.625);
        }
        let f = BooleanFunction::new(1, 1, vec![false, true, false, true]).unwrap();
        // f(X, Y) = Y with m = 1.
        assert_eq!(p0_enumerate(&f, 0).unwrap().probability, 0.75);
    }

    #[test]
    fn p0_marginal_is_exactly_half() {
        for f in [
            BooleanFunction::xor_all(2, 2).unwrap(),
            BooleanFunction::constant(2, 2, true).unwrap(),
        ] {
            for x in 0..4 {
                assert_eq!(p0_alice_marginal(&f, x), 0.5);
            }
        }
    }

    #[test]
    fn p1_formula_on_pr_is_majority_boost() {
        let eta = NonlocalBox::named(NamedBox::Pr).bias_vector();
        let report = p1_formula(0.75, &eta);
        assert!((report.probability - 0.84375).abs() < 1e-15);
    }

    #[test]
    fn p1_formula_degenerate_cases() {
        let zero = BiasVector::new(0.0, 0.0, 0.0, 0.0);
        assert!((p1_formula(0.83, &zero).probability - 0.5).abs() < 1e-15);
        let eta = NonlocalBox::named(NamedBox::Pr).bias_vector();
        assert!((p1_formula(0.5, &eta).probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn p1_enumeration_matches_formula_on_named_boxes() {
        for name in NamedBox::ALL {
            let nlb = NonlocalBox::named(name);
            let eta = nlb.bias_vector();
            for &p0 in &[0.51, 0.6, 0.75, 0.9] {
                let enumerated = p1_enumerate(p0, &nlb).unwrap().probability;
                let formula = p1_formula(p0, &eta).probability;
                assert!(
                    (enumerated - formula).abs() < 1e-12,
                    "{name} at p0={p0}: {enumerated} vs {formula}"
                );
            }
        }
    }

    #[test]
    fn p1_enumeration_equals_bias_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let nlb = random_ns_box(&mut rng);
            let params = recursion_params(&nlb.bias_vector());
            for &p0 in &[0.51, 0.6, 0.75, 0.9] {
                let enumerated = p1_enumerate(p0, &nlb).unwrap();
                let mapped = params.apply(2.0 * p0 - 1.0);
                assert!((enumerated.bias - mapped).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p1_enumeration_invariant_under_output_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let nlb = random_ns_box(&mut rng);
            let flipped = NonlocalBox::from_rule(|x, y, a, b| nlb.prob(x, y, a ^ 1, b ^ 1));
            let original = p1_enumerate(0.7, &nlb).unwrap().probability;
            let mirrored = p1_enumerate(0.7, &flipped).unwrap().probability;
            assert_eq!(original, mirrored);
        }
    }

    #[test]
    fn p1_enumeration_rejects_invalid_boxes() {
        let bad = NonlocalBox::from_rule(|_, y, a, b| if a == y && b == 0 { 1.0 } else { 0.0 });
        assert!(matches!(
            p1_enumerate(0.75, &bad),
            Err(ProtocolError::InvalidBox(_))
        ));
    }

    #[test]
    fn majority_identity_holds() {
        assert!(maj_identity_check());
    }

    #[test]
    fn conditional_distribution_matches() {
        for &p0 in &[0.51, 0.6, 0.75, 0.9, 0.99] {
            assert!(conditional_distribution_check(p0));
        }
    }

    #[test]
    fn run_protocol_level_zero_is_base_case() {
        let config = ProtocolConfig {
            level: 0,
            input_length: 3,
            base: NonlocalBox::named(NamedBox::Pr),
            mode: SimMode::Exact,
        };
        let f = BooleanFunction::xor_all(3, 3).unwrap();
        let report = run_protocol(&config, &f).unwrap();
        assert_eq!(report.probability, 0.5625);
        assert_eq!(
            report.resources,
            Some(ResourceUsage {
                shared_bits: 4,
                box_copies: 0
            })
        );
    }

    #[test]
    fn run_protocol_level_one_composes() {
        let config = ProtocolConfig {
            level: 1,
            input_length: 1,
            base: NonlocalBox::named(NamedBox::Pr),
            mode: SimMode::Exact,
        };
        let f = BooleanFunction::xor_all(1, 1).unwrap();
        let report = run_protocol(&config, &f).unwrap();
        assert!((report.probability - 0.84375).abs() < 1e-12);
        assert!((report.bias - (2.0 * 0.84375 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn run_protocol_rejects_deep_exact_levels() {
        let config = ProtocolConfig {
            level: 3,
            input_length: 3,
            base: NonlocalBox::named(NamedBox::Pr),
            mode: SimMode::Exact,
        };
        let f = BooleanFunction::xor_all(3, 3).unwrap();
        assert!(matches!(
            run_protocol(&config, &f),
            Err(ProtocolError::ExactLevelTooDeep(3))
        ));
    }

    #[test]
    fn monte_carlo_resources_match_closed_form() {
        let f = BooleanFunction::xor_all(3, 3).unwrap();
        for level in 0..=2 {
            let config = ProtocolConfig {
                level,
                input_length: 3,
                base: NonlocalBox::named(NamedBox::Pr),
                mode: SimMode::MonteCarlo {
                    samples: 1000,
                    seed: 99,
                },
            };
            let report = run_protocol(&config, &f).unwrap();
            assert_eq!(report.resources, Some(resource_count(level, 3)));
        }
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let f = BooleanFunction::xor_all(2, 2).unwrap();
        let config = ProtocolConfig {
            level: 1,
            input_length: 2,
            base: NonlocalBox::named(NamedBox::Pr),
            mode: SimMode::MonteCarlo {
                samples: 5000,
                seed: 7,
            },
        };
        let one = run_protocol(&config, &f).unwrap();
        let two = run_protocol(&config, &f).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.seed, Some(7));
    }

    #[test]
    fn monte_carlo_tracks_exact_value() {
        let f = BooleanFunction::xor_all(2, 2).unwrap();
        for level in 0..=2u32 {
            let exact = run_protocol(
                &ProtocolConfig {
                    level,
                    input_length: 2,
                    base: NonlocalBox::named(NamedBox::Pr),
                    mode: SimMode::Exact,
                },
                &f,
            )
            .unwrap()
            .probability;
            let sampled = run_protocol(
                &ProtocolConfig {
                    level,
                    input_length: 2,
                    base: NonlocalBox::named(NamedBox::Pr),
                    mode: SimMode::MonteCarlo {
                        samples: 200_000,
                        seed: 1234 + u64::from(level),
                    },
                },
                &f,
            )
            .unwrap();
            let stderr = sampled.stderr.unwrap().max(1e-9);
            assert!(
                (sampled.probability - exact).abs() <= 5.0 * stderr,
                "level {level}: {} vs {exact} (stderr {stderr})",
                sampled.probability
            );
        }
    }

    /// Literal one-level enumeration over *all* protocol randomness (three
    /// shared strings, three masking bits, Bob's fallback bits, two box
    /// masks and both box outcomes), for a fixed question pair. Exists to
    /// justify treating the sub-run error bits as i.i.d. in exact mode.
    fn p1_literal_full(f: &BooleanFunction, x: u32, y: u32, nlb: &NonlocalBox) -> f64 {
        let m = f.m();
        let z_count = 1u32 << m;
        let z_weight = 1.0 / f64::from(z_count);
        let target = u8::from(f.eval(x, y));
        let mut total = 0.0;
        let mut stack = Vec::new();
        // Enumerate the three base runs' (a_i, b_i) with their weights.
        for z in 0..z_count {
            for r in 0..2u8 {
                for r_bob in 0..2u8 {
                    let a = u8::from(f.eval(x, z)) ^ r;
                    let b = if z == y { r } else { r_bob };
                    stack.push((a, b, z_weight * 0.25));
                }
            }
        }
        for &(a1, b1, w1) in &stack {
            for &(a2, b2, w2) in &stack {
                for &(a3, b3, w3) in &stack {
                    let base_weight = w1 * w2 * w3;
                    let (r1, s1) = (a1 ^ a2, b2 ^ b3);
                    let (r2, s2) = (a2 ^ a3, b1 ^ b2);
                    for out1 in 0..4u8 {
                        let p1 = nlb.prob(r1, s1, out1 >> 1, out1 & 1);
                        if p1 == 0.0 {
                            continue;
                        }
                        for mask1 in 0..2u8 {
                            for out2 in 0..4u8 {
                                let p2 = nlb.prob(r2, s2, out2 >> 1, out2 & 1);
                                if p2 == 0.0 {
                                    continue;
                                }
                                for mask2 in 0..2u8 {
                                    let a_tilde = maj(a1, a2, a3)
                                        ^ (out1 >> 1)
                                        ^ mask1
                                        ^ (out2 >> 1)
                                        ^ mask2;
                                    let b_tilde = maj(b1, b2, b3)
                                        ^ (out1 & 1)
                                        ^ mask1
                                        ^ (out2 & 1)
                                        ^ mask2;
                                    if a_tilde ^ b_tilde == target {
                                        total += base_weight * p1 * p2 * 0.25;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn literal_full_enumeration_matches_composed_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let boxes = [
            NonlocalBox::named(NamedBox::Pr),
            NonlocalBox::named(NamedBox::Sr),
            random_ns_box(&mut rng),
        ];
        for nlb in &boxes {
            for (n, m) in [(1, 1), (2, 2)] {
                let functions = [
                    BooleanFunction::xor_all(n, m).unwrap(),
                    BooleanFunction::constant(n, m, true).unwrap(),
                ];
                for f in &functions {
                    let composed = p1_enumerate(p0_exact(m).probability, nlb)
                        .unwrap()
                        .probability;
                    for x in 0..1u32 << n {
                        for y in 0..1u32 << m {
                            let literal = p1_literal_full(f, x, y, nlb);
                            assert!(
                                (literal - composed).abs() < 1e-12,
                                "n={n} m={m} x={x} y={y}: {literal} vs {composed}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn function_json_round_trip() {
        let f = BooleanFunction::xor_all(2, 1).unwrap();
        let back = BooleanFunction::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);

        assert!(matches!(
            BooleanFunction::from_json(r#"{"n":2,"m":1,"truth_table":"01"}"#),
            Err(ProtocolError::TableLength { expected: 8, got: 2 })
        ));
        assert!(matches!(
            BooleanFunction::from_json(r#"{"n":1,"m":1,"truth_table":"01x1"}"#),
            Err(ProtocolError::BadTableChar('x'))
        ));
    }

    #[test]
    fn success_report_bias_consistency() {
        let report = p0_exact(4);
        assert!((report.bias - (2.0 * report.probability - 1.0)).abs() < 1e-15);
    }
}
