//! Nonlocal boxes: representation, validation, construction, biases.
//!
//! A box is a conditional distribution `P(a,b|x,y)` over two input bits and
//! two output bits, stored as 16 probabilities in the canonical flat order
//! `8x + 4y + 2a + b`. Every file format in this crate uses that order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::DEFAULT_TOL;

/// Number of probability entries in a box table.
pub const ENTRY_COUNT: usize = 16;

/// Canonical flat index of `P(a,b|x,y)`.
#[inline]
pub const fn entry_index(x: u8, y: u8, a: u8, b: u8) -> usize {
    (8 * x + 4 * y + 2 * a + b) as usize
}

/// Errors from box construction and I/O.
#[derive(Debug, Error)]
pub enum BoxError {
    #[error("box file must contain exactly {ENTRY_COUNT} probabilities, got {0}")]
    WrongLength(usize),
    #[error("malformed box JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown box name {0:?} (expected PR, PRprime, I, SR, P0 or P1)")]
    UnknownName(String),
    #[error("mix requires at least one box")]
    EmptyMix,
    #[error("mix got {boxes} boxes but {weights} weights")]
    MixLengthMismatch { boxes: usize, weights: usize },
    #[error("mix weight #{index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("mix weights must sum to 1, got {sum}")]
    WeightSum { sum: f64 },
    #[error("invalid box: {0}")]
    Invalid(ValidationReport),
}

/// The six boxes used throughout: the two perfect game-winning boxes, the
/// fully random box, shared randomness, and the two constant-output boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedBox {
    /// Wins `a ^ b = x & y` with certainty.
    Pr,
    /// Wins `a ^ b = (x^1) & (y^1)` with certainty.
    PrPrime,
    /// All sixteen entries equal to 1/4.
    I,
    /// A shared random bit: `a = b` uniformly, inputs ignored.
    Sr,
    /// Always outputs `(0,0)`.
    P0,
    /// Always outputs `(1,1)`.
    P1,
}

impl NamedBox {
    pub const ALL: [NamedBox; 6] = [
        NamedBox::Pr,
        NamedBox::PrPrime,
        NamedBox::I,
        NamedBox::Sr,
        NamedBox::P0,
        NamedBox::P1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NamedBox::Pr => "PR",
            NamedBox::PrPrime => "PRprime",
            NamedBox::I => "I",
            NamedBox::Sr => "SR",
            NamedBox::P0 => "P0",
            NamedBox::P1 => "P1",
        }
    }
}

impl fmt::Display for NamedBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NamedBox {
    type Err = BoxError;

    fn from_str(s: &str) -> Result<Self, BoxError> {
        match s {
            "PR" | "pr" => Ok(NamedBox::Pr),
            "PRprime" | "prprime" | "PR'" => Ok(NamedBox::PrPrime),
            "I" | "i" => Ok(NamedBox::I),
            "SR" | "sr" => Ok(NamedBox::Sr),
            "P0" | "p0" => Ok(NamedBox::P0),
            "P1" | "p1" => Ok(NamedBox::P1),
            other => Err(BoxError::UnknownName(other.to_string())),
        }
    }
}

/// A bipartite no-signalling box candidate: 16 conditional probabilities.
///
/// Construction does not validate; call [`NonlocalBox::validate`] to check
/// normalization, non-negativity and the two non-signalling families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalBox {
    probs: [f64; ENTRY_COUNT],
}

impl NonlocalBox {
    pub fn from_probs(probs: [f64; ENTRY_COUNT]) -> Self {
        NonlocalBox { probs }
    }

    /// Build a box from a predicate table: `rule(x,y,a,b)` returns `P(a,b|x,y)`.
    pub fn from_rule(rule: impl Fn(u8, u8, u8, u8) -> f64) -> Self {
        let mut probs = [0.0; ENTRY_COUNT];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        probs[entry_index(x, y, a, b)] = rule(x, y, a, b);
                    }
                }
            }
        }
        NonlocalBox { probs }
    }

    pub fn named(name: NamedBox) -> Self {
        match name {
            NamedBox::Pr => Self::pr_family(0, 0, 0),
            NamedBox::PrPrime => Self::pr_family(1, 1, 1),
            NamedBox::I => Self::from_rule(|_, _, _, _| 0.25),
            NamedBox::Sr => Self::from_rule(|_, _, a, b| if a == b { 0.5 } else { 0.0 }),
            NamedBox::P0 => Self::deterministic(0, 0, 0, 0),
            NamedBox::P1 => Self::deterministic(1, 0, 1, 0),
        }
    }

    /// The extremal box winning `a ^ b = xy ^ px ^ qy ^ c` with certainty,
    /// with uniform outputs. `pr_family(0,0,0)` is `PR`; `pr_family(1,1,1)`
    /// is `PR'` (since `xy ^ x ^ y ^ 1 = (x^1)(y^1)`).
    pub fn pr_family(p: u8, q: u8, c: u8) -> Self {
        Self::from_rule(|x, y, a, b| {
            if a ^ b == (x & y) ^ (p & x) ^ (q & y) ^ c {
                0.5
            } else {
                0.0
            }
        })
    }

    /// The local deterministic box `a = a0 ^ (a1 & x)`, `b = b0 ^ (b1 & y)`.
    pub fn deterministic(a0: u8, a1: u8, b0: u8, b1: u8) -> Self {
        Self::from_rule(|x, y, a, b| {
            if a == a0 ^ (a1 & x) && b == b0 ^ (b1 & y) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[inline]
    pub fn prob(&self, x: u8, y: u8, a: u8, b: u8) -> f64 {
        self.probs[entry_index(x, y, a, b)]
    }

    pub fn probs(&self) -> &[f64; ENTRY_COUNT] {
        &self.probs
    }

    /// Alice's output marginal `P(a|x) = sum_b P(a,b|x,y)`, evaluated at a
    /// concrete `y` (independent of `y` exactly when the box is
    /// non-signalling).
    pub fn alice_marginal(&self, a: u8, x: u8, y: u8) -> f64 {
        self.prob(x, y, a, 0) + self.prob(x, y, a, 1)
    }

    /// Bob's output marginal `P(b|y)`, evaluated at a concrete `x`.
    pub fn bob_marginal(&self, b: u8, y: u8, x: u8) -> f64 {
        self.prob(x, y, 0, b) + self.prob(x, y, 1, b)
    }

    /// Check normalization, non-negativity and non-signalling within `tol`.
    ///
    /// Returns a structured report naming each violated constraint with its
    /// residual; the box is valid iff the report is empty. Non-finite
    /// entries short-circuit the numeric checks.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut violations = Vec::new();
        for (index, &p) in self.probs.iter().enumerate() {
            if !p.is_finite() {
                violations.push(Violation::NonFinite { index });
            }
        }
        if !violations.is_empty() {
            return ValidationReport { violations };
        }

        for (index, &p) in self.probs.iter().enumerate() {
            if p < -tol {
                violations.push(Violation::Negative { index, value: p });
            }
        }
        for x in 0..2 {
            for y in 0..2 {
                let sum: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| self.prob(x, y, a, b))
                    .sum();
                let residual = (sum - 1.0).abs();
                if residual > tol {
                    violations.push(Violation::Normalization { x, y, residual });
                }
            }
        }
        // Alice's marginal must not depend on y, Bob's must not depend on x.
        for x in 0..2 {
            for a in 0..2 {
                let residual = (self.alice_marginal(a, x, 0) - self.alice_marginal(a, x, 1)).abs();
                if residual > tol {
                    violations.push(Violation::AliceMarginal { a, x, residual });
                }
            }
        }
        for y in 0..2 {
            for b in 0..2 {
                let residual = (self.bob_marginal(b, y, 0) - self.bob_marginal(b, y, 1)).abs();
                if residual > tol {
                    violations.push(Violation::BobMarginal { b, y, residual });
                }
            }
        }
        ValidationReport { violations }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.validate(tol).is_valid()
    }

    /// Entrywise convex combination of boxes.
    ///
    /// Weights must be non-negative and sum to 1 within [`DEFAULT_TOL`].
    pub fn mix(boxes: &[NonlocalBox], weights: &[f64]) -> Result<NonlocalBox, BoxError> {
        if boxes.is_empty() {
            return Err(BoxError::EmptyMix);
        }
        if boxes.len() != weights.len() {
            return Err(BoxError::MixLengthMismatch {
                boxes: boxes.len(),
                weights: weights.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(BoxError::NegativeWeight { index, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > DEFAULT_TOL {
            return Err(BoxError::WeightSum { sum });
        }
        let mut probs = [0.0; ENTRY_COUNT];
        for (nlb, &w) in boxes.iter().zip(weights) {
            for (acc, &p) in probs.iter_mut().zip(nlb.probs.iter()) {
                *acc += w * p;
            }
        }
        Ok(NonlocalBox { probs })
    }

    /// The four biases `eta_xy = 2 P(a ^ b = xy | x,y) - 1`.
    pub fn bias_vector(&self) -> BiasVector {
        let eta = |x: u8, y: u8| {
            let game = x & y;
            2.0 * (self.prob(x, y, 0, game) + self.prob(x, y, 1, 1 ^ game)) - 1.0
        };
        BiasVector {
            eta00: eta(0, 0),
            eta01: eta(0, 1),
            eta10: eta(1, 0),
            eta11: eta(1, 1),
        }
    }

    /// Mask both outputs with a shared uniform bit:
    /// `P~(a,b|x,y) = (P(a,b|x,y) + P(a^1,b^1|x,y)) / 2`.
    ///
    /// The result has uniform output marginals on both sides and the same
    /// bias vector as the input (`a ^ b` is untouched by flipping both
    /// outputs).
    pub fn locally_uniformize(&self) -> NonlocalBox {
        Self::from_rule(|x, y, a, b| 0.5 * (self.prob(x, y, a, b) + self.prob(x, y, a ^ 1, b ^ 1)))
    }

    /// True iff every output marginal equals 1/2 within `tol`.
    pub fn is_locally_uniform(&self, tol: f64) -> bool {
        for x in 0..2 {
            for y in 0..2 {
                for o in 0..2 {
                    if (self.alice_marginal(o, x, y) - 0.5).abs() > tol
                        || (self.bob_marginal(o, y, x) - 0.5).abs() > tol
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Parse from the JSON box file format:
    /// `{"probs": [16 reals in canonical order], "name": optional}`.
    pub fn from_json(text: &str) -> Result<NonlocalBox, BoxError> {
        let file: BoxFile = serde_json::from_str(text)?;
        file.into_box()
    }

    /// Serialize to the JSON box file format.
    pub fn to_json(&self, name: Option<&str>) -> String {
        let file = BoxFile {
            probs: self.probs.to_vec(),
            name: name.map(str::to_string),
        };
        serde_json::to_string_pretty(&file).expect("box file serialization cannot fail")
    }
}

/// On-disk JSON form of a box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxFile {
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl BoxFile {
    pub fn into_box(self) -> Result<NonlocalBox, BoxError> {
        let len = self.probs.len();
        let probs: [f64; ENTRY_COUNT] =
            self.probs.try_into().map_err(|_| BoxError::WrongLength(len))?;
        Ok(NonlocalBox::from_probs(probs))
    }
}

/// The four game biases of a box, each in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVector {
    pub eta00: f64,
    pub eta01: f64,
    pub eta10: f64,
    pub eta11: f64,
}

impl BiasVector {
    pub fn new(eta00: f64, eta01: f64, eta10: f64, eta11: f64) -> Self {
        BiasVector {
            eta00,
            eta01,
            eta10,
            eta11,
        }
    }

    pub fn from_array(eta: [f64; 4]) -> Self {
        BiasVector::new(eta[0], eta[1], eta[2], eta[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.eta00, self.eta01, self.eta10, self.eta11]
    }

    /// `eta_xy` by input pair.
    #[inline]
    pub fn get(&self, x: u8, y: u8) -> f64 {
        match (x, y) {
            (0, 0) => self.eta00,
            (0, 1) => self.eta01,
            (1, 0) => self.eta10,
            _ => self.eta11,
        }
    }

    /// All four components in `[-1, 1]`.
    pub fn in_range(&self) -> bool {
        self.as_array().iter().all(|e| e.abs() <= 1.0)
    }

    /// Bias of winning the `a ^ b = xy` game with uniform inputs.
    pub fn chsh_bias(&self) -> f64 {
        (self.eta00 + self.eta01 + self.eta10 + self.eta11) / 4.0
    }

    /// Bias of winning the flipped game `a ^ b = (x^1)(y^1)` with uniform
    /// inputs. The rule differs from `xy` exactly at inputs `(0,0)` and
    /// `(1,1)`, so those biases enter with a minus sign.
    pub fn chsh_prime_bias(&self) -> f64 {
        (-self.eta00 + self.eta01 + self.eta10 - self.eta11) / 4.0
    }
}

/// Outcome of [`NonlocalBox::validate`]: one entry per violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("all constraints satisfied");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A single violated box constraint, with the offending residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite { index: usize },
    Negative { index: usize, value: f64 },
    Normalization { x: u8, y: u8, residual: f64 },
    AliceMarginal { a: u8, x: u8, residual: f64 },
    BobMarginal { b: u8, y: u8, residual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { index } => write!(f, "entry {index} is not finite"),
            Violation::Negative { index, value } => {
                write!(f, "entry {index} is negative ({value})")
            }
            Violation::Normalization { x, y, residual } => {
                write!(f, "context (x={x},y={y}) sums off 1 by {residual:e}")
            }
            Violation::AliceMarginal { a, x, residual } => write!(
                f,
                "Alice's marginal P(a={a}|x={x}) depends on y by {residual:e}"
            ),
            Violation::BobMarginal { b, y, residual } => write!(
                f,
                "Bob's marginal P(b={b}|y={y}) depends on x by {residual:e}"
            ),
        }
    }
}
