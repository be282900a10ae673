//! Two-dimensional slices of the non-signalling set.
//!
//! A slice is the convex hull of three vertex boxes, parameterized by the
//! first two mixing weights `(w1, w2)`. Two slices get analytic collapse
//! regions here:
//!
//! - `PR`–`PR'`–`I`: the criterion `A+B > 16` reduces to
//!   `eta00^2 + eta00*eta01 + eta01^2 > 2`, an ellipse exterior in the game
//!   biases `sigma`, `sigma'`; flipping both input bits swaps the two games,
//!   so the mirrored ellipse also certifies collapse and a point collapses
//!   if *either* condition holds.
//! - `PR`–`SR`–`I`: the criterion reduces to
//!   `5 eta00^2 + 2 eta00 eta11 + eta11^2 > 16/3`, a circle
//!   `sigma^2 + sigma'^2 > 2/3` in the game biases.
//!
//! Grid scans record both the analytic verdict and the general
//! best-relabeling criterion at every point; the two must agree.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{BiasVector, BoxError, NamedBox, NonlocalBox};
use crate::collapse::canonical_params;
use crate::DEFAULT_TOL;

/// Tolerance for the slice-membership preconditions of the analytic
/// conditions.
pub const SLICE_CONSTRAINT_TOL: f64 = 1e-9;

/// CSV header emitted by [`write_scan_csv`].
pub const SCAN_CSV_HEADER: &str =
    "w1,w2,sigma,sigma_prime,eta00,eta01,eta10,eta11,A,B,collapses_general,collapses_analytic";

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("weights (w1={w1}, w2={w2}) leave the simplex")]
    OutsideSimplex { w1: f64, w2: f64 },
    #[error("resolution must be at least 2, got {0}")]
    ResolutionTooSmall(u32),
    #[error("vertex {index} is not a valid box: {report}")]
    InvalidVertex {
        index: usize,
        report: crate::boxes::ValidationReport,
    },
    #[error("bias vector violates the slice constraint by {residual:e}")]
    SliceConstraint { residual: f64 },
    #[error("both ray endpoints have the same verdict; nothing to bisect")]
    SameVerdict,
    #[error(transparent)]
    Box(#[from] BoxError),
}

/// Which analytic condition applies to a scan, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateMap {
    Case1,
    Case2,
    Barycentric,
}

/// Three vertex boxes spanning a slice, plus the per-axis grid resolution.
#[derive(Debug, Clone)]
pub struct SliceSpec {
    pub vertices: [NonlocalBox; 3],
    pub resolution: u32,
    pub coordinate_map: CoordinateMap,
}

impl SliceSpec {
    /// The `PR`–`PR'`–`I` slice.
    pub fn case1(resolution: u32) -> Self {
        SliceSpec {
            vertices: [
                NonlocalBox::named(NamedBox::Pr),
                NonlocalBox::named(NamedBox::PrPrime),
                NonlocalBox::named(NamedBox::I),
            ],
            resolution,
            coordinate_map: CoordinateMap::Case1,
        }
    }

    /// The `PR`–`SR`–`I` slice.
    pub fn case2(resolution: u32) -> Self {
        SliceSpec {
            vertices: [
                NonlocalBox::named(NamedBox::Pr),
                NonlocalBox::named(NamedBox::Sr),
                NonlocalBox::named(NamedBox::I),
            ],
            resolution,
            coordinate_map: CoordinateMap::Case2,
        }
    }

    pub fn validate(&self) -> Result<(), SliceError> {
        if self.resolution < 2 {
            return Err(SliceError::ResolutionTooSmall(self.resolution));
        }
        for (index, vertex) in self.vertices.iter().enumerate() {
            let report = vertex.validate(DEFAULT_TOL);
            if !report.is_valid() {
                return Err(SliceError::InvalidVertex { index, report });
            }
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub w1: f64,
    pub w2: f64,
    /// Bias of winning the `a^b = xy` game with uniform inputs.
    pub sigma: f64,
    /// Bias of winning the flipped game with uniform inputs.
    pub sigma_prime: f64,
    pub eta: BiasVector,
    /// Coefficient `A` of the best relabeling (the one backing the general
    /// verdict).
    pub a: f64,
    /// Coefficient `B` of the best relabeling.
    pub b: f64,
    /// `A + B > 16` for the best relabeling of the point's box.
    pub collapses_general: bool,
    /// The slice's analytic condition, when the coordinate map has one.
    pub collapses_analytic: Option<bool>,
}

/// The box at mixing weights `(w1, w2, 1-w1-w2)`.
pub fn box_at(spec: &SliceSpec, w1: f64, w2: f64) -> Result<NonlocalBox, SliceError> {
    let w3 = 1.0 - w1 - w2;
    if w1 < 0.0 || w2 < 0.0 || w3 < -DEFAULT_TOL {
        return Err(SliceError::OutsideSimplex { w1, w2 });
    }
    Ok(NonlocalBox::mix(
        &spec.vertices,
        &[w1, w2, w3.max(0.0)],
    )?)
}

/// Analytic collapse condition in the `PR`–`PR'`–`I` slice
/// (`eta00 = eta11`, `eta01 = eta10`): true iff either
/// `eta00^2 + eta00*eta01 + eta01^2 > 2` or the input-flipped form
/// `eta00^2 - eta00*eta01 + eta01^2 > 2` holds. Equality stays false.
pub fn case1_condition(eta: &BiasVector) -> Result<bool, SliceError> {
    let residual = (eta.eta00 - eta.eta11)
        .abs()
        .max((eta.eta01 - eta.eta10).abs());
    if residual > SLICE_CONSTRAINT_TOL {
        return Err(SliceError::SliceConstraint { residual });
    }
    let (e0, e1) = (eta.eta00, eta.eta01);
    let direct = e0 * e0 + e0 * e1 + e1 * e1;
    let flipped = e0 * e0 - e0 * e1 + e1 * e1;
    Ok(direct > 2.0 || flipped > 2.0)
}

/// Analytic collapse condition in the `PR`–`SR`–`I` slice
/// (`eta00 = eta01 = eta10`): true iff
/// `5 eta00^2 + 2 eta00 eta11 + eta11^2 > 16/3`. Equality stays false.
pub fn case2_condition(eta: &BiasVector) -> Result<bool, SliceError> {
    let residual = (eta.eta00 - eta.eta01)
        .abs()
        .max((eta.eta00 - eta.eta10).abs());
    if residual > SLICE_CONSTRAINT_TOL {
        return Err(SliceError::SliceConstraint { residual });
    }
    let (h, t) = (eta.eta00, eta.eta11);
    Ok(5.0 * h * h + 2.0 * h * t + t * t > 16.0 / 3.0)
}

/// Evaluate every in-simplex grid point, row-major in `(w1, w2)`.
pub fn scan(spec: &SliceSpec) -> Result<Vec<ScanPoint>, SliceError> {
    spec.validate()?;
    let res = spec.resolution;
    let step = 1.0 / f64::from(res - 1);
    let mut points = Vec::with_capacity((res as usize * (res as usize + 1)) / 2);
    for i in 0..res {
        for j in 0..res - i {
            let (w1, w2) = (f64::from(i) * step, f64::from(j) * step);
            let nlb = box_at(spec, w1, w2)?;
            let eta = nlb.bias_vector();
            let canonical = canonical_params(&eta);
            let collapses_analytic = match spec.coordinate_map {
                CoordinateMap::Case1 => Some(case1_condition(&eta)?),
                CoordinateMap::Case2 => Some(case2_condition(&eta)?),
                CoordinateMap::Barycentric => None,
            };
            points.push(ScanPoint {
                w1,
                w2,
                sigma: eta.chsh_bias(),
                sigma_prime: eta.chsh_prime_bias(),
                eta,
                a: canonical.params.a,
                b: canonical.params.b,
                collapses_general: canonical.params.collapses,
                collapses_analytic,
            });
        }
    }
    Ok(points)
}

fn csv_real(v: f64) -> String {
    format!("{v:.11e}")
}

/// Write a scan in the fixed CSV format: 12 significant digits, booleans as
/// `0`/`1`, the analytic column empty when no condition applies.
pub fn write_scan_csv<W: Write>(points: &[ScanPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "{SCAN_CSV_HEADER}")?;
    for p in points {
        let analytic = match p.collapses_analytic {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_real(p.w1),
            csv_real(p.w2),
            csv_real(p.sigma),
            csv_real(p.sigma_prime),
            csv_real(p.eta.eta00),
            csv_real(p.eta.eta01),
            csv_real(p.eta.eta10),
            csv_real(p.eta.eta11),
            csv_real(p.a),
            csv_real(p.b),
            u8::from(p.collapses_general),
            analytic,
        )?;
    }
    Ok(())
}

/// The collapse verdict the scan would assign at `(w1, w2)`: the analytic
/// condition when the map has one, the general criterion otherwise.
pub fn verdict_at(spec: &SliceSpec, w1: f64, w2: f64) -> Result<bool, SliceError> {
    let eta = box_at(spec, w1, w2)?.bias_vector();
    match spec.coordinate_map {
        CoordinateMap::Case1 => case1_condition(&eta),
        CoordinateMap::Case2 => case2_condition(&eta),
        CoordinateMap::Barycentric => Ok(canonical_params(&eta).params.collapses),
    }
}

/// Bisect the verdict boundary along the segment from `from` to `to` (in
/// weight coordinates); returns the crossing parameter `t` in `[0, 1]`
/// within `tol`. Errors if both endpoints agree.
pub fn threshold_bisect(
    spec: &SliceSpec,
    from: (f64, f64),
    to: (f64, f64),
    tol: f64,
) -> Result<f64, SliceError> {
    assert!(tol > 0.0, "bisection tolerance must be positive");
    let at = |t: f64| {
        verdict_at(
            spec,
            from.0 + t * (to.0 - from.0),
            from.1 + t * (to.1 - from.1),
        )
    };
    let verdict_lo = at(0.0)?;
    let verdict_hi = at(1.0)?;
    if verdict_lo == verdict_hi {
        return Err(SliceError::SameVerdict);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if at(mid)? == verdict_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
