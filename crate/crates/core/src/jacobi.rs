//! Periodic Jacobi operators: transfer matrices, the monodromy matrix, the
//! elliptic/parabolic/hyperbolic split and a scanner for elliptic bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg2::Mat2;

/// Default half-width of the parabolic window on `|trace M| - 2`.
pub const PARABOLIC_TOL: f64 = 1e-9;

/// Elliptic points with `2 - |trace M|` below this are flagged as near a band edge.
pub const NEAR_EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JacobiError {
    #[error("period must be at least 1")]
    EmptyPeriod,
    #[error("field `{field}`: expected {expected} entries, found {found}")]
    LengthMismatch { field: &'static str, expected: usize, found: usize },
    #[error("field `a`: entry {index} is {value}, off-diagonal coefficients must be positive")]
    NonPositiveOffDiagonal { index: usize, value: f64 },
    #[error("field `{field}`: entry {index} is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("transfer matrix index {index} outside 1..={period}")]
    IndexOutOfRange { index: usize, period: usize },
    #[error("lambda = {lambda} is not elliptic (|trace M| = {abs_trace})")]
    NotElliptic { lambda: f64, abs_trace: f64 },
}

/// Period-T Jacobi operator with off-diagonal `a` and diagonal `b`.
///
/// Coefficients are stored 0-based; `a(i)`/`b(i)` take the 1-based index used
/// in the recurrence, with `a(0) = a(T)` and both sequences extended
/// periodically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorSpec", into = "OperatorSpec")]
pub struct PeriodicJacobiOperator {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Wire form of an operator: `{"period": T, "a": [...], "b": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub period: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TryFrom<OperatorSpec> for PeriodicJacobiOperator {
    type Error = JacobiError;
    fn try_from(spec: OperatorSpec) -> Result<Self, JacobiError> {
        if spec.period == 0 {
            return Err(JacobiError::EmptyPeriod);
        }
        if spec.a.len() != spec.period {
            return Err(JacobiError::LengthMismatch { field: "a", expected: spec.period, found: spec.a.len() });
        }
        if spec.b.len() != spec.period {
            return Err(JacobiError::LengthMismatch { field: "b", expected: spec.period, found: spec.b.len() });
        }
        PeriodicJacobiOperator::new(spec.a, spec.b)
    }
}

impl From<PeriodicJacobiOperator> for OperatorSpec {
    fn from(op: PeriodicJacobiOperator) -> Self {
        OperatorSpec { period: op.period(), a: op.a, b: op.b }
    }
}

impl PeriodicJacobiOperator {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, JacobiError> {
        if a.is_empty() {
            return Err(JacobiError::EmptyPeriod);
        }
        if b.len() != a.len() {
            return Err(JacobiError::LengthMismatch { field: "b", expected: a.len(), found: b.len() });
        }
        for (i, &x) in a.iter().enumerate() {
            if !x.is_finite() {
                return Err(JacobiError::NonFinite { field: "a", index: i });
            }
            if x <= 0.0 {
                return Err(JacobiError::NonPositiveOffDiagonal { index: i, value: x });
            }
        }
        if let Some(i) = b.iter().position(|x| !x.is_finite()) {
            return Err(JacobiError::NonFinite { field: "b", index: i });
        }
        Ok(Self { a, b })
    }

    /// The free discrete Schrödinger operator: `T = 1`, `a = 1`, `b = 0`.
    pub fn discrete_schrodinger() -> Self {
        Self { a: vec![1.0], b: vec![0.0] }
    }

    pub fn period(&self) -> usize {
        self.a.len()
    }

    pub fn a_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn b_coeffs(&self) -> &[f64] {
        &self.b
    }

    /// `a_n` for any site `n >= 0`, periodic with `a_0 = a_T`.
    pub fn a(&self, n: usize) -> f64 {
        let t = self.period();
        self.a[(n + t - 1) % t]
    }

    /// `b_n` for any site `n >= 1`, periodic.
    pub fn b(&self, n: usize) -> f64 {
        let t = self.period();
        self.b[(n + t - 1) % t]
    }

    /// Transfer matrix `B_i(lambda)` for `1 <= i <= T`.
    pub fn transfer_matrix(&self, i: usize, lambda: f64) -> Result<Mat2, JacobiError> {
        if i == 0 || i > self.period() {
            return Err(JacobiError::IndexOutOfRange { index: i, period: self.period() });
        }
        Ok(self.transfer(i, lambda))
    }

    pub(crate) fn transfer(&self, i: usize, lambda: f64) -> Mat2 {
        let ai = self.a(i);
        Mat2::new(0.0, 1.0, -self.a(i - 1) / ai, (lambda - self.b(i)) / ai)
    }

    /// `B_T(lambda) ... B_1(lambda)`.
    pub fn monodromy(&self, lambda: f64) -> Mat2 {
        (1..=self.period()).fold(Mat2::IDENTITY, |acc, i| self.transfer(i, lambda) * acc)
    }

    pub fn trace(&self, lambda: f64) -> f64 {
        self.monodromy(lambda).trace()
    }

    pub fn classify(&self, lambda: f64, tol: f64) -> SpectralClass {
        SpectralClass::from_trace(self.trace(lambda), tol)
    }

    /// Quasi-momentum `theta in (0, pi)` of an elliptic point.
    pub fn quasi_momentum(&self, lambda: f64) -> Result<f64, JacobiError> {
        match self.classify(lambda, PARABOLIC_TOL) {
            SpectralClass::Elliptic { theta } => Ok(theta),
            _ => Err(JacobiError::NotElliptic { lambda, abs_trace: self.trace(lambda).abs() }),
        }
    }

    /// Bisection for `lambda` in `[lo, hi]` with `trace M(lambda) = target`,
    /// given that `trace - target` changes sign on the bracket.
    pub fn solve_trace(&self, target: f64, lo: f64, hi: f64) -> Option<f64> {
        let g = |x: f64| self.trace(x) - target;
        let (mut lo, mut hi) = (lo, hi);
        let (mut glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            return Some(lo);
        }
        if ghi == 0.0 {
            return Some(hi);
        }
        if glo.signum() == ghi.signum() {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let gm = g(mid);
            if gm == 0.0 {
                return Some(mid);
            }
            if gm.signum() == glo.signum() {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Maximal intervals of `[lo, hi]` on which every sample is elliptic.
    ///
    /// Samples sit on the grid `lo + k step`; edges that fall strictly inside
    /// the scan window are refined by bisection on the trace. A closed gap
    /// (the trace touching +-2 between two elliptic samples) splits a band.
    pub fn elliptic_bands(&self, lo: f64, hi: f64, step: f64) -> Vec<Band> {
        if !(lo < hi) || !(step > 0.0) {
            return Vec::new();
        }
        let n = ((hi - lo) / step).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| (lo + k as f64 * step).min(hi)).collect();
        let elliptic: Vec<bool> = grid.iter().map(|&x| self.is_elliptic(x)).collect();

        let mut bands = Vec::new();
        let mut start: Option<(f64, EdgeKind)> = None;
        for k in 0..grid.len() {
            if elliptic[k] {
                if start.is_none() {
                    start = Some(if k == 0 {
                        (grid[0], EdgeKind::ScanBoundary)
                    } else {
                        (self.refine_edge(grid[k - 1], grid[k]), EdgeKind::BandEdge)
                    });
                }
                if k + 1 < grid.len() && elliptic[k + 1] {
                    if let Some(touch) = self.touching_point(grid[k], grid[k + 1]) {
                        let (s, kind) = start.take().expect("open band");
                        bands.push(Band::new(s, touch, step, kind, EdgeKind::Touching));
                        start = Some((touch, EdgeKind::Touching));
                    }
                }
            } else if let Some((s, kind)) = start.take() {
                let end = self.refine_edge(grid[k], grid[k - 1]);
                bands.push(Band::new(s, end, step, kind, EdgeKind::BandEdge));
            }
        }
        if let Some((s, kind)) = start {
            bands.push(Band::new(s, *grid.last().unwrap(), step, kind, EdgeKind::ScanBoundary));
        }
        bands
    }

    fn is_elliptic(&self, lambda: f64) -> bool {
        matches!(self.classify(lambda, PARABOLIC_TOL), SpectralClass::Elliptic { .. })
    }

    /// Bisects between a non-elliptic point and an elliptic one.
    fn refine_edge(&self, outside: f64, inside: f64) -> f64 {
        let (mut out, mut ins) = (outside, inside);
        for _ in 0..100 {
            let mid = 0.5 * (out + ins);
            if mid == out || mid == ins {
                break;
            }
            if self.is_elliptic(mid) {
                ins = mid;
            } else {
                out = mid;
            }
        }
        0.5 * (out + ins)
    }

    /// Looks for a point strictly between two elliptic samples where `|trace|`
    /// reaches 2 without crossing (a closed spectral gap).
    fn touching_point(&self, x0: f64, x1: f64) -> Option<f64> {
        let f = |x: f64| self.trace(x).abs();
        if f(x0) < 1.5 && f(x1) < 1.5 {
            return None;
        }
        // Ternary search for the maximum of |trace| on the cell.
        let (mut lo, mut hi) = (x0, x1);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if m1 <= lo || m2 >= hi {
                break;
            }
            if f(m1) < f(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let peak = 0.5 * (lo + hi);
        let interior = peak > x0 && peak < x1;
        (interior && f(peak) >= 2.0 - PARABOLIC_TOL).then_some(peak)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum SpectralClass {
    Elliptic { theta: f64 },
    Parabolic,
    Hyperbolic,
}

impl SpectralClass {
    pub fn from_trace(trace: f64, tol: f64) -> Self {
        let abs = trace.abs();
        if (abs - 2.0).abs() <= tol {
            SpectralClass::Parabolic
        } else if abs < 2.0 {
            SpectralClass::Elliptic { theta: (0.5 * trace).acos() }
        } else {
            SpectralClass::Hyperbolic
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SpectralClass::Elliptic { .. } => "elliptic",
            SpectralClass::Parabolic => "parabolic",
            SpectralClass::Hyperbolic => "hyperbolic",
        }
    }
}

/// Whether an elliptic trace is close enough to +-2 that conjugators get
/// badly conditioned.
pub fn near_parabolic(trace: f64) -> bool {
    2.0 - trace.abs() < NEAR_EDGE_MARGIN
}

/// How a band endpoint was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// The band continues past the scan window.
    ScanBoundary,
    /// `|trace|` crosses 2: a genuine spectral edge.
    BandEdge,
    /// `|trace|` touches 2 without crossing: a closed gap.
    Touching,
}

/// Open interval of elliptic points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub resolution: f64,
    pub lo_edge: EdgeKind,
    pub hi_edge: EdgeKind,
}

impl Band {
    fn new(lo: f64, hi: f64, resolution: f64, lo_edge: EdgeKind, hi_edge: EdgeKind) -> Self {
        Self { lo, hi, resolution, lo_edge, hi_edge }
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lo && lambda < self.hi
    }
}
