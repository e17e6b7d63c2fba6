//! Independent checks on emitted potentials and eigenvectors.

use serde::Serialize;
use thiserror::Error;

use crate::embedder::{EmbedResult, Envelope, Potential};
use crate::jacobi::{PeriodicJacobiOperator, SpectralClass, PARABOLIC_TOL};

/// Minimum number of shrink events for a decay fit.
pub const MIN_FIT_POINTS: usize = 100;
/// Residual bound for a passing verification.
pub const RESIDUAL_PASS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("sequence has {found} entries, need at least {needed}")]
    LengthMismatch { needed: usize, found: usize },
    #[error("decay fit needs at least {needed} points, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("non-positive or non-finite value in fit data")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResidualReport {
    pub max_residual: f64,
    /// Index attaining the maximum.
    pub site: usize,
}

/// Largest relative residual of `a_{n-1} u_{n-1} + (b_n + q_n - lambda) u_n + a_n u_{n+1}`
/// over interior indices, each scaled by its largest term.
pub fn residual(
    op: &PeriodicJacobiOperator,
    potential: &Potential,
    lambda: f64,
    u: &[f64],
) -> Result<ResidualReport, VerifyError> {
    if u.len() < 3 {
        return Err(VerifyError::LengthMismatch { needed: 3, found: u.len() });
    }
    let mut q = vec![0.0; u.len()];
    for &(n, v) in potential.entries() {
        if n < q.len() {
            q[n] = v;
        }
    }
    let mut best = ResidualReport { max_residual: 0.0, site: 1 };
    for n in 1..u.len() - 1 {
        let left = op.a(n - 1) * u[n - 1];
        let mid = (op.b(n) + q[n] - lambda) * u[n];
        let right = op.a(n) * u[n + 1];
        let scale = left.abs().max(mid.abs()).max(right.abs()).max(f64::MIN_POSITIVE);
        let r = (left + mid + right).abs() / scale;
        if !(r <= best.max_residual) {
            best = ResidualReport { max_residual: r, site: n };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
    /// Slope too shallow for square-summable block norms.
    pub flagged: bool,
}

/// Least-squares slope of `ln y` against `ln x` after dropping the first
/// tenth of the points.
pub fn decay_fit(points: &[(f64, f64)]) -> Result<DecayFit, VerifyError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(VerifyError::InsufficientData { needed: MIN_FIT_POINTS, found: points.len() });
    }
    let used = &points[points.len() / 10..];
    let mut logs = Vec::with_capacity(used.len());
    for &(x, y) in used {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(VerifyError::NonFinite);
        }
        logs.push((x.ln(), y.ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit { slope, intercept: my - slope * mx, points_used: logs.len(), flagged: slope >= -1.0 })
}

/// Share of `sum u_n^2` carried by indices beyond the first tenth.
pub fn tail_share(u: &[f64]) -> f64 {
    let total: f64 = u.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = u[u.len() / 10 + 1..].iter().map(|v| v * v).sum();
    tail / total
}

/// `max |q_n| n / K(n)`, zero for an empty potential.
pub fn envelope_check(potential: &Potential, k: Envelope) -> f64 {
    potential.envelope_max(k).map_or(0.0, |(_, r)| r)
}

pub fn band_membership(op: &PeriodicJacobiOperator, lambda: f64) -> bool {
    matches!(op.classify(lambda, PARABOLIC_TOL), SpectralClass::Elliptic { .. })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TargetVerification {
    pub lambda: f64,
    pub max_residual: f64,
    pub residual_site: usize,
    pub decay_slope: Option<f64>,
    pub decay_flagged: Option<bool>,
    pub tail_share: f64,
    pub band_membership: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationReport {
    pub max_residual: f64,
    pub decay_slope: Vec<Option<f64>>,
    pub tail_share: Vec<f64>,
    /// `None` when no envelope was requested.
    pub envelope_max: Option<f64>,
    pub band_membership: Vec<bool>,
    pub targets: Vec<TargetVerification>,
    pub passed: bool,
}

impl VerificationReport {
    /// Assembles per-target checks into one report. `decay` holds the fitted
    /// slope and flag for each target, when available.
    pub fn assemble(targets: Vec<TargetVerification>, envelope_max: Option<f64>) -> Self {
        let max_residual = targets.iter().map(|t| t.max_residual).fold(0.0, f64::max);
        let passed = max_residual <= RESIDUAL_PASS && envelope_max.is_none_or(|e| e <= 1.0);
        Self {
            max_residual,
            decay_slope: targets.iter().map(|t| t.decay_slope).collect(),
            tail_share: targets.iter().map(|t| t.tail_share).collect(),
            envelope_max,
            band_membership: targets.iter().map(|t| t.band_membership).collect(),
            targets,
            passed,
        }
    }
}

/// Checks one eigenvector; `norms` are `(index, ||f||^2)` pairs for the fit.
pub fn verify_target(
    op: &PeriodicJacobiOperator,
    potential: &Potential,
    lambda: f64,
    u: &[f64],
    norms: &[(f64, f64)],
) -> Result<TargetVerification, VerifyError> {
    let res = residual(op, potential, lambda, u)?;
    let fit = decay_fit(norms).ok();
    Ok(TargetVerification {
        lambda,
        max_residual: res.max_residual,
        residual_site: res.site,
        decay_slope: fit.map(|f| f.slope),
        decay_flagged: fit.map(|f| f.flagged),
        tail_share: tail_share(u),
        band_membership: band_membership(op, lambda),
    })
}

/// Full report for a driver result.
pub fn verify_result(
    op: &PeriodicJacobiOperator,
    result: &EmbedResult,
    envelope: Option<Envelope>,
) -> Result<VerificationReport, VerifyError> {
    let mut targets = Vec::with_capacity(result.eigenvectors.len());
    for (i, (u, summary)) in result.eigenvectors.iter().zip(&result.diagnostics.targets).enumerate() {
        let norms = result.diagnostics.norm_series(i);
        targets.push(verify_target(op, &result.potential, summary.lambda, u, &norms)?);
    }
    let env = envelope.map(|k| envelope_check(&result.potential, k));
    Ok(VerificationReport::assemble(targets, env))
}

/// `||(u_n, u_{n+1})||^2` at every period boundary `n = kT`, `k >= 1`,
/// paired with `k`. Used when no stage diagnostics are available.
pub fn boundary_norms(u: &[f64], period: usize) -> Vec<(f64, f64)> {
    (1..)
        .map(|k| k * period)
        .take_while(|&n| n + 1 < u.len())
        .map(|n| ((n / period) as f64, u[n] * u[n] + u[n + 1] * u[n + 1]))
        .collect()
}
