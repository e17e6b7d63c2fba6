//! Rotation scheduling: how many unperturbed periods to apply so that one or
//! several frame-coordinate vectors leave their bad cones and land where a
//! single potential sign shrinks all of them.
//!
//! Between perturbed periods each target's frame vector simply rotates by its
//! quasi-momentum, so every search here works on `R(k theta_i) f_i`.
//! Compatibility is judged on the shrink sign itself, which is constant on
//! each quadrant, alternates between neighbours and is even in `f`.

mod crt;
mod orbit;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{ConeSet, FrameError};
use crate::linalg2::{rotation, Vec2};

pub use crt::{
    crt_merge, crt_schedule, crt_schedule_with_two_pi_thirds, schedule_coprime, CrtSolution, RationalResidue,
};
pub use orbit::{orbit_points, orbit_size, quadrant_coverage};

/// Default bound on the number of rotations any search may try.
pub const DEFAULT_CAP: u64 = 1_000_000;

/// Tolerance for matching a frame's quasi-momentum against a declared `p pi / q`.
pub const RATIONAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no admissible rotation count up to cap {cap}")]
    CapExceeded { cap: u64 },
    #[error("gcd({p}, {q}) != 1")]
    NotCoprime { p: u64, q: u64 },
    #[error("rational class p/q = {p}/{q} must satisfy 0 < p/q < 1")]
    InvalidRational { p: u64, q: u64 },
    #[error("quasi-momentum pi/2 cannot be rotated out of its bad cones")]
    HalfPi,
    #[error("declared {p}pi/{q} does not match quasi-momentum {theta}")]
    ThetaMismatch { theta: f64, p: u64, q: u64 },
    #[error("angle {p}pi/{q} is excluded from quadrant coverage")]
    ExcludedAngle { p: u64, q: u64 },
    #[error("quasi-momenta ({theta1}, {theta2}) are not an admissible overtaking pair")]
    InvalidPair { theta1: f64, theta2: f64 },
    #[error("congruences are inconsistent")]
    Inconsistent,
    #[error("cone half-angle {epsilon} must be below {bound} for this class")]
    EpsilonTooLarge { epsilon: f64, bound: f64 },
    #[error("input lists have mismatched lengths")]
    LengthMismatch,
    #[error("schedule needs at least one target")]
    Empty,
    #[error("stride must be positive")]
    ZeroStride,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// User-declared arithmetic nature of a quasi-momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ThetaClass {
    /// Asserted rationally independent of pi and of the other independent targets.
    Independent,
    /// `theta = p pi / q` in lowest terms.
    Rational { p: u64, q: u64 },
}

impl ThetaClass {
    pub fn rational(&self) -> Option<(u64, u64)> {
        match *self {
            ThetaClass::Rational { p, q } => Some((p, q)),
            ThetaClass::Independent => None,
        }
    }

    pub fn is_rational(&self) -> bool {
        self.rational().is_some()
    }

    /// Checks the class against the quasi-momentum it is attached to.
    pub fn validate(&self, theta: f64) -> Result<(), ScheduleError> {
        if (theta - FRAC_PI_2).abs() <= RATIONAL_TOL {
            return Err(ScheduleError::HalfPi);
        }
        if let ThetaClass::Rational { p, q } = *self {
            if p == 0 || p >= q {
                return Err(ScheduleError::InvalidRational { p, q });
            }
            if gcd(p, q) != 1 {
                return Err(ScheduleError::NotCoprime { p, q });
            }
            if (p, q) == (1, 2) {
                return Err(ScheduleError::HalfPi);
            }
            if (theta - p as f64 * PI / q as f64).abs() > RATIONAL_TOL {
                return Err(ScheduleError::ThetaMismatch { theta, p, q });
            }
        }
        Ok(())
    }

    /// Upper bound on the cone half-angle for which at most two rotations
    /// always suffice.
    pub fn epsilon_bound(&self) -> f64 {
        match *self {
            ThetaClass::Rational { q, .. } => PI / (2.0 * q as f64),
            ThetaClass::Independent => std::f64::consts::FRAC_PI_4,
        }
    }
}

pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPlacement {
    pub in_cone: bool,
    pub quadrant: u8,
    pub shrink_sign: i8,
}

/// A rotation count at which every target sits outside its bad cones with one
/// shared shrink sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub k: u64,
    pub per_target: Vec<TargetPlacement>,
    pub common_sign: i8,
}

/// `R(k theta) f`, with the angle reduced before taking sines.
pub fn rotate_by_count(f: Vec2, theta: f64, k: u64) -> Vec2 {
    rotation((k as f64 * theta) % (2.0 * PI)) * f
}

fn placement(f: Vec2, cones: &ConeSet) -> Option<TargetPlacement> {
    if cones.contains(f) {
        return None;
    }
    let status = cones.status(f).ok()?;
    Some(TargetPlacement {
        in_cone: false,
        quadrant: status.quadrant.unwrap_or_else(|| cones.quadrant(f)),
        shrink_sign: status.shrink_sign,
    })
}

/// Report for rotation count `k` if it is admissible, `None` otherwise.
pub fn check_compatibility(fs: &[Vec2], thetas: &[f64], cones: &[ConeSet], k: u64) -> Option<CompatibilityReport> {
    let mut per_target = Vec::with_capacity(fs.len());
    for ((&f, &theta), c) in fs.iter().zip(thetas).zip(cones) {
        let p = placement(rotate_by_count(f, theta, k), c)?;
        if let Some(first) = per_target.first() {
            let first: &TargetPlacement = first;
            if first.shrink_sign != p.shrink_sign {
                return None;
            }
        }
        per_target.push(p);
    }
    let common_sign = per_target.first()?.shrink_sign;
    Some(CompatibilityReport { k, per_target, common_sign })
}

pub(crate) fn check_lengths(fs: &[Vec2], thetas: &[f64], cones: &[ConeSet]) -> Result<(), ScheduleError> {
    if fs.len() != thetas.len() || fs.len() != cones.len() {
        return Err(ScheduleError::LengthMismatch);
    }
    if fs.is_empty() {
        return Err(ScheduleError::Empty);
    }
    if fs.iter().any(|f| f.norm() == 0.0) {
        return Err(FrameError::Linalg(crate::linalg2::LinalgError::ZeroVector).into());
    }
    Ok(())
}

/// Smallest `k <= cap` with `R(k theta) f` outside the bad cones.
///
/// For a rational class with `eps < pi / (2q)` the answer is at most 2.
pub fn rotate_out_single(
    f: Vec2,
    theta: f64,
    class: ThetaClass,
    cones: &ConeSet,
    cap: u64,
) -> Result<u64, ScheduleError> {
    class.validate(theta)?;
    if f.norm() == 0.0 {
        return Err(FrameError::Linalg(crate::linalg2::LinalgError::ZeroVector).into());
    }
    let bound = class.epsilon_bound();
    if class.is_rational() && cones.epsilon() >= bound {
        return Err(ScheduleError::EpsilonTooLarge { epsilon: cones.epsilon(), bound });
    }
    (0..=cap).find(|&k| !cones.contains(rotate_by_count(f, theta, k))).ok_or(ScheduleError::CapExceeded { cap })
}

/// Smallest `k = offset + stride m <= cap` at which all targets are compatible.
pub fn simultaneous_search(
    fs: &[Vec2],
    thetas: &[f64],
    cones: &[ConeSet],
    stride: u64,
    offset: u64,
    cap: u64,
) -> Result<CompatibilityReport, ScheduleError> {
    check_lengths(fs, thetas, cones)?;
    if stride == 0 {
        return Err(ScheduleError::ZeroStride);
    }
    let mut k = offset;
    while k <= cap {
        if let Some(report) = check_compatibility(fs, thetas, cones, k) {
            return Ok(report);
        }
        k = match k.checked_add(stride) {
            Some(next) => next,
            None => break,
        };
    }
    Err(ScheduleError::CapExceeded { cap })
}

/// One rational target among independents: fix the rational vector first,
/// then search only over multiples of `2q` so it stays put.
pub fn schedule_one_rational(
    fs: &[Vec2],
    thetas: &[f64],
    classes: &[ThetaClass],
    cones: &[ConeSet],
    cap: u64,
) -> Result<CompatibilityReport, ScheduleError> {
    check_lengths(fs, thetas, cones)?;
    if classes.len() != fs.len() {
        return Err(ScheduleError::LengthMismatch);
    }
    let mut rational = classes.iter().enumerate().filter(|(_, c)| c.is_rational());
    let (idx, class) = match (rational.next(), rational.next()) {
        (Some(r), None) => r,
        _ => return Err(ScheduleError::LengthMismatch),
    };
    let (_, q) = class.rational().expect("rational");
    let k0 = rotate_out_single(fs[idx], thetas[idx], *class, &cones[idx], cap)?;
    simultaneous_search(fs, thetas, cones, 2 * q, k0, cap)
}

/// Which overtaking argument covers a pair of quasi-momenta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvertakingRoute {
    /// Both below pi/2 or both above.
    SameHalf,
    /// One on each side of pi/2, with `theta1 != pi - theta2`.
    AcrossHalf,
}

pub fn overtaking_route(theta1: f64, theta2: f64) -> Result<OvertakingRoute, ScheduleError> {
    let invalid = ScheduleError::InvalidPair { theta1, theta2 };
    let inside = |t: f64| t > 0.0 && t < PI && (t - FRAC_PI_2).abs() > RATIONAL_TOL;
    if !inside(theta1) || !inside(theta2) || (theta1 - theta2).abs() <= 1e-12 {
        return Err(invalid);
    }
    let (lo, hi) = if theta1 < theta2 { (theta1, theta2) } else { (theta2, theta1) };
    if hi < FRAC_PI_2 || lo > FRAC_PI_2 {
        Ok(OvertakingRoute::SameHalf)
    } else if (lo - (PI - hi)).abs() <= 1e-12 {
        Err(invalid)
    } else {
        Ok(OvertakingRoute::AcrossHalf)
    }
}

/// Search window for an overtaking pair: several full relative revolutions
/// plus several absolute revolutions of the slower vector.
pub fn overtaking_cap(theta1: f64, theta2: f64) -> u64 {
    let gap = (theta2 - theta1).abs().min((theta1 + theta2 - PI).abs());
    let slowest = theta1.min(theta2).min(PI - theta1).min(PI - theta2);
    (8.0 * PI / gap).ceil() as u64 + 8 * (2.0 * PI / slowest).ceil() as u64
}

/// Two targets moved into compatible quadrants by the overtaking argument.
/// `cap = None` uses [`overtaking_cap`].
pub fn schedule_overtaking(
    f1: Vec2,
    f2: Vec2,
    theta1: f64,
    theta2: f64,
    cones: [&ConeSet; 2],
    cap: Option<u64>,
) -> Result<CompatibilityReport, ScheduleError> {
    overtaking_route(theta1, theta2)?;
    let cap = cap.unwrap_or_else(|| overtaking_cap(theta1, theta2));
    simultaneous_search(&[f1, f2], &[theta1, theta2], &[*cones[0], *cones[1]], 1, 0, cap)
}
