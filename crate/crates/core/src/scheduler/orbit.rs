//! Finite rotation orbits of rational angles `p pi / q`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use super::{gcd, ScheduleError};
use crate::frame::ConeSet;
use crate::linalg2::{rotation, Vec2};

/// Number of distinct rotations in the orbit of `p pi / q` and the angular
/// spacing between neighbouring orbit points.
pub fn orbit_size(p: u64, q: u64) -> Result<(u64, f64), ScheduleError> {
    if q == 0 || gcd(p, q) != 1 {
        return Err(ScheduleError::NotCoprime { p, q });
    }
    if p % 2 == 0 {
        Ok((q, 2.0 * PI / q as f64))
    } else {
        Ok((2 * q, PI / q as f64))
    }
}

/// `R(k p pi / q) f` for every distinct `k`, with exact integer reduction of
/// the angle.
pub fn orbit_points(p: u64, q: u64, f: Vec2) -> Result<Vec<Vec2>, ScheduleError> {
    let (n, _) = orbit_size(p, q)?;
    Ok((0..n)
        .map(|k| {
            let steps = (k * p) % (2 * q);
            rotation(steps as f64 * PI / q as f64) * f
        })
        .collect())
}

fn excluded(p: u64, q: u64) -> bool {
    // orbits of pi/2 and 2pi/3 (and their mirror images) miss some quadrant
    q <= 3 && !(q == 3 && p % 2 == 1)
}

/// Quadrants (numbered from the first cone axis) visited by the out-of-cone
/// points of the orbit of `f` under rotation by `p pi / q`.
///
/// For admissible angles and `eps < pi / (4q)` every quadrant is reached.
pub fn quadrant_coverage(p: u64, q: u64, f: Vec2, cones: &ConeSet) -> Result<BTreeSet<u8>, ScheduleError> {
    orbit_size(p, q)?;
    if excluded(p, q) {
        return Err(ScheduleError::ExcludedAngle { p, q });
    }
    Ok(orbit_points(p, q, f)?.into_iter().filter(|&g| !cones.contains(g)).map(|g| cones.quadrant(g)).collect())
}
