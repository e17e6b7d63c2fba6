//! Chinese-remainder scheduling for pairwise coprime rational quasi-momenta.
//!
//! Target `i` with angle `p_i pi / q_i` has a rotation orbit of period
//! `alpha_i q_i` (`alpha_i = 2` for odd `p_i`, else 1). Picking a good residue
//! per target and solving the congruences gives one count that works for all.
//! Odd-`p` moduli share the factor 2, so their residues are first brought to a
//! common parity; shifting a residue by `q_i` maps `f` to `-f`, which keeps
//! both the cone membership and the shrink sign.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_compatibility, check_lengths, gcd, CompatibilityReport, ScheduleError};
use crate::frame::ConeSet;
use crate::linalg2::{rotation, Vec2};

/// Congruence `x = a (mod alpha q)` attached to the angle `p pi / q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalResidue {
    pub a: u64,
    pub p: u64,
    pub q: u64,
}

impl RationalResidue {
    pub fn alpha(&self) -> u64 {
        if self.p % 2 == 1 {
            2
        } else {
            1
        }
    }

    pub fn modulus(&self) -> u64 {
        self.alpha() * self.q
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrtSolution {
    /// Least nonnegative solution.
    pub x: u64,
    /// Modulus of the combined congruence.
    pub modulus: u64,
    /// Residues after parity repair.
    pub residues: Vec<RationalResidue>,
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Combines `x = r1 (mod m1)` and `x = r2 (mod m2)` for arbitrary moduli.
/// Returns the least nonnegative solution and the lcm, or `None` when the
/// congruences disagree or the lcm overflows.
pub fn crt_merge(r1: u64, m1: u64, r2: u64, m2: u64) -> Option<(u64, u64)> {
    if m1 == 0 || m2 == 0 {
        return None;
    }
    let (m1i, m2i) = (m1 as i128, m2 as i128);
    let (r1i, r2i) = ((r1 % m1) as i128, (r2 % m2) as i128);
    let (g, u, _) = ext_gcd(m1i, m2i);
    if (r2i - r1i) % g != 0 {
        return None;
    }
    let lcm = m1i / g * m2i;
    let step = ((r2i - r1i) / g).rem_euclid(m2i / g) * u.rem_euclid(m2i / g) % (m2i / g);
    let x = (r1i + m1i * step).rem_euclid(lcm);
    Some((u64::try_from(x).ok()?, u64::try_from(lcm).ok()?))
}

fn validate_rationals(pqs: &[(u64, u64)]) -> Result<(), ScheduleError> {
    for &(p, q) in pqs {
        if p == 0 || q == 0 {
            return Err(ScheduleError::InvalidRational { p, q });
        }
        if gcd(p, q) != 1 {
            return Err(ScheduleError::NotCoprime { p, q });
        }
        if q == 2 {
            return Err(ScheduleError::HalfPi);
        }
    }
    for (i, &(_, qi)) in pqs.iter().enumerate() {
        for &(_, qj) in &pqs[..i] {
            if gcd(qi, qj) != 1 {
                return Err(ScheduleError::NotCoprime { p: qj, q: qi });
            }
        }
    }
    Ok(())
}

/// Solves the system of residues, repairing parities among odd-`p` targets.
///
/// The reference parity comes from the odd-`p` target with even `q` if there
/// is one, otherwise from the majority (ties go to even).
pub fn crt_schedule(targets: &[RationalResidue]) -> Result<CrtSolution, ScheduleError> {
    if targets.is_empty() {
        return Err(ScheduleError::Empty);
    }
    let pqs: Vec<_> = targets.iter().map(|t| (t.p, t.q)).collect();
    validate_rationals(&pqs)?;

    let mut residues: Vec<RationalResidue> =
        targets.iter().map(|t| RationalResidue { a: t.a % t.modulus(), ..*t }).collect();
    let odd: Vec<usize> = (0..residues.len()).filter(|&i| residues[i].p % 2 == 1).collect();
    if odd.len() >= 2 {
        let reference = match odd.iter().find(|&&i| residues[i].q % 2 == 0) {
            Some(&j0) => residues[j0].a % 2,
            None => {
                let odd_count = odd.iter().filter(|&&i| residues[i].a % 2 == 1).count();
                u64::from(2 * odd_count > odd.len())
            }
        };
        for &i in &odd {
            let r = &mut residues[i];
            if r.a % 2 != reference {
                r.a = (r.a + r.q) % r.modulus();
            }
        }
    }

    let (mut x, mut modulus) = (0u64, 1u64);
    for r in &residues {
        (x, modulus) = crt_merge(x, modulus, r.a, r.modulus()).ok_or(ScheduleError::Inconsistent)?;
    }
    Ok(CrtSolution { x, modulus, residues })
}

fn exact_rotate(f: Vec2, p: u64, q: u64, k: u64) -> Vec2 {
    let steps = ((k % (2 * q)) * (p % (2 * q))) % (2 * q);
    rotation(steps as f64 * PI / q as f64) * f
}

fn sign_outside(f: Vec2, cones: &ConeSet) -> Option<i8> {
    if cones.contains(f) {
        return None;
    }
    cones.status(f).ok().map(|s| s.shrink_sign)
}

/// Smallest count in one orbit period putting `f` outside the cones with sign `s`.
fn residue_for_sign(f: Vec2, p: u64, q: u64, cones: &ConeSet, s: i8) -> Option<u64> {
    let period = if p % 2 == 1 { 2 * q } else { q };
    (0..period).find(|&k| sign_outside(exact_rotate(f, p, q, k), cones) == Some(s))
}

fn solve_for_sign(fs: &[Vec2], pqs: &[(u64, u64)], cones: &[ConeSet], s: i8) -> Result<Option<u64>, ScheduleError> {
    let mut residues = Vec::with_capacity(fs.len());
    for ((&f, &(p, q)), c) in fs.iter().zip(pqs).zip(cones) {
        match residue_for_sign(f, p, q, c, s) {
            Some(a) => residues.push(RationalResidue { a, p, q }),
            None => return Ok(None),
        }
    }
    if residues.is_empty() {
        return Ok(Some(0));
    }
    crt_schedule(&residues).map(|sol| Some(sol.x))
}

/// Every candidate count produced by the residue construction, ascending.
fn candidates(fs: &[Vec2], pqs: &[(u64, u64)], cones: &[ConeSet]) -> Result<Vec<u64>, ScheduleError> {
    validate_rationals(pqs)?;
    let mut out = Vec::new();
    match pqs.iter().position(|&pq| pq == (2, 3)) {
        None => {
            for s in [1, -1] {
                out.extend(solve_for_sign(fs, pqs, cones, s)?);
            }
        }
        Some(t) => {
            // Fix the 2pi/3 target first, then step the rest by 3 so it stays put.
            for a_t in 0..3u64 {
                let Some(s) = sign_outside(exact_rotate(fs[t], 2, 3, a_t), &cones[t]) else {
                    continue;
                };
                let mut rest_f = Vec::new();
                let mut rest_pq = Vec::new();
                let mut rest_c = Vec::new();
                for i in (0..fs.len()).filter(|&i| i != t) {
                    let (p, q) = pqs[i];
                    rest_f.push(exact_rotate(fs[i], p, q, a_t));
                    rest_pq.push((3 * p, q));
                    rest_c.push(cones[i]);
                }
                if let Some(m) = solve_for_sign(&rest_f, &rest_pq, &rest_c, s)? {
                    out.push(a_t + 3 * m);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Least rotation count from the residue construction, handling one target
/// at `2 pi / 3` by fixing its residue mod 3 first.
pub fn crt_schedule_with_two_pi_thirds(
    fs: &[Vec2],
    pqs: &[(u64, u64)],
    cones: &[ConeSet],
) -> Result<u64, ScheduleError> {
    if fs.len() != pqs.len() || fs.len() != cones.len() {
        return Err(ScheduleError::LengthMismatch);
    }
    candidates(fs, pqs, cones)?.first().copied().ok_or(ScheduleError::Inconsistent)
}

/// Coprime rational schedule checked against the actual quasi-momenta.
pub fn schedule_coprime(
    fs: &[Vec2],
    thetas: &[f64],
    pqs: &[(u64, u64)],
    cones: &[ConeSet],
) -> Result<CompatibilityReport, ScheduleError> {
    check_lengths(fs, thetas, cones)?;
    if pqs.len() != fs.len() {
        return Err(ScheduleError::LengthMismatch);
    }
    candidates(fs, pqs, cones)?
        .into_iter()
        .find_map(|x| check_compatibility(fs, thetas, cones, x))
        .ok_or(ScheduleError::Inconsistent)
}
