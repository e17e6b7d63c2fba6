//! Per-spectral-parameter geometry: the real conjugator `W` with
//! `M W = W R(theta)`, the rank-one perturbation direction `A`, the four bad
//! cones and the sign a potential entry needs to shrink a given vector.
//!
//! In frame coordinates `f = W^{-1} (u_n, u_{n+1})` one perturbed period acts as
//! `R(theta) (I - (q/a_1) G)` with `G = R(-theta) W^{-1} A W`, and the quadratic
//! form `<G f, f>` factors as `<f, W^T e_2> <g, f>` for a vector `g` orthogonal to
//! `W^T e_2`. The form vanishes on two orthogonal lines; the bad cones are
//! narrow cones around them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::Serialize;
use thiserror::Error;

use crate::jacobi::{near_parabolic, JacobiError, PeriodicJacobiOperator};
use crate::linalg2::{complex_eig, rotation, wrap_two_pi, LinalgError, Mat2, Vec2};

/// Default cap on the condition number of `W`.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

/// Relative threshold below which the shrink form is treated as zero.
const DEGENERATE_FORM_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error(transparent)]
    Jacobi(#[from] JacobiError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("conjugator condition number {condition:.3e} exceeds cap {cap:.3e}")]
    IllConditioned { condition: f64, cap: f64 },
    #[error("supplied conjugator is singular")]
    SingularConjugator,
    #[error("cone half-angle {epsilon} must lie in (0, pi/4)")]
    InvalidEpsilon { epsilon: f64 },
    #[error("shrink sign undefined: vector lies on a bad-cone axis")]
    DegenerateSign,
}

/// `A(lambda) = M(lambda) B_1(lambda)^{-1} E22`; its first column is zero.
pub fn rank_one_a(op: &PeriodicJacobiOperator, lambda: f64) -> Mat2 {
    let b1_inv = op.transfer(1, lambda).inverse().expect("det B_1 = a_T / a_1 is nonzero for a valid operator");
    op.monodromy(lambda) * b1_inv * Mat2::E22
}

/// `B_T(lambda) ... B_2(lambda) B_1(lambda - q)`.
pub fn perturbed_monodromy(op: &PeriodicJacobiOperator, lambda: f64, q: f64) -> Mat2 {
    let first = op.transfer(1, lambda - q);
    (2..=op.period()).fold(first, |acc, i| op.transfer(i, lambda) * acc)
}

/// Real invertible `W` with `M W = W R(theta)`, and its inverse.
///
/// Built from the eigenvector `v` for `e^{i theta}` as `[Im v, Re v]`, then moved
/// within its gauge class `c W R(phi)` to orthogonal columns with `|det W| = 1`.
pub fn real_conjugator(
    op: &PeriodicJacobiOperator,
    lambda: f64,
    max_condition: f64,
) -> Result<(Mat2, Mat2), FrameError> {
    op.quasi_momentum(lambda)?;
    let m = op.monodromy(lambda);
    let pair = complex_eig(&m)?;
    let (re, im) = pair.re_im();
    let raw = Mat2::from_cols(im, re);

    let gram = raw.transpose() * raw;
    let phi = 0.5 * (2.0 * gram.b).atan2(gram.a - gram.d);
    let rotated = raw * rotation(phi);
    let det = rotated.det();
    if det == 0.0 || !det.is_finite() {
        return Err(FrameError::SingularConjugator);
    }
    let w = rotated.scale(1.0 / det.abs().sqrt());
    let condition = w.condition_number();
    if !(condition <= max_condition) {
        return Err(FrameError::IllConditioned { condition, cap: max_condition });
    }
    let w_inv = w.inverse().ok_or(FrameError::SingularConjugator)?;
    Ok((w, w_inv))
}

/// Everything the construction needs at one elliptic spectral parameter.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticFrame {
    pub lambda: f64,
    pub theta: f64,
    pub a1: f64,
    pub monodromy: Mat2,
    pub w: Mat2,
    pub w_inv: Mat2,
    pub a_matrix: Mat2,
    /// `W^T e_2`.
    pub w_star_e2: Vec2,
    /// `R(-theta) W^{-1} M B_1^{-1} e_2`.
    pub rotated_image: Vec2,
    /// Unit axis orthogonal to `w_star_e2`.
    pub cone_axis1: Vec2,
    /// `cone_axis1` turned a quarter counter-clockwise; orthogonal to `rotated_image`.
    pub cone_axis2: Vec2,
    /// `||W^T e_2|| ||W^{-1} M B_1^{-1} e_2||`.
    pub norm_product: f64,
    pub condition_w: f64,
    /// `G = R(-theta) W^{-1} A W`.
    pub shrink_form: Mat2,
    pub near_band_edge: bool,
}

impl EllipticFrame {
    pub fn new(op: &PeriodicJacobiOperator, lambda: f64) -> Result<Self, FrameError> {
        Self::with_max_condition(op, lambda, DEFAULT_MAX_CONDITION)
    }

    pub fn with_max_condition(
        op: &PeriodicJacobiOperator,
        lambda: f64,
        max_condition: f64,
    ) -> Result<Self, FrameError> {
        let (w, _) = real_conjugator(op, lambda, max_condition)?;
        Self::with_conjugator(op, lambda, w)
    }

    /// Builds the frame around a caller-supplied conjugator. `w` is trusted to
    /// satisfy `M W = W R(theta)`; see [`EllipticFrame::conjugation_residual`].
    pub fn with_conjugator(op: &PeriodicJacobiOperator, lambda: f64, w: Mat2) -> Result<Self, FrameError> {
        let theta = op.quasi_momentum(lambda)?;
        let w_inv = w.inverse().ok_or(FrameError::SingularConjugator)?;
        let m = op.monodromy(lambda);
        let a_matrix = rank_one_a(op, lambda);
        let b1_inv = op.transfer(1, lambda).inverse().expect("B_1 invertible");

        let w_star_e2 = w.transpose() * Vec2::E2;
        let image = w_inv * (m * (b1_inv * Vec2::E2));
        let rotated_image = rotation(-theta) * image;
        let norm_product = w_star_e2.norm() * image.norm();

        let cone_axis1 = w_star_e2.normalized()?.perp().scale(-1.0);
        let cone_axis2 = cone_axis1.perp();

        Ok(Self {
            lambda,
            theta,
            a1: op.a(1),
            monodromy: m,
            w,
            w_inv,
            a_matrix,
            w_star_e2,
            rotated_image,
            cone_axis1,
            cone_axis2,
            norm_product,
            condition_w: w.condition_number(),
            shrink_form: rotation(-theta) * w_inv * a_matrix * w,
            near_band_edge: near_parabolic(m.trace()),
        })
    }

    /// `||M W - W R(theta)||`.
    pub fn conjugation_residual(&self) -> f64 {
        (self.monodromy * self.w - self.w * rotation(self.theta)).norm()
    }

    /// `<W^T e_2, R(-theta) W^{-1} M B_1^{-1} e_2>`; zero for every elliptic frame.
    pub fn generator_inner_product(&self) -> f64 {
        self.w_star_e2.dot(self.rotated_image)
    }

    /// Frame coordinates `W^{-1} x` of a state `(u_n, u_{n+1})`.
    pub fn to_frame(&self, state: Vec2) -> Vec2 {
        self.w_inv * state
    }

    /// One perturbed period in frame coordinates: `R(theta) - (q/a_1) W^{-1} A W`.
    pub fn perturbed_block(&self, q: f64) -> Mat2 {
        rotation(self.theta) - (self.w_inv * self.a_matrix * self.w).scale(q / self.a1)
    }

    pub fn cone_set(&self, epsilon: f64) -> Result<ConeSet, FrameError> {
        check_epsilon(epsilon)?;
        Ok(ConeSet { axis1: self.cone_axis1, epsilon, form: self.shrink_form })
    }

    /// Guaranteed first-order decay constant `C(lambda, eps) = (2/a_1) P sin^2(eps)`.
    pub fn shrink_constant(&self, epsilon: f64) -> f64 {
        2.0 / self.a1 * self.norm_product * epsilon.sin().powi(2)
    }

    /// Squared norm ratio `||(I - (q/a_1) G) f||^2 / ||f||^2` after one perturbed
    /// period, in frame coordinates.
    pub fn shrink_ratio(&self, f: Vec2, q: f64) -> f64 {
        let g = (Mat2::IDENTITY - self.shrink_form.scale(q / self.a1)) * f;
        g.norm_sq() / f.norm_sq()
    }

    /// Measures the admissible step `q_max` and the quadratic remainder constant
    /// on `directions` unit vectors spread over the out-of-cone region.
    ///
    /// `q_max` is the largest `2^{-j}` for which every sampled direction, with its
    /// shrink sign and any `|q| <= q_max` on the halving ladder, keeps the squared
    /// norm ratio below `1 - C |q| / 2`.
    pub fn shrink_profile(&self, cones: &ConeSet, directions: usize) -> ShrinkProfile {
        let c = self.shrink_constant(cones.epsilon);
        let samples: Vec<(Vec2, f64)> = (0..directions)
            .map(|k| Vec2::from_angle(std::f64::consts::PI * (k as f64 + 0.5) / directions as f64))
            .filter(|&f| !cones.contains(f))
            .filter_map(|f| cones.status(f).ok().map(|s| (f, f64::from(s.shrink_sign))))
            .collect();
        let ladder = |top: f64| (0..40).map(move |j| top * 0.5f64.powi(j));
        let ok_at = |q: f64| samples.iter().all(|&(f, s)| self.shrink_ratio(f, s * q) <= 1.0 - 0.5 * c * q);

        let mut q_max = 1.0;
        while q_max > 1e-12 && !ladder(q_max).all(ok_at) {
            q_max *= 0.5;
        }
        let mut kappa2 = 0.0f64;
        for q in ladder(q_max).take(12) {
            for &(f, s) in &samples {
                kappa2 = kappa2.max((self.shrink_ratio(f, s * q) - 1.0 + c * q) / (q * q));
            }
        }
        ShrinkProfile { q_max, kappa2, shrink_constant: c }
    }
}

/// Convenience wrapper returning the frame together with its cone set.
pub fn build_frame(
    op: &PeriodicJacobiOperator,
    lambda: f64,
    epsilon: f64,
) -> Result<(EllipticFrame, ConeSet), FrameError> {
    let frame = EllipticFrame::new(op, lambda)?;
    let cones = frame.cone_set(epsilon)?;
    Ok((frame, cones))
}

/// `C(lambda, eps)` for a frame.
pub fn shrink_constant(frame: &EllipticFrame, epsilon: f64) -> f64 {
    frame.shrink_constant(epsilon)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShrinkProfile {
    pub q_max: f64,
    pub kappa2: f64,
    pub shrink_constant: f64,
}

fn check_epsilon(epsilon: f64) -> Result<(), FrameError> {
    if epsilon > 0.0 && epsilon < FRAC_PI_4 {
        Ok(())
    } else {
        Err(FrameError::InvalidEpsilon { epsilon })
    }
}

/// The four bad cones of half-angle `epsilon` about `+-axis1`, `+-axis2`
/// together with the quadratic form that decides the shrink sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSet {
    axis1: Vec2,
    epsilon: f64,
    form: Mat2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConeStatus {
    pub in_cone: bool,
    /// 1..=4 counter-clockwise from `axis1`; `None` inside a cone.
    pub quadrant: Option<u8>,
    pub shrink_sign: i8,
}

impl ConeSet {
    /// Cone set with first axis at `axis_angle` and shrink sign `orientation`
    /// (`+1` or `-1`) on quadrant 1. The form is `orientation <f, axis1> <f, axis2>`.
    pub fn synthetic(axis_angle: f64, orientation: i8, epsilon: f64) -> Result<Self, FrameError> {
        check_epsilon(epsilon)?;
        let axis1 = Vec2::from_angle(axis_angle);
        let form = Mat2::outer(axis1, axis1.perp()).scale(f64::from(orientation.signum()));
        Ok(Self { axis1, epsilon, form })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn axis1(&self) -> Vec2 {
        self.axis1
    }

    pub fn axis2(&self) -> Vec2 {
        self.axis1.perp()
    }

    pub fn form(&self) -> Mat2 {
        self.form
    }

    /// Same cone set with a different half-angle.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, FrameError> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, ..*self })
    }

    /// Angle of `f` measured counter-clockwise from `axis1`, in [0, 2 pi).
    pub fn relative_angle(&self, f: Vec2) -> f64 {
        wrap_two_pi(self.axis1.cross(f).atan2(self.axis1.dot(f)))
    }

    /// Distance in radians from `f` to the nearest of the four axis rays.
    pub fn axis_distance(&self, f: Vec2) -> f64 {
        let r = self.relative_angle(f) % FRAC_PI_2;
        r.min(FRAC_PI_2 - r)
    }

    /// Whether `f` is strictly inside one of the bad cones. The zero vector
    /// counts as inside.
    pub fn contains(&self, f: Vec2) -> bool {
        f.norm() == 0.0 || self.axis_distance(f) < self.epsilon
    }

    pub fn quadrant(&self, f: Vec2) -> u8 {
        ((self.relative_angle(f) / FRAC_PI_2) as u8).min(3) + 1
    }

    /// Value of the shrink form `<G f, f>`.
    pub fn form_value(&self, f: Vec2) -> f64 {
        (self.form * f).dot(f)
    }

    pub fn status(&self, f: Vec2) -> Result<ConeStatus, FrameError> {
        cone_status(f, self)
    }
}

/// Membership, quadrant and shrink sign of `f`.
pub fn cone_status(f: Vec2, cones: &ConeSet) -> Result<ConeStatus, FrameError> {
    if f.norm() == 0.0 {
        return Err(FrameError::Linalg(LinalgError::ZeroVector));
    }
    let value = cones.form_value(f);
    let scale = cones.form.norm() * f.norm_sq();
    if value.abs() <= DEGENERATE_FORM_TOL * scale {
        return Err(FrameError::DegenerateSign);
    }
    let in_cone = cones.contains(f);
    Ok(ConeStatus {
        in_cone,
        quadrant: (!in_cone).then(|| cones.quadrant(f)),
        shrink_sign: if value > 0.0 { 1 } else { -1 },
    })
}
