//! Rotate-then-shrink drivers.
//!
//! Every target keeps its own solution of the three-term recurrence, started
//! from `(u_0, u_1) = (0, 1)` and run through one shared potential. The
//! potential is supported on sites `n = 1 (mod T)`, one value per perturbed
//! period. A stage rotates all active targets by a common number of free
//! periods, then applies a single perturbed period whose sign shrinks every
//! active frame vector.

mod multi;
mod potential;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{ConeSet, EllipticFrame, FrameError, DEFAULT_MAX_CONDITION};
use crate::jacobi::{JacobiError, PeriodicJacobiOperator};
use crate::linalg2::Vec2;
use crate::scheduler::{
    rotate_out_single, CompatibilityReport, ScheduleError, TargetPlacement, ThetaClass, DEFAULT_CAP, RATIONAL_TOL,
};

pub use multi::{embed_multi, plan_stages, Route, RouteRequest, StagePlan};
pub use potential::{Envelope, Potential};

/// Default offset in the step schedule `c / (i + i0)`.
pub const DEFAULT_I0: f64 = 10.0;
/// Default halving budget per shrink event.
pub const DEFAULT_MAX_HALVINGS: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("lambda = {lambda} is not elliptic (|trace| = {abs_trace})")]
    NotElliptic { lambda: f64, abs_trace: f64 },
    #[error("lambda = {lambda} has quasi-momentum pi/2, which the construction excludes")]
    HalfPiQuasiMomentum { lambda: f64 },
    #[error("C * c0 = {product} must exceed 1")]
    ConstantTooSmall { product: f64 },
    #[error("inadmissible target set: {reason}")]
    InadmissibleSet { reason: String },
    #[error("envelope |q_n| <= K(n)/n violated at site {site} (ratio {ratio})")]
    EnvelopeViolated { site: usize, ratio: f64 },
    #[error("shrink step at stage {stage} still failed after {halvings} halvings")]
    HalvingExhausted { stage: u64, halvings: u32 },
    #[error("no targets given")]
    NoTargets,
    #[error("step constant must be positive and finite")]
    InvalidConstant,
    #[error(transparent)]
    Schedule(ScheduleError),
    #[error(transparent)]
    Frame(FrameError),
}

impl From<JacobiError> for EmbedError {
    fn from(e: JacobiError) -> Self {
        match e {
            JacobiError::NotElliptic { lambda, abs_trace } => EmbedError::NotElliptic { lambda, abs_trace },
            other => EmbedError::Frame(FrameError::Jacobi(other)),
        }
    }
}

impl From<FrameError> for EmbedError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Jacobi(j) => j.into(),
            other => EmbedError::Frame(other),
        }
    }
}

impl From<ScheduleError> for EmbedError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Frame(f) => f.into(),
            other => EmbedError::Schedule(other),
        }
    }
}

/// An eigenvalue to embed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedTarget {
    pub lambda: f64,
    pub theta_class: ThetaClass,
    /// Cone half-angle; `None` picks [`EmbedTarget::default_epsilon`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Requested first stage for an independent target in a multi run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_stage: Option<u64>,
}

impl EmbedTarget {
    pub fn new(lambda: f64, theta_class: ThetaClass, epsilon: f64) -> Self {
        Self { lambda, theta_class, epsilon: Some(epsilon), activation_stage: None }
    }

    /// `min(0.1, pi / (4q))` for rational classes, `0.1` otherwise.
    pub fn default_epsilon(&self) -> f64 {
        match self.theta_class {
            ThetaClass::Rational { q, .. } => (PI / (4.0 * q as f64)).min(0.1),
            ThetaClass::Independent => 0.1,
        }
    }

    pub fn effective_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.default_epsilon())
    }
}

/// Knobs shared by both drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub i0: f64,
    /// Rotation search cap; `None` uses each scheduler's default.
    pub cap: Option<u64>,
    /// Stop before the emitted sequence would pass this site.
    pub horizon: Option<usize>,
    pub max_halvings: u32,
    pub max_condition: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            i0: DEFAULT_I0,
            cap: None,
            horizon: None,
            max_halvings: DEFAULT_MAX_HALVINGS,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }
}

impl EmbedConfig {
    fn search_cap(&self) -> u64 {
        self.cap.unwrap_or(DEFAULT_CAP)
    }
}

/// State `(u_n, u_{n+1})` of one target at a period boundary `n = 0 (mod T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockState {
    pub target: usize,
    pub n: usize,
    pub state: Vec2,
    pub frame_coords: Vec2,
}

impl BlockState {
    pub fn new(target: usize, n: usize, state: Vec2, frame: &EllipticFrame) -> Self {
        Self { target, n, state, frame_coords: frame.to_frame(state) }
    }
}

/// One period of the recurrence at `frame.lambda`, with `q` added to the
/// diagonal at the first site of the period. Returns the new boundary state
/// and the emitted values `u_{n+2}, ..., u_{n+T+1}`.
pub fn advance_block(
    op: &PeriodicJacobiOperator,
    frame: &EllipticFrame,
    state: &BlockState,
    q: Option<f64>,
) -> (BlockState, Vec<f64>) {
    let t = op.period();
    let lambda = frame.lambda;
    let (mut prev, mut cur) = (state.state.x, state.state.y);
    let mut out = Vec::with_capacity(t);
    for s in 1..=t {
        let m = state.n + s;
        let qm = if s == 1 { q.unwrap_or(0.0) } else { 0.0 };
        let next = ((lambda - op.b(m) - qm) * cur - op.a(m - 1) * prev) / op.a(m);
        out.push(next);
        prev = cur;
        cur = next;
    }
    let next = BlockState::new(state.target, state.n + t, Vec2::new(prev, cur), frame);
    (next, out)
}

/// How the magnitude of the potential at stage `m` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `c0 / (m + i0)`.
    Coulomb { c0: f64 },
    /// `K(n)^{1/3} / (m + i0)` with `n` the perturbed site.
    Envelope { envelope: Envelope },
}

impl StepSchedule {
    fn magnitude(&self, stage: u64, site: usize, i0: f64) -> f64 {
        let denom = stage as f64 + i0;
        match *self {
            StepSchedule::Coulomb { c0 } => c0 / denom,
            StepSchedule::Envelope { envelope } => envelope.eval(site as f64).cbrt() / denom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSummary {
    pub lambda: f64,
    pub theta: f64,
    pub theta_class: ThetaClass,
    pub epsilon: f64,
    pub shrink_constant: f64,
    pub condition_w: f64,
    pub near_band_edge: bool,
    pub activation_stage: u64,
}

/// One rotate-then-shrink stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: u64,
    /// Period boundary where the stage began.
    pub start_site: usize,
    /// Free periods applied before the shrink.
    pub rotations: u64,
    pub sign: i8,
    /// Potential value placed at `site`.
    pub q: f64,
    pub site: usize,
    pub halvings: u32,
    pub active: Vec<usize>,
    /// Frame-vector norms just before and after the perturbed period, per
    /// target; `None` for inactive targets.
    pub norms_before: Vec<Option<f64>>,
    pub norms_after: Vec<Option<f64>>,
    /// Placement of the active targets (in `active` order) at the shrink.
    pub report: CompatibilityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    /// `max |q_n| n`.
    pub coulomb_max: f64,
    /// `max |q_n| n / K(n)` for the reference envelope.
    pub envelope_max: f64,
    /// Site attaining `envelope_max`.
    pub envelope_site: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub targets: Vec<TargetSummary>,
    pub route: Route,
    pub schedule: StepSchedule,
    pub i0: f64,
    pub stages: Vec<StageRecord>,
    /// Stages that needed at least one halving.
    pub halving_events: u64,
    pub envelope: EnvelopeSummary,
    /// Last index of every emitted eigenvector.
    pub horizon: usize,
    /// Whether the run stopped at the horizon before the requested stage count.
    pub truncated: bool,
}

impl Diagnostics {
    /// `(stage, ||f||^2 after the shrink)` for every stage where `target` was active.
    pub fn norm_series(&self, target: usize) -> Vec<(f64, f64)> {
        self.stages
            .iter()
            .filter_map(|s| s.norms_after.get(target).copied().flatten().map(|v| (s.stage as f64, v * v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResult {
    pub potential: Potential,
    /// `u_0, u_1, ...` per target, all of equal length.
    pub eigenvectors: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl EmbedResult {
    /// Fails with the worst site when `|q_n| <= K(n)/n` does not hold.
    pub fn check_envelope(&self, envelope: Envelope) -> Result<(), EmbedError> {
        match self.potential.envelope_max(envelope) {
            Some((site, ratio)) if ratio > 1.0 => Err(EmbedError::EnvelopeViolated { site, ratio }),
            _ => Ok(()),
        }
    }
}

/// Frame, cones and validated data for one target.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub target: EmbedTarget,
    pub frame: EllipticFrame,
    pub cones: ConeSet,
    pub epsilon: f64,
    pub shrink_constant: f64,
}

pub(crate) fn prepare(
    op: &PeriodicJacobiOperator,
    target: &EmbedTarget,
    config: &EmbedConfig,
) -> Result<Prepared, EmbedError> {
    let lambda = target.lambda;
    let theta = op.quasi_momentum(lambda)?;
    if (theta - FRAC_PI_2).abs() <= RATIONAL_TOL {
        return Err(EmbedError::HalfPiQuasiMomentum { lambda });
    }
    match target.theta_class.validate(theta) {
        Err(ScheduleError::HalfPi) => return Err(EmbedError::HalfPiQuasiMomentum { lambda }),
        Err(e) => return Err(e.into()),
        Ok(()) => {}
    }
    let epsilon = target.effective_epsilon();
    let bound = target.theta_class.epsilon_bound();
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(ScheduleError::EpsilonTooLarge { epsilon, bound }.into());
    }
    let frame = EllipticFrame::with_max_condition(op, lambda, config.max_condition)?;
    let cones = frame.cone_set(epsilon)?;
    let shrink_constant = frame.shrink_constant(epsilon);
    Ok(Prepared { target: *target, frame, cones, epsilon, shrink_constant })
}

fn placement(f: Vec2, cones: &ConeSet) -> Option<TargetPlacement> {
    if cones.contains(f) {
        return None;
    }
    let status = cones.status(f).ok()?;
    Some(TargetPlacement { in_cone: false, quadrant: cones.quadrant(f), shrink_sign: status.shrink_sign })
}

/// Shared potential plus one recurrence per target, advanced in lockstep.
pub(crate) struct Engine<'a> {
    op: &'a PeriodicJacobiOperator,
    pub targets: Vec<Prepared>,
    pub u: Vec<Vec<f64>>,
    pub potential: Potential,
    /// Current period boundary; each state is `(u[n], u[n+1])`.
    pub n: usize,
    horizon: Option<usize>,
}

pub(crate) enum Shrink {
    Done { q: f64, halvings: u32, before: Vec<f64>, after: Vec<f64> },
    Horizon,
}

impl<'a> Engine<'a> {
    pub fn new(op: &'a PeriodicJacobiOperator, targets: Vec<Prepared>, horizon: Option<usize>) -> Self {
        let u = vec![vec![0.0, 1.0]; targets.len()];
        Self { op, potential: Potential::new(op.period()), targets, u, n: 0, horizon }
    }

    pub fn period(&self) -> usize {
        self.op.period()
    }

    pub fn block_state(&self, i: usize) -> BlockState {
        let u = &self.u[i];
        BlockState::new(i, self.n, Vec2::new(u[self.n], u[self.n + 1]), &self.targets[i].frame)
    }

    pub fn frame_coords(&self, i: usize) -> Vec2 {
        self.block_state(i).frame_coords
    }

    /// Whether `blocks` more periods fit under the horizon.
    pub fn fits(&self, blocks: u64) -> bool {
        match self.horizon {
            None => true,
            Some(h) => (self.n as u64 + 1).saturating_add(blocks.saturating_mul(self.period() as u64)) <= h as u64,
        }
    }

    /// `k` free periods for every target.
    pub fn rotate(&mut self, k: u64) {
        for _ in 0..k {
            for i in 0..self.targets.len() {
                let (_, out) = advance_block(self.op, &self.targets[i].frame, &self.block_state(i), None);
                self.u[i].extend(out);
            }
            self.n += self.period();
        }
    }

    fn trial(&self, i: usize, q: f64) -> Vec2 {
        advance_block(self.op, &self.targets[i].frame, &self.block_state(i), Some(q)).0.frame_coords
    }

    /// One perturbed period with sign `sign` and starting magnitude `magnitude`,
    /// halved until every active frame vector loses at least half of its
    /// guaranteed first-order shrink.
    pub fn shrink(
        &mut self,
        active: &[usize],
        sign: i8,
        magnitude: f64,
        max_halvings: u32,
        stage: u64,
    ) -> Result<Shrink, EmbedError> {
        if !self.fits(1) {
            return Ok(Shrink::Horizon);
        }
        let before: Vec<f64> = active.iter().map(|&i| self.frame_coords(i).norm()).collect();
        let mut mag = magnitude;
        let mut halvings = 0;
        let after = loop {
            let q = f64::from(sign) * mag;
            let after: Vec<f64> = active.iter().map(|&i| self.trial(i, q).norm()).collect();
            let ok = active
                .iter()
                .zip(before.iter().zip(&after))
                .all(|(&i, (b, a))| a * a <= (1.0 - 0.5 * self.targets[i].shrink_constant * mag) * b * b);
            if ok {
                break after;
            }
            if halvings >= max_halvings {
                return Err(EmbedError::HalvingExhausted { stage, halvings });
            }
            mag *= 0.5;
            halvings += 1;
        };
        let q = f64::from(sign) * mag;
        self.potential.push(self.n + 1, q);
        for i in 0..self.targets.len() {
            let (_, out) = advance_block(self.op, &self.targets[i].frame, &self.block_state(i), Some(q));
            self.u[i].extend(out);
        }
        self.n += self.period();
        Ok(Shrink::Done { q, halvings, before, after })
    }

    /// Placements of the active targets at the current boundary, if compatible.
    pub fn observed(&self, active: &[usize], k: u64) -> Option<CompatibilityReport> {
        let mut per_target = Vec::with_capacity(active.len());
        for &i in active {
            let p = placement(self.frame_coords(i), &self.targets[i].cones)?;
            if per_target.first().is_some_and(|f: &TargetPlacement| f.shrink_sign != p.shrink_sign) {
                return None;
            }
            per_target.push(p);
        }
        let common_sign = per_target.first()?.shrink_sign;
        Some(CompatibilityReport { k, per_target, common_sign })
    }

    pub fn summaries(&self, activation: &[u64]) -> Vec<TargetSummary> {
        self.targets
            .iter()
            .zip(activation)
            .map(|(p, &act)| TargetSummary {
                lambda: p.target.lambda,
                theta: p.frame.theta,
                theta_class: p.target.theta_class,
                epsilon: p.epsilon,
                shrink_constant: p.shrink_constant,
                condition_w: p.frame.condition_w,
                near_band_edge: p.frame.near_band_edge,
                activation_stage: act,
            })
            .collect()
    }

    pub fn finish(
        self,
        route: Route,
        schedule: StepSchedule,
        i0: f64,
        activation: &[u64],
        stages: Vec<StageRecord>,
        truncated: bool,
    ) -> EmbedResult {
        let targets = self.summaries(activation);
        let reference = match schedule {
            StepSchedule::Envelope { envelope } => envelope,
            StepSchedule::Coulomb { .. } => Envelope::LogCubed,
        };
        let (envelope_site, envelope_max) = match self.potential.envelope_max(reference) {
            Some((site, r)) => (Some(site), r),
            None => (None, 0.0),
        };
        let envelope = EnvelopeSummary { coulomb_max: self.potential.coulomb_max(), envelope_max, envelope_site };
        let halving_events = stages.iter().filter(|s| s.halvings > 0).count() as u64;
        let horizon = self.n + 1;
        EmbedResult {
            potential: self.potential,
            eigenvectors: self.u,
            diagnostics: Diagnostics {
                targets,
                route,
                schedule,
                i0,
                stages,
                halving_events,
                envelope,
                horizon,
                truncated,
            },
        }
    }
}

/// Single-eigenvalue construction with steps `sign * c0 / (i + i0)`.
pub fn embed_single(
    op: &PeriodicJacobiOperator,
    target: &EmbedTarget,
    c0: f64,
    events: u64,
    config: &EmbedConfig,
) -> Result<EmbedResult, EmbedError> {
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(EmbedError::InvalidConstant);
    }
    let prepared = prepare(op, target, config)?;
    let product = prepared.shrink_constant * c0;
    if product <= 1.0 {
        return Err(EmbedError::ConstantTooSmall { product });
    }
    let theta = prepared.frame.theta;
    let class = target.theta_class;
    let cones = prepared.cones;
    let mut engine = Engine::new(op, vec![prepared], config.horizon);
    let schedule = StepSchedule::Coulomb { c0 };
    let cap = config.search_cap();
    let mut stages = Vec::new();
    let mut truncated = false;

    for stage in 1..=events {
        let start_site = engine.n;
        let mut rotations = 0u64;
        let report = loop {
            let k = rotate_out_single(engine.frame_coords(0), theta, class, &cones, cap)?;
            if !engine.fits(k + 1) {
                break None;
            }
            engine.rotate(k);
            rotations += k;
            // roundoff can leave the exact state a hair inside a cone
            if let Some(r) = engine.observed(&[0], rotations) {
                break Some(r);
            }
            if k == 0 {
                engine.rotate(1);
                rotations += 1;
            }
        };
        let Some(report) = report else {
            truncated = true;
            break;
        };
        let site = engine.n + 1;
        let magnitude = schedule.magnitude(stage, site, config.i0);
        let Shrink::Done { q, halvings, before, after } =
            engine.shrink(&[0], report.common_sign, magnitude, config.max_halvings, stage)?
        else {
            truncated = true;
            break;
        };
        stages.push(StageRecord {
            stage,
            start_site,
            rotations,
            sign: report.common_sign,
            q,
            site,
            halvings,
            active: vec![0],
            norms_before: vec![Some(before[0])],
            norms_after: vec![Some(after[0])],
            report,
        });
    }
    Ok(engine.finish(Route::Single, schedule, config.i0, &[1], stages, truncated))
}
