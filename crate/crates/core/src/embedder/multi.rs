//! Several eigenvalues through one potential.

use serde::Serialize;

use super::{prepare, EmbedConfig, EmbedError, EmbedResult, EmbedTarget, Engine, Shrink, StageRecord, StepSchedule};
use crate::jacobi::PeriodicJacobiOperator;
use crate::linalg2::Vec2;
use crate::scheduler::{
    gcd, lcm, overtaking_route, schedule_coprime, schedule_one_rational, schedule_overtaking, simultaneous_search,
    RationalResidue, ScheduleError, ThetaClass,
};

/// Caller's choice of scheduling argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteRequest {
    /// Pick from the target classes.
    #[default]
    Auto,
    Independent,
    OneRational,
    Overtaking,
    Coprime,
}

/// Scheduling argument in force for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    Single,
    Independent,
    OneRational { rational: usize },
    Overtaking { pair: [usize; 2] },
    Coprime { rationals: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StagePlan {
    pub route: Route,
    /// Planned first stage per target; the runtime guard may delay it.
    pub activation: Vec<u64>,
}

fn inadmissible(reason: impl Into<String>) -> EmbedError {
    EmbedError::InadmissibleSet { reason: reason.into() }
}

fn pairwise_coprime(pqs: &[(usize, u64)]) -> Option<(u64, u64)> {
    for (i, &(_, qi)) in pqs.iter().enumerate() {
        for &(_, qj) in &pqs[..i] {
            if gcd(qi, qj) != 1 {
                return Some((qj, qi));
            }
        }
    }
    None
}

/// Chooses the scheduling route and activation stages.
///
/// Rational targets, and both members of an overtaking pair, start at stage 1.
/// The `j`-th remaining independent target starts at stage `j^2` unless it
/// requests another stage.
pub fn plan_stages(
    op: &PeriodicJacobiOperator,
    targets: &[EmbedTarget],
    request: RouteRequest,
) -> Result<StagePlan, EmbedError> {
    if targets.is_empty() {
        return Err(EmbedError::NoTargets);
    }
    let mut thetas = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let theta = op.quasi_momentum(t.lambda)?;
        match t.theta_class.validate(theta) {
            Ok(()) => {}
            Err(ScheduleError::HalfPi) => return Err(inadmissible(format!("target {i} has quasi-momentum pi/2"))),
            Err(e) => return Err(e.into()),
        }
        thetas.push(theta);
    }
    let rationals: Vec<(usize, u64)> =
        targets.iter().enumerate().filter_map(|(i, t)| t.theta_class.rational().map(|(_, q)| (i, q))).collect();
    let independents: Vec<usize> = (0..targets.len()).filter(|&i| !targets[i].theta_class.is_rational()).collect();
    for (a, &i) in independents.iter().enumerate() {
        for &j in &independents[..a] {
            if (thetas[i] - thetas[j]).abs() <= 1e-9 {
                return Err(inadmissible(format!("independent targets {j} and {i} share a quasi-momentum")));
            }
        }
    }

    let overtaking_pair = || -> Result<[usize; 2], EmbedError> {
        let pair = match rationals.len() {
            2 => [rationals[0].0, rationals[1].0],
            0 if targets.len() >= 2 => [0, 1],
            _ => return Err(inadmissible("overtaking needs exactly one pair of rational targets")),
        };
        overtaking_route(thetas[pair[0]], thetas[pair[1]])
            .map_err(|_| inadmissible(format!("targets {} and {} are not an overtaking pair", pair[0], pair[1])))?;
        Ok(pair)
    };
    let coprime = || -> Result<Vec<usize>, EmbedError> {
        if rationals.is_empty() {
            return Err(inadmissible("coprime route needs rational targets"));
        }
        if let Some((a, b)) = pairwise_coprime(&rationals) {
            return Err(inadmissible(format!("denominators {a} and {b} are not coprime")));
        }
        Ok(rationals.iter().map(|&(i, _)| i).collect())
    };

    let route = match request {
        RouteRequest::Auto => match rationals.len() {
            0 => Route::Independent,
            1 => Route::OneRational { rational: rationals[0].0 },
            _ => match coprime() {
                Ok(r) => Route::Coprime { rationals: r },
                Err(coprime_err) if rationals.len() == 2 => match overtaking_pair() {
                    Ok(pair) => Route::Overtaking { pair },
                    Err(_) => return Err(coprime_err),
                },
                Err(e) => return Err(e),
            },
        },
        RouteRequest::Independent if rationals.is_empty() => Route::Independent,
        RouteRequest::Independent => return Err(inadmissible("independent route with rational targets")),
        RouteRequest::OneRational if rationals.len() == 1 => Route::OneRational { rational: rationals[0].0 },
        RouteRequest::OneRational => return Err(inadmissible("one-rational route needs exactly one rational target")),
        RouteRequest::Overtaking => Route::Overtaking { pair: overtaking_pair()? },
        RouteRequest::Coprime => Route::Coprime { rationals: coprime()? },
    };

    let forced: Vec<usize> = match &route {
        Route::Overtaking { pair } => pair.to_vec(),
        _ => rationals.iter().map(|&(i, _)| i).collect(),
    };
    let mut activation = vec![1u64; targets.len()];
    let mut j = 0u64;
    for i in 0..targets.len() {
        if forced.contains(&i) {
            continue;
        }
        j += 1;
        activation[i] = targets[i].activation_stage.unwrap_or(j * j).max(1);
    }
    if !activation.contains(&1) {
        return Err(inadmissible("no target is active at stage 1"));
    }
    Ok(StagePlan { route, activation })
}

const MAX_RESCHEDULES: u32 = 16;

fn schedule_stage(
    route: &Route,
    engine: &Engine<'_>,
    active: &[usize],
    config: &EmbedConfig,
) -> Result<u64, EmbedError> {
    let fs: Vec<Vec2> = active.iter().map(|&i| engine.frame_coords(i)).collect();
    let thetas: Vec<f64> = active.iter().map(|&i| engine.targets[i].frame.theta).collect();
    let cones: Vec<_> = active.iter().map(|&i| engine.targets[i].cones).collect();
    let cap = config.search_cap();
    let k = match route {
        Route::Single | Route::Independent => simultaneous_search(&fs, &thetas, &cones, 1, 0, cap)?.k,
        Route::OneRational { .. } => {
            let classes: Vec<ThetaClass> = active.iter().map(|&i| engine.targets[i].target.theta_class).collect();
            schedule_one_rational(&fs, &thetas, &classes, &cones, cap)?.k
        }
        Route::Overtaking { pair } if active.len() == 2 && active.iter().all(|i| pair.contains(i)) => {
            schedule_overtaking(fs[0], fs[1], thetas[0], thetas[1], [&cones[0], &cones[1]], config.cap)?.k
        }
        Route::Overtaking { .. } => simultaneous_search(&fs, &thetas, &cones, 1, 0, cap)?.k,
        Route::Coprime { rationals } => {
            let pos: Vec<usize> =
                rationals.iter().map(|r| active.iter().position(|a| a == r).expect("rationals start active")).collect();
            let pqs: Vec<(u64, u64)> =
                rationals.iter().map(|&i| engine.targets[i].target.theta_class.rational().expect("rational")).collect();
            let rf: Vec<Vec2> = pos.iter().map(|&p| fs[p]).collect();
            let rt: Vec<f64> = pos.iter().map(|&p| thetas[p]).collect();
            let rc: Vec<_> = pos.iter().map(|&p| cones[p]).collect();
            let rep = schedule_coprime(&rf, &rt, &pqs, &rc)?;
            if pos.len() == active.len() {
                rep.k
            } else {
                let stride = pqs.iter().map(|&(p, q)| RationalResidue { a: 0, p, q }.modulus()).fold(1, lcm);
                simultaneous_search(&fs, &thetas, &cones, stride, rep.k, cap.max(rep.k))?.k
            }
        }
    };
    Ok(k)
}

/// Multi-eigenvalue construction.
///
/// All targets run through the whole potential from the origin; a target that
/// is not yet active is simply ignored when choosing rotations and signs.
pub fn embed_multi(
    op: &PeriodicJacobiOperator,
    targets: &[EmbedTarget],
    schedule: StepSchedule,
    stages: u64,
    request: RouteRequest,
    config: &EmbedConfig,
) -> Result<EmbedResult, EmbedError> {
    if let StepSchedule::Coulomb { c0 } = schedule {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(EmbedError::InvalidConstant);
        }
    }
    let plan = plan_stages(op, targets, request)?;
    let prepared = targets.iter().map(|t| prepare(op, t, config)).collect::<Result<Vec<_>, _>>()?;
    let mut engine = Engine::new(op, prepared, config.horizon);
    let count = targets.len();
    let mut started: Vec<Option<u64>> = vec![None; count];
    let mut records: Vec<StageRecord> = Vec::new();
    let mut truncated = false;
    let mut last_rotations: Option<u64> = None;

    'stages: for stage in 1..=stages {
        let pending: Vec<usize> = (0..count).filter(|&i| started[i].is_none() && plan.activation[i] <= stage).collect();
        // keep the set fixed while rotations are still large for this stage
        let guard = last_rotations.is_some_and(|r| r as f64 > (stage as f64).sqrt());
        if !pending.is_empty() && !guard {
            for i in pending {
                started[i] = Some(stage);
            }
        }
        let active: Vec<usize> = (0..count).filter(|&i| started[i].is_some()).collect();
        if active.is_empty() {
            continue;
        }

        let start_site = engine.n;
        let mut rotations = 0u64;
        let mut attempts = 0;
        let report = loop {
            let k = schedule_stage(&plan.route, &engine, &active, config)?;
            if !engine.fits(k + 1) {
                truncated = true;
                break 'stages;
            }
            engine.rotate(k);
            rotations += k;
            if let Some(r) = engine.observed(&active, rotations) {
                break r;
            }
            attempts += 1;
            if attempts > MAX_RESCHEDULES {
                return Err(ScheduleError::CapExceeded { cap: rotations }.into());
            }
            if k == 0 {
                engine.rotate(1);
                rotations += 1;
            }
        };

        let site = engine.n + 1;
        let magnitude = schedule.magnitude(stage, site, config.i0);
        let Shrink::Done { q, halvings, before, after } =
            engine.shrink(&active, report.common_sign, magnitude, config.max_halvings, stage)?
        else {
            truncated = true;
            break;
        };
        let mut norms_before = vec![None; count];
        let mut norms_after = vec![None; count];
        for (slot, &i) in active.iter().enumerate() {
            norms_before[i] = Some(before[slot]);
            norms_after[i] = Some(after[slot]);
        }
        last_rotations = Some(rotations);
        records.push(StageRecord {
            stage,
            start_site,
            rotations,
            sign: report.common_sign,
            q,
            site,
            halvings,
            active,
            norms_before,
            norms_after,
            report,
        });
    }

    let activation: Vec<u64> = started.iter().map(|s| s.unwrap_or(0)).collect();
    Ok(engine.finish(plan.route, schedule, config.i0, &activation, records, truncated))
}
