//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Built with `harness = false`; exits nonzero if any line fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spectral_embedder::embedder::{
    embed_multi, embed_single, plan_stages, EmbedConfig, EmbedError, EmbedResult, EmbedTarget, Envelope, RouteRequest,
    StepSchedule,
};
use spectral_embedder::frame::{perturbed_monodromy, rank_one_a, ConeSet, EllipticFrame};
use spectral_embedder::jacobi::{near_parabolic, PeriodicJacobiOperator};
use spectral_embedder::linalg2::{rotation, Mat2, Vec2};
use spectral_embedder::scheduler::{
    gcd, orbit_points, orbit_size, overtaking_route, quadrant_coverage, rotate_out_single, schedule_coprime,
    schedule_overtaking, OvertakingRoute, ScheduleError, ThetaClass,
};
use spectral_embedder::verify::{decay_fit, tail_share};

type Check = Result<String, String>;

struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn line(&mut self, id: &str, name: &str, elapsed: Duration, outcome: Check) {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failed.push(format!("{id} ({name})"));
                ("FAIL", d)
            }
        };
        println!("{tag} [{id}] {name}: {detail} ({:.2}s)", elapsed.as_secs_f64());
    }

    /// Runs `f`, turning panics into failures and enforcing the time budget.
    fn run(&mut self, id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > budget => Err(format!("over time budget of {}s", budget.as_secs())),
            o => o,
        };
        self.line(id, name, elapsed, outcome);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Independent oracles

/// `B_i(lambda)` with `q` on the diagonal, straight from the coefficients.
fn transfer(a: &[f64], b: &[f64], i: usize, lambda: f64, q: f64) -> Mat2 {
    let t = a.len();
    let ai = a[i - 1];
    let aprev = a[(i + t - 2) % t];
    Mat2::new(0.0, 1.0, -aprev / ai, (lambda - q - b[i - 1]) / ai)
}

fn product_monodromy(a: &[f64], b: &[f64], lambda: f64, q: f64) -> Mat2 {
    (1..=a.len()).fold(Mat2::IDENTITY, |m, i| transfer(a, b, i, lambda, if i == 1 { q } else { 0.0 }) * m)
}

/// Relative residual of the eigen-recurrence with `u_0 = 0` boundary row skipped.
fn recurrence_residual(a: &[f64], b: &[f64], q: &[(usize, f64)], lambda: f64, u: &[f64]) -> f64 {
    let t = a.len();
    let mut qd = vec![0.0; u.len()];
    for &(n, v) in q {
        if n < u.len() {
            qd[n] = v;
        }
    }
    let coeff = |c: &[f64], n: usize| c[(n + t - 1) % t];
    (1..u.len() - 1)
        .map(|n| {
            let terms = [coeff(a, n - 1) * u[n - 1], (coeff(b, n) + qd[n] - lambda) * u[n], coeff(a, n) * u[n + 1]];
            let scale = terms.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(x.abs()));
            terms.iter().sum::<f64>().abs() / scale
        })
        .fold(0.0, f64::max)
}

/// Out-of-cone test and shrink sign for a synthetic cone set, by angle alone.
fn angle_status(phi: f64, axis: f64, orient: i8, eps: f64) -> Option<i8> {
    let rel = (phi - axis).rem_euclid(2.0 * PI);
    let r = rel % FRAC_PI_2;
    if r.min(FRAC_PI_2 - r) < eps {
        return None;
    }
    Some(if (2.0 * rel).sin() > 0.0 { orient } else { -orient })
}

/// Angle of `R(k p pi / q) f` with the multiple of `pi / q` reduced exactly.
fn rational_angle(phi: f64, p: u64, q: u64, k: u64) -> f64 {
    phi + ((k % (2 * q)) * p % (2 * q)) as f64 * PI / q as f64
}

fn random_operator(rng: &mut StdRng) -> (Vec<f64>, Vec<f64>) {
    let t = rng.gen_range(1..=5);
    let a = (0..t).map(|_| rng.gen_range(0.5..2.0)).collect();
    let b = (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (a, b)
}

/// An elliptic point away from the band edges, by rejection.
fn random_elliptic(rng: &mut StdRng, op: &PeriodicJacobiOperator) -> f64 {
    let amax = op.a_coeffs().iter().cloned().fold(0.0, f64::max);
    let bmax = op.b_coeffs().iter().map(|b| b.abs()).fold(0.0, f64::max);
    let r = bmax + 2.0 * amax;
    loop {
        let lambda = rng.gen_range(-r..r);
        let tr = op.trace(lambda);
        if tr.abs() < 2.0 && !near_parabolic(tr) {
            return lambda;
        }
    }
}

fn coprime_pairs(max_q: u64) -> Vec<(u64, u64)> {
    (2..=max_q).flat_map(|q| (1..q).map(move |p| (p, q))).filter(|&(p, q)| gcd(p, q) == 1 && (p, q) != (1, 2)).collect()
}

// ---------------------------------------------------------------------------
// Criteria

fn conjugation_suite() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    let (mut worst_conj, mut worst_orth, mut worst_det, mut worst_rank) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b) = random_operator(&mut rng);
        let op = PeriodicJacobiOperator::new(a.clone(), b.clone()).unwrap();
        let lambda = random_elliptic(&mut rng, &op);
        let frame = EllipticFrame::new(&op, lambda).map_err(|e| format!("frame at {lambda}: {e}"))?;
        let m = product_monodromy(&a, &b, lambda, 0.0);

        let theta = (m.trace() / 2.0).acos();
        ensure((theta - frame.theta).abs() < 1e-9, || format!("quasi-momentum {} vs {theta}", frame.theta))?;
        let w = frame.w;
        worst_conj = worst_conj.max((m * w - w * rotation(theta)).norm() / m.norm());

        let winv = w.inverse().unwrap();
        let b1_inv = transfer(&a, &b, 1, lambda, 0.0).inverse().unwrap();
        let left = w.transpose() * Vec2::E2;
        let right = rotation(-theta) * winv * m * b1_inv * Vec2::E2;
        worst_orth = worst_orth.max(left.dot(right).abs() / (left.norm() * right.norm()));

        worst_det = worst_det.max((m.det() - 1.0).abs());

        let q = rng.gen_range(-1.0..1.0);
        let direct = product_monodromy(&a, &b, lambda, q);
        let formula = m - rank_one_a(&op, lambda).scale(q / a[0]);
        let lib = perturbed_monodromy(&op, lambda, q);
        let scale = direct.norm().max(1.0);
        worst_rank = worst_rank.max((formula - direct).norm() / scale).max((lib - direct).norm() / scale);
    }
    let detail =
        format!("conj {worst_conj:.1e}, orth {worst_orth:.1e}, det {worst_det:.1e}, rank-one {worst_rank:.1e}");
    ensure(worst_conj <= 1e-10 && worst_orth <= 1e-10 && worst_det <= 1e-12 && worst_rank <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn band_structure() -> Check {
    let dso = PeriodicJacobiOperator::discrete_schrodinger();
    let bands = dso.elliptic_bands(-3.0, 3.0, 1e-3);
    ensure(bands.len() == 1, || format!("DSO: {} bands", bands.len()))?;
    let err_dso = (bands[0].lo + 2.0).abs().max((bands[0].hi - 2.0).abs());

    // trace = lambda^2 - 3, elliptic for 1 < lambda^2 < 5
    let op = PeriodicJacobiOperator::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap();
    let bands = op.elliptic_bands(-3.0, 3.0, 1e-3);
    ensure(bands.len() == 2, || format!("period 2: {} bands", bands.len()))?;
    let s5 = 5f64.sqrt();
    let expected = [(-s5, -1.0), (1.0, s5)];
    let err_two =
        bands.iter().zip(expected).map(|(b, (lo, hi))| (b.lo - lo).abs().max((b.hi - hi).abs())).fold(0.0, f64::max);
    let detail = format!("endpoint errors {err_dso:.1e} and {err_two:.1e}");
    ensure(err_dso <= 1e-3 && err_two <= 1e-3, || detail.clone())?;
    Ok(detail)
}

fn single_rational_rotate_out() -> Check {
    let mut rng = StdRng::seed_from_u64(3);
    let pairs = coprime_pairs(20);
    let mut count = 0;
    for &(p, q) in &pairs {
        let eps = PI / (4.0 * q as f64);
        let theta = p as f64 * PI / q as f64;
        let mut done = 0;
        while done < 1000 {
            let axis = rng.gen_range(0.0..2.0 * PI);
            let orient = if rng.gen_bool(0.5) { 1 } else { -1 };
            let cones = ConeSet::synthetic(axis, orient, eps).unwrap();
            let phi = axis + f64::from(rng.gen_range(0u8..4)) * FRAC_PI_2 + rng.gen_range(-1.0..1.0) * eps;
            let f = Vec2::from_angle(phi).scale(rng.gen_range(0.1..10.0));
            if !cones.contains(f) {
                continue;
            }
            let k = rotate_out_single(f, theta, ThetaClass::Rational { p, q }, &cones, 10)
                .map_err(|e| format!("{p}/{q}: {e}"))?;
            ensure(k <= 2, || format!("{p}/{q}: k = {k}"))?;
            ensure(angle_status(rational_angle(phi, p, q, k), axis, orient, eps * (1.0 - 1e-9)).is_some(), || {
                format!("{p}/{q}: still in a cone after {k}")
            })?;
            done += 1;
        }
        count += done;
    }
    Ok(format!("{} angles, {count} vectors, all k <= 2", pairs.len()))
}

fn orbits_and_coverage() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let pairs = coprime_pairs(15);
    for &(p, q) in &pairs {
        let (n, spacing) = orbit_size(p, q).map_err(|e| e.to_string())?;
        let (n_exp, sp_exp) = if p % 2 == 0 { (q, 2.0 * PI / q as f64) } else { (2 * q, PI / q as f64) };
        ensure(n == n_exp && (spacing - sp_exp).abs() < 1e-9, || format!("{p}/{q}: size {n}, spacing {spacing}"))?;
        let start = rng.gen_range(0.0..2.0 * PI);
        let pts = orbit_points(p, q, Vec2::from_angle(start)).map_err(|e| e.to_string())?;
        ensure(pts.len() as u64 == n_exp, || format!("{p}/{q}: {} points", pts.len()))?;
        let mut angles: Vec<f64> = pts.iter().map(|v| (v.angle() - start).rem_euclid(2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        angles.push(angles[0] + 2.0 * PI);
        for w in angles.windows(2) {
            ensure((w[1] - w[0] - sp_exp).abs() < 1e-9, || format!("{p}/{q}: gap {}", w[1] - w[0]))?;
        }
    }
    let admissible: Vec<_> = pairs.iter().copied().filter(|&pq| pq != (2, 3)).collect();
    for &(p, q) in &admissible {
        let eps = PI / (4.0 * q as f64);
        for _ in 0..100 {
            let axis = rng.gen_range(0.0..2.0 * PI);
            let orient = if rng.gen_bool(0.5) { 1 } else { -1 };
            let cones = ConeSet::synthetic(axis, orient, eps).unwrap();
            let start = rng.gen_range(0.0..2.0 * PI);
            let quads = quadrant_coverage(p, q, Vec2::from_angle(start), &cones).map_err(|e| e.to_string())?;
            ensure(quads.len() == 4, || format!("{p}/{q}: quadrants {quads:?}"))?;
            let mut seen = [false; 4];
            for k in 0..2 * q {
                let phi = rational_angle(start, p, q, k);
                if angle_status(phi, axis, orient, eps).is_some() {
                    seen[((phi - axis).rem_euclid(2.0 * PI) / FRAC_PI_2) as usize % 4] = true;
                }
            }
            ensure(seen.iter().all(|&s| s), || format!("{p}/{q}: oracle coverage {seen:?}"))?;
        }
    }
    Ok(format!("{} orbits exact, {} angles covered over 100 frames", pairs.len(), admissible.len()))
}

/// Start angle at which the smallest residue with sign `s` is exactly `k`.
fn start_with_residue(rng: &mut StdRng, (p, q): (u64, u64), axis: f64, orient: i8, eps: f64, s: i8, k: u64) -> f64 {
    loop {
        let target = axis + f64::from(rng.gen_range(0u8..4)) * FRAC_PI_2 + rng.gen_range(eps..FRAC_PI_2 - eps);
        if angle_status(target, axis, orient, eps) != Some(s) {
            continue;
        }
        let start = target - (k * p) as f64 * PI / q as f64;
        if (0..k).all(|j| angle_status(rational_angle(start, p, q, j), axis, orient, eps) != Some(s)) {
            return start;
        }
    }
}

fn crt_instances() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let moduli = [3u64, 4, 5, 7, 8, 9, 11, 13];
    let (mut clash, mut two_thirds) = (0, 0);
    for inst in 0..10_000 {
        let kind = inst % 3; // 0 plain, 1 forced parity clash, 2 with 2pi/3
        let n = if kind == 1 { rng.gen_range(2..=4) } else { rng.gen_range(1..=4) };
        let mut qs: Vec<u64> = Vec::new();
        if kind == 2 {
            qs.push(3);
        }
        let mut tries = 0;
        while qs.len() < n && tries < 100 {
            tries += 1;
            let q = moduli[rng.gen_range(0..moduli.len())];
            let odd_q_needed = kind == 1 && qs.len() < 2;
            if qs.iter().all(|&m| gcd(m, q) == 1) && (!odd_q_needed || q % 2 == 1) {
                qs.push(q);
            }
        }
        let pqs: Vec<(u64, u64)> = qs
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                if kind == 2 && i == 0 {
                    return (2, 3);
                }
                loop {
                    let p = rng.gen_range(1..q);
                    let odd_needed = kind == 1 && i < 2;
                    if gcd(p, q) == 1 && (p, q) != (2, 3) && (!odd_needed || p % 2 == 1) {
                        return (p, q);
                    }
                }
            })
            .collect();
        let axes: Vec<f64> = pqs.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let orients: Vec<i8> = pqs.iter().map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let eps: Vec<f64> = pqs.iter().map(|&(_, q)| PI / (4.0 * q as f64) * 0.999).collect();
        let starts: Vec<f64> = (0..pqs.len())
            .map(|i| {
                let (p, q) = pqs[i];
                if kind == 1 && i < 2 {
                    // residues 0 and 1 for sign +1: opposite parities
                    start_with_residue(&mut rng, (p, q), axes[i], orients[i], eps[i], 1, i as u64)
                } else {
                    rng.gen_range(0.0..2.0 * PI)
                }
            })
            .collect();
        clash += usize::from(kind == 1);
        two_thirds += usize::from(kind == 2);

        let fs: Vec<Vec2> = starts.iter().map(|&a| Vec2::from_angle(a)).collect();
        let thetas: Vec<f64> = pqs.iter().map(|&(p, q)| p as f64 * PI / q as f64).collect();
        let cones: Vec<ConeSet> =
            (0..pqs.len()).map(|i| ConeSet::synthetic(axes[i], orients[i], eps[i]).unwrap()).collect();
        let r = schedule_coprime(&fs, &thetas, &pqs, &cones).map_err(|e| format!("instance {inst} {pqs:?}: {e}"))?;
        let signs: Vec<Option<i8>> = (0..pqs.len())
            .map(|i| {
                let (p, q) = pqs[i];
                angle_status(rational_angle(starts[i], p, q, r.k), axes[i], orients[i], eps[i] * (1.0 - 1e-9))
            })
            .collect();
        ensure(signs.iter().all(|&s| s == Some(r.common_sign)), || {
            format!("instance {inst} {pqs:?}: x = {}, direct signs {signs:?}", r.k)
        })?;
    }
    Ok(format!("10000 instances ({clash} forced parity clashes, {two_thirds} with 2pi/3) verified"))
}

fn overtaking_pairs() -> Check {
    let mut rng = StdRng::seed_from_u64(6);
    let lower = |rng: &mut StdRng| rng.gen_range(0.05..FRAC_PI_2 - 0.05);
    let mut worst_k = 0;
    for route in [OvertakingRoute::SameHalf, OvertakingRoute::AcrossHalf] {
        let mut done = 0;
        while done < 1000 {
            let (t1, t2) = (lower(&mut rng), lower(&mut rng));
            let (t1, t2) = match route {
                OvertakingRoute::SameHalf if rng.gen_bool(0.5) => (PI - t1, PI - t2),
                OvertakingRoute::SameHalf => (t1, t2),
                OvertakingRoute::AcrossHalf => (t1, PI - t2),
            };
            if (t1 - t2).abs() < 0.01 || (t1 + t2 - PI).abs() < 0.01 {
                continue;
            }
            ensure(overtaking_route(t1, t2).ok() == Some(route), || format!("route of ({t1}, {t2})"))?;
            let axes = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let orients = [if rng.gen_bool(0.5) { 1 } else { -1 }, if rng.gen_bool(0.5) { 1 } else { -1 }];
            let starts = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let c1 = ConeSet::synthetic(axes[0], orients[0], 0.1).unwrap();
            let c2 = ConeSet::synthetic(axes[1], orients[1], 0.1).unwrap();
            let f = starts.map(Vec2::from_angle);
            let r =
                schedule_overtaking(f[0], f[1], t1, t2, [&c1, &c2], None).map_err(|e| format!("({t1}, {t2}): {e}"))?;
            for (i, t) in [t1, t2].into_iter().enumerate() {
                let phi = starts[i] + r.k as f64 * t;
                ensure(angle_status(phi, axes[i], orients[i], 0.1 * (1.0 - 1e-9)) == Some(r.common_sign), || {
                    format!("({t1}, {t2}) k = {}: target {i} misplaced", r.k)
                })?;
            }
            worst_k = worst_k.max(r.k);
            done += 1;
        }
    }
    let c = ConeSet::synthetic(0.3, 1, 0.1).unwrap();
    for _ in 0..100 {
        let t1 = rng.gen_range(0.05..PI - 0.05);
        let r = schedule_overtaking(Vec2::E1, Vec2::E2, t1, PI - t1, [&c, &c], None);
        ensure(matches!(r, Err(ScheduleError::InvalidPair { .. })), || format!("theta1 = {t1} accepted: {r:?}"))?;
    }
    Ok(format!("2000 pairs scheduled (largest k {worst_k}), 100 mirrored pairs rejected"))
}

struct SingleRun {
    label: &'static str,
    a: Vec<f64>,
    b: Vec<f64>,
    lambda: f64,
    c: f64,
    c0: f64,
    result: EmbedResult,
}

fn single_run(label: &'static str, a: Vec<f64>, b: Vec<f64>, target: EmbedTarget, c: f64, c0: f64) -> SingleRun {
    let op = PeriodicJacobiOperator::new(a.clone(), b.clone()).unwrap();
    let result = embed_single(&op, &target, c0, 10_000, &EmbedConfig::default()).expect("embedding runs");
    SingleRun { label, a, b, lambda: target.lambda, c, c0, result }
}

fn single_checks(t: &mut Tally, run: &SingleRun, elapsed: Duration) {
    let r = &run.result;
    let u = &r.eigenvectors[0];
    let res = recurrence_residual(&run.a, &run.b, r.potential.entries(), run.lambda, u);
    let name = |s: &str| format!("{s}, {}", run.label);
    let outcome = if elapsed > Duration::from_secs(60) {
        Err("embedding over time budget of 60s".into())
    } else if res <= 1e-12 {
        Ok(format!("{res:.1e} <= 1e-12"))
    } else {
        Err(format!("{res:.1e} > 1e-12"))
    };
    t.line("7a", &name("eigen-recurrence residual"), elapsed, outcome);

    let expected = -run.c * run.c0;
    let fit = decay_fit(&r.diagnostics.norm_series(0)).map(|f| f.slope);
    let (lo, hi) = (1.3 * expected, 0.7 * expected);
    let outcome = match fit {
        Ok(s) if (lo..=hi).contains(&s) => Ok(format!("slope {s:.3} in [{lo:.3}, {hi:.3}]")),
        Ok(s) => Err(format!("slope {s:.3} outside [{lo:.3}, {hi:.3}] around -C c0 = {expected:.3}")),
        Err(e) => Err(e.to_string()),
    };
    t.line("7b", &name("decay slope vs -C c0"), Duration::ZERO, outcome);

    let share = tail_share(u);
    t.line(
        "7c",
        &name("tail share"),
        Duration::ZERO,
        if share < 0.05 { Ok(format!("{share:.2e} < 0.05")) } else { Err(format!("{share:.2e}")) },
    );

    // stage i sits at n <= 1 + T i (rmax + 1) with |q| <= c0 / (i + i0)
    let period = run.a.len() as f64;
    let rmax = r.diagnostics.stages.iter().map(|s| s.rotations).max().unwrap_or(0) as f64;
    let bound = run.c0 * (1.0 + period * (rmax + 1.0));
    let sup = r.potential.entries().iter().map(|&(n, v)| v.abs() * n as f64).fold(0.0, f64::max);
    let len = r.potential.len();
    let tail_sup = r.potential.entries()[len / 2..].iter().map(|&(n, v)| v.abs() * n as f64).fold(0.0, f64::max);
    t.line(
        "7d",
        &name("|q_n| n bounded"),
        Duration::ZERO,
        if sup <= bound && len == 10_000 {
            Ok(format!("sup {sup:.2}, second-half sup {tail_sup:.2}, bound {bound:.2}"))
        } else {
            Err(format!("sup {sup:.2} vs bound {bound:.2}, {len} sites"))
        },
    );
}

fn single_embeddings(t: &mut Tally) {
    let start = Instant::now();
    // C = (2 / a1) ||W^T e2|| ||R(-theta) W^{-1} M B1^{-1} e2|| sin^2 eps, here (4 / sqrt 3) sin^2 0.2
    let c_dso = 4.0 / 3f64.sqrt() * 0.2f64.sin().powi(2);
    let dso = single_run(
        "DSO lambda = 1",
        vec![1.0],
        vec![0.0],
        EmbedTarget::new(1.0, ThetaClass::Rational { p: 1, q: 3 }, 0.2),
        c_dso,
        25.0,
    );
    single_checks(t, &dso, start.elapsed());

    let start = Instant::now();
    let (a, b) = (vec![1.0, 1.0], vec![1.0, -1.0]);
    let op = PeriodicJacobiOperator::new(a.clone(), b.clone()).unwrap();
    let lambda = op.solve_trace(1.0, 1.0, 5f64.sqrt()).expect("trace 1 inside (1, sqrt 5)");
    let eps = 0.2;
    let c = EllipticFrame::new(&op, lambda).unwrap().shrink_constant(eps);
    // same product C c0 as the free case
    let c0 = c_dso * 25.0 / c;
    let two = single_run(
        "period 2, trace 1",
        a,
        b,
        EmbedTarget::new(lambda, ThetaClass::Rational { p: 1, q: 3 }, eps),
        c,
        c0,
    );
    single_checks(t, &two, start.elapsed());
}

fn norm_slope(r: &EmbedResult, i: usize) -> Result<f64, String> {
    decay_fit(&r.diagnostics.norm_series(i)).map(|f| f.slope).map_err(|e| e.to_string())
}

fn envelope_sup(r: &EmbedResult) -> f64 {
    r.potential
        .entries()
        .iter()
        .map(|&(n, v)| v.abs() * n as f64 / (1.0 + (n as f64).ln_1p()).powi(3))
        .fold(0.0, f64::max)
}

fn two_independents() -> Check {
    let op = PeriodicJacobiOperator::discrete_schrodinger();
    let targets = [1.0, 2f64.sqrt() - 0.3].map(|th| EmbedTarget::new(2.0 * f64::cos(th), ThetaClass::Independent, 0.1));
    let schedule = StepSchedule::Envelope { envelope: Envelope::LogCubed };
    let r = embed_multi(&op, &targets, schedule, 3000, RouteRequest::Auto, &EmbedConfig::default())
        .map_err(|e| e.to_string())?;
    let slopes = [norm_slope(&r, 0)?, norm_slope(&r, 1)?];
    let env = envelope_sup(&r);
    let detail = format!("slopes {:.2} and {:.2}, sup |q_n| n / K(n) = {env:.3}", slopes[0], slopes[1]);
    ensure(slopes.iter().all(|&s| s < 0.0) && env <= 1.0, || detail.clone())?;
    Ok(detail)
}

fn coprime_with_independent() -> Check {
    let op = PeriodicJacobiOperator::discrete_schrodinger();
    let rational = |p: u64, q: u64| {
        let theta = p as f64 * PI / q as f64;
        EmbedTarget::new(2.0 * theta.cos(), ThetaClass::Rational { p, q }, 0.99 * PI / (4.0 * q as f64))
    };
    let targets = [rational(1, 3), rational(1, 5), EmbedTarget::new(2.0 * 1f64.cos(), ThetaClass::Independent, 0.1)];
    let schedule = StepSchedule::Envelope { envelope: Envelope::LogCubed };
    let r = embed_multi(&op, &targets, schedule, 3000, RouteRequest::Coprime, &EmbedConfig::default())
        .map_err(|e| e.to_string())?;
    let slopes = (0..3).map(|i| norm_slope(&r, i)).collect::<Result<Vec<_>, _>>()?;
    ensure(slopes.iter().all(|&s| s < 0.0), || format!("slopes {slopes:?}"))?;

    // replay every stage from the stored eigenvectors
    let frames: Vec<EllipticFrame> = targets.iter().map(|t| EllipticFrame::new(&op, t.lambda).unwrap()).collect();
    let cones: Vec<ConeSet> =
        r.diagnostics.targets.iter().zip(&frames).map(|(s, f)| f.cone_set(s.epsilon).unwrap()).collect();
    for st in &r.diagnostics.stages {
        ensure(st.start_site + st.rotations as usize == st.site - 1, || format!("stage {}: sites", st.stage))?;
        ensure(st.report.k == st.rotations && st.report.common_sign == st.sign, || {
            format!("stage {}: report header", st.stage)
        })?;
        ensure(st.report.per_target.len() == st.active.len(), || format!("stage {}: placements", st.stage))?;
        for (slot, &i) in st.active.iter().enumerate() {
            let u = &r.eigenvectors[i];
            let f0 = frames[i].to_frame(Vec2::new(u[st.start_site], u[st.start_site + 1]));
            let predicted = rotation(st.rotations as f64 * frames[i].theta) * f0;
            let g = frames[i].to_frame(Vec2::new(u[st.site - 1], u[st.site]));
            ensure((predicted - g).norm() <= 1e-8 * g.norm(), || format!("stage {}: target {i} drifted", st.stage))?;
            ensure(!cones[i].contains(g), || format!("stage {}: target {i} in a cone", st.stage))?;
            let placed = &st.report.per_target[slot];
            let status = cones[i].status(g).unwrap();
            ensure(
                status.shrink_sign == st.sign
                    && placed.shrink_sign == st.sign
                    && placed.quadrant == cones[i].quadrant(g),
                || format!("stage {}: target {i} placement differs", st.stage),
            )?;
            let (before, after) = (st.norms_before[i].unwrap(), st.norms_after[i].unwrap());
            ensure(after < before, || format!("stage {}: target {i} did not shrink", st.stage))?;
        }
    }
    Ok(format!(
        "slopes {:.2}, {:.2}, {:.2}; {} stage reports replayed",
        slopes[0],
        slopes[1],
        slopes[2],
        r.diagnostics.stages.len()
    ))
}

fn non_coprime_rejected() -> Check {
    let op = PeriodicJacobiOperator::discrete_schrodinger();
    let rational =
        |p: u64, q: u64| EmbedTarget::new(2.0 * (p as f64 * PI / q as f64).cos(), ThetaClass::Rational { p, q }, 0.05);
    let targets = [rational(1, 4), rational(1, 6)];
    let plan = plan_stages(&op, &targets, RouteRequest::Coprime);
    ensure(matches!(plan, Err(EmbedError::InadmissibleSet { .. })), || format!("plan: {plan:?}"))?;
    let schedule = StepSchedule::Envelope { envelope: Envelope::LogCubed };
    let run = embed_multi(&op, &targets, schedule, 10, RouteRequest::Coprime, &EmbedConfig::default());
    ensure(matches!(run, Err(EmbedError::InadmissibleSet { .. })), || "embedding accepted".into())?;
    Ok("1/4 with 1/6 rejected".into())
}

fn cli_round_trip() -> Check {
    let bin = env!("CARGO_BIN_EXE_spectral-embedder");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    fs::write(p("op.json"), r#"{"period": 1, "a": [1.0], "b": [0.0]}"#).unwrap();
    fs::write(
        p("targets.json"),
        r#"[{"lambda": 1.0, "theta_class": {"type": "rational", "p": 1, "q": 3}, "epsilon": 0.2}]"#,
    )
    .unwrap();
    let s = |path: &Path| path.to_str().unwrap().to_owned();
    let embed = |out: &str| {
        Command::new(bin)
            .args(["embed", "--operator", &s(&p("op.json")), "--targets", &s(&p("targets.json"))])
            .args(["--out", &s(&p(out)), "--K", "none", "--stages", "800"])
            .env_remove("SPECTRAL_EMBEDDER_CAP")
            .output()
            .map_err(|e| e.to_string())
    };
    ensure(embed("a")?.status.code() == Some(0), || "first embed failed".into())?;
    ensure(embed("b")?.status.code() == Some(0), || "second embed failed".into())?;
    let verify = Command::new(bin)
        .args(["verify", "--operator", &s(&p("op.json")), "--potential", &s(&p("a/potential.csv"))])
        .args(["--eigenvector", &s(&p("a/eigenvector_0.csv")), "--lambda", "1.0", "--K", "none"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(verify.status.code() == Some(0), || format!("verify exit {:?}", verify.status.code()))?;
    let files = ["potential.csv", "eigenvector_0.csv", "diagnostics.json", "report.json"];
    for f in files {
        let (x, y) = (fs::read(p("a").join(f)).unwrap(), fs::read(p("b").join(f)).unwrap());
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!("verify exit 0, {} output files byte-identical", files.len()))
}

fn main() {
    let mut t = Tally { failed: Vec::new() };
    let secs = Duration::from_secs;
    t.run("1", "conjugation and orthogonality", secs(10), conjugation_suite);
    t.run("2", "band structure", secs(5), band_structure);
    t.run("3", "single rational rotate-out", secs(30), single_rational_rotate_out);
    t.run("4", "orbits and quadrant coverage", secs(30), orbits_and_coverage);
    t.run("5", "CRT schedules", secs(60), crt_instances);
    t.run("6", "overtaking pairs", secs(30), overtaking_pairs);
    single_embeddings(&mut t);
    let multi = Instant::now();
    t.run("8a", "two independent targets", secs(300), two_independents);
    t.run("8b", "coprime rationals with an independent", secs(300), coprime_with_independent);
    t.run("8c", "non-coprime rationals", secs(300), non_coprime_rejected);
    let total = multi.elapsed();
    t.line(
        "8",
        "multi embedding runtime",
        total,
        if total < secs(300) { Ok("under 5 min".into()) } else { Err("over 5 min".into()) },
    );
    t.run("9", "CLI round trip", secs(120), cli_round_trip);

    if t.failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed: {}", t.failed.join(", "));
        std::process::exit(1);
    }
}
