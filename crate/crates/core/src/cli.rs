//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input or usage error,
//! 3 search budget exhausted, 4 inadmissible targets.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::embedder::{
    embed_multi, embed_single, EmbedConfig, EmbedError, EmbedResult, Envelope, RouteRequest, StepSchedule,
};
use crate::frame::FrameError;
use crate::io::{self, IoError};
use crate::jacobi::{Band, SpectralClass, PARABOLIC_TOL};
use crate::scheduler::ScheduleError;
use crate::verify::{self, boundary_norms, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_ADMISSIBILITY: i32 = 4;

/// Environment variable overriding every rotation search cap.
pub const CAP_ENV: &str = "SPECTRAL_EMBEDDER_CAP";

#[derive(Debug, Parser)]
#[command(name = "spectral-embedder", version, about = "Embed eigenvalues into bands of periodic Jacobi operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KChoice {
    /// K(n) = (1 + ln(1 + n))^3
    Default,
    /// Coulomb steps c0 / (m + i0), no envelope check
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Auto,
    Independent,
    OneRational,
    Overtaking,
    Coprime,
}

impl From<RouteArg> for RouteRequest {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Auto => RouteRequest::Auto,
            RouteArg::Independent => RouteRequest::Independent,
            RouteArg::OneRational => RouteRequest::OneRational,
            RouteArg::Overtaking => RouteRequest::Overtaking,
            RouteArg::Coprime => RouteRequest::Coprime,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan the spectral classification over a lambda grid.
    Bands {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long)]
        step: f64,
        /// Directory for bands.csv and bands.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a potential embedding the given targets.
    Embed {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Step constant for Coulomb schedules.
        #[arg(long, default_value_t = 25.0)]
        c0: f64,
        /// Number of shrink stages.
        #[arg(long, default_value_t = 1000)]
        stages: u64,
        /// Largest site index to emit.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "K", value_enum, default_value_t = KChoice::Default)]
        k: KChoice,
        #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
        route: RouteArg,
        #[arg(long, default_value_t = crate::embedder::DEFAULT_I0)]
        i0: f64,
    },
    /// Re-check an eigenvector against an operator and potential.
    Verify {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        eigenvector: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long = "K", value_enum, default_value_t = KChoice::Default)]
        k: KChoice,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e)
    }
}

fn embed_exit_code(e: &EmbedError) -> i32 {
    match e {
        EmbedError::Schedule(ScheduleError::CapExceeded { .. }) | EmbedError::HalvingExhausted { .. } => EXIT_CAP,
        EmbedError::NoTargets | EmbedError::InvalidConstant | EmbedError::Frame(FrameError::Jacobi(_)) => EXIT_INPUT,
        EmbedError::EnvelopeViolated { .. } => EXIT_VERIFY,
        _ => EXIT_ADMISSIBILITY,
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        let message = match &e {
            EmbedError::HalfPiQuasiMomentum { .. } => {
                format!("{e} (targets with theta = pi/2 cannot be rotated out of the bad cones)")
            }
            _ => e.to_string(),
        };
        Self { code: embed_exit_code(&e), message }
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Bands { operator, lo, hi, step, out } => cmd_bands(&operator, lo, hi, step, out.as_deref()),
        Command::Embed { operator, targets, c0, stages, horizon, out, k, route, i0 } => {
            cmd_embed(&operator, &targets, c0, stages, horizon, &out, k, route.into(), i0)
        }
        Command::Verify { operator, potential, eigenvector, lambda, k, out } => {
            cmd_verify(&operator, &potential, &eigenvector, lambda, k, out.as_deref())
        }
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[derive(Serialize)]
struct BandSummary<'a> {
    lo: f64,
    hi: f64,
    step: f64,
    bands: &'a [Band],
}

fn cmd_bands(operator: &Path, lo: f64, hi: f64, step: f64, out: Option<&Path>) -> Result<i32, Failure> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Failure::input(format!("empty scan range [{lo}, {hi}]")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Failure::input(format!("step must be positive, got {step}")));
    }
    let op = io::read_operator(operator)?;
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let rows: Vec<(f64, f64, &str)> = (0..count)
        .map(|i| {
            let lambda = lo + i as f64 * step;
            let trace = op.trace(lambda);
            (lambda, trace, SpectralClass::from_trace(trace, PARABOLIC_TOL).label())
        })
        .collect();
    let bands = op.elliptic_bands(lo, hi, step);
    let summary = BandSummary { lo, hi, step, bands: &bands };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
        io::write_bands_csv(&dir.join("bands.csv"), &rows)?;
        io::write_json(&dir.join("bands.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(EXIT_OK)
}

fn cap_from_env() -> Result<Option<u64>, Failure> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::input(format!("{CAP_ENV} must be a nonnegative integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(
    operator: &Path,
    targets: &Path,
    c0: f64,
    stages: u64,
    horizon: Option<usize>,
    out: &Path,
    k: KChoice,
    route: RouteRequest,
    i0: f64,
) -> Result<i32, Failure> {
    let op = io::read_operator(operator)?;
    let targets = io::read_targets(targets)?;
    if !(i0.is_finite() && i0 >= 0.0) {
        return Err(Failure::input("i0 must be nonnegative"));
    }
    let config = EmbedConfig { i0, cap: cap_from_env()?, horizon, ..EmbedConfig::default() };
    let envelope = (k == KChoice::Default).then_some(Envelope::LogCubed);
    let result: EmbedResult = match (targets.as_slice(), envelope) {
        ([single], None) => embed_single(&op, single, c0, stages, &config)?,
        (_, None) => embed_multi(&op, &targets, StepSchedule::Coulomb { c0 }, stages, route, &config)?,
        (_, Some(env)) => embed_multi(&op, &targets, StepSchedule::Envelope { envelope: env }, stages, route, &config)?,
    };

    fs::create_dir_all(out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    io::write_potential_csv(&out.join("potential.csv"), &result.potential)?;
    for (i, u) in result.eigenvectors.iter().enumerate() {
        io::write_eigenvector_csv(&out.join(format!("eigenvector_{i}.csv")), u)?;
    }
    io::write_json(&out.join("diagnostics.json"), &result.diagnostics)?;
    let report = verify::verify_result(&op, &result, envelope).map_err(Failure::input)?;
    io::write_json(&out.join("report.json"), &report)?;

    println!(
        "stages {} sites {} max residual {:.3e} slopes {:?}",
        result.diagnostics.stages.len(),
        result.diagnostics.horizon,
        report.max_residual,
        report.decay_slope
    );
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_verify(
    operator: &Path,
    potential: &Path,
    eigenvector: &Path,
    lambda: f64,
    k: KChoice,
    out: Option<&Path>,
) -> Result<i32, Failure> {
    let op = io::read_operator(operator)?;
    let pot = io::read_potential_csv(potential, op.period())?;
    let u = io::read_eigenvector_csv(eigenvector)?;
    let norms = boundary_norms(&u, op.period());
    let target = verify::verify_target(&op, &pot, lambda, &u, &norms).map_err(Failure::input)?;
    let envelope = (k == KChoice::Default).then(|| verify::envelope_check(&pot, Envelope::LogCubed));
    let report = VerificationReport::assemble(vec![target], envelope);
    let text = serde_json::to_string_pretty(&report).expect("serializable");
    println!("{text}");
    if let Some(path) = out {
        io::write_json(path, &report)?;
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_for_embed_errors() {
        assert_eq!(embed_exit_code(&EmbedError::Schedule(ScheduleError::CapExceeded { cap: 1 })), EXIT_CAP);
        assert_eq!(embed_exit_code(&EmbedError::HalfPiQuasiMomentum { lambda: 0.0 }), EXIT_ADMISSIBILITY);
        assert_eq!(embed_exit_code(&EmbedError::InadmissibleSet { reason: String::new() }), EXIT_ADMISSIBILITY);
        assert_eq!(embed_exit_code(&EmbedError::NoTargets), EXIT_INPUT);
    }

    #[test]
    fn help_exits_zero_and_garbage_exits_two() {
        assert_eq!(run_from(["spectral-embedder", "--help"]), 0);
        assert_eq!(run_from(["spectral-embedder", "frobnicate"]), EXIT_INPUT);
    }
}
