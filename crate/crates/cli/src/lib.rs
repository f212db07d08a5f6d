//! Batch verification runs over the `fgeom` engines, producing JSON or CSV
//! reports with per-check verdicts.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub mod config;
pub mod input;
pub mod report;
pub mod suites;

pub use config::{Command, ConfigError, OutputFormat, PointSource, RunConfig};
pub use report::{Measurement, Record, Report, Summary, Table, Timing, Verdict};

/// Exit code for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;

pub fn run(config: &RunConfig) -> Result<Report, ConfigError> {
    let tol = config.effective_tolerance()?;
    let seed = config.effective_seed()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let clock = Instant::now();
    let out = match &config.command {
        Command::ConeReport { cone, points } => suites::cone_report(cone, points, seed, tol)?,
        Command::ConeMcCheck {
            cone,
            points,
            samples,
        } => suites::cone_mc_check(cone, points, *samples, seed, tol)?,
        Command::FIdentity {
            cone,
            trials,
            degree,
        } => suites::f_identity(cone, *trials, *degree, seed, tol)?,
        Command::Wdvv { potential, points } => suites::wdvv(potential, points, seed, tol)?,
        Command::Pencil { potential, points } => suites::pencil(potential, points, seed, tol)?,
        Command::DualFlat { cone, points } => suites::dual_flat(cone, points, seed, tol)?,
        Command::Dolbeault {
            dim,
            trials,
            degree,
        } => suites::dolbeault(*dim, *trials, *degree, seed, tol)?,
        Command::SaitoTable { n, points } => suites::saito_table(*n, points, seed, tol)?,
        Command::SaitoExport { n, points, export } => {
            suites::saito_export(*n, points, export.as_deref(), seed, tol)?
        }
        Command::SimplexGeodesic {
            dim,
            trials,
            steps,
            from,
            to,
        } => suites::simplex_geodesic_suite(
            *dim,
            *trials,
            *steps,
            from.as_deref(),
            to.as_deref(),
            seed,
            tol,
        )?,
        Command::MarkovLaws { dims, trials } => suites::markov_laws(dims, *trials, seed, tol)?,
    };
    let mut echo = config.clone();
    echo.tolerance = Some(tol);
    if config.command.is_random() {
        echo.seed = Some(seed);
    }
    Ok(Report::new(
        echo,
        out.records,
        out.measurements,
        out.table,
        Timing {
            started_unix_ms: started,
            wall_seconds: clock.elapsed().as_secs_f64(),
        },
    ))
}

/// Runs, writes the report to the configured destination and returns the
/// process exit code.
pub fn execute(config: &RunConfig) -> i32 {
    let report = match run(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let text = report.render(config.format);
    match &config.output {
        Some(path) => {
            if let Err(e) = report::write_atomic(path, &text) {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
        None => print!("{text}"),
    }
    let s = report.summary;
    eprintln!(
        "{}: {} checks, {} passed, {} failed",
        report.command, s.total, s.passed, s.failed
    );
    report.exit_code()
}
