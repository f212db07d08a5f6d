use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Anything wrong with the invocation itself; maps to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("a seed is required for randomized runs (use --seed or FGEOM_SEED)")]
    MissingSeed,
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("cannot write report: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Where evaluation points come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Inline(Vec<Vec<f64>>),
    Csv(PathBuf),
    Random(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "suite", rename_all = "kebab-case")]
pub enum Command {
    ConeReport {
        cone: String,
        points: PointSource,
    },
    ConeMcCheck {
        cone: String,
        points: PointSource,
        samples: usize,
    },
    FIdentity {
        cone: String,
        trials: usize,
        degree: u32,
    },
    Wdvv {
        potential: PathBuf,
        points: PointSource,
    },
    Pencil {
        potential: PathBuf,
        points: PointSource,
    },
    DualFlat {
        cone: String,
        points: PointSource,
    },
    Dolbeault {
        dim: usize,
        trials: usize,
        degree: u32,
    },
    SaitoTable {
        n: usize,
        points: PointSource,
    },
    SaitoExport {
        n: usize,
        points: PointSource,
        #[serde(skip)]
        export: Option<PathBuf>,
    },
    SimplexGeodesic {
        dim: usize,
        trials: usize,
        steps: usize,
        from: Option<Vec<f64>>,
        to: Option<Vec<f64>>,
    },
    MarkovLaws {
        dims: Vec<usize>,
        trials: usize,
    },
}

impl Command {
    /// Name as typed on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Command::ConeReport { .. } => "cone report",
            Command::ConeMcCheck { .. } => "cone mc-check",
            Command::FIdentity { .. } => "check f-identity",
            Command::Wdvv { .. } => "check wdvv",
            Command::Pencil { .. } => "check pencil",
            Command::DualFlat { .. } => "check dual-flat",
            Command::Dolbeault { .. } => "check dolbeault",
            Command::SaitoTable { .. } => "saito table",
            Command::SaitoExport { .. } => "saito export-wdvv",
            Command::SimplexGeodesic { .. } => "simplex geodesic",
            Command::MarkovLaws { .. } => "markov laws",
        }
    }

    /// Tolerance used when none is given.
    pub fn default_tolerance(&self) -> f64 {
        match self {
            Command::ConeReport { .. } => 1e-9,
            // in combined standard errors
            Command::ConeMcCheck { .. } => 3.0,
            Command::FIdentity { .. } => 1e-6,
            Command::Wdvv { .. } | Command::Pencil { .. } => 1e-8,
            Command::DualFlat { .. } => 1e-5,
            Command::Dolbeault { .. } => 1e-9,
            Command::SaitoTable { .. } | Command::SaitoExport { .. } => 1e-8,
            Command::SimplexGeodesic { .. } => 1e-12,
            Command::MarkovLaws { .. } => 1e-13,
        }
    }

    /// Whether the run draws random numbers.
    pub fn is_random(&self) -> bool {
        let random_points = |p: &PointSource| matches!(p, PointSource::Random(_));
        match self {
            Command::ConeReport { points, .. }
            | Command::Wdvv { points, .. }
            | Command::Pencil { points, .. }
            | Command::DualFlat { points, .. }
            | Command::SaitoTable { points, .. }
            | Command::SaitoExport { points, .. } => random_points(points),
            Command::ConeMcCheck { .. }
            | Command::FIdentity { .. }
            | Command::Dolbeault { .. }
            | Command::MarkovLaws { .. } => true,
            Command::SimplexGeodesic { from, to, .. } => from.is_none() || to.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            seed: None,
            tolerance: None,
            output: None,
            format: OutputFormat::Json,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn effective_tolerance(&self) -> Result<f64, ConfigError> {
        let t = self
            .tolerance
            .unwrap_or_else(|| self.command.default_tolerance());
        if !(t.is_finite() && t > 0.0) {
            return Err(ConfigError::BadTolerance(t));
        }
        Ok(t)
    }

    /// The seed, required only when the suite is randomized.
    pub fn effective_seed(&self) -> Result<u64, ConfigError> {
        match self.seed {
            Some(s) => Ok(s),
            None if self.command.is_random() => Err(ConfigError::MissingSeed),
            None => Ok(0),
        }
    }
}
