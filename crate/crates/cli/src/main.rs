use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgeom_cli::{input, Command, OutputFormat, PointSource, RunConfig};

#[derive(Parser)]
#[command(name = "fgeom", version, about = "Pointwise checks of F-manifold structures")]
struct Cli {
    #[command(subcommand)]
    group: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Characteristic functions and Hessian metrics of convex cones
    #[command(subcommand)]
    Cone(ConeCmd),
    /// Identity and curvature checks
    #[command(subcommand)]
    Check(CheckCmd),
    /// The A_n singularity unfolding
    #[command(subcommand)]
    Saito(SaitoCmd),
    /// Geodesics on the probability simplex
    #[command(subcommand)]
    Simplex(SimplexCmd),
    /// Markov kernels between finite sets
    #[command(subcommand)]
    Markov(MarkovCmd),
}

#[derive(Subcommand)]
enum ConeCmd {
    /// Metric and characteristic function at points of a cone
    Report {
        #[arg(long)]
        cone: String,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo characteristic-function ratios against closed forms
    McCheck {
        #[arg(long)]
        cone: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    /// F-identity, commutativity and associativity on random polynomial fields
    FIdentity {
        #[arg(long)]
        cone: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        degree: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Associativity (WDVV) residuals of a potential
    Wdvv {
        #[arg(long)]
        potential: PathBuf,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Curvature coefficients of the structure connection pencil
    Pencil {
        #[arg(long)]
        potential: PathBuf,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Flatness of the zero and full connections of a cone
    DualFlat {
        #[arg(long)]
        cone: String,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Gauge invariance of the paracomplex Dolbeault form
    Dolbeault {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        degree: u32,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum SaitoCmd {
    /// Residue and trace pairings over parameter points
    Table {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Export the flat-coordinate potential and check it
    ExportWdvv {
        #[arg(long)]
        n: usize,
        /// Also write the potential JSON here
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        points: PointArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum SimplexCmd {
    /// Straight-line geodesics between distributions
    Geodesic {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, value_parser = coords, allow_hyphen_values = true)]
        from: Option<Coords>,
        #[arg(long, value_parser = coords, allow_hyphen_values = true)]
        to: Option<Coords>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum MarkovCmd {
    /// Identity, associativity, functoriality and coarse-graining laws
    Laws {
        #[arg(long, value_delimiter = ',', default_value = "3,4,2")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Comma-separated coordinates.
#[derive(Clone)]
struct Coords(Vec<f64>);

fn coords(s: &str) -> Result<Coords, String> {
    input::parse_vector(s).map(Coords)
}

#[derive(Args)]
struct PointArgs {
    /// CSV file with one point per row
    #[arg(long, conflicts_with_all = ["random", "at"])]
    points: Option<PathBuf>,
    /// Number of seeded random points
    #[arg(long)]
    random: Option<usize>,
    /// Inline point, comma separated; repeatable
    #[arg(long, value_parser = coords, allow_hyphen_values = true, conflicts_with = "random")]
    at: Vec<Coords>,
}

impl PointArgs {
    fn source(self, default_random: usize) -> PointSource {
        if let Some(p) = self.points {
            PointSource::Csv(p)
        } else if !self.at.is_empty() {
            PointSource::Inline(self.at.into_iter().map(|c| c.0).collect())
        } else {
            PointSource::Random(self.random.unwrap_or(default_random))
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long, env = "FGEOM_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Report destination; standard output when absent
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn config(command: Command, common: Common) -> RunConfig {
    RunConfig {
        command,
        seed: common.seed,
        tolerance: common.tol,
        output: common.output,
        format: match common.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.group {
        Group::Cone(ConeCmd::Report { cone, points, common }) => config(
            Command::ConeReport {
                cone,
                points: points.source(20),
            },
            common,
        ),
        Group::Cone(ConeCmd::McCheck {
            cone,
            samples,
            points,
            common,
        }) => config(
            Command::ConeMcCheck {
                cone,
                points: points.source(3),
                samples,
            },
            common,
        ),
        Group::Check(CheckCmd::FIdentity {
            cone,
            trials,
            degree,
            common,
        }) => config(Command::FIdentity { cone, trials, degree }, common),
        Group::Check(CheckCmd::Wdvv {
            potential,
            points,
            common,
        }) => config(
            Command::Wdvv {
                potential,
                points: points.source(20),
            },
            common,
        ),
        Group::Check(CheckCmd::Pencil {
            potential,
            points,
            common,
        }) => config(
            Command::Pencil {
                potential,
                points: points.source(20),
            },
            common,
        ),
        Group::Check(CheckCmd::DualFlat { cone, points, common }) => config(
            Command::DualFlat {
                cone,
                points: points.source(50),
            },
            common,
        ),
        Group::Check(CheckCmd::Dolbeault {
            dim,
            trials,
            degree,
            common,
        }) => config(Command::Dolbeault { dim, trials, degree }, common),
        Group::Saito(SaitoCmd::Table { n, points, common }) => config(
            Command::SaitoTable {
                n,
                points: points.source(100),
            },
            common,
        ),
        Group::Saito(SaitoCmd::ExportWdvv {
            n,
            export,
            points,
            common,
        }) => config(
            Command::SaitoExport {
                n,
                points: points.source(20),
                export,
            },
            common,
        ),
        Group::Simplex(SimplexCmd::Geodesic {
            dim,
            trials,
            steps,
            from,
            to,
            common,
        }) => config(
            Command::SimplexGeodesic {
                dim,
                trials,
                steps,
                from: from.map(|c| c.0),
                to: to.map(|c| c.0),
            },
            common,
        ),
        Group::Markov(MarkovCmd::Laws {
            dims,
            trials,
            common,
        }) => config(Command::MarkovLaws { dims, trials }, common),
    };
    ExitCode::from(fgeom_cli::execute(&cfg) as u8)
}
