mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAIL: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "qrmms",
    version,
    about = "Quasiregular maps on finite metric measure spaces"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory for report.json and CSV sidecars; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Largest source size for the exact pullback metric.
    #[arg(long, global = true, default_value_t = qrmms::pullback::DEFAULT_EXACT_CAP)]
    exact_cap: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Full invariant scan of a space or map file.
    Validate { file: PathBuf },
    /// Pullback metric bracket or exact matrix, with factorization checks.
    Pullback {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Exact)]
        metric: Metric,
        /// Longest enumerated path used by the curve checks.
        #[arg(long, default_value_t = 6)]
        max_edges: usize,
    },
    /// Pullback measure, Jacobians and Condition N checks.
    Measure {
        #[arg(long)]
        map: PathBuf,
    },
    /// p-modulus of a curve family.
    Modulus {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = WeightKind::Mass)]
        weight: WeightKind,
    },
    /// Certificates for one property of a map.
    Verify(VerifyArgs),
    /// Bi-Lipschitz embedding of the source into the target times a Euclidean factor.
    Embed {
        #[arg(long)]
        map: PathBuf,
    },
    /// Writes generated spaces and maps as JSON files.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, value_enum)]
    property: Property,
    /// Constant to certify; the tight estimate is reported either way.
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    radius_cap: Option<f64>,
    /// Exponent for the modulus-based properties.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Family files over the source (ko, ki) or explicit source curves (vaisala).
    #[arg(long)]
    family: Vec<PathBuf>,
    /// Explicit target curves for vaisala.
    #[arg(long)]
    image_family: Option<PathBuf>,
    /// Lift count for vaisala.
    #[arg(long, default_value_t = 1)]
    lifts: usize,
    /// Vertices within this source distance of the branch set are excluded (analytic-qr).
    #[arg(long, default_value_t = 0.0)]
    exclude_radius: f64,
    #[arg(long, default_value_t = 6)]
    max_edges: usize,
    #[arg(long, default_value_t = 200)]
    random_curves: usize,
    /// Continuum sample size for bqs.
    #[arg(long, default_value_t = 400)]
    continua: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Exact,
    Lower,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Unit,
    Mass,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Bld,
    Bdd,
    Lq,
    MetricQr,
    InverseQr,
    Bqs,
    Ko,
    Ki,
    Vaisala,
    AnalyticQr,
}

#[derive(Subcommand, Debug)]
pub enum GenKind {
    /// Annulus grid; also writes `<name>.rings.json`, the inner-to-outer ring family.
    PolarGrid {
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        sectors: usize,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = std::f64::consts::E)]
        r1: f64,
        #[arg(long, default_value = "polar_grid")]
        name: String,
    },
    PolarDisk {
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        sectors: usize,
        #[arg(long, default_value_t = 1.0)]
        r1: f64,
        #[arg(long, default_value = "polar_disk")]
        name: String,
    },
    Cycle {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "cycle")]
        name: String,
    },
    Path {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "path")]
        name: String,
    },
    Grid {
        #[arg(long)]
        w: usize,
        #[arg(long)]
        h: usize,
        #[arg(long, default_value = "grid")]
        name: String,
    },
    CycleCover {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value = "cycle_cover")]
        name: String,
    },
    Winding {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        sectors: usize,
        #[arg(long, default_value = "winding")]
        name: String,
    },
    /// Identity on a path with one edge stretched.
    Stretch {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        edge: usize,
        #[arg(long)]
        factor: f64,
        #[arg(long, default_value = "stretch")]
        name: String,
    },
    /// Seeded random edge-compatible surjection (uses --seed).
    RandomMap {
        #[arg(long)]
        n_src: usize,
        #[arg(long)]
        n_tgt: usize,
        #[arg(long)]
        collapse: bool,
        #[arg(long, default_value = "random_map")]
        name: String,
    },
    /// Pullback space of a map under the exact metric.
    PullbackSpace {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "pullback_space")]
        name: String,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let echo = echo_args(&argv[1..]);
    let threads = cli.common.threads;
    let outcome = qrmms::par::with_threads(threads, || commands::run(&cli.cmd, &cli.common, echo));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Arguments echoed into the report; the output directory is left out so
/// that reports written to different places compare equal.
fn echo_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

/// Command failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Lib(qrmms::Error),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<qrmms::Error> for CliError {
    fn from(e: qrmms::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(qrmms::Error::TooLarge { .. }) => EXIT_CAP,
            CliError::Lib(_) => EXIT_VALIDATION,
        }
    }
}
