use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "gjms", version, about = "Spectra, nodal sets and conformal invariants of GJMS operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analytic (Heisenberg) or grid spectrum as CSV.
    Spectrum(SpectrumArgs),
    /// Negative-eigenvalue counts over an s-sweep, with a log-log growth fit.
    Negcount(NegcountArgs),
    /// Conformal invariance battery as JSON.
    Battery(Common),
    /// Nodal partition of a null eigenvector as CSV.
    Nullvec(NullvecArgs),
    /// Whether the kernel basis admits a nowhere-vanishing combination, as JSON.
    Qk(Common),
    /// Symmetric form of an assembled operator as (row, col, value) text.
    ExportMatrix(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Delta,
    Yamabe,
    Paneitz,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// torus, heis, or a model TOML file.
    #[arg(long)]
    pub model: Option<String>,
    /// Heisenberg dimension parameter.
    #[arg(long)]
    pub d: Option<usize>,
    /// Torus dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Heisenberg scale, or "critical".
    #[arg(long)]
    pub s: Option<String>,
    /// Comma-separated s values.
    #[arg(long, value_delimiter = ',')]
    pub s_sweep: Option<Vec<f64>>,
    /// Points per axis.
    #[arg(long = "N")]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub op: Option<Op>,
    /// Half order of the GJMS operator (1 Yamabe, 2 Paneitz).
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Number of grid eigenvalues when the lattice is too large for a full dense solve.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub tol_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration TOML; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: Common,
    /// Closed-form spectrum (Heisenberg only).
    #[arg(long, conflicts_with = "grid")]
    pub analytic: bool,
    /// Eigenvalues of the assembled operator.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Args, Debug)]
pub struct NegcountArgs {
    #[command(flatten)]
    pub common: Common,
    /// Count with grid inertia at --N instead of the closed form.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Args, Debug)]
pub struct NullvecArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sample Re u_+ at the critical s instead of solving for the kernel.
    #[arg(long)]
    pub analytic: bool,
    /// Which kernel basis vector to partition.
    #[arg(long, default_value_t = 0)]
    pub vector: usize,
}
