use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tribaker", version, about = "Open tri-baker maps: spectra, Husimi grids, norm ratios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resonance spectra (default l=5).
    Spectrum(CommonArgs),
    /// Modulus histograms (default l=7, k in {1,3,5,7}, 100 bins).
    Histogram(CommonArgs),
    /// Husimi grids of resonances, cumulative projectors and the repeller.
    Husimi(HusimiArgs),
    /// Norm-ratio tables (default l=6, grid 243).
    NrScan(CommonArgs),
    /// Exact survival areas, Monte-Carlo cross-check and escape rates.
    Classical(ClassicalArgs),
    /// Run the acceptance suite and write a pass/fail manifest.
    Acceptance(AcceptanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Shift,
    Intersection,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Pgm,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Number of qutrits, D = 3^l.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Comma-separated member indices.
    #[arg(long, value_delimiter = ',', conflicts_with = "k_range")]
    pub k: Option<Vec<usize>>,
    /// Inclusive range such as `2..5`.
    #[arg(long)]
    pub k_range: Option<String>,
    /// Husimi grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Number of leading resonances to average over (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub first: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Args)]
pub struct HusimiArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Resonance indices j for ĥ_j grids.
    #[arg(long, value_delimiter = ',')]
    pub states: Option<Vec<usize>>,
    /// Indices j for cumulative Q̂_j grids.
    #[arg(long, value_delimiter = ',')]
    pub cumulative: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassicalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
}

#[derive(Debug, Clone, Args)]
pub struct AcceptanceArgs {
    #[arg(long, default_value = "acceptance-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub no_cache: bool,
}
