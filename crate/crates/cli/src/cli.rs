//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use orchard_core::{OdometryMode, Protocol};

#[derive(Debug, Parser)]
#[command(name = "orchard", version, about = "Orchard trunk-map localization: simulate, evaluate, tune")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic orchard map.
    Genmap(GenmapArgs),
    /// Simulate the straight-row and row-change campaign logs.
    Simulate(SimulateArgs),
    /// Run an evaluation protocol over the campaign.
    Evaluate(EvaluateArgs),
    /// Receiver offset analysis over the straight-row logs.
    Drift(Common),
    /// Serve interactive replay sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Map file [default: <out>/maps/orchard.json].
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory holding maps/, logs/, results/ and manifests/.
    #[arg(long, env = "SEETREE_OUT", default_value = "out")]
    pub out: PathBuf,
}

impl Common {
    pub fn map_path(&self) -> PathBuf {
        self.map.clone().unwrap_or_else(|| crate::manifest::default_map(&self.out))
    }
}

#[derive(Clone, Debug, Args)]
pub struct GenmapArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 20)]
    pub rows: usize,
    /// Trees (and posts) per row.
    #[arg(long, default_value_t = 50)]
    pub trees: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Only {
    Straight,
    Turns,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Write only one half of the campaign.
    #[arg(long, value_enum)]
    pub only: Option<Only>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    One(OdometryMode),
    All,
}

impl ModeArg {
    pub fn modes(self) -> Vec<OdometryMode> {
        match self {
            ModeArg::One(m) => vec![m],
            ModeArg::All => OdometryMode::ALL.to_vec(),
        }
    }
}

fn parse_mode(s: &str) -> Result<ModeArg, String> {
    if s == "all" {
        Ok(ModeArg::All)
    } else {
        s.parse().map(ModeArg::One).map_err(|e| format!("{e}; expected wheel, wheel_imu, visual, gnss or all"))
    }
}

#[derive(Clone, Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Filter parameter file; fields present override the defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "rows-large", value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<Protocol>()))]
    pub protocol: Protocol,
    #[arg(long, default_value = "all", value_parser = clap::builder::ValueParser::new(parse_mode))]
    pub mode: ModeArg,
}

#[derive(Clone, Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
