use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use orchard_cli::cli::{Cli, Command, ServeArgs};
use orchard_cli::commands::{self, load_logs, load_map, load_params};
use orchard_cli::manifest::{RunManifest, LOGS};
use orchard_cli::server::{self, AppState};
use orchard_core::SensorConfig;

fn serve(args: &ServeArgs) -> Result<()> {
    let c = &args.common;
    let map_path = c.map_path();
    let params = load_params(args.params.as_deref())?;
    let mut manifest = RunManifest::new("serve", Some(map_path.clone()), args.params.clone(), c.seed, &c.out);
    manifest.flags = serde_json::json!({ "port": args.port });
    manifest.params_fingerprint = Some(orchard_core::params_fingerprint(&params));
    manifest.write("serve")?;
    let map = load_map(&map_path)?;
    let logs = load_logs(&c.out.join(LOGS), &map)?;
    if logs.is_empty() {
        anyhow::bail!("no logs in {}; run `orchard simulate` first", c.out.join(LOGS).display());
    }
    let app = Arc::new(AppState::new(map, logs, SensorConfig::default(), params, c.seed));
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(server::serve(app, args.port))?;
    manifest.finish("serve")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Genmap(a) => commands::genmap(a).map(drop),
        Command::Simulate(a) => commands::simulate(a).map(drop),
        Command::Evaluate(a) => commands::evaluate(a).map(drop),
        Command::Drift(c) => commands::drift(c).map(drop),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
