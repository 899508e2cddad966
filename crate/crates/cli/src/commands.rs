//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orchard_core::eval::{quartiles, results_ndjson, summaries_ndjson, Quartiles};
use orchard_core::sim::TrajectoryKind;
use orchard_core::{
    build_campaign, generate_map, gnss_offset_series, params_fingerprint, run_suite, summarize_tables, Campaign,
    FilterParams, MapGenParams, OrchardMap, ParamPatch, SensorConfig, SimConfig, SimLog, SuiteConfig, Vec2,
};
use serde::Serialize;
use serde_json::json;

use crate::cli::{Common, EvaluateArgs, GenmapArgs, Only, SimulateArgs};
use crate::manifest::{subdir, RunManifest, LOGS, MAPS, RESULTS};

pub fn load_map(path: &Path) -> Result<OrchardMap> {
    OrchardMap::load(path).with_context(|| format!("loading map {}", path.display()))
}

/// Defaults overlaid with the parameter file, if any.
pub fn load_params(path: Option<&Path>) -> Result<FilterParams> {
    let base = FilterParams::default();
    match path {
        None => Ok(base),
        Some(p) => {
            let patch = ParamPatch::load(p).with_context(|| format!("loading parameters {}", p.display()))?;
            Ok(patch.apply(&base)?)
        }
    }
}

/// Every `*.ndjson` log in `dir`, by file name, checked against `map`.
pub fn load_logs(dir: &Path, map: &OrchardMap) -> Result<Vec<SimLog>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading log directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    let fp = map.fingerprint();
    paths
        .iter()
        .map(|p| {
            let log = SimLog::load(p).with_context(|| format!("loading log {}", p.display()))?;
            if log.header.map != fp {
                bail!("log {} was recorded against map {}, but the map given is {fp}", p.display(), log.header.map);
            }
            Ok(log)
        })
        .collect()
}

pub fn load_campaign(out: &Path, map: &OrchardMap) -> Result<Campaign> {
    let dir = out.join(LOGS);
    let (straight, turns) = load_logs(&dir, map)?.into_iter().partition(|l| l.kind() == TrajectoryKind::StraightRow);
    Ok(Campaign { straight, turns })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn genmap(args: &GenmapArgs) -> Result<PathBuf> {
    let c = &args.common;
    let path = c.map_path();
    let mut manifest = RunManifest::new("genmap", Some(path.clone()), None, c.seed, &c.out);
    manifest.flags = json!({ "rows": args.rows, "trees": args.trees });
    manifest.write("genmap")?;

    let params = MapGenParams { rows: args.rows, trees_per_row: args.trees, ..MapGenParams::default() };
    let map = generate_map(&params, c.seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    } else {
        subdir(&c.out, MAPS)?;
    }
    map.save(&path)?;
    manifest.finish("genmap")?;
    println!("wrote {} ({} landmarks, fingerprint {})", path.display(), map.landmarks.len(), map.fingerprint());
    Ok(path)
}

pub fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let c = &args.common;
    let map_path = c.map_path();
    let mut manifest = RunManifest::new("simulate", Some(map_path.clone()), None, c.seed, &c.out);
    manifest.flags = json!({ "only": args.only.map(|o| format!("{o:?}").to_lowercase()) });
    manifest.write("simulate")?;

    let map = load_map(&map_path)?;
    let campaign = build_campaign(&map, &SensorConfig::default(), &SimConfig::default(), c.seed)?;
    let dir = subdir(&c.out, LOGS)?;
    let mut logs: Vec<&SimLog> = Vec::new();
    if args.only != Some(Only::Turns) {
        logs.extend(&campaign.straight);
    }
    if args.only != Some(Only::Straight) {
        logs.extend(&campaign.turns);
    }
    let mut written = Vec::with_capacity(logs.len());
    for log in logs {
        let path = dir.join(format!("{}.ndjson", log.header.name));
        log.save(&path)?;
        written.push(path);
    }
    manifest.finish("simulate")?;
    println!("wrote {} logs to {}", written.len(), dir.display());
    Ok(written)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let c = &args.common;
    let map_path = c.map_path();
    let params = load_params(args.params.as_deref())?;
    let fp = params_fingerprint(&params);
    let name = format!("evaluate_{}", args.protocol);
    let modes = args.mode.modes();
    let mut manifest = RunManifest::new("evaluate", Some(map_path.clone()), args.params.clone(), c.seed, &c.out);
    manifest.flags = json!({
        "protocol": args.protocol,
        "mode": if modes.len() == 1 { modes[0].to_string() } else { "all".into() },
        "resolved_params": ParamPatch::from_params(&params),
    });
    manifest.params_fingerprint = Some(fp.clone());
    manifest.write(&name)?;

    let map = load_map(&map_path)?;
    let campaign = load_campaign(&c.out, &map)?;
    let sensor = SensorConfig::default();
    let dir = subdir(&c.out, RESULTS)?;
    let mut summaries = Vec::with_capacity(modes.len());
    for mode in modes {
        let run = run_suite(&campaign, &map, &sensor, &params, mode, args.protocol, &SuiteConfig::default(), c.seed)
            .with_context(|| format!("{} suite, {mode} odometry", args.protocol))?;
        write(
            &dir.join(format!("{}_{mode}.ndjson", args.protocol)),
            &results_ndjson(args.protocol, &run.results, &fp),
        )?;
        eprintln!("{} {mode}: {} trials, accuracy {:.3}", args.protocol, run.summary.trial_count, run.summary.accuracy);
        summaries.push(run.summary);
    }
    let summary_path = dir.join(format!("{}_summary.ndjson", args.protocol));
    write(&summary_path, &summaries_ndjson(&summaries))?;
    let table = summarize_tables(&summaries)?;
    write(&dir.join(format!("{}_table.txt", args.protocol)), &table.text)?;
    manifest.finish(&name)?;
    print!("{}", table.text);
    Ok(summary_path)
}

#[derive(Serialize)]
struct DriftRecord<'a> {
    kind: &'static str,
    log: Option<&'a str>,
    readings: usize,
    axial: Quartiles,
    transverse: Quartiles,
    euclidean: Quartiles,
    rate: Quartiles,
}

/// One `run` record per straight-row log plus an `aggregate` record over all
/// readings, and the per-reading series in a second file.
pub fn drift(c: &Common) -> Result<PathBuf> {
    let map_path = c.map_path();
    let mut manifest = RunManifest::new("drift", Some(map_path.clone()), None, c.seed, &c.out);
    manifest.write("drift")?;

    let map = load_map(&map_path)?;
    let campaign = load_campaign(&c.out, &map)?;
    if campaign.straight.is_empty() {
        bail!("no straight-row logs in {}", c.out.join(LOGS).display());
    }
    let mut records = String::new();
    let mut series = String::new();
    let (mut ax, mut tr, mut eu, mut rates) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for log in &campaign.straight {
        let stats = gnss_offset_series(log, Vec2::ZERO).with_context(|| format!("drift of {}", log.header.name))?;
        let rec = DriftRecord {
            kind: "run",
            log: Some(&log.header.name),
            readings: stats.readings.len(),
            axial: stats.axial,
            transverse: stats.transverse,
            euclidean: stats.euclidean,
            rate: stats.rate,
        };
        records += &(serde_json::to_string(&rec)? + "\n");
        for r in &stats.readings {
            series += &(serde_json::to_string(&json!({ "log": log.header.name, "reading": r }))? + "\n");
            ax.push(r.axial);
            tr.push(r.transverse);
            eu.push(r.euclidean);
        }
        rates.extend(&stats.rates);
    }
    let agg = DriftRecord {
        kind: "aggregate",
        log: None,
        readings: eu.len(),
        axial: quartiles(&ax)?,
        transverse: quartiles(&tr)?,
        euclidean: quartiles(&eu)?,
        rate: quartiles(&rates)?,
    };
    records += &(serde_json::to_string(&agg)? + "\n");
    let dir = subdir(&c.out, RESULTS)?;
    let path = dir.join("drift.ndjson");
    write(&path, &records)?;
    write(&dir.join("drift_series.ndjson"), &series)?;
    manifest.finish("drift")?;
    println!(
        "{} runs; euclidean offset median {:.3} m (IQR {:.3}-{:.3}), drift rate median {:.4} m/s",
        campaign.straight.len(),
        agg.euclidean.median,
        agg.euclidean.q1,
        agg.euclidean.q3,
        agg.rate.median
    );
    Ok(path)
}
