use orchard_core::eval::results_ndjson;
use orchard_core::sim::Direction;
use orchard_core::{
    build_campaign, generate_map, params_fingerprint, run_suite, simulate_log, FilterParams, MapGenParams,
    OdometryMode, OrchardMap, ParamPatch, Protocol, SensorConfig, SimConfig, SimLog, SuiteConfig, TrajectorySpec,
};
use tempfile::TempDir;

fn small_map() -> OrchardMap {
    generate_map(&MapGenParams { rows: 12, trees_per_row: 15, ..MapGenParams::default() }, 21).unwrap()
}

#[test]
fn map_and_log_survive_the_disk() {
    let dir = TempDir::new().unwrap();
    let map = small_map();
    map.save(dir.path().join("map.json")).unwrap();
    let back = OrchardMap::load(dir.path().join("map.json")).unwrap();
    assert_eq!(back, map);
    assert_eq!(back.fingerprint(), map.fingerprint());

    let spec = TrajectorySpec::straight(3, Direction::Reverse);
    let log = simulate_log(&map, &spec, &SensorConfig::default(), &SimConfig::default(), "r3", 8).unwrap().log;
    log.save(dir.path().join("r3.ndjson")).unwrap();
    let loaded = SimLog::load(dir.path().join("r3.ndjson")).unwrap();
    assert_eq!(loaded.header.map, map.fingerprint());
    assert_eq!(loaded.to_ndjson(), log.to_ndjson());
}

#[test]
fn campaign_suite_is_reproducible() {
    let map = small_map();
    let sensor = SensorConfig::default();
    let campaign = build_campaign(&map, &sensor, &SimConfig::default(), 5).unwrap();
    assert_eq!((campaign.straight.len(), campaign.turns.len()), (12, 43));

    let params = FilterParams { particle_count: 400, ..FilterParams::default() };
    let cfg = SuiteConfig { starts: 4, trials_per_start: 2, ..SuiteConfig::default() };
    let run = |mode| run_suite(&campaign, &map, &sensor, &params, mode, Protocol::RowsSmall, &cfg, 9).unwrap();
    let a = run(OdometryMode::Gnss);
    let b = run(OdometryMode::Gnss);
    assert_eq!(a.summary.trial_count, 8);
    let fp = params_fingerprint(&params);
    assert_eq!(
        results_ndjson(Protocol::RowsSmall, &a.results, &fp),
        results_ndjson(Protocol::RowsSmall, &b.results, &fp)
    );
    assert!(a.results.iter().all(|r| r.odometry_mode == OdometryMode::Gnss));
}

#[test]
fn parameter_files_overlay_defaults() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, r#"{"particle_count": 700, "sigma_range_w": 0.3}"#).unwrap();
    let p = ParamPatch::load(&path).unwrap().apply(&FilterParams::default()).unwrap();
    assert_eq!(p.particle_count, 700);
    assert_eq!(p.weighting.sigma_range_w, 0.3);
    assert_eq!(p.weighting.sigma_bearing_w, FilterParams::default().weighting.sigma_bearing_w);
    assert_ne!(params_fingerprint(&p), params_fingerprint(&FilterParams::default()));

    std::fs::write(&path, r#"{"particle_count": 700, "typo": 1}"#).unwrap();
    assert!(ParamPatch::load(&path).is_err());
}
