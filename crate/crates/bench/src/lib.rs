//! Shared fixtures for the benchmarks.

use orchard_core::filter::init_area;
use orchard_core::sim::Direction;
use orchard_core::{
    generate_map, simulate_log, FilterParams, MapGenParams, OrchardMap, ParticleSet, SensorConfig, SimConfig, SimLog,
    TrajectorySpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub map: OrchardMap,
    pub sensor: SensorConfig,
    pub params: FilterParams,
    pub log: SimLog,
}

impl Fixture {
    /// The default 20x50 orchard and one forward pass along row 4.
    pub fn new() -> Self {
        let map = generate_map(&MapGenParams::default(), 1).expect("default map");
        let sensor = SensorConfig::default();
        let spec = TrajectorySpec::straight(4, Direction::Forward);
        let log = simulate_log(&map, &spec, &sensor, &SimConfig::default(), "bench", 2).expect("log").log;
        Self { map, sensor, params: FilterParams::default(), log }
    }

    /// A fresh large-area particle set around step `k` of the log.
    pub fn particles(&self, k: usize, side: f64, n: usize, seed: u64) -> ParticleSet {
        let s = &self.log.steps[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_area(s.truth.position(), side, s.imu_heading, self.params.heading_halfwidth, n, &mut rng)
            .expect("particles")
    }

    /// The first step at or after `k` that saw any trunks.
    pub fn step_with_trunks(&self, k: usize) -> usize {
        (k..self.log.steps.len()).find(|&i| !self.log.steps[i].trunks.is_empty()).expect("a trunk sighting")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
