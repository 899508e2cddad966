//! Monte Carlo localization on orchard landmark maps: trunk-width maps,
//! odometry motion models, particle filtering, synthetic sensor logs and the
//! evaluation protocols built on them.

pub mod error;
pub mod eval;
pub mod filter;
pub mod geom;
pub mod map;
pub mod motion;
pub mod params;
pub mod seed;
pub mod sensing;
pub mod session;
pub mod sim;
mod union_find;

pub use error::{Error, Result};
pub use eval::{
    gnss_offset_series, run_suite, summarize, summarize_tables, DriftStats, InitArea, Protocol, SuiteConfig, SuiteRun,
    SuiteSummary, TrialContext, TrialResult,
};
pub use filter::{FilterParams, GroupReport, Particle, ParticleFilter, ParticleSet};
pub use geom::{Pose2D, Vec2};
pub use map::{generate_map, Landmark, LandmarkKind, MapGenParams, OrchardMap};
pub use motion::{MotionIncrement, MotionNoise, OdometryMode};
pub use params::{params_fingerprint, ParamPatch};
pub use seed::derive_seed;
pub use sensing::{SensorConfig, TrunkObservation, Weighting};
pub use session::{Frame, ResetRequest, Session, SessionState};
pub use sim::{build_campaign, simulate_log, Campaign, SimConfig, SimLog, TrajectorySpec};
