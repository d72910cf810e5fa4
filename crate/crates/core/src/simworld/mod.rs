//! Synthetic 3D world: obstacles, oracle planning, scenario generation,
//! assistance hints and the episode loop.

mod episode;
mod obstacle;
mod planner;
mod scenario;

pub use crate::labels::{Assistance, Difficulty};
pub use episode::{
    run_episode, Controller, Decision, Env, Episode, EpisodeHeader, GaussianPilot, HoverPilot, OraclePilot, Outcome,
    StepRecord,
};
pub use obstacle::{collides, nearest_clearance, segment_clear, Obstacle};
pub use planner::{
    grid_search, oracle_shortest_path, plan_on_grid, smooth, Connectivity, OccupancyGrid, PlannedPath, PATH_MARGIN,
};
pub use scenario::{assistance_hint, generate_scenario, Scenario};
