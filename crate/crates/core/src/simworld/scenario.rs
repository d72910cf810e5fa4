use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::obstacle::Obstacle;
use super::planner::{plan_on_grid, OccupancyGrid};
use crate::config::WorldConfig;
use crate::encoder::GoalSpec;
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Pose, Trajectory, Vec3};
use crate::labels::{Assistance, Difficulty};
use crate::scalar::Scalar;

/// Lowest and highest flight altitude used when sampling endpoints, as
/// distances from the floor and the ceiling.
const ALTITUDE_MARGIN: f64 = 20.0;
/// Endpoints keep at least this much clearance from every obstacle surface.
const ENDPOINT_CLEARANCE: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Scenario<T: Scalar> {
    pub id: String,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub start: Pose<T>,
    pub goal: GoalSpec<T>,
    pub obstacles: Vec<Obstacle<T>>,
    pub oracle_path: Trajectory<T>,
}

/// Closest point on segment `a → b` to `p`, as a parameter in `[0, 1]`.
fn project_segment<T: Scalar>(p: &Vec3<T>, a: &Vec3<T>, b: &Vec3<T>) -> T {
    let ab = *b - *a;
    let len2 = ab.dot(&ab);
    if len2 <= T::zero() {
        return T::zero();
    }
    ((*p - *a).dot(&ab) / len2).max(T::zero()).min(T::one())
}

impl<T: Scalar> Scenario<T> {
    pub fn goal_position(&self) -> Vec3<T> {
        self.goal.goal_position
    }

    pub fn initial_distance(&self) -> T {
        euclidean_distance(&self.start.position(), &self.goal_position())
    }

    pub fn oracle_length(&self) -> T {
        self.oracle_path.path_length()
    }

    /// Index of the oracle segment nearest to `p` (later segment on ties) and the distance to it.
    fn nearest_segment(&self, p: &Vec3<T>) -> (usize, T) {
        let pts: Vec<Vec3<T>> = self.oracle_path.points().collect();
        if pts.len() < 2 {
            let d = pts.first().map_or(T::zero(), |q| euclidean_distance(p, q));
            return (0, d);
        }
        let mut best = (0, T::infinity());
        for (i, w) in pts.windows(2).enumerate() {
            let s = project_segment(p, &w[0], &w[1]);
            let d = euclidean_distance(p, &(w[0] + (w[1] - w[0]) * s));
            if d <= best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Distance from `p` to the oracle polyline.
    pub fn deviation(&self, p: &Vec3<T>) -> T {
        self.nearest_segment(p).1
    }

    /// Next ground-truth waypoint: the end vertex of the oracle segment
    /// nearest to `p`. This is the goal once the agent is on the last leg.
    pub fn target_waypoint(&self, p: &Vec3<T>) -> Vec3<T> {
        let wps = &self.oracle_path.waypoints;
        let (mut i, _) = self.nearest_segment(p);
        // standing on a vertex counts as having reached it
        while i + 2 < wps.len() && euclidean_distance(p, &wps[i + 1].position()) < T::lit(1e-6) {
            i += 1;
        }
        wps.get(i + 1)
            .or(wps.last())
            .map_or(self.goal_position(), |w| w.position())
    }
}

/// Guidance shown to the agent at `pose`.
///
/// L1 always shows the next oracle waypoint, L2 only once the agent has
/// strayed more than `helper_threshold` from the oracle path, L3 never.
pub fn assistance_hint<T: Scalar>(
    level: Assistance,
    pose: &Pose<T>,
    scenario: &Scenario<T>,
    helper_threshold: T,
) -> Option<Vec3<T>> {
    let p = pose.position();
    match level {
        Assistance::L1 => Some(scenario.target_waypoint(&p)),
        Assistance::L2 => (scenario.deviation(&p) > helper_threshold).then(|| scenario.target_waypoint(&p)),
        Assistance::L3 => None,
    }
}

fn salt(difficulty: Difficulty) -> u64 {
    match difficulty {
        Difficulty::Easy => 0x45a1_7c3e_0d92_b861,
        Difficulty::Hard => 0x9b3f_12d4_e67a_0c55,
    }
}

fn sample_endpoints<T: Scalar>(rng: &mut ChaCha8Rng, world: &WorldConfig<T>, lo: f64, hi: f64) -> Option<(Vec3<T>, Vec3<T>)> {
    let half = world.half_extent.to_f64_lossy() - ALTITUDE_MARGIN;
    let (zlo, zhi) = (ALTITUDE_MARGIN, world.ceiling.to_f64_lossy() - ALTITUDE_MARGIN);
    if half <= 0.0 || zhi <= zlo {
        return None;
    }
    let start = [rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(zlo..zhi)];
    let dist = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let gz = rng.random_range(zlo..zhi);
    let dz = gz - start[2];
    let horiz2 = dist * dist - dz * dz;
    if horiz2 <= 0.0 {
        return None;
    }
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let goal = [
        start[0] + horiz2.sqrt() * heading.cos(),
        start[1] + horiz2.sqrt() * heading.sin(),
        gz,
    ];
    if goal[0].abs() > half || goal[1].abs() > half {
        return None;
    }
    let v = |a: [f64; 3]| Vec3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
    Some((v(start), v(goal)))
}

/// Obstacles scattered near the start-goal line, clear of both endpoints.
fn sample_obstacles<T: Scalar>(
    rng: &mut ChaCha8Rng,
    world: &WorldConfig<T>,
    start: &Vec3<T>,
    goal: &Vec3<T>,
) -> Vec<Obstacle<T>> {
    let (s, g) = (start.cast::<f64>(), goal.cast::<f64>());
    let ceiling = world.ceiling.to_f64_lossy();
    let mut out = Vec::with_capacity(world.obstacle_count);
    let mut tries = 0;
    while out.len() < world.obstacle_count && tries < 20 * world.obstacle_count {
        tries += 1;
        let u = rng.random_range(0.2..0.8);
        let along = s + (g - s) * u;
        let jitter = Vec3::new(
            rng.random_range(-15.0..15.0),
            rng.random_range(-15.0..15.0),
            rng.random_range(-10.0..10.0),
        );
        let c = along + jitter;
        let o: Obstacle<f64> = if rng.random_bool(0.5) {
            let r = rng.random_range(8.0..20.0);
            Obstacle::Sphere { center: c, radius: r }
        } else {
            // building-like column from the floor
            let hx = rng.random_range(5.0..18.0);
            let hy = rng.random_range(5.0..18.0);
            let top = (c.z() + rng.random_range(10.0..40.0)).min(ceiling);
            Obstacle::Box {
                min: Vec3::new(c.x() - hx, c.y() - hy, 0.0),
                max: Vec3::new(c.x() + hx, c.y() + hy, top.max(1.0)),
            }
        };
        let clear = world.drone_radius.to_f64_lossy() + ENDPOINT_CLEARANCE;
        if o.signed_distance(&s) < clear || o.signed_distance(&g) < clear {
            continue;
        }
        out.push(match o {
            Obstacle::Sphere { center, radius } => Obstacle::Sphere {
                center: center.cast(),
                radius: T::lit(radius),
            },
            Obstacle::Box { min, max } => Obstacle::Box {
                min: min.cast(),
                max: max.cast(),
            },
        });
    }
    out
}

/// Deterministic scenario of the requested difficulty.
///
/// Resamples endpoints and obstacles until the oracle path exists and its
/// length falls on the requested side of `hard_threshold`.
pub fn generate_scenario<T: Scalar>(seed: u64, difficulty: Difficulty, world: &WorldConfig<T>) -> Result<Scenario<T>> {
    world.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt(difficulty));
    let split = world.hard_threshold.to_f64_lossy();
    let (lo, hi) = match difficulty {
        Difficulty::Easy => (world.min_start_goal.to_f64_lossy(), split.min(world.max_start_goal.to_f64_lossy())),
        Difficulty::Hard => (split, world.max_start_goal.to_f64_lossy()),
    };
    let empty_grid = OccupancyGrid::build(world, &[]);
    for _ in 0..world.max_attempts {
        let Some((start, goal)) = sample_endpoints::<T>(&mut rng, world, lo, hi) else {
            continue;
        };
        let obstacles = sample_obstacles(&mut rng, world, &start, &goal);
        let grid = if obstacles.is_empty() {
            None
        } else {
            Some(OccupancyGrid::build(world, &obstacles))
        };
        let plan = match plan_on_grid(grid.as_ref().unwrap_or(&empty_grid), &start, &goal, &obstacles, world) {
            Ok(p) => p,
            Err(Error::Unreachable) => continue,
            Err(e) => return Err(e),
        };
        let len = plan.path.path_length();
        let is_hard = len >= world.hard_threshold;
        let chord = euclidean_distance(&start, &goal);
        let chord_ok = chord >= world.min_start_goal && chord <= world.max_start_goal;
        if !chord_ok || is_hard != (difficulty == Difficulty::Hard) {
            continue;
        }
        let token_seed = rng.random::<u64>();
        return Ok(Scenario {
            id: format!("{difficulty}-{seed}"),
            seed,
            difficulty,
            start: Pose::at(start),
            goal: GoalSpec::new(goal, token_seed),
            obstacles,
            oracle_path: plan.path,
        });
    }
    Err(Error::GenerationExhausted {
        attempts: world.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::obstacle::segment_clear;

    #[test]
    fn easy_seed_seven() {
        let w = WorldConfig::default();
        let s = generate_scenario::<f64>(7, Difficulty::Easy, &w).unwrap();
        assert!(s.oracle_length() < 250.0);
        assert_eq!(s, generate_scenario(7, Difficulty::Easy, &w).unwrap());
    }

    #[test]
    fn hard_seed_nine() {
        let w = WorldConfig::default();
        let s = generate_scenario::<f64>(9, Difficulty::Hard, &w).unwrap();
        assert!(s.oracle_length() >= 250.0);
        assert!(s.initial_distance() <= 400.0);
    }

    #[test]
    fn oracle_path_is_clear_and_connects() {
        let w = WorldConfig::default();
        for seed in 0..6 {
            for d in [Difficulty::Easy, Difficulty::Hard] {
                let s = generate_scenario::<f64>(seed, d, &w).unwrap();
                let pts: Vec<_> = s.oracle_path.points().collect();
                assert_eq!(pts[0], s.start.position());
                assert_eq!(*pts.last().unwrap(), s.goal_position());
                for p in pts.windows(2) {
                    assert!(segment_clear(&p[0], &p[1], &s.obstacles, w.drone_radius));
                }
                let chord = s.initial_distance();
                assert!((50.0..=400.0).contains(&chord));
            }
        }
    }

    #[test]
    fn exhausted_when_impossible() {
        let w = WorldConfig {
            max_start_goal: 60.0,
            max_attempts: 5,
            ..Default::default()
        };
        let err = generate_scenario::<f64>(1, Difficulty::Hard, &w).unwrap_err();
        assert!(matches!(err, Error::GenerationExhausted { attempts: 5 }));
    }

    fn straight() -> Scenario<f64> {
        let start = Vec3::new(0.0, 0.0, 50.0);
        let goal = Vec3::new(200.0, 0.0, 50.0);
        Scenario {
            id: "t".into(),
            seed: 0,
            difficulty: Difficulty::Easy,
            start: Pose::at(start),
            goal: GoalSpec::new(goal, 1),
            obstacles: vec![],
            oracle_path: Trajectory::from_points([start, Vec3::new(100.0, 50.0, 50.0), goal]),
        }
    }

    #[test]
    fn hints_by_level() {
        let s = straight();
        let on_path = Pose::at(Vec3::new(0.0, 0.0, 50.0));
        let off_path = Pose::at(Vec3::new(50.0, -50.0, 50.0));
        assert_eq!(assistance_hint(Assistance::L3, &on_path, &s, 30.0), None);
        assert_eq!(assistance_hint(Assistance::L3, &off_path, &s, 30.0), None);
        assert!(assistance_hint(Assistance::L1, &on_path, &s, 30.0).is_some());
        assert!(assistance_hint(Assistance::L1, &off_path, &s, 30.0).is_some());
        assert_eq!(s.deviation(&on_path.position()), 0.0);
        assert_eq!(assistance_hint(Assistance::L2, &on_path, &s, 30.0), None);
        assert!(s.deviation(&off_path.position()) > 50.0);
        assert_eq!(
            assistance_hint(Assistance::L2, &off_path, &s, 30.0),
            Some(Vec3::new(100.0, 50.0, 50.0))
        );
    }

    #[test]
    fn target_advances_past_corner() {
        let s = straight();
        assert_eq!(s.target_waypoint(&Vec3::new(10.0, 5.0, 50.0)), Vec3::new(100.0, 50.0, 50.0));
        assert_eq!(s.target_waypoint(&Vec3::new(100.0, 50.0, 50.0)), s.goal_position());
        assert_eq!(s.target_waypoint(&Vec3::new(190.0, 0.0, 50.0)), s.goal_position());
    }
}
