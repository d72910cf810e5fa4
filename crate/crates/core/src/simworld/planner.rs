//! Grid search planner producing the oracle (ground-truth) path.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::obstacle::{segment_clear, Obstacle};
use crate::config::WorldConfig;
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Pose, Trajectory, Vec3};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face, edge and corner neighbors.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<([i64; 3], f64)> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let k = dx.abs() + dy.abs() + dz.abs();
                    if k == 0 || (self == Connectivity::Six && k > 1) {
                        continue;
                    }
                    out.push(([dx, dy, dz], (k as f64).sqrt()));
                }
            }
        }
        out
    }
}

/// Regular lattice over the world box. A node is free when its clearance
/// exceeds the drone radius, the path margin and half a cell diagonal, so every edge between
/// adjacent free nodes is collision-free.
#[derive(Debug, Clone)]
pub struct OccupancyGrid<T: Scalar> {
    origin: Vec3<T>,
    res: T,
    dims: [usize; 3],
    free: Vec<bool>,
}

impl<T: Scalar> OccupancyGrid<T> {
    pub fn build(world: &WorldConfig<T>, obstacles: &[Obstacle<T>]) -> Self {
        let res = world.grid_resolution;
        let origin = Vec3::new(-world.half_extent, -world.half_extent, T::zero());
        let count = |span: T| (span / res).floor().to_usize().unwrap_or(0) + 1;
        let dims = [
            count(world.half_extent + world.half_extent),
            count(world.half_extent + world.half_extent),
            count(world.ceiling),
        ];
        let margin = world.drone_radius + T::lit(PATH_MARGIN) + res * T::lit(3f64.sqrt() / 2.0);
        let mut grid = Self {
            origin,
            res,
            dims,
            free: Vec::new(),
        };
        grid.free = (0..dims[0] * dims[1] * dims[2])
            .map(|i| {
                let p = grid.position(i);
                obstacles.iter().all(|o| o.signed_distance(&p) >= margin)
            })
            .collect();
        grid
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> T {
        self.res
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.free[idx]
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn position(&self, idx: usize) -> Vec3<T> {
        let c = self.coords(idx);
        self.origin + Vec3::new(
            T::from_usize_lossy(c[0]),
            T::from_usize_lossy(c[1]),
            T::from_usize_lossy(c[2]),
        ) * self.res
    }

    /// Nearest lattice node to `p`, clamped into the grid.
    pub fn nearest(&self, p: &Vec3<T>) -> usize {
        let mut c = [0usize; 3];
        for i in 0..3 {
            let f = ((p.0[i] - self.origin.0[i]) / self.res).round();
            let f = f.max(T::zero()).to_usize().unwrap_or(0);
            c[i] = f.min(self.dims[i] - 1);
        }
        self.index(c)
    }

    /// In-grid neighbors of `idx` with their unit-length multipliers.
    pub fn neighbors<'a>(&'a self, idx: usize, offsets: &'a [([i64; 3], f64)]) -> impl Iterator<Item = (usize, f64)> + 'a {
        let c = self.coords(idx);
        offsets.iter().filter_map(move |(o, w)| {
            let mut n = [0usize; 3];
            for i in 0..3 {
                let v = c[i] as i64 + o[i];
                if v < 0 || v >= self.dims[i] as i64 {
                    return None;
                }
                n[i] = v as usize;
            }
            Some((self.index(n), *w))
        })
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

/// A* over free nodes. Returns node indices and path cost in meters.
pub fn grid_search<T: Scalar>(
    grid: &OccupancyGrid<T>,
    start: usize,
    goal: usize,
    conn: Connectivity,
) -> Option<(Vec<usize>, f64)> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let res = grid.resolution().to_f64_lossy();
    let offsets = conn.offsets();
    let goal_pos = grid.position(goal);
    let h = |i: usize| euclidean_distance(&grid.position(i), &goal_pos).to_f64_lossy();
    let mut g = vec![f64::INFINITY; grid.len()];
    let mut parent = vec![usize::MAX; grid.len()];
    let mut closed = vec![false; grid.len()];
    let mut heap = BinaryHeap::new();
    g[start] = 0.0;
    heap.push(Reverse(Entry(h(start), start)));
    while let Some(Reverse(Entry(_, u))) = heap.pop() {
        if closed[u] {
            continue;
        }
        if u == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some((path, g[goal]));
        }
        closed[u] = true;
        for (v, w) in grid.neighbors(u, &offsets) {
            if closed[v] || !grid.is_free(v) {
                continue;
            }
            let cand = g[u] + w * res;
            if cand < g[v] {
                g[v] = cand;
                parent[v] = u;
                heap.push(Reverse(Entry(cand + h(v), v)));
            }
        }
    }
    None
}

/// Extra clearance required of shortcut segments, on top of the drone radius.
pub const PATH_MARGIN: f64 = 0.5;

/// Grid path and its smoothed form.
#[derive(Debug, Clone)]
pub struct PlannedPath<T: Scalar> {
    /// Start, lattice nodes, goal.
    pub raw: Vec<Vec3<T>>,
    pub raw_length: T,
    /// String-pulled polyline.
    pub path: Trajectory<T>,
}

fn polyline_length<T: Scalar>(pts: &[Vec3<T>]) -> T {
    pts.windows(2)
        .map(|w| euclidean_distance(&w[0], &w[1]))
        .fold(T::zero(), |a, b| a + b)
}

/// Free node closest to `p` that `p` can reach in a straight collision-free line.
fn attach<T: Scalar>(grid: &OccupancyGrid<T>, p: &Vec3<T>, obstacles: &[Obstacle<T>], radius: T) -> Option<usize> {
    let c = grid.coords(grid.nearest(p));
    let mut candidates = Vec::new();
    for r in 0i64..=3 {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let n = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                    if (0..3).any(|i| n[i] < 0 || n[i] >= grid.dims()[i] as i64) {
                        continue;
                    }
                    let idx = grid.index([n[0] as usize, n[1] as usize, n[2] as usize]);
                    if grid.is_free(idx) {
                        candidates.push((euclidean_distance(p, &grid.position(idx)).to_f64_lossy(), idx));
                    }
                }
            }
        }
        if !candidates.is_empty() {
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some(&(_, idx)) = candidates
                .iter()
                .find(|(_, idx)| segment_clear(p, &grid.position(*idx), obstacles, radius))
            {
                return Some(idx);
            }
            candidates.clear();
        }
    }
    None
}

/// Greedy line-of-sight shortcutting.
pub fn smooth<T: Scalar>(pts: &[Vec3<T>], obstacles: &[Obstacle<T>], radius: T) -> Vec<Vec3<T>> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !segment_clear(&pts[i], &pts[j], obstacles, radius) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Plans on a pre-built grid.
pub fn plan_on_grid<T: Scalar>(
    grid: &OccupancyGrid<T>,
    start: &Vec3<T>,
    goal: &Vec3<T>,
    obstacles: &[Obstacle<T>],
    world: &WorldConfig<T>,
) -> Result<PlannedPath<T>> {
    let r = world.drone_radius + T::lit(PATH_MARGIN);
    if obstacles.iter().any(|o| o.contains(start, r) || o.contains(goal, r)) {
        return Err(Error::Unreachable);
    }
    let raw = if segment_clear(start, goal, obstacles, r) {
        vec![*start, *goal]
    } else {
        let s = attach(grid, start, obstacles, r).ok_or(Error::Unreachable)?;
        let g = attach(grid, goal, obstacles, r).ok_or(Error::Unreachable)?;
        let (nodes, _) = grid_search(grid, s, g, Connectivity::TwentySix).ok_or(Error::Unreachable)?;
        let mut raw = Vec::with_capacity(nodes.len() + 2);
        raw.push(*start);
        raw.extend(nodes.into_iter().map(|i| grid.position(i)));
        raw.push(*goal);
        raw.dedup();
        raw
    };
    let raw_length = polyline_length(&raw);
    let path = Trajectory::from_points(smooth(&raw, obstacles, r));
    Ok(PlannedPath { raw, raw_length, path })
}

/// Collision-free polyline from `start` to `goal`; vertices are the corners of the smoothed grid path.
pub fn oracle_shortest_path<T: Scalar>(
    start: &Pose<T>,
    goal: &Vec3<T>,
    obstacles: &[Obstacle<T>],
    world: &WorldConfig<T>,
) -> Result<Trajectory<T>> {
    let grid = OccupancyGrid::build(world, obstacles);
    Ok(plan_on_grid(&grid, &start.position(), goal, obstacles, world)?.path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn small_world() -> WorldConfig<f64> {
        WorldConfig {
            half_extent: 60.0,
            ceiling: 40.0,
            ..Default::default()
        }
    }

    #[test]
    fn empty_world_straight_line() {
        let world = WorldConfig::default();
        let t = oracle_shortest_path(&Pose::at(v(0.0, 0.0, 50.0)), &v(100.0, 0.0, 50.0), &[], &world).unwrap();
        assert!((t.path_length() - 100.0).abs() < 1e-9);
        assert_eq!(t.first().unwrap().position(), v(0.0, 0.0, 50.0));
        assert_eq!(t.last().unwrap().position(), v(100.0, 0.0, 50.0));
    }

    #[test]
    fn wall_forces_detour() {
        let world = WorldConfig::default();
        let wall = [Obstacle::cuboid(v(40.0, -30.0, 0.0), v(50.0, 30.0, 120.0)).unwrap()];
        let start = Pose::at(v(0.0, 0.0, 50.0));
        let goal = v(100.0, 0.0, 50.0);
        let grid = OccupancyGrid::build(&world, &wall);
        let p = plan_on_grid(&grid, &start.position(), &goal, &wall, &world).unwrap();
        let len = p.path.path_length();
        assert!(len > 100.0);
        assert!(len <= p.raw_length + 1e-9);
        assert!(len <= 1.2 * p.raw_length);
        assert_eq!(p.path.len(), p.path.waypoints.len() - 1);
        for w in p.path.waypoints.windows(2) {
            assert!(segment_clear(&w[0].position(), &w[1].position(), &wall, world.drone_radius));
        }
    }

    #[test]
    fn blocked_goal_unreachable() {
        let world = small_world();
        let cage = [Obstacle::sphere(v(0.0, 0.0, 20.0), 3.0).unwrap()];
        let err = oracle_shortest_path(&Pose::at(v(-40.0, 0.0, 20.0)), &v(0.0, 0.0, 20.0), &cage, &world);
        assert!(matches!(err, Err(Error::Unreachable)));
    }

    /// Unweighted breadth-first search over the same free-node set.
    fn bfs_hops(grid: &OccupancyGrid<f64>, s: usize, g: usize) -> Option<usize> {
        let offsets = Connectivity::Six.offsets();
        let mut dist = vec![usize::MAX; grid.len()];
        let mut q = VecDeque::new();
        dist[s] = 0;
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            if u == g {
                return Some(dist[u]);
            }
            for (n, _) in grid.neighbors(u, &offsets) {
                if grid.is_free(n) && dist[n] == usize::MAX {
                    dist[n] = dist[u] + 1;
                    q.push_back(n);
                }
            }
        }
        None
    }

    /// Exhaustive Bellman-Ford relaxation with 26-neighbor Euclidean costs.
    fn relax_all(grid: &OccupancyGrid<f64>, s: usize, g: usize) -> f64 {
        let offsets = Connectivity::TwentySix.offsets();
        let mut d = vec![f64::INFINITY; grid.len()];
        d[s] = 0.0;
        loop {
            let mut changed = false;
            for u in 0..grid.len() {
                if !grid.is_free(u) || !d[u].is_finite() {
                    continue;
                }
                for (n, w) in grid.neighbors(u, &offsets) {
                    let c = d[u] + w * grid.resolution();
                    if grid.is_free(n) && c < d[n] - 1e-12 {
                        d[n] = c;
                        changed = true;
                    }
                }
            }
            if !changed {
                return d[g];
            }
        }
    }

    fn l_corridor() -> (WorldConfig<f64>, Vec<Obstacle<f64>>) {
        // one solid block leaves an L-shaped channel along the west and north edges
        let world = WorldConfig {
            half_extent: 40.0,
            ceiling: 20.0,
            drone_radius: 0.5,
            ..Default::default()
        };
        let obs = vec![Obstacle::cuboid(v(-10.0, -50.0, -10.0), v(50.0, 10.0, 30.0)).unwrap()];
        (world, obs)
    }

    #[test]
    fn six_connected_search_matches_bfs_in_l_corridor() {
        let (world, obs) = l_corridor();
        let grid = OccupancyGrid::build(&world, &obs);
        let s = grid.nearest(&v(-25.0, -35.0, 10.0));
        let g = grid.nearest(&v(35.0, 25.0, 10.0));
        assert!(grid.is_free(s) && grid.is_free(g));
        let (_, cost) = grid_search(&grid, s, g, Connectivity::Six).unwrap();
        let hops = bfs_hops(&grid, s, g).unwrap();
        assert_eq!(cost, hops as f64 * grid.resolution());
    }

    #[test]
    fn twenty_six_connected_search_is_optimal() {
        let (world, obs) = l_corridor();
        let grid = OccupancyGrid::build(&world, &obs);
        let s = grid.nearest(&v(-25.0, -35.0, 10.0));
        let g = grid.nearest(&v(35.0, 25.0, 10.0));
        let (path, cost) = grid_search(&grid, s, g, Connectivity::TwentySix).unwrap();
        assert!((cost - relax_all(&grid, s, g)).abs() < 1e-9);
        assert!(path.iter().all(|&i| grid.is_free(i)));
    }
}
