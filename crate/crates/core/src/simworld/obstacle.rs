use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::scalar::Scalar;

/// Static obstacle. Containment tests use the obstacle inflated by the drone radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "lowercase")]
pub enum Obstacle<T: Scalar> {
    Box { min: Vec3<T>, max: Vec3<T> },
    Sphere { center: Vec3<T>, radius: T },
}

impl<T: Scalar> Obstacle<T> {
    pub fn cuboid(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if (0..3).any(|i| !(min.0[i] < max.0[i])) {
            return Err(Error::Config("box needs min < max on every axis".into()));
        }
        Ok(Obstacle::Box { min, max })
    }

    pub fn sphere(center: Vec3<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::Config("sphere radius must be positive".into()));
        }
        Ok(Obstacle::Sphere { center, radius })
    }

    /// Signed distance from `p` to the obstacle surface; negative inside.
    pub fn signed_distance(&self, p: &Vec3<T>) -> T {
        match self {
            Obstacle::Sphere { center, radius } => (*p - *center).norm() - *radius,
            Obstacle::Box { min, max } => {
                let mut outside = T::zero();
                let mut inside = T::neg_infinity();
                for i in 0..3 {
                    let lo = min.0[i] - p.0[i];
                    let hi = p.0[i] - max.0[i];
                    let d = lo.max(hi);
                    if d > T::zero() {
                        outside = outside + d * d;
                    }
                    inside = inside.max(d);
                }
                if outside > T::zero() {
                    outside.sqrt()
                } else {
                    inside
                }
            }
        }
    }

    /// Vector from `p` to the nearest surface point.
    pub fn nearest_surface_offset(&self, p: &Vec3<T>) -> Vec3<T> {
        match self {
            Obstacle::Sphere { center, radius } => {
                let d = *p - *center;
                let n = d.norm();
                if n > T::zero() {
                    d * ((*radius - n) / n)
                } else {
                    Vec3::new(*radius, T::zero(), T::zero())
                }
            }
            Obstacle::Box { min, max } => {
                let sd = self.signed_distance(p);
                if sd > T::zero() {
                    let q = Vec3::new(
                        p.0[0].max(min.0[0]).min(max.0[0]),
                        p.0[1].max(min.0[1]).min(max.0[1]),
                        p.0[2].max(min.0[2]).min(max.0[2]),
                    );
                    q - *p
                } else {
                    // inside: push out through the nearest face
                    let mut best = (T::infinity(), Vec3::zero());
                    for i in 0..3 {
                        for (face, sign) in [(min.0[i], -T::one()), (max.0[i], T::one())] {
                            let d = (face - p.0[i]).abs();
                            if d < best.0 {
                                let mut v = Vec3::zero();
                                v.0[i] = sign * d;
                                best = (d, v);
                            }
                        }
                    }
                    best.1
                }
            }
        }
    }

    /// Open containment in the obstacle inflated by `inflate`.
    pub fn contains(&self, p: &Vec3<T>, inflate: T) -> bool {
        self.signed_distance(p) < inflate
    }

    /// Minimum signed distance along the segment `a → b`.
    ///
    /// The signed distance to a convex set is convex along a line, so a
    /// golden-section search converges to the global minimum.
    pub fn segment_min_distance(&self, a: &Vec3<T>, b: &Vec3<T>) -> T {
        let f = |t: T| self.signed_distance(&(*a + (*b - *a) * t));
        let inv_phi = T::lit(0.618_033_988_749_894_9);
        let (mut lo, mut hi) = (T::zero(), T::one());
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..80 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = f(x2);
            }
        }
        f(T::zero()).min(f(T::one())).min(f1).min(f2)
    }
}

/// True iff the pose position lies strictly inside any obstacle inflated by `drone_radius`.
pub fn collides<T: Scalar>(p: &Pose<T>, obstacles: &[Obstacle<T>], drone_radius: T) -> bool {
    let q = p.position();
    obstacles.iter().any(|o| o.contains(&q, drone_radius))
}

/// True iff the straight segment stays outside every inflated obstacle.
pub fn segment_clear<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>, obstacles: &[Obstacle<T>], drone_radius: T) -> bool {
    obstacles
        .iter()
        .all(|o| o.segment_min_distance(a, b) >= drone_radius)
}

/// Offset to the closest obstacle surface, if any obstacles exist.
pub fn nearest_clearance<T: Scalar>(p: &Vec3<T>, obstacles: &[Obstacle<T>]) -> Option<Vec3<T>> {
    obstacles
        .iter()
        .map(|o| (o.signed_distance(p), o))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(_, o)| o.nearest_surface_offset(p))
}
