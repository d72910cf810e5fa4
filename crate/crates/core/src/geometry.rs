//! Poses, actions and trajectories in the shared state/action space.
//!
//! Orientation (`theta`, `phi`, `psi`) is carried as inert state: it is
//! wrapped and observed but never rotates the translational action, which
//! is always expressed in the world frame.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Vec3<T: Scalar>(pub [T; 3]);

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn y(&self) -> T {
        self.0[1]
    }

    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, o: &Self) -> T {
        euclidean_distance(self, o)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            *self * (T::one() / n)
        } else {
            Self::zero()
        }
    }

    pub fn cast<U: Scalar>(&self) -> Vec3<U> {
        Vec3(self.0.map(|c| U::lit(c.to_f64_lossy())))
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Straight-line distance between two points.
pub fn euclidean_distance<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    (*a - *b).norm()
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut r = a - two_pi * ((a + pi) / two_pi).floor();
    // floor() can leave r on the open end after rounding
    if r >= pi {
        r = r - two_pi;
    }
    if r < -pi {
        r = r + two_pi;
    }
    r
}

/// Six-degree-of-freedom state: world-frame position plus Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", from = "RawPose<T>")]
pub struct Pose<T: Scalar> {
    x: T,
    y: T,
    z: T,
    theta: T,
    phi: T,
    psi: T,
}

#[derive(Deserialize)]
#[serde(bound = "")]
struct RawPose<T: Scalar> {
    x: T,
    y: T,
    z: T,
    theta: T,
    phi: T,
    psi: T,
}

impl<T: Scalar> From<RawPose<T>> for Pose<T> {
    fn from(r: RawPose<T>) -> Self {
        Pose::new(r.x, r.y, r.z, r.theta, r.phi, r.psi)
    }
}

impl<T: Scalar> Default for Pose<T> {
    fn default() -> Self {
        Self::at(Vec3::zero())
    }
}

impl<T: Scalar> Pose<T> {
    pub fn new(x: T, y: T, z: T, theta: T, phi: T, psi: T) -> Self {
        Self {
            x,
            y,
            z,
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
            psi: wrap_angle(psi),
        }
    }

    /// Pose at `p` with zero orientation.
    pub fn at(p: Vec3<T>) -> Self {
        Self::new(p.x(), p.y(), p.z(), T::zero(), T::zero(), T::zero())
    }

    pub fn position(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn angles(&self) -> [T; 3] {
        [self.theta, self.phi, self.psi]
    }

    pub fn x(&self) -> T {
        self.x
    }

    pub fn y(&self) -> T {
        self.y
    }

    pub fn z(&self) -> T {
        self.z
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    pub fn psi(&self) -> T {
        self.psi
    }
}

/// Per-component limits on an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ActionBounds<T: Scalar> {
    /// Bound on each translational component, meters.
    pub max_step_len: T,
    /// Bound on each angular component, radians.
    pub max_turn: T,
}

impl<T: Scalar> Default for ActionBounds<T> {
    fn default() -> Self {
        Self {
            max_step_len: T::lit(5.0),
            max_turn: T::FRAC_PI_4(),
        }
    }
}

/// Additive pose delta.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Action<T: Scalar> {
    pub dx: T,
    pub dy: T,
    pub dz: T,
    pub dtheta: T,
    pub dphi: T,
    pub dpsi: T,
}

impl<T: Scalar> Action<T> {
    pub fn translation(d: Vec3<T>) -> Self {
        Self {
            dx: d.x(),
            dy: d.y(),
            dz: d.z(),
            ..Default::default()
        }
    }

    pub fn as_array(&self) -> [T; 6] {
        [self.dx, self.dy, self.dz, self.dtheta, self.dphi, self.dpsi]
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dz: a[2],
            dtheta: a[3],
            dphi: a[4],
            dpsi: a[5],
        }
    }

    /// Maps a unit-box command (each entry clamped to `[-1, 1]`) onto the bounds.
    pub fn from_unit(u: &[T], bounds: &ActionBounds<T>) -> Self {
        let c = |v: T, s: T| v.max(-T::one()).min(T::one()) * s;
        Self {
            dx: c(u[0], bounds.max_step_len),
            dy: c(u[1], bounds.max_step_len),
            dz: c(u[2], bounds.max_step_len),
            dtheta: c(u[3], bounds.max_turn),
            dphi: c(u[4], bounds.max_turn),
            dpsi: c(u[5], bounds.max_turn),
        }
    }

    pub fn check(&self, bounds: &ActionBounds<T>) -> Result<()> {
        const NAMES: [&str; 6] = ["dx", "dy", "dz", "dtheta", "dphi", "dpsi"];
        for (i, v) in self.as_array().into_iter().enumerate() {
            let bound = if i < 3 {
                bounds.max_step_len
            } else {
                bounds.max_turn
            };
            if !v.is_finite() || v.abs() > bound {
                return Err(Error::ActionOutOfBounds {
                    component: NAMES[i],
                    value: v.to_f64_lossy(),
                    bound: bound.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Applies `a` to `p`, wrapping the resulting angles.
pub fn apply_action<T: Scalar>(p: &Pose<T>, a: &Action<T>, bounds: &ActionBounds<T>) -> Result<Pose<T>> {
    a.check(bounds)?;
    Ok(Pose::new(
        p.x + a.dx,
        p.y + a.dy,
        p.z + a.dz,
        p.theta + a.dtheta,
        p.phi + a.dphi,
        p.psi + a.dpsi,
    ))
}

/// Target waypoint with an optional arrival radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Waypoint<T: Scalar> {
    pub position: Vec3<T>,
    pub arrival_radius: Option<T>,
}

impl<T: Scalar> Waypoint<T> {
    pub fn new(position: Vec3<T>) -> Self {
        Self {
            position,
            arrival_radius: None,
        }
    }

    pub fn with_radius(position: Vec3<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::Config(format!(
                "arrival_radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            position,
            arrival_radius: Some(radius),
        })
    }
}

/// Ordered sequence of poses; `n = waypoints.len() - 1` transitions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<T: Scalar> {
    pub waypoints: Vec<Pose<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(waypoints: Vec<Pose<T>>) -> Self {
        Self { waypoints }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3<T>>) -> Self {
        Self::new(points.into_iter().map(Pose::at).collect())
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.len() <= 1
    }

    pub fn first(&self) -> Option<&Pose<T>> {
        self.waypoints.first()
    }

    pub fn last(&self) -> Option<&Pose<T>> {
        self.waypoints.last()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3<T>> + '_ {
        self.waypoints.iter().map(Pose::position)
    }

    pub fn path_length(&self) -> T {
        path_length(self)
    }
}

/// Sum of consecutive segment lengths; zero for fewer than two poses.
pub fn path_length<T: Scalar>(t: &Trajectory<T>) -> T {
    t.waypoints
        .windows(2)
        .map(|w| euclidean_distance(&w[0].position(), &w[1].position()))
        .fold(T::zero(), |a, b| a + b)
}
