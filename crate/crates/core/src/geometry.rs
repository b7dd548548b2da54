//! Planar workspace geometry: obstacles, target region, robot footprint.

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle, closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        let dx = (self.min[0] - p.x).max(0.0).max(p.x - self.max[0]);
        let dy = (self.min[1] - p.y).max(0.0).max(p.y - self.max[1]);
        dx.hypot(dy)
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]))
    }

    fn half_extents(&self) -> Vector2<f64> {
        Vector2::new(0.5 * (self.max[0] - self.min[0]), 0.5 * (self.max[1] - self.min[1]))
    }

    fn is_valid(&self) -> bool {
        self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.min[0] <= self.max[0]
            && self.min[1] <= self.max[1]
    }

    /// Parameter interval `[t0, t1]` of the segment `p0 + t (p1 - p0)`,
    /// `t ∈ [0, 1]`, that lies inside the rectangle (Liang–Barsky clipping).
    pub fn clip_segment(&self, p0: &Vector2<f64>, p1: &Vector2<f64>) -> Option<(f64, f64)> {
        let d = p1 - p0;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for axis in 0..2 {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if d[axis].abs() < 1e-15 {
                if p0[axis] < lo || p0[axis] > hi {
                    return None;
                }
                continue;
            }
            let ta = (lo - p0[axis]) / d[axis];
            let tb = (hi - p0[axis]) / d[axis];
            let (enter, exit) = if ta < tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(enter);
            t1 = t1.min(exit);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Obstacle or target shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect { min: [f64; 2], max: [f64; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl Shape {
    pub fn rect(min: [f64; 2], max: [f64; 2]) -> Self {
        Shape::Rect { min, max }
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Shape::Circle { center, radius }
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        match *self {
            Shape::Rect { min, max } => Aabb { min, max }.contains(p),
            Shape::Circle { center, radius } => {
                (p - Vector2::from(center)).norm_squared() <= radius * radius
            }
        }
    }

    /// Distance from a point to the shape (zero inside).
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        match *self {
            Shape::Rect { min, max } => Aabb { min, max }.distance(p),
            Shape::Circle { center, radius } => ((p - Vector2::from(center)).norm() - radius).max(0.0),
        }
    }

    pub fn centroid(&self) -> Vector2<f64> {
        match *self {
            Shape::Rect { min, max } => Aabb { min, max }.center(),
            Shape::Circle { center, .. } => Vector2::from(center),
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match *self {
            Shape::Rect { min, max } => Aabb { min, max },
            Shape::Circle { center, radius } => Aabb {
                min: [center[0] - radius, center[1] - radius],
                max: [center[0] + radius, center[1] + radius],
            },
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            Shape::Rect { min, max } => Aabb { min, max }.is_valid(),
            Shape::Circle { center, radius } => {
                center.iter().all(|v| v.is_finite()) && radius.is_finite() && radius >= 0.0
            }
        }
    }

    /// Whether two closed shapes share at least one point.
    pub fn intersects(&self, other: &Shape) -> bool {
        match (*self, *other) {
            (Shape::Rect { min: a0, max: a1 }, Shape::Rect { min: b0, max: b1 }) => {
                a0[0] <= b1[0] && b0[0] <= a1[0] && a0[1] <= b1[1] && b0[1] <= a1[1]
            }
            (Shape::Rect { min, max }, Shape::Circle { center, radius })
            | (Shape::Circle { center, radius }, Shape::Rect { min, max }) => {
                Aabb { min, max }.distance(&Vector2::from(center)) <= radius
            }
            (Shape::Circle { center: c0, radius: r0 }, Shape::Circle { center: c1, radius: r1 }) => {
                (Vector2::from(c0) - Vector2::from(c1)).norm() <= r0 + r1
            }
        }
    }
}

/// Robot body used for obstacle checks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RobotFootprint {
    #[default]
    Point,
    Disc { radius: f64 },
    /// Rectangle centred on the robot, `width` along the heading.
    Rectangle { width: f64, height: f64 },
}

impl RobotFootprint {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RobotFootprint::Point => true,
            RobotFootprint::Disc { radius } => radius.is_finite() && radius >= 0.0,
            RobotFootprint::Rectangle { width, height } => {
                width.is_finite() && height.is_finite() && width >= 0.0 && height >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Scenario(format!("footprint extents must be nonnegative: {self:?}")))
        }
    }
}

/// Planar pose of the robot centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector2<f64>,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { position: Vector2::new(x, y), heading }
    }
}

/// Oriented rectangle in world coordinates.
struct Obb {
    center: Vector2<f64>,
    rot: Rotation2<f64>,
    half: Vector2<f64>,
}

impl Obb {
    fn corners(&self) -> [Vector2<f64>; 4] {
        let (hx, hy) = (self.half.x, self.half.y);
        [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)]
            .map(|(x, y)| self.center + self.rot * Vector2::new(x, y))
    }

    fn intersects_aabb(&self, b: &Aabb) -> bool {
        // Separating axis test over the two world axes and the two body axes.
        let corners = self.corners();
        for axis in 0..2 {
            let lo = corners.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
            let hi = corners.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
            if hi < b.min[axis] || lo > b.max[axis] {
                return false;
            }
        }
        let bc = b.center();
        let bh = b.half_extents();
        let b_corners = [
            bc + Vector2::new(bh.x, bh.y),
            bc + Vector2::new(-bh.x, bh.y),
            bc + Vector2::new(-bh.x, -bh.y),
            bc + Vector2::new(bh.x, -bh.y),
        ];
        for k in 0..2 {
            let axis = self.rot * if k == 0 { Vector2::x() } else { Vector2::y() };
            let c = axis.dot(&self.center);
            let r = self.half[k];
            let lo = b_corners.iter().map(|p| axis.dot(p)).fold(f64::INFINITY, f64::min);
            let hi = b_corners.iter().map(|p| axis.dot(p)).fold(f64::NEG_INFINITY, f64::max);
            if hi < c - r || lo > c + r {
                return false;
            }
        }
        true
    }

    fn intersects_circle(&self, center: &Vector2<f64>, radius: f64) -> bool {
        let local = self.rot.inverse() * (center - self.center);
        let local_box = Aabb::new([-self.half.x, -self.half.y], [self.half.x, self.half.y]);
        local_box.distance(&local) <= radius
    }
}

/// The planar workspace: outer bounds, obstacles, and target region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub bounds: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    pub target: Shape,
}

impl Workspace {
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::Scenario("workspace bounds are not a valid rectangle".into()));
        }
        let inside_bounds = |s: &Shape| {
            let bb = s.bounding_box();
            bb.min[0] >= self.bounds.min[0]
                && bb.min[1] >= self.bounds.min[1]
                && bb.max[0] <= self.bounds.max[0]
                && bb.max[1] <= self.bounds.max[1]
        };
        if !self.target.is_valid() || !inside_bounds(&self.target) {
            return Err(Error::Scenario("target region must be a valid shape inside the bounds".into()));
        }
        for (k, obstacle) in self.obstacles.iter().enumerate() {
            if !obstacle.is_valid() || !inside_bounds(obstacle) {
                return Err(Error::Scenario(format!("obstacle {k} must be a valid shape inside the bounds")));
            }
            if obstacle.intersects(&self.target) {
                return Err(Error::Scenario(format!("obstacle {k} intersects the target region")));
            }
        }
        Ok(())
    }

    /// True iff the footprint placed at `pose` touches an obstacle or leaves the bounds.
    pub fn in_collision(&self, pose: &Pose, footprint: &RobotFootprint) -> bool {
        let p = &pose.position;
        match *footprint {
            RobotFootprint::Point => {
                !self.bounds.contains(p) || self.obstacles.iter().any(|o| o.contains(p))
            }
            RobotFootprint::Disc { radius } => {
                let b = &self.bounds;
                let outside = p.x - radius < b.min[0]
                    || p.x + radius > b.max[0]
                    || p.y - radius < b.min[1]
                    || p.y + radius > b.max[1]
                    || !p.x.is_finite()
                    || !p.y.is_finite();
                outside || self.obstacles.iter().any(|o| o.distance(p) <= radius)
            }
            RobotFootprint::Rectangle { width, height } => {
                let obb = Obb {
                    center: *p,
                    rot: Rotation2::new(pose.heading),
                    half: Vector2::new(0.5 * width, 0.5 * height),
                };
                let outside = obb.corners().iter().any(|c| !self.bounds.contains(c));
                outside
                    || self.obstacles.iter().any(|o| match *o {
                        Shape::Rect { min, max } => obb.intersects_aabb(&Aabb { min, max }),
                        Shape::Circle { center, radius } => {
                            obb.intersects_circle(&Vector2::from(center), radius)
                        }
                    })
            }
        }
    }

    /// Target membership of the robot centre (closed region).
    pub fn in_target(&self, pose: &Pose) -> bool {
        self.bounds.contains(&pose.position) && self.target.contains(&pose.position)
    }

    /// Point-robot check of a straight motion sampled every `step` metres.
    pub fn segment_collides_sampled(&self, p0: &Vector2<f64>, p1: &Vector2<f64>, step: f64) -> bool {
        let len = (p1 - p0).norm();
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n).any(|k| {
            let p = p0 + (p1 - p0) * (k as f64 / n as f64);
            !self.bounds.contains(&p) || self.obstacles.iter().any(|o| o.contains(&p))
        })
    }
}
