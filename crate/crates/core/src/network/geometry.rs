//! Planar primitives used to embed lanes in the plane.
//!
//! Centerlines are paths of straight and circular pieces so that arc lengths
//! are exact; a sampled polyline would drift from the declared length on the
//! circular networks.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// A pose on a lane: position plus heading (radians, counter-clockwise from +x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// One piece of a centerline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Segment {
    Line {
        start: Point,
        end: Point,
    },
    /// Circular arc starting at `start_angle` on the circle; positive `sweep`
    /// runs counter-clockwise.
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { start, end } => start.distance(end),
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Pose at arc length `s` from the start, shifted `lateral` meters to the
    /// left of the direction of travel.
    pub fn pose_at(&self, s: f64, lateral: f64) -> Pose {
        let (p, heading) = match *self {
            Segment::Line { start, end } => {
                let len = start.distance(end);
                let t = if len > 0.0 { s / len } else { 0.0 };
                let heading = (end.y - start.y).atan2(end.x - start.x);
                (
                    Point::new(start.x + (end.x - start.x) * t, start.y + (end.y - start.y) * t),
                    heading,
                )
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dir = sweep.signum();
                let angle = start_angle + dir * s / radius;
                let p = Point::new(center.x + radius * angle.cos(), center.y + radius * angle.sin());
                (p, angle + dir * PI / 2.0)
            }
        };
        let (nx, ny) = (-heading.sin(), heading.cos());
        Pose {
            x: p.x + lateral * nx,
            y: p.y + lateral * ny,
            heading: normalize_angle(heading),
        }
    }

    /// Closest-point projection: returns (arc length along the piece, signed
    /// lateral offset to the left, unsigned distance to the piece).
    pub fn project(&self, p: Point) -> (f64, f64, f64) {
        match *self {
            Segment::Line { start, end } => {
                let (dx, dy) = (end.x - start.x, end.y - start.y);
                let len = dx.hypot(dy);
                let (ux, uy) = (dx / len, dy / len);
                let (rx, ry) = (p.x - start.x, p.y - start.y);
                let along = rx * ux + ry * uy;
                let lateral = -rx * uy + ry * ux;
                let s = along.clamp(0.0, len);
                let dist = if along < 0.0 || along > len {
                    let q = self.pose_at(s, 0.0).point();
                    q.distance(p)
                } else {
                    lateral.abs()
                };
                (s, lateral, dist)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dir = sweep.signum();
                let r = p.distance(center);
                let angle = (p.y - center.y).atan2(p.x - center.x);
                let mut delta = (angle - start_angle) * dir;
                delta = delta.rem_euclid(TAU);
                let span = sweep.abs();
                let inside = delta <= span;
                if !inside {
                    // Snap to whichever end is angularly nearer.
                    let to_end = delta - span;
                    let to_start = TAU - delta;
                    delta = if to_end < to_start { span } else { 0.0 };
                }
                let s = delta * radius;
                // Left of travel points towards the center on CCW arcs.
                let lateral = if dir > 0.0 { radius - r } else { r - radius };
                let dist = if inside {
                    (r - radius).abs()
                } else {
                    self.pose_at(s, 0.0).point().distance(p)
                };
                (s, lateral, dist)
            }
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Segment {
        match *self {
            Segment::Line { start, end } => Segment::Line {
                start: start.translated(dx, dy),
                end: end.translated(dx, dy),
            },
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => Segment::Arc {
                center: center.translated(dx, dy),
                radius,
                start_angle,
                sweep,
            },
        }
    }
}

pub fn normalize_angle(a: f64) -> f64 {
    let a = a.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Sum of piece lengths.
pub fn path_length(path: &[Segment]) -> f64 {
    path.iter().map(Segment::length).sum()
}

/// Pose at arc length `s` along a multi-piece path.
pub fn path_pose(path: &[Segment], s: f64, lateral: f64) -> Pose {
    let mut remaining = s;
    for (i, seg) in path.iter().enumerate() {
        let len = seg.length();
        if remaining <= len || i + 1 == path.len() {
            return seg.pose_at(remaining.min(len), lateral);
        }
        remaining -= len;
    }
    unreachable!("paths always hold at least one segment")
}

/// Projection onto the nearest piece of a path: (arc length, lateral, distance).
pub fn path_project(path: &[Segment], p: Point) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    let mut offset = 0.0;
    for seg in path {
        let (s, lat, d) = seg.project(p);
        if d < best.2 {
            best = (offset + s, lat, d);
        }
        offset += seg.length();
    }
    best
}
