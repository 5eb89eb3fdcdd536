//! Bird's-eye-view rasterization.

use serde::{Deserialize, Serialize};

use crate::network::{Point, Pose, RoadNetwork, Segment};
use crate::vehicle::VehicleState;
use crate::world::World;

pub const IMAGE_SIZE: usize = 84;

pub const BACKGROUND: u8 = 0;
pub const ROAD: u8 = 85;
pub const HV: u8 = 170;
pub const RV: u8 = 255;

/// One 84×84 grayscale frame, row-major with row 0 at the top (north).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BevImage {
    pub pixels: Vec<u8>,
}

impl BevImage {
    pub fn blank() -> Self {
        Self {
            pixels: vec![BACKGROUND; IMAGE_SIZE * IMAGE_SIZE],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * IMAGE_SIZE + col]
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&p| p == BACKGROUND)
    }
}

/// Framing of one render.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub center: Point,
    /// Side length of the square view (m).
    pub side: f64,
    /// Pixels farther than this from the center are cleared.
    pub mask_radius: Option<f64>,
}

impl View {
    pub fn meters_per_pixel(&self) -> f64 {
        self.side / IMAGE_SIZE as f64
    }

    /// Offset of a pixel center from the view center, x east and y north.
    pub fn pixel_offset(&self, row: usize, col: usize) -> (f64, f64) {
        let mpp = self.meters_per_pixel();
        let half = IMAGE_SIZE as f64 / 2.0;
        ((col as f64 + 0.5 - half) * mpp, (half - row as f64 - 0.5) * mpp)
    }

    fn masked(&self, dx: f64, dy: f64) -> bool {
        self.mask_radius.is_some_and(|r| dx * dx + dy * dy > r * r)
    }
}

fn segment_bounds(seg: &Segment) -> (Point, Point) {
    match *seg {
        Segment::Line { start, end } => (
            Point::new(start.x.min(end.x), start.y.min(end.y)),
            Point::new(start.x.max(end.x), start.y.max(end.y)),
        ),
        Segment::Arc { center, radius, .. } => (
            Point::new(center.x - radius, center.y - radius),
            Point::new(center.x + radius, center.y + radius),
        ),
    }
}

/// Distance from `p` to the segment's centerline shifted left by `lateral`,
/// when `p` projects strictly inside the segment.
fn lane_distance(seg: &Segment, p: Point, lateral: f64) -> Option<f64> {
    match *seg {
        Segment::Line { start, end } => {
            let (dx, dy) = (end.x - start.x, end.y - start.y);
            let len = (dx * dx + dy * dy).sqrt();
            let (ux, uy) = (dx / len, dy / len);
            let (px, py) = (p.x - start.x, p.y - start.y);
            let s = px * ux + py * uy;
            if !(0.0..=len).contains(&s) {
                return None;
            }
            let left = -px * uy + py * ux;
            Some((left - lateral).abs())
        }
        Segment::Arc {
            center,
            radius,
            start_angle,
            sweep,
        } => {
            let (px, py) = (p.x - center.x, p.y - center.y);
            let phi = py.atan2(px);
            let rel = if sweep >= 0.0 {
                (phi - start_angle).rem_euclid(std::f64::consts::TAU)
            } else {
                (start_angle - phi).rem_euclid(std::f64::consts::TAU)
            };
            if rel > sweep.abs() && sweep.abs() < std::f64::consts::TAU {
                return None;
            }
            // Left of travel is toward the center on a counter-clockwise arc.
            let lane_radius = if sweep >= 0.0 {
                radius - lateral
            } else {
                radius + lateral
            };
            Some(((px * px + py * py).sqrt() - lane_radius).abs())
        }
    }
}

fn draw_road(img: &mut BevImage, network: &RoadNetwork, view: &View) {
    let reach = view.side * std::f64::consts::FRAC_1_SQRT_2 + network.lane_width * 8.0;
    let half_w = network.lane_width / 2.0;
    for edge in &network.edges {
        for seg in &edge.centerline {
            let (lo, hi) = segment_bounds(seg);
            let pad = half_w + network.lane_width * edge.lane_count as f64;
            if lo.x - pad > view.center.x + reach
                || hi.x + pad < view.center.x - reach
                || lo.y - pad > view.center.y + reach
                || hi.y + pad < view.center.y - reach
            {
                continue;
            }
            for row in 0..IMAGE_SIZE {
                for col in 0..IMAGE_SIZE {
                    let k = row * IMAGE_SIZE + col;
                    if img.pixels[k] == ROAD {
                        continue;
                    }
                    let (dx, dy) = view.pixel_offset(row, col);
                    let p = Point::new(view.center.x + dx, view.center.y + dy);
                    let on_road = (0..edge.lane_count).any(|lane| {
                        lane_distance(seg, p, lane as f64 * network.lane_width).is_some_and(|d| d <= half_w)
                    });
                    if on_road {
                        img.pixels[k] = ROAD;
                    }
                }
            }
        }
    }
}

/// Pose of the middle of a vehicle's body, walking back along its route when
/// the body straddles an edge boundary.
pub fn body_center(world: &World, v: &VehicleState) -> Pose {
    let net = &world.network;
    let mut s = v.arc_pos - v.length / 2.0;
    let mut ri = v.route_index;
    let mut edge = v.edge;
    let edges = &net.route(v.route).edges;
    while s < 0.0 {
        if ri > 0 {
            ri -= 1;
        } else if net.closed {
            ri = edges.len() - 1;
        } else {
            s = 0.0;
            break;
        }
        edge = edges[ri];
        s += net.edge(edge).length;
    }
    let lane = v.lane.min(net.edge(edge).lane_count - 1);
    net.lane_to_world(edge, lane, s.min(net.edge(edge).length))
        .expect("body center lies on the route")
}

fn draw_vehicle(img: &mut BevImage, view: &View, pose: Pose, length: f64, width: f64, value: u8) {
    let (c, s) = (pose.heading.cos(), pose.heading.sin());
    let (hl, hw) = (length / 2.0, width / 2.0);
    let rx = hl * c.abs() + hw * s.abs();
    let ry = hl * s.abs() + hw * c.abs();
    let mpp = view.meters_per_pixel();
    let half = IMAGE_SIZE as f64 / 2.0;
    let (ox, oy) = (pose.x - view.center.x, pose.y - view.center.y);
    let col_lo = ((ox - rx) / mpp + half - 0.5).floor().max(0.0);
    let col_hi = ((ox + rx) / mpp + half - 0.5).ceil().min(IMAGE_SIZE as f64 - 1.0);
    let row_lo = (half - 0.5 - (oy + ry) / mpp).floor().max(0.0);
    let row_hi = (half - 0.5 - (oy - ry) / mpp).ceil().min(IMAGE_SIZE as f64 - 1.0);
    if col_lo > col_hi || row_lo > row_hi {
        return;
    }
    for row in row_lo as usize..=row_hi as usize {
        for col in col_lo as usize..=col_hi as usize {
            let (dx, dy) = view.pixel_offset(row, col);
            let (px, py) = (dx - ox, dy - oy);
            let along = px * c + py * s;
            let across = -px * s + py * c;
            if along.abs() <= hl && across.abs() <= hw {
                img.pixels[row * IMAGE_SIZE + col] = value;
            }
        }
    }
}

/// Renders the road and every vehicle around `view.center`. Vehicles for
/// which `is_rv` holds use the RV intensity and are drawn last.
pub fn render_bev(world: &World, view: &View, is_rv: &dyn Fn(&VehicleState) -> bool) -> BevImage {
    let mut img = BevImage::blank();
    draw_road(&mut img, &world.network, view);
    let reach = view.side;
    let mut rvs = Vec::new();
    for v in &world.vehicles {
        let pose = body_center(world, v);
        if (pose.x - view.center.x).abs() > reach || (pose.y - view.center.y).abs() > reach {
            continue;
        }
        if is_rv(v) {
            rvs.push((pose, v));
        } else {
            draw_vehicle(&mut img, view, pose, v.length, v.width, HV);
        }
    }
    for (pose, v) in rvs {
        draw_vehicle(&mut img, view, pose, v.length, v.width, RV);
    }
    if view.mask_radius.is_some() {
        for row in 0..IMAGE_SIZE {
            for col in 0..IMAGE_SIZE {
                let (dx, dy) = view.pixel_offset(row, col);
                if view.masked(dx, dy) {
                    img.pixels[row * IMAGE_SIZE + col] = BACKGROUND;
                }
            }
        }
    }
    img
}
