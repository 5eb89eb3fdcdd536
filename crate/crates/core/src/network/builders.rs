use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometry::{Point, Segment};
use super::{Edge, EdgeId, Junction, NetworkKind, PriorityRule, RoadNetwork, Route, RouteId, LANE_WIDTH};
use crate::error::{Error, Result};

const HIGHWAY_SPEED_LIMIT: f64 = 30.0;
const INTERSECTION_SPEED_LIMIT: f64 = 10.0;

/// Parameters of any of the five networks, as stored in episode configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Ring(RingParams),
    FigureEight(FigureEightParams),
    Intersection(IntersectionParams),
    Merge(MergeParams),
    Bottleneck(BottleneckParams),
}

impl NetworkSpec {
    pub fn kind(&self) -> NetworkKind {
        match self {
            NetworkSpec::Ring(_) => NetworkKind::Ring,
            NetworkSpec::FigureEight(_) => NetworkKind::FigureEight,
            NetworkSpec::Intersection(_) => NetworkKind::Intersection,
            NetworkSpec::Merge(_) => NetworkKind::Merge,
            NetworkSpec::Bottleneck(_) => NetworkKind::Bottleneck,
        }
    }

    pub fn build(&self) -> Result<RoadNetwork> {
        match self {
            NetworkSpec::Ring(p) => build_ring_with(p),
            NetworkSpec::FigureEight(p) => build_figure_eight_with(p),
            NetworkSpec::Intersection(p) => build_intersection(p),
            NetworkSpec::Merge(p) => build_merge(p),
            NetworkSpec::Bottleneck(p) => build_bottleneck(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingParams {
    pub circumference: f64,
    pub speed_limit: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            circumference: 260.0,
            speed_limit: HIGHWAY_SPEED_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigureEightParams {
    pub radius: f64,
    pub speed_limit: f64,
}

impl Default for FigureEightParams {
    fn default() -> Self {
        Self {
            radius: 30.0,
            speed_limit: HIGHWAY_SPEED_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectionParams {
    /// Length of each incoming approach up to its stop line.
    pub approach_length: f64,
    pub exit_length: f64,
    pub speed_limit: f64,
}

impl Default for IntersectionParams {
    fn default() -> Self {
        Self {
            approach_length: 120.0,
            exit_length: 120.0,
            speed_limit: INTERSECTION_SPEED_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeParams {
    pub highway_length: f64,
    pub ramp_length: f64,
    /// Attachment points of the two ramps as fractions of the highway length.
    pub ramp_attach: [f64; 2],
    pub speed_limit: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            highway_length: 700.0,
            ramp_length: 100.0,
            ramp_attach: [1.0 / 3.0, 2.0 / 3.0],
            speed_limit: HIGHWAY_SPEED_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BottleneckParams {
    pub scale: usize,
    pub segment_lengths: [f64; 3],
    pub speed_limit: f64,
}

impl Default for BottleneckParams {
    fn default() -> Self {
        Self {
            scale: 1,
            segment_lengths: [200.0, 100.0, 100.0],
            speed_limit: HIGHWAY_SPEED_LIMIT,
        }
    }
}

struct Builder {
    edges: Vec<Edge>,
}

impl Builder {
    fn new() -> Self {
        Self { edges: Vec::new() }
    }

    fn edge(&mut self, name: &str, lanes: usize, speed_limit: f64, centerline: Vec<Segment>) -> EdgeId {
        let id = EdgeId(self.edges.len());
        let length = centerline.iter().map(Segment::length).sum();
        self.edges.push(Edge {
            id,
            name: name.to_string(),
            length,
            lane_count: lanes,
            speed_limit,
            centerline,
        });
        id
    }

    fn line(&mut self, name: &str, lanes: usize, speed_limit: f64, a: Point, b: Point) -> EdgeId {
        self.edge(name, lanes, speed_limit, vec![Segment::Line { start: a, end: b }])
    }
}

fn routes(list: Vec<(&str, Vec<EdgeId>)>) -> Vec<Route> {
    list.into_iter()
        .enumerate()
        .map(|(i, (name, edges))| Route {
            id: RouteId(i),
            name: name.to_string(),
            edges,
        })
        .collect()
}

fn finish(net: RoadNetwork) -> Result<RoadNetwork> {
    net.validate()?;
    Ok(net)
}

/// Single-lane circular loop of the given circumference.
pub fn build_ring(circumference: f64) -> Result<RoadNetwork> {
    build_ring_with(&RingParams {
        circumference,
        ..RingParams::default()
    })
}

fn build_ring_with(p: &RingParams) -> Result<RoadNetwork> {
    if !(150.0..=400.0).contains(&p.circumference) {
        return Err(Error::config(
            "network.circumference",
            format!("{} m is outside [150, 400] m", p.circumference),
        ));
    }
    let radius = p.circumference / (2.0 * PI);
    let mut b = Builder::new();
    let ring = b.edge(
        "ring",
        1,
        p.speed_limit,
        vec![Segment::Arc {
            center: Point::new(0.0, 0.0),
            radius,
            start_angle: -PI / 2.0,
            sweep: 2.0 * PI,
        }],
    );
    // Pin the declared length to the requested circumference exactly.
    b.edges[ring.0].length = p.circumference;
    finish(RoadNetwork {
        kind: NetworkKind::Ring,
        closed: true,
        lane_width: LANE_WIDTH,
        edges: b.edges,
        junctions: Vec::new(),
        routes: routes(vec![("loop", vec![ring])]),
    })
}

/// Loop length of the figure eight for a given loop radius: two
/// three-quarter circles plus two straight crossing segments of `2r`.
pub fn figure_eight_length(radius: f64) -> f64 {
    2.0 * (2.0 * PI * radius * 0.75) + 2.0 * (2.0 * radius)
}

/// Closed single-lane figure eight: two three-quarter loops of `radius`
/// joined by two straights crossing at the origin.
pub fn build_figure_eight(radius: f64) -> Result<RoadNetwork> {
    build_figure_eight_with(&FigureEightParams {
        radius,
        ..FigureEightParams::default()
    })
}

fn build_figure_eight_with(p: &FigureEightParams) -> Result<RoadNetwork> {
    let r = p.radius;
    if !(15.0..=40.0).contains(&r) {
        return Err(Error::config("network.radius", format!("{r} m is outside [15, 40] m")));
    }
    let v = p.speed_limit;
    // Half extent of the crossing box: one lane wide in each direction.
    let h = LANE_WIDTH / 2.0;
    let mut b = Builder::new();
    let h_in = b.line("horizontal_in", 1, v, Point::new(-r, 0.0), Point::new(-h, 0.0));
    let h_box = b.line("horizontal_cross", 1, v, Point::new(-h, 0.0), Point::new(h, 0.0));
    let h_out = b.line("horizontal_out", 1, v, Point::new(h, 0.0), Point::new(r, 0.0));
    let loop_a = b.edge(
        "loop_east",
        1,
        v,
        vec![Segment::Arc {
            center: Point::new(r, r),
            radius: r,
            start_angle: -PI / 2.0,
            sweep: 1.5 * PI,
        }],
    );
    let v_in = b.line("vertical_in", 1, v, Point::new(0.0, r), Point::new(0.0, h));
    let v_box = b.line("vertical_cross", 1, v, Point::new(0.0, h), Point::new(0.0, -h));
    let v_out = b.line("vertical_out", 1, v, Point::new(0.0, -h), Point::new(0.0, -r));
    let loop_b = b.edge(
        "loop_west",
        1,
        v,
        vec![Segment::Arc {
            center: Point::new(-r, -r),
            radius: r,
            start_angle: 0.0,
            sweep: -1.5 * PI,
        }],
    );
    finish(RoadNetwork {
        kind: NetworkKind::FigureEight,
        closed: true,
        lane_width: LANE_WIDTH,
        edges: b.edges,
        junctions: vec![Junction {
            id: 0,
            name: "crossing".into(),
            center: Point::new(0.0, 0.0),
            incoming: vec![h_in, v_in],
            internal: vec![h_box, v_box],
            outgoing: vec![h_out, v_out],
            rule: PriorityRule::None,
        }],
        routes: routes(vec![(
            "loop",
            vec![h_in, h_box, h_out, loop_a, v_in, v_box, v_out, loop_b],
        )]),
    })
}

/// Four single-lane approaches meeting at a two-way stop; east and west are
/// the minor approaches.
pub fn build_intersection(p: &IntersectionParams) -> Result<RoadNetwork> {
    if p.approach_length < 120.0 {
        return Err(Error::config(
            "network.approach_length",
            format!("{} m is shorter than the 120 m minimum", p.approach_length),
        ));
    }
    if !(p.exit_length > 0.0) {
        return Err(Error::config("network.exit_length", "must be positive"));
    }
    let w = LANE_WIDTH;
    let (la, lo, v) = (p.approach_length, p.exit_length, p.speed_limit);
    let hw = w / 2.0;
    let mut b = Builder::new();
    // Right-hand traffic; each approach is named after where it comes from.
    let n_in = b.line("north_in", 1, v, Point::new(-hw, w + la), Point::new(-hw, w));
    let s_in = b.line("south_in", 1, v, Point::new(hw, -w - la), Point::new(hw, -w));
    let e_in = b.line("east_in", 1, v, Point::new(w + la, hw), Point::new(w, hw));
    let w_in = b.line("west_in", 1, v, Point::new(-w - la, -hw), Point::new(-w, -hw));
    let n_box = b.line("north_cross", 1, v, Point::new(-hw, w), Point::new(-hw, -w));
    let s_box = b.line("south_cross", 1, v, Point::new(hw, -w), Point::new(hw, w));
    let e_box = b.line("east_cross", 1, v, Point::new(w, hw), Point::new(-w, hw));
    let w_box = b.line("west_cross", 1, v, Point::new(-w, -hw), Point::new(w, -hw));
    let n_out = b.line("north_out", 1, v, Point::new(-hw, -w), Point::new(-hw, -w - lo));
    let s_out = b.line("south_out", 1, v, Point::new(hw, w), Point::new(hw, w + lo));
    let e_out = b.line("east_out", 1, v, Point::new(-w, hw), Point::new(-w - lo, hw));
    let w_out = b.line("west_out", 1, v, Point::new(w, -hw), Point::new(w + lo, -hw));
    finish(RoadNetwork {
        kind: NetworkKind::Intersection,
        closed: false,
        lane_width: w,
        edges: b.edges,
        junctions: vec![Junction {
            id: 0,
            name: "center".into(),
            center: Point::new(0.0, 0.0),
            incoming: vec![n_in, s_in, e_in, w_in],
            internal: vec![n_box, s_box, e_box, w_box],
            outgoing: vec![n_out, s_out, e_out, w_out],
            rule: PriorityRule::TwoWayStop {
                minor: vec![e_in, w_in],
            },
        }],
        routes: routes(vec![
            ("from_north", vec![n_in, n_box, n_out]),
            ("from_south", vec![s_in, s_box, s_out]),
            ("from_east", vec![e_in, e_box, e_out]),
            ("from_west", vec![w_in, w_box, w_out]),
        ]),
    })
}

/// Single-lane highway with two right-side on-ramps.
pub fn build_merge(p: &MergeParams) -> Result<RoadNetwork> {
    let [a1, a2] = p.ramp_attach;
    if !(p.highway_length > 0.0 && p.ramp_length > 0.0) {
        return Err(Error::config("network", "highway and ramp lengths must be positive"));
    }
    if !(0.0 < a1 && a1 < a2 && a2 < 1.0) {
        return Err(Error::config("network.ramp_attach", "need 0 < first < second < 1"));
    }
    let (len, v) = (p.highway_length, p.speed_limit);
    let x1 = len * a1;
    let x2 = len * a2;
    let mut b = Builder::new();
    let h0 = b.line("highway_0", 1, v, Point::new(0.0, 0.0), Point::new(x1, 0.0));
    let h1 = b.line("highway_1", 1, v, Point::new(x1, 0.0), Point::new(x2, 0.0));
    let h2 = b.line("highway_2", 1, v, Point::new(x2, 0.0), Point::new(len, 0.0));
    let angle = 15f64.to_radians();
    let ramp_start = |x: f64| Point::new(x - p.ramp_length * angle.cos(), -p.ramp_length * angle.sin());
    let r1 = b.line("ramp_1", 1, v, ramp_start(x1), Point::new(x1, 0.0));
    let r2 = b.line("ramp_2", 1, v, ramp_start(x2), Point::new(x2, 0.0));
    // Ramp edges are stored with exact declared lengths.
    b.edges[r1.0].length = p.ramp_length;
    b.edges[r2.0].length = p.ramp_length;
    finish(RoadNetwork {
        kind: NetworkKind::Merge,
        closed: false,
        lane_width: LANE_WIDTH,
        edges: b.edges,
        junctions: vec![
            Junction {
                id: 0,
                name: "merge_1".into(),
                center: Point::new(x1, 0.0),
                incoming: vec![h0, r1],
                internal: Vec::new(),
                outgoing: vec![h1],
                rule: PriorityRule::MergeYield { ramps: vec![r1] },
            },
            Junction {
                id: 1,
                name: "merge_2".into(),
                center: Point::new(x2, 0.0),
                incoming: vec![h1, r2],
                internal: Vec::new(),
                outgoing: vec![h2],
                rule: PriorityRule::MergeYield { ramps: vec![r2] },
            },
        ],
        routes: routes(vec![
            ("highway", vec![h0, h1, h2]),
            ("ramp_1", vec![r1, h1, h2]),
            ("ramp_2", vec![r2, h2]),
        ]),
    })
}

/// Straight road whose lane count drops from `4*scale` to `2*scale` to `scale`.
pub fn build_bottleneck(p: &BottleneckParams) -> Result<RoadNetwork> {
    if p.scale < 1 {
        return Err(Error::config("network.scale", "must be at least 1"));
    }
    if !p.segment_lengths.iter().all(|&l| l > 0.0) {
        return Err(Error::config("network.segment_lengths", "must be positive"));
    }
    let [l0, l1, l2] = p.segment_lengths;
    let s = p.scale;
    let v = p.speed_limit;
    let mut b = Builder::new();
    let e0 = b.line("entry", 4 * s, v, Point::new(0.0, 0.0), Point::new(l0, 0.0));
    let e1 = b.line("middle", 2 * s, v, Point::new(l0, 0.0), Point::new(l0 + l1, 0.0));
    let e2 = b.line("bridge", s, v, Point::new(l0 + l1, 0.0), Point::new(l0 + l1 + l2, 0.0));
    finish(RoadNetwork {
        kind: NetworkKind::Bottleneck,
        closed: false,
        lane_width: LANE_WIDTH,
        edges: b.edges,
        junctions: vec![
            Junction {
                id: 0,
                name: "drop_1".into(),
                center: Point::new(l0, 0.0),
                incoming: vec![e0],
                internal: Vec::new(),
                outgoing: vec![e1],
                rule: PriorityRule::LaneDrop,
            },
            Junction {
                id: 1,
                name: "drop_2".into(),
                center: Point::new(l0 + l1, 0.0),
                incoming: vec![e1],
                internal: Vec::new(),
                outgoing: vec![e2],
                rule: PriorityRule::LaneDrop,
            },
        ],
        routes: routes(vec![("main", vec![e0, e1, e2])]),
    })
}
