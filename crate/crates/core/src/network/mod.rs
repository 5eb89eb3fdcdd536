//! Road networks: lane graphs with 1D arc-length coordinates and a planar
//! embedding.
//!
//! Every network is produced by one of the five parametric builders in
//! [`builders`]. Networks are immutable after construction and are shared
//! between worlds through an `Arc`.

mod builders;
pub mod geometry;

use serde::{Deserialize, Serialize};

pub use builders::{
    build_bottleneck, build_figure_eight, build_intersection, build_merge, build_ring, figure_eight_length,
    BottleneckParams, FigureEightParams, IntersectionParams, MergeParams, NetworkSpec, RingParams,
};
pub use geometry::{Point, Pose, Segment};

use crate::error::{Error, Result};

/// Default lane width in meters.
pub const LANE_WIDTH: f64 = 3.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Ring,
    FigureEight,
    Intersection,
    Merge,
    Bottleneck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub name: String,
    pub length: f64,
    pub lane_count: usize,
    pub speed_limit: f64,
    pub centerline: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorityRule {
    /// No priority: conflicting approaches are served first-come first-served.
    None,
    /// Minor approaches stop at the line and yield to the major approaches.
    TwoWayStop { minor: Vec<EdgeId> },
    /// Ramp edges yield to the through lane.
    MergeYield { ramps: Vec<EdgeId> },
    /// Lanes that do not continue into the outgoing edge must merge.
    LaneDrop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: usize,
    pub name: String,
    pub center: Point,
    pub incoming: Vec<EdgeId>,
    /// Edges inside the junction box; boxes of different approaches may cross.
    #[serde(default)]
    pub internal: Vec<EdgeId>,
    pub outgoing: Vec<EdgeId>,
    pub rule: PriorityRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: RouteId,
    pub name: String,
    pub edges: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub kind: NetworkKind,
    /// Ring and figure-eight are closed loops; vehicles never leave them.
    pub closed: bool,
    pub lane_width: f64,
    pub edges: Vec<Edge>,
    pub junctions: Vec<Junction>,
    pub routes: Vec<Route>,
}

impl RoadNetwork {
    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id.0]
    }

    pub fn edge_by_name(&self, name: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.name == name)
    }

    pub fn route_by_name(&self, name: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.name == name)
    }

    pub fn route_length(&self, id: RouteId) -> f64 {
        self.route(id).edges.iter().map(|&e| self.edge(e).length).sum()
    }

    /// Length of the longest route; for closed networks this is the loop length.
    pub fn total_length(&self) -> f64 {
        (0..self.routes.len())
            .map(|r| self.route_length(RouteId(r)))
            .fold(0.0, f64::max)
    }

    /// Arc offset of the `index`-th edge of a route from the route start.
    pub fn route_offset(&self, route: RouteId, index: usize) -> f64 {
        self.route(route).edges[..index]
            .iter()
            .map(|&e| self.edge(e).length)
            .sum()
    }

    /// Next edge of a route after position `index`, wrapping on closed networks.
    pub fn next_in_route(&self, route: RouteId, index: usize) -> Option<(usize, EdgeId)> {
        let edges = &self.route(route).edges;
        if index + 1 < edges.len() {
            Some((index + 1, edges[index + 1]))
        } else if self.closed {
            Some((0, edges[0]))
        } else {
            None
        }
    }

    /// All edges that feed directly into `edge` along some route.
    pub fn predecessors(&self, edge: EdgeId) -> Vec<EdgeId> {
        let mut out = Vec::new();
        for route in &self.routes {
            let n = route.edges.len();
            for (i, &e) in route.edges.iter().enumerate() {
                if e != edge {
                    continue;
                }
                let prev = if i > 0 {
                    Some(route.edges[i - 1])
                } else if self.closed {
                    Some(route.edges[n - 1])
                } else {
                    None
                };
                if let Some(p) = prev {
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Junction whose incoming list contains `edge`, if any.
    pub fn junction_after(&self, edge: EdgeId) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.incoming.contains(&edge))
    }

    /// World pose of a point on a lane. Lanes are offset to the left of the
    /// centerline by `lane_index * lane_width`.
    pub fn lane_to_world(&self, edge: EdgeId, lane_index: usize, arc_pos: f64) -> Result<Pose> {
        let e = self
            .edges
            .get(edge.0)
            .ok_or_else(|| Error::Domain(format!("unknown edge {}", edge.0)))?;
        if lane_index >= e.lane_count {
            return Err(Error::Domain(format!(
                "lane {lane_index} out of range for edge `{}` with {} lanes",
                e.name, e.lane_count
            )));
        }
        if !(0.0..=e.length + 1e-9).contains(&arc_pos) {
            return Err(Error::Domain(format!(
                "arc position {arc_pos} outside edge `{}` of length {}",
                e.name, e.length
            )));
        }
        Ok(geometry::path_pose(
            &e.centerline,
            arc_pos.min(e.length),
            lane_index as f64 * self.lane_width,
        ))
    }

    /// Inverse of [`lane_to_world`](Self::lane_to_world) on one edge: returns
    /// (arc position, lateral offset from the centerline).
    pub fn world_to_lane(&self, edge: EdgeId, p: Point) -> (f64, f64) {
        let (s, lat, _) = geometry::path_project(&self.edge(edge).centerline, p);
        (s, lat)
    }

    /// Copy of the network with every coordinate shifted by (dx, dy).
    pub fn translated(&self, dx: f64, dy: f64) -> RoadNetwork {
        let mut out = self.clone();
        for e in &mut out.edges {
            for seg in &mut e.centerline {
                *seg = seg.translated(dx, dy);
            }
        }
        for j in &mut out.junctions {
            j.center = j.center.translated(dx, dy);
        }
        out
    }

    /// Checks the structural invariants every builder must satisfy.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.edges.iter().enumerate() {
            if e.id.0 != i {
                return Err(Error::config(
                    "edges",
                    format!("edge `{}` has id {} at index {i}", e.name, e.id.0),
                ));
            }
            if !(e.length > 0.0) {
                return Err(Error::config(
                    "edges",
                    format!("edge `{}` has non-positive length", e.name),
                ));
            }
            if e.lane_count == 0 {
                return Err(Error::config("edges", format!("edge `{}` has no lanes", e.name)));
            }
            if e.centerline.is_empty() {
                return Err(Error::config(
                    "edges",
                    format!("edge `{}` has an empty centerline", e.name),
                ));
            }
            let drawn = geometry::path_length(&e.centerline);
            if (drawn - e.length).abs() > 1e-6 {
                return Err(Error::config(
                    "edges",
                    format!(
                        "edge `{}` declares {} m but its centerline is {drawn} m",
                        e.name, e.length
                    ),
                ));
            }
        }
        let known = |id: &EdgeId| id.0 < self.edges.len();
        for j in &self.junctions {
            if !j.incoming.iter().chain(&j.internal).chain(&j.outgoing).all(known) {
                return Err(Error::config(
                    "junctions",
                    format!("junction `{}` references an unknown edge", j.name),
                ));
            }
            if let PriorityRule::TwoWayStop { minor } = &j.rule {
                if minor.is_empty() || !minor.iter().all(|m| j.incoming.contains(m)) {
                    return Err(Error::config(
                        "junctions",
                        format!(
                            "two-way stop `{}` must name its minor approaches among its incoming edges",
                            j.name
                        ),
                    ));
                }
            }
        }
        for r in &self.routes {
            if r.edges.is_empty() || !r.edges.iter().all(known) {
                return Err(Error::config(
                    "routes",
                    format!("route `{}` is empty or references an unknown edge", r.name),
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let net: RoadNetwork = toml::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}
