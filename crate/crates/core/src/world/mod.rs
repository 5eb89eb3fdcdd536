//! Simulation state and the per-step machinery that advances it.
//!
//! A [`World`] holds the vehicles on a shared [`RoadNetwork`]. Each step the
//! episode engine calls, in order: mandatory lane changes, [`World::prepare`]
//! (junction control and leader search over the frozen state), the control
//! laws, then [`step_dynamics`].

mod junction;
mod lane_change;
mod step;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use junction::{JunctionControl, TrafficRules};
pub use lane_change::{lane_change_mandatory, LaneChange};
pub use step::{step_dynamics, StepOutcome};

use crate::dynamics::{idm_acceleration, IdmParams};
use crate::metrics::ExitLog;
use crate::network::{EdgeId, RoadNetwork, RouteId};
use crate::vehicle::{VehicleId, VehicleState};

/// Leader search stops after this distance (m).
pub const LOOKAHEAD: f64 = 1000.0;

#[derive(Clone, Debug)]
pub struct World {
    pub network: Arc<RoadNetwork>,
    pub vehicles: Vec<VehicleState>,
    /// Simulation clock (s).
    pub time: f64,
    pub steps: u64,
    pub exit_log: ExitLog,
    pub next_id: u64,
    pub collision: bool,
    pub(crate) control: JunctionControl,
}

/// A vehicle ahead or behind, with the bumper-to-bumper gap to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub gap: f64,
    pub velocity: f64,
}

/// A longitudinal obstacle: a real leader or a virtual stopped one (stop
/// line, end of a dropped lane, projected merge partner).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    /// Physical distance the vehicle may not cover.
    pub gap: f64,
    /// Gap fed to the car-following law. For stop lines this is shifted by
    /// the jam distance so the vehicle comes to rest at the line.
    pub idm_gap: f64,
    pub leader_v: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ahead {
    pub leader: Option<Neighbor>,
    /// Distance to the end of a lane that does not continue.
    pub lane_end: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Surroundings {
    pub leader: Option<Neighbor>,
    pub constraints: Vec<Constraint>,
}

/// Frozen view of one step: lane occupancy plus every vehicle's obstacles.
#[derive(Clone, Debug)]
pub struct Perception {
    pub index: LaneIndex,
    pub around: Vec<Surroundings>,
}

/// Vehicle indices per (edge, lane), sorted by front position.
#[derive(Clone, Debug)]
pub struct LaneIndex {
    lanes: Vec<Vec<Vec<usize>>>,
}

impl LaneIndex {
    pub fn build(network: &RoadNetwork, vehicles: &[VehicleState]) -> Self {
        let mut lanes: Vec<Vec<Vec<usize>>> = network.edges.iter().map(|e| vec![Vec::new(); e.lane_count]).collect();
        for (i, v) in vehicles.iter().enumerate() {
            lanes[v.edge.0][v.lane].push(i);
        }
        for edge in &mut lanes {
            for lane in edge {
                lane.sort_by(|&a, &b| {
                    vehicles[a]
                        .arc_pos
                        .total_cmp(&vehicles[b].arc_pos)
                        .then(vehicles[a].id.cmp(&vehicles[b].id))
                });
            }
        }
        Self { lanes }
    }

    pub fn lane(&self, edge: EdgeId, lane: usize) -> &[usize] {
        self.lanes
            .get(edge.0)
            .and_then(|e| e.get(lane))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub(crate) fn insert(&mut self, vehicles: &[VehicleState], i: usize) {
        let v = &vehicles[i];
        let list = &mut self.lanes[v.edge.0][v.lane];
        let pos = list.partition_point(|&j| (vehicles[j].arc_pos, vehicles[j].id) < (v.arc_pos, v.id));
        list.insert(pos, i);
    }

    pub(crate) fn remove(&mut self, edge: EdgeId, lane: usize, i: usize) {
        self.lanes[edge.0][lane].retain(|&j| j != i);
    }
}

impl World {
    pub fn new(network: Arc<RoadNetwork>) -> Self {
        Self {
            network,
            vehicles: Vec::new(),
            time: 0.0,
            steps: 0,
            exit_log: ExitLog::default(),
            next_id: 0,
            collision: false,
            control: JunctionControl::default(),
        }
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }

    pub fn lane_index(&self) -> LaneIndex {
        LaneIndex::build(&self.network, &self.vehicles)
    }

    /// Front bumper position measured along the vehicle's route.
    pub fn route_position(&self, v: &VehicleState) -> f64 {
        self.network.route_offset(v.route, v.route_index) + v.arc_pos
    }

    /// First vehicle ahead of `i` in its lane, following its route.
    pub fn leader_of(&self, index: &LaneIndex, i: usize) -> Ahead {
        let v = &self.vehicles[i];
        let list = index.lane(v.edge, v.lane);
        let k = list
            .iter()
            .position(|&j| j == i)
            .expect("vehicle missing from lane index");
        if let Some(&j) = list.get(k + 1) {
            let lead = &self.vehicles[j];
            return Ahead {
                leader: Some(Neighbor {
                    index: j,
                    gap: lead.arc_pos - lead.length - v.arc_pos,
                    velocity: lead.velocity,
                }),
                lane_end: None,
            };
        }
        self.walk_ahead(index, v.route, v.route_index, v.edge, v.lane, v.arc_pos, Some(i))
    }

    /// Search ahead from a position, starting on the edges after `edge`.
    #[allow(clippy::too_many_arguments)]
    fn walk_ahead(
        &self,
        index: &LaneIndex,
        route: RouteId,
        route_index: usize,
        edge: EdgeId,
        lane: usize,
        arc: f64,
        exclude: Option<usize>,
    ) -> Ahead {
        let net = &self.network;
        let mut dist = net.edge(edge).length - arc;
        let mut ri = route_index;
        while dist <= LOOKAHEAD {
            let Some((next_ri, next)) = net.next_in_route(route, ri) else {
                return Ahead::default();
            };
            if lane >= net.edge(next).lane_count {
                return Ahead {
                    leader: None,
                    lane_end: Some(dist),
                };
            }
            if let Some(&j) = index.lane(next, lane).iter().find(|&&j| Some(j) != exclude) {
                let lead = &self.vehicles[j];
                return Ahead {
                    leader: Some(Neighbor {
                        index: j,
                        gap: dist + lead.arc_pos - lead.length,
                        velocity: lead.velocity,
                    }),
                    lane_end: None,
                };
            }
            dist += net.edge(next).length;
            ri = next_ri;
        }
        Ahead::default()
    }

    /// Nearest vehicle behind a point on a lane. `length` is the body length
    /// of the (possibly hypothetical) vehicle whose front is at `arc`.
    pub fn follower_at(
        &self,
        index: &LaneIndex,
        edge: EdgeId,
        lane: usize,
        arc: f64,
        length: f64,
        exclude: Option<usize>,
    ) -> Option<Neighbor> {
        let list = index.lane(edge, lane);
        if let Some(&j) = list
            .iter()
            .rev()
            .find(|&&j| Some(j) != exclude && self.vehicles[j].arc_pos < arc)
        {
            let f = &self.vehicles[j];
            return Some(Neighbor {
                index: j,
                gap: arc - length - f.arc_pos,
                velocity: f.velocity,
            });
        }
        self.walk_behind(index, edge, lane, arc, length, exclude, 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk_behind(
        &self,
        index: &LaneIndex,
        edge: EdgeId,
        lane: usize,
        dist_back: f64,
        length: f64,
        exclude: Option<usize>,
        depth: usize,
    ) -> Option<Neighbor> {
        if dist_back > LOOKAHEAD || depth > 16 {
            return None;
        }
        let net = &self.network;
        let mut best: Option<Neighbor> = None;
        for p in net.predecessors(edge) {
            if lane >= net.edge(p).lane_count {
                continue;
            }
            let plen = net.edge(p).length;
            let candidate = match index.lane(p, lane).iter().rev().find(|&&j| Some(j) != exclude) {
                Some(&j) => {
                    let f = &self.vehicles[j];
                    Some(Neighbor {
                        index: j,
                        gap: dist_back + plen - f.arc_pos - length,
                        velocity: f.velocity,
                    })
                }
                None => self.walk_behind(index, p, lane, dist_back + plen, length, exclude, depth + 1),
            };
            if let Some(c) = candidate {
                if best.is_none_or(|b| c.gap < b.gap) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Vehicles ahead of and behind a hypothetical body on (edge, lane) with
    /// its front at `arc`, ignoring vehicle `exclude`.
    #[allow(clippy::too_many_arguments)]
    pub fn probe(
        &self,
        index: &LaneIndex,
        route: RouteId,
        route_index: usize,
        edge: EdgeId,
        lane: usize,
        arc: f64,
        length: f64,
        exclude: Option<usize>,
    ) -> (Ahead, Option<Neighbor>) {
        let list = index.lane(edge, lane);
        let ahead = match list
            .iter()
            .find(|&&j| Some(j) != exclude && self.vehicles[j].arc_pos >= arc)
        {
            Some(&j) => {
                let lead = &self.vehicles[j];
                Ahead {
                    leader: Some(Neighbor {
                        index: j,
                        gap: lead.arc_pos - lead.length - arc,
                        velocity: lead.velocity,
                    }),
                    lane_end: None,
                }
            }
            None => self.walk_ahead(index, route, route_index, edge, lane, arc, exclude),
        };
        let behind = self.follower_at(index, edge, lane, arc, length, exclude);
        (ahead, behind)
    }

    /// Junction control and obstacle search over the frozen state. Updates
    /// the persistent junction grants, so call it exactly once per step.
    pub fn prepare(&mut self, rules: &TrafficRules, idm: &IdmParams, dt: f64) -> Perception {
        let index = self.lane_index();
        let mut around: Vec<Surroundings> = (0..self.vehicles.len())
            .map(|i| {
                let ahead = self.leader_of(&index, i);
                let mut constraints = Vec::with_capacity(2);
                if let Some(l) = ahead.leader {
                    constraints.push(Constraint {
                        gap: l.gap,
                        idm_gap: l.gap,
                        leader_v: l.velocity,
                    });
                }
                if let Some(d) = ahead.lane_end {
                    constraints.push(stop_line(d, idm.s0));
                }
                Surroundings {
                    leader: ahead.leader,
                    constraints,
                }
            })
            .collect();
        let mut control = std::mem::take(&mut self.control);
        control.update(self, &index, rules, idm, dt, &mut around);
        self.control = control;
        Perception { index, around }
    }

    /// Car-following acceleration for vehicle `i` without noise: the most
    /// restrictive IDM response over all of its obstacles.
    pub fn idm_command(&self, i: usize, around: &Surroundings, idm: &IdmParams) -> f64 {
        let v = &self.vehicles[i];
        let p = IdmParams {
            v0: idm.v0.min(self.network.edge(v.edge).speed_limit),
            ..idm.clone()
        };
        if around.constraints.is_empty() {
            return idm_acceleration(v.velocity, f64::INFINITY, None, &p);
        }
        around
            .constraints
            .iter()
            .map(|c| idm_acceleration(v.velocity, c.idm_gap.max(1e-3), Some(c.leader_v), &p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Removes a vehicle, keeping the storage order of the rest.
    pub(crate) fn remove_vehicles(&mut self, ids: &[VehicleId]) {
        if ids.is_empty() {
            return;
        }
        self.vehicles.retain(|v| !ids.contains(&v.id));
    }

    /// Snapshot of the mutable state needed to compare worlds bit-for-bit.
    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            time: self.time,
            steps: self.steps,
            vehicles: self.vehicles.clone(),
        }
    }
}

/// Virtual stopped obstacle whose front-rest position is the line itself.
pub(crate) fn stop_line(dist: f64, s0: f64) -> Constraint {
    Constraint {
        gap: dist.max(0.0),
        idm_gap: dist.max(0.0) + s0,
        leader_v: 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub time: f64,
    pub steps: u64,
    pub vehicles: Vec<VehicleState>,
}
