//! Right-of-way at junctions. Crossings hand out sticky entry grants; merges
//! check gaps in the projected through-lane traffic.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{stop_line, Constraint, LaneIndex, Surroundings, World};
use crate::dynamics::{idm_acceleration, IdmParams};
use crate::error::{Error, Result};
use crate::network::{EdgeId, Junction, PriorityRule};
use crate::vehicle::VehicleId;

/// Speed below which a vehicle counts as stopped (m/s).
pub const STANDSTILL: f64 = 0.3;
/// A minor-road vehicle must be this close to its stop line to count as having stopped (m).
const STOP_TOLERANCE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficRules {
    /// Smallest time gap (s) to the next major-road arrival a stopped
    /// minor-road vehicle accepts.
    pub critical_gap: f64,
    /// After waiting this long (s) at the stop line a minor-road vehicle
    /// claims the junction; major traffic that can still stop comfortably yields.
    pub max_wait: f64,
    /// Lane changes and ramp merges are rejected if they would force the new
    /// follower or the merging vehicle to brake harder than this (m/s²).
    pub safe_decel: f64,
    /// Distance before a lane drop inside which vehicles move over (m).
    pub lane_change_zone: f64,
}

impl Default for TrafficRules {
    fn default() -> Self {
        Self {
            critical_gap: 6.0,
            max_wait: 5.0,
            safe_decel: 4.0,
            lane_change_zone: 100.0,
        }
    }
}

impl TrafficRules {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rules.critical_gap", self.critical_gap),
            ("rules.max_wait", self.max_wait),
            ("rules.safe_decel", self.safe_decel),
            ("rules.lane_change_zone", self.lane_change_zone),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Persistent right-of-way state carried between steps.
#[derive(Clone, Debug, Default)]
pub struct JunctionControl {
    granted: BTreeSet<VehicleId>,
    stopped_since: BTreeMap<VehicleId, f64>,
}

impl JunctionControl {
    pub fn is_granted(&self, id: VehicleId) -> bool {
        self.granted.contains(&id)
    }

    pub(super) fn update(
        &mut self,
        world: &World,
        index: &LaneIndex,
        rules: &TrafficRules,
        idm: &IdmParams,
        dt: f64,
        around: &mut [Surroundings],
    ) {
        let mut keep = BTreeSet::new();
        let mut waiting = BTreeMap::new();
        for j in &world.network.junctions {
            match &j.rule {
                PriorityRule::None => self.crossing(world, index, j, &[], rules, idm, around, &mut keep, &mut waiting),
                PriorityRule::TwoWayStop { minor } => {
                    self.crossing(world, index, j, minor, rules, idm, around, &mut keep, &mut waiting)
                }
                PriorityRule::MergeYield { ramps } => {
                    self.merge(world, index, j, ramps, rules, idm, dt, around, &mut keep)
                }
                PriorityRule::LaneDrop => {}
            }
        }
        self.granted = keep;
        self.stopped_since = waiting;
    }

    #[allow(clippy::too_many_arguments)]
    fn crossing(
        &self,
        world: &World,
        index: &LaneIndex,
        j: &Junction,
        minor: &[EdgeId],
        rules: &TrafficRules,
        idm: &IdmParams,
        around: &mut [Surroundings],
        keep: &mut BTreeSet<VehicleId>,
        waiting: &mut BTreeMap<VehicleId, f64>,
    ) {
        let net = &world.network;
        let n = j.incoming.len();
        let two_way = !minor.is_empty();
        let group = |k: usize| -> usize {
            if !two_way {
                k
            } else if minor.contains(&j.incoming[k]) {
                1
            } else {
                0
            }
        };
        let groups = if two_way { 2 } else { n };
        let mut busy = vec![false; groups];
        for v in &world.vehicles {
            for k in 0..n {
                let inside = v.edge == j.internal[k] || (v.edge == j.outgoing[k] && v.rear_pos() < 0.0);
                let granted = self.granted.contains(&v.id) && (inside || v.edge == j.incoming[k]);
                if granted {
                    keep.insert(v.id);
                }
                if inside || granted {
                    busy[group(k)] = true;
                }
            }
        }

        struct Cand {
            i: usize,
            k: usize,
            dist: f64,
            v: f64,
            eta: f64,
        }
        let mut cands: Vec<Cand> = (0..n)
            .filter_map(|k| {
                let &i = index.lane(j.incoming[k], 0).last()?;
                let veh = &world.vehicles[i];
                if keep.contains(&veh.id) {
                    return None;
                }
                let dist = (net.edge(j.incoming[k]).length - veh.arc_pos).max(0.0);
                Some(Cand {
                    i,
                    k,
                    dist,
                    v: veh.velocity,
                    eta: dist / veh.velocity.max(0.1),
                })
            })
            .collect();
        cands.sort_by(|a, b| {
            a.eta
                .total_cmp(&b.eta)
                .then(world.vehicles[a.i].id.cmp(&world.vehicles[b.i].id))
        });
        let zone = |v: f64| v * v / (2.0 * idm.b_comf) + 2.0 * idm.s0;
        let can_stop = |c: &Cand| c.dist >= c.v * c.v / (2.0 * rules.safe_decel);

        let grant = |c: &Cand, busy: &mut Vec<bool>, keep: &mut BTreeSet<VehicleId>| {
            keep.insert(world.vehicles[c.i].id);
            busy[group(c.k)] = true;
        };
        let hold = |c: &Cand, around: &mut [Surroundings]| {
            around[c.i].constraints.push(stop_line(c.dist, idm.s0));
        };

        if !two_way {
            for c in &cands {
                if c.dist > zone(c.v) {
                    continue;
                }
                let g = group(c.k);
                let blocked = (0..groups).any(|h| h != g && busy[h]);
                if blocked {
                    hold(c, around);
                } else {
                    grant(c, &mut busy, keep);
                }
            }
            return;
        }

        // Two-way stop: group 0 is the major road, group 1 the minor road.
        let now = world.time;
        let claim = cands.iter().any(|c| {
            group(c.k) == 1
                && self
                    .stopped_since
                    .get(&world.vehicles[c.i].id)
                    .is_some_and(|&t0| now - t0 >= rules.max_wait)
        });
        for c in cands.iter().filter(|c| group(c.k) == 0) {
            if c.dist > zone(c.v) {
                continue;
            }
            if !busy[1] && (!claim || !can_stop(c)) {
                grant(c, &mut busy, keep);
            } else {
                hold(c, around);
            }
        }
        let majors_clear = !busy[0];
        let gap_ok = majors_clear
            && cands
                .iter()
                .filter(|c| group(c.k) == 0)
                .all(|c| c.eta > rules.critical_gap);
        let majors_can_stop = cands.iter().filter(|c| group(c.k) == 0).all(can_stop);
        for c in cands.iter().filter(|c| group(c.k) == 1) {
            let id = world.vehicles[c.i].id;
            let stopped = c.dist <= STOP_TOLERANCE && c.v < STANDSTILL;
            let since = match self.stopped_since.get(&id) {
                Some(&t0) => Some(t0),
                None if stopped => Some(now),
                None => None,
            };
            let forced = since.is_some_and(|t0| now - t0 >= rules.max_wait) && majors_clear && majors_can_stop;
            if since.is_some() && (gap_ok || forced) {
                grant(c, &mut busy, keep);
            } else {
                if let Some(t0) = since {
                    waiting.insert(id, t0);
                }
                hold(c, around);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn merge(
        &self,
        world: &World,
        index: &LaneIndex,
        j: &Junction,
        ramps: &[EdgeId],
        rules: &TrafficRules,
        idm: &IdmParams,
        dt: f64,
        around: &mut [Surroundings],
        keep: &mut BTreeSet<VehicleId>,
    ) {
        let net = &world.network;
        let Some(&main) = j.incoming.iter().find(|e| !ramps.contains(e)) else {
            return;
        };
        let main_len = net.edge(main).length;
        for &ramp in ramps {
            let Some(&r) = index.lane(ramp, 0).last() else {
                continue;
            };
            let rv = &world.vehicles[r];
            let d = (net.edge(ramp).length - rv.arc_pos).max(0.0);
            let zone = rv.velocity * rv.velocity / (2.0 * idm.b_comf) + 2.0 * idm.s0;
            if d > zone {
                continue;
            }
            // Through-lane vehicles projected onto the ramp's distance-to-merge axis.
            let mut ahead: Vec<Constraint> = Vec::new();
            let mut behind: Option<(usize, f64)> = None;
            let mut accepted = true;
            for &m in index.lane(main, 0) {
                let mv = &world.vehicles[m];
                let dm = main_len - mv.arc_pos;
                if dm < d {
                    let gap = d - dm - mv.length;
                    accepted &= gap >= idm.s0
                        && idm_acceleration(rv.velocity, gap, Some(mv.velocity), idm) >= -rules.safe_decel;
                    ahead.push(Constraint {
                        gap,
                        idm_gap: gap,
                        leader_v: mv.velocity,
                    });
                } else {
                    let gap = dm - d - rv.length;
                    if behind.is_none_or(|(_, g)| gap < g) {
                        behind = Some((m, gap));
                    }
                }
            }
            if let Some((m, gap)) = behind {
                let mv = &world.vehicles[m];
                accepted &=
                    gap >= idm.s0 && idm_acceleration(mv.velocity, gap, Some(rv.velocity), idm) >= -rules.safe_decel;
            }
            let committed =
                self.granted.contains(&rv.id) && d < rv.velocity * rv.velocity / (2.0 * idm.b_comf) + rv.velocity * dt;
            if accepted || committed {
                keep.insert(rv.id);
                around[r].constraints.extend(ahead);
                if let Some((m, gap)) = behind {
                    around[m].constraints.push(Constraint {
                        gap,
                        idm_gap: gap,
                        leader_v: rv.velocity,
                    });
                }
            } else {
                around[r].constraints.push(stop_line(d, idm.s0));
            }
        }
    }
}
