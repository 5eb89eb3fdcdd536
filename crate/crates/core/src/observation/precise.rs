//! Exact-state feature vectors. Every layout has a fixed length.

use crate::error::{Error, Result};
use crate::network::{EdgeId, PriorityRule};
use crate::vehicle::VehicleId;
use crate::world::World;

/// Gap reported for a missing neighbor (m).
pub const MISSING_GAP: f64 = 1000.0;
/// Vehicles on the figure eight.
pub const FIGURE_EIGHT_VEHICLES: usize = 14;
/// Values per merge RV slot.
pub const MERGE_SLOT_WIDTH: usize = 5;

fn leader_gap(world: &World, id: VehicleId) -> Result<(f64, f64, f64)> {
    let i = world
        .index_of(id)
        .ok_or_else(|| Error::Domain(format!("vehicle {} is not in the world", id.0)))?;
    let index = world.lane_index();
    let v = &world.vehicles[i];
    let lead = world
        .leader_of(&index, i)
        .leader
        .ok_or_else(|| Error::Domain(format!("vehicle {} has no leader", id.0)))?;
    Ok((v.velocity, lead.velocity, lead.gap))
}

/// `[v_rv, v_lead - v_rv, bumper gap to the leader]`.
pub fn precise_ring(world: &World, rv: VehicleId) -> Result<Vec<f64>> {
    let (v, vl, gap) = leader_gap(world, rv)?;
    Ok(vec![v, vl - v, gap])
}

/// `[bumper gap to the leader]`.
pub fn position_only_ring(world: &World, rv: VehicleId) -> Result<Vec<f64>> {
    let (_, _, gap) = leader_gap(world, rv)?;
    Ok(vec![gap])
}

/// `(route position, velocity)` of every vehicle in id order.
pub fn precise_figure_eight(world: &World) -> Result<Vec<f64>> {
    if world.vehicles.len() != FIGURE_EIGHT_VEHICLES {
        return Err(Error::Layout {
            what: "figure-eight vehicles",
            expected: FIGURE_EIGHT_VEHICLES,
            got: world.vehicles.len(),
        });
    }
    let mut vs: Vec<_> = world.vehicles.iter().collect();
    vs.sort_by_key(|v| v.id);
    Ok(vs.iter().flat_map(|v| [world.route_position(v), v.velocity]).collect())
}

/// Length of the precise intersection vector for `m` vehicles per approach.
pub fn intersection_len(world: &World, m: usize) -> usize {
    let approaches = world.network.junctions.first().map_or(0, |j| j.incoming.len());
    approaches * m * 3 + world.network.edges.len() * 2
}

/// For each approach, the `m` vehicles closest to the stop line as
/// `[velocity, distance to the line, edge index]`, zero padded; then for
/// every edge `[density (veh/m), mean velocity]`.
pub fn precise_intersection(world: &World, m: usize) -> Vec<f64> {
    let net = &world.network;
    let index = world.lane_index();
    let mut out = Vec::with_capacity(intersection_len(world, m));
    if let Some(j) = net
        .junctions
        .iter()
        .find(|j| matches!(j.rule, PriorityRule::TwoWayStop { .. } | PriorityRule::None))
    {
        for &e in &j.incoming {
            let len = net.edge(e).length;
            let list = index.lane(e, 0);
            for k in 0..m {
                match list.iter().rev().nth(k) {
                    Some(&i) => {
                        let v = &world.vehicles[i];
                        out.extend([v.velocity, len - v.arc_pos, e.0 as f64]);
                    }
                    None => out.extend([0.0; 3]),
                }
            }
        }
    }
    for e in &net.edges {
        let on: Vec<f64> = world
            .vehicles
            .iter()
            .filter(|v| v.edge == e.id)
            .map(|v| v.velocity)
            .collect();
        let mean = if on.is_empty() {
            0.0
        } else {
            on.iter().sum::<f64>() / on.len() as f64
        };
        out.extend([on.len() as f64 / e.length, mean]);
    }
    out
}

/// Per slot `[v_lead, v_follow, gap_lead, gap_follow, v_rv]`; a missing
/// neighbor reads as velocity 0 and gap [`MISSING_GAP`]; empty slots are zeros.
pub fn precise_merge(world: &World, slots: &[Option<VehicleId>]) -> Vec<f64> {
    let index = world.lane_index();
    let mut out = Vec::with_capacity(slots.len() * MERGE_SLOT_WIDTH);
    for slot in slots {
        let Some(i) = slot.and_then(|id| world.index_of(id)) else {
            out.extend([0.0; MERGE_SLOT_WIDTH]);
            continue;
        };
        let v = &world.vehicles[i];
        let lead = world.leader_of(&index, i).leader;
        let follow = world.follower_at(&index, v.edge, v.lane, v.arc_pos, v.length, Some(i));
        out.extend([
            lead.map_or(0.0, |l| l.velocity),
            follow.map_or(0.0, |f| f.velocity),
            lead.map_or(MISSING_GAP, |l| l.gap),
            follow.map_or(MISSING_GAP, |f| f.gap),
            v.velocity,
        ]);
    }
    out
}

/// Per edge of the first route `[mean HV position, mean HV velocity, mean RV
/// position, mean RV velocity]`, then the outflow over the trailing window.
pub fn precise_bottleneck(world: &World, outflow_window: f64) -> Vec<f64> {
    let net = &world.network;
    let edges: Vec<EdgeId> = net.routes.first().map(|r| r.edges.clone()).unwrap_or_default();
    let mut out = Vec::with_capacity(edges.len() * 4 + 1);
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    for e in edges {
        let (mut hp, mut hv, mut rp, mut rv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for v in world.vehicles.iter().filter(|v| v.edge == e) {
            if v.is_rv() {
                rp.push(v.arc_pos);
                rv.push(v.velocity);
            } else {
                hp.push(v.arc_pos);
                hv.push(v.velocity);
            }
        }
        out.extend([mean(&hp), mean(&hv), mean(&rp), mean(&rv)]);
    }
    out.push(world.exit_log.rate(world.time, outflow_window));
    out
}
