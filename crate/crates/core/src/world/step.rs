use serde::{Deserialize, Serialize};

use super::{Perception, World};
use crate::dynamics::failsafe_acceleration;
use crate::error::{Error, Result};
use crate::vehicle::VehicleId;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub exited: Vec<VehicleId>,
    pub collision: bool,
}

/// Advances every vehicle by one forward-Euler step.
///
/// `commanded[i]` is the acceleration requested for `world.vehicles[i]`; it
/// is capped by the failsafe bound of every obstacle in `perception`. Vehicles
/// whose front passes the end of an open route leave the world and are
/// logged. A negative bumper gap afterwards flags a collision and stops both
/// vehicles in place.
pub fn step_dynamics(world: &mut World, perception: &Perception, commanded: &[f64], dt: f64) -> Result<StepOutcome> {
    let n = world.vehicles.len();
    if commanded.len() != n || perception.around.len() != n {
        return Err(Error::Layout {
            what: "commanded accelerations",
            expected: n,
            got: commanded.len(),
        });
    }
    let net = world.network.clone();
    let new_time = (world.steps + 1) as f64 * dt;
    let mut exited = Vec::new();
    for (i, veh) in world.vehicles.iter_mut().enumerate() {
        let bound = perception.around[i]
            .constraints
            .iter()
            .map(|c| failsafe_acceleration(veh.velocity, c.gap, c.leader_v, dt))
            .fold(f64::INFINITY, f64::min);
        let a = commanded[i].min(bound);
        let v_next = (veh.velocity + a * dt).max(0.0);
        veh.last_accel = (v_next - veh.velocity) / dt;
        veh.velocity = v_next;
        veh.arc_pos += v_next * dt;
        loop {
            let len = net.edge(veh.edge).length;
            if veh.arc_pos <= len {
                break;
            }
            match net.next_in_route(veh.route, veh.route_index) {
                Some((ri, edge)) => {
                    veh.arc_pos -= len;
                    veh.route_index = ri;
                    veh.edge = edge;
                    veh.lane = veh.lane.min(net.edge(edge).lane_count - 1);
                }
                None => {
                    exited.push(veh.id);
                    break;
                }
            }
        }
    }
    world.time = new_time;
    world.steps += 1;
    for &id in &exited {
        world.exit_log.push(new_time, id);
    }
    world.remove_vehicles(&exited);

    let index = world.lane_index();
    let mut crashed = Vec::new();
    for i in 0..world.vehicles.len() {
        if let Some(l) = world.leader_of(&index, i).leader {
            if l.gap < -1e-9 && shares_path(world, i, l.index) {
                crashed.push(i);
                crashed.push(l.index);
            }
        }
    }
    for &i in &crashed {
        world.vehicles[i].velocity = 0.0;
    }
    let collision = !crashed.is_empty();
    world.collision |= collision;
    Ok(StepOutcome { exited, collision })
}

/// Whether the overlap between follower `f` and leader `l` lies on road the
/// follower actually occupies. A leader that has just crossed a merge from
/// another approach overlaps only the projection, not the follower's edge.
fn shares_path(world: &World, f: usize, l: usize) -> bool {
    let (fv, lv) = (&world.vehicles[f], &world.vehicles[l]);
    if fv.edge == lv.edge || lv.rear_pos() >= 0.0 {
        return true;
    }
    let net = &world.network;
    let edges = &net.route(lv.route).edges;
    let prev = match lv.route_index {
        0 if net.closed => edges[edges.len() - 1],
        0 => return true,
        k => edges[k - 1],
    };
    prev == fv.edge
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::IdmParams;
    use crate::network::{build_merge, build_ring, MergeParams};
    use crate::world::test_support::car;
    use crate::world::TrafficRules;

    #[test]
    fn euler_update() {
        let mut w = World::new(Arc::new(build_ring(230.0).unwrap()));
        car(&mut w, 0, 0, 0, 10.0, 5.0);
        let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
        step_dynamics(&mut w, &p, &[0.0], 0.1).unwrap();
        assert!((w.vehicles[0].arc_pos - 10.5).abs() < 1e-12);
        let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
        step_dynamics(&mut w, &p, &[-100.0], 0.1).unwrap();
        assert_eq!(w.vehicles[0].velocity, 0.0);
        assert_eq!(w.vehicles[0].last_accel, -50.0);
    }

    #[test]
    fn ring_wraps() {
        let mut w = World::new(Arc::new(build_ring(230.0).unwrap()));
        car(&mut w, 0, 0, 0, 229.8, 5.0);
        let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
        step_dynamics(&mut w, &p, &[0.0], 0.1).unwrap();
        assert!((w.vehicles[0].arc_pos - 0.3).abs() < 1e-9);
        assert_eq!(w.vehicles[0].route_index, 0);
    }

    #[test]
    fn open_route_exit_is_logged() {
        let net = Arc::new(build_merge(&MergeParams::default()).unwrap());
        let mut w = World::new(net.clone());
        let last = net.edge(net.routes[0].edges[2]).length;
        car(&mut w, 0, 2, 0, last - 0.2, 5.0);
        let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
        let out = step_dynamics(&mut w, &p, &[0.0], 0.1).unwrap();
        assert_eq!(out.exited.len(), 1);
        assert!(w.vehicles.is_empty());
        assert_eq!(w.exit_log.len(), 1);
    }

    #[test]
    fn failsafe_caps_reckless_command() {
        let mut w = World::new(Arc::new(build_ring(230.0).unwrap()));
        car(&mut w, 0, 0, 0, 100.0, 0.0);
        car(&mut w, 0, 0, 0, 93.0, 20.0);
        for _ in 0..50 {
            let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
            let out = step_dynamics(&mut w, &p, &[0.0, 10.0], 0.1).unwrap();
            assert!(!out.collision);
        }
    }

    #[test]
    fn wrong_arity_is_layout_error() {
        let mut w = World::new(Arc::new(build_ring(230.0).unwrap()));
        car(&mut w, 0, 0, 0, 10.0, 5.0);
        let p = w.prepare(&TrafficRules::default(), &IdmParams::default(), 0.1);
        assert!(matches!(step_dynamics(&mut w, &p, &[], 0.1), Err(Error::Layout { .. })));
    }
}
