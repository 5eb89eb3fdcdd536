use serde::{Deserialize, Serialize};

use super::{TrafficRules, World};
use crate::dynamics::{idm_acceleration, IdmParams};
use crate::network::PriorityRule;
use crate::vehicle::VehicleId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneChange {
    pub vehicle: VehicleId,
    pub from: usize,
    pub to: usize,
}

/// Moves vehicles out of lanes that end at a lane drop.
///
/// Inside the change zone each vehicle in a dropping lane shifts one lane
/// toward lane 0 when both resulting gaps are at least the jam distance and
/// the new follower would not have to brake harder than `rules.safe_decel`.
/// Vehicles closest to the drop go first. A vehicle that finds no gap keeps
/// its lane and stops at the lane end.
pub fn lane_change_mandatory(world: &mut World, rules: &TrafficRules, idm: &IdmParams) -> Vec<LaneChange> {
    let net = world.network.clone();
    let mut index = world.lane_index();
    let mut changes = Vec::new();
    for j in net.junctions.iter().filter(|j| j.rule == PriorityRule::LaneDrop) {
        let (Some(&inc), Some(&out)) = (j.incoming.first(), j.outgoing.first()) else {
            continue;
        };
        let keep_lanes = net.edge(out).lane_count;
        let len = net.edge(inc).length;
        let mut cands: Vec<usize> = (0..world.vehicles.len())
            .filter(|&i| {
                let v = &world.vehicles[i];
                v.edge == inc && v.lane >= keep_lanes && len - v.arc_pos <= rules.lane_change_zone
            })
            .collect();
        cands.sort_by(|&a, &b| {
            let (va, vb) = (&world.vehicles[a], &world.vehicles[b]);
            vb.arc_pos.total_cmp(&va.arc_pos).then(va.id.cmp(&vb.id))
        });
        for i in cands {
            let v = &world.vehicles[i];
            let target = v.lane - 1;
            let (ahead, behind) = world.probe(
                &index,
                v.route,
                v.route_index,
                v.edge,
                target,
                v.arc_pos,
                v.length,
                Some(i),
            );
            let lead_ok = ahead.leader.is_none_or(|l| l.gap >= idm.s0);
            let follow_ok = behind.is_none_or(|f| {
                f.gap >= idm.s0 && idm_acceleration(f.velocity, f.gap, Some(v.velocity), idm) >= -rules.safe_decel
            });
            if lead_ok && follow_ok {
                let (edge, from) = (v.edge, v.lane);
                index.remove(edge, from, i);
                world.vehicles[i].lane = target;
                index.insert(&world.vehicles, i);
                changes.push(LaneChange {
                    vehicle: world.vehicles[i].id,
                    from,
                    to: target,
                });
            }
        }
    }
    changes
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::network::{build_bottleneck, BottleneckParams};
    use crate::world::test_support::car;

    fn world() -> World {
        World::new(Arc::new(build_bottleneck(&BottleneckParams::default()).unwrap()))
    }

    #[test]
    fn empty_target_lane_accepts() {
        let mut w = world();
        car(&mut w, 0, 1, 1, 90.0, 5.0);
        let ch = lane_change_mandatory(&mut w, &TrafficRules::default(), &IdmParams::default());
        assert_eq!(ch.len(), 1);
        assert_eq!(w.vehicles[0].lane, 0);
    }

    #[test]
    fn outside_zone_stays() {
        let mut w = world();
        car(&mut w, 0, 0, 3, 50.0, 5.0);
        let ch = lane_change_mandatory(&mut w, &TrafficRules::default(), &IdmParams::default());
        assert!(ch.is_empty());
    }

    #[test]
    fn jammed_target_lane_rejects() {
        let mut w = world();
        for k in 0..14 {
            car(&mut w, 0, 1, 0, 100.0 - 7.0 * k as f64, 0.0);
        }
        let i = car(&mut w, 0, 1, 1, 60.0, 0.0);
        let ch = lane_change_mandatory(&mut w, &TrafficRules::default(), &IdmParams::default());
        assert!(ch.is_empty());
        assert_eq!(w.vehicles[i].lane, 1);
    }

    #[test]
    fn closest_to_drop_goes_first() {
        let mut w = world();
        // Two vehicles in the dropping lane side by side with a gap in lane 0
        // only large enough for one of them.
        car(&mut w, 0, 1, 0, 99.0, 0.0);
        car(&mut w, 0, 1, 0, 80.0, 0.0);
        let front = car(&mut w, 0, 1, 1, 92.0, 0.0);
        let back = car(&mut w, 0, 1, 1, 87.0, 0.0);
        let ch = lane_change_mandatory(&mut w, &TrafficRules::default(), &IdmParams::default());
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].vehicle, w.vehicles[front].id);
        assert_eq!(w.vehicles[back].lane, 1);
    }
}
