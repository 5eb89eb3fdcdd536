//! Initial populations for closed networks and inflow-driven spawning for
//! open ones.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{safe_speed, IdmParams, EMERGENCY_DECEL};
use crate::error::{Error, Result};
use crate::network::{EdgeId, RoadNetwork, RouteId};
use crate::vehicle::{ClassDimensions, Role, VehicleClass, VehicleId, VehicleState};
use crate::world::World;

/// Upper bound on the speed of a freshly inserted vehicle (m/s).
pub const INSERTION_SPEED: f64 = 10.0;

/// Fractions of each vehicle class among human-driven spawns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassMix {
    pub passenger: f64,
    pub semi_truck: f64,
    pub motorcycle: f64,
    pub delivery_truck: f64,
    pub bus: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self::passenger_only()
    }
}

impl ClassMix {
    pub fn passenger_only() -> Self {
        Self {
            passenger: 1.0,
            semi_truck: 0.0,
            motorcycle: 0.0,
            delivery_truck: 0.0,
            bus: 0.0,
        }
    }

    /// Bridge traffic: mostly cars with trucks, motorcycles and buses.
    pub fn heterogeneous() -> Self {
        Self {
            passenger: 0.7,
            semi_truck: 0.1,
            motorcycle: 0.1,
            delivery_truck: 0.05,
            bus: 0.05,
        }
    }

    fn weights(&self) -> [(VehicleClass, f64); 5] {
        [
            (VehicleClass::Passenger, self.passenger),
            (VehicleClass::SemiTruck, self.semi_truck),
            (VehicleClass::Motorcycle, self.motorcycle),
            (VehicleClass::DeliveryTruck, self.delivery_truck),
            (VehicleClass::Bus, self.bus),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|(_, f)| !(*f >= 0.0)) {
            return Err(Error::config("class_mix", "fractions must be non-negative"));
        }
        let total: f64 = w.iter().map(|(_, f)| f).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "class_mix",
                format!("fractions sum to {total}, expected 1"),
            ));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> VehicleClass {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let w = self.weights();
        for (class, f) in w {
            acc += f;
            if u < acc {
                return class;
            }
        }
        // Rounding left a sliver above the last cumulative bound.
        w.iter()
            .rev()
            .find(|(_, f)| *f > 0.0)
            .map_or(VehicleClass::Passenger, |(c, _)| *c)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Evenly spaced arrivals at the configured rate.
    #[default]
    Uniform,
    /// Seeded exponential inter-arrival times.
    Poisson,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RvAssignment {
    /// Every round(1/p)-th spawn on a route is an RV.
    #[default]
    Counter,
    /// Each spawn is an RV with probability p.
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflowSpec {
    /// Route name within the network.
    pub route: String,
    /// Vehicles per hour.
    pub rate: f64,
    #[serde(default)]
    pub rv_penetration: f64,
    #[serde(default)]
    pub class_mix: ClassMix,
}

impl InflowSpec {
    pub fn new(route: &str, rate: f64, rv_penetration: f64) -> Self {
        Self {
            route: route.to_string(),
            rate,
            rv_penetration,
            class_mix: ClassMix::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::config(
                "inflows.rate",
                format!("route `{}`: rate must be non-negative", self.route),
            ));
        }
        if !(0.0..=1.0).contains(&self.rv_penetration) {
            return Err(Error::config(
                "inflows.rv_penetration",
                format!("route `{}`: penetration must be in [0, 1]", self.route),
            ));
        }
        self.class_mix.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Uniform,
    /// Uniform spacing with each position shifted by up to `fraction / 2` of
    /// the nominal gap in either direction, so no gap changes by more than
    /// `fraction` of its nominal size.
    Jitter { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub total: usize,
    pub rv_count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::config("population.total", "must be positive"));
        }
        if self.rv_count > self.total {
            return Err(Error::config(
                "population.rv_count",
                format!("{} RVs exceed the {} vehicles", self.rv_count, self.total),
            ));
        }
        if let Spacing::Jitter { fraction } = self.spacing {
            if !(0.0..=0.2).contains(&fraction) {
                return Err(Error::config("population.spacing.fraction", "must be in [0, 0.2]"));
            }
        }
        Ok(())
    }
}

/// Edge, route index and arc position of a point at route distance `pos`.
pub fn locate(network: &RoadNetwork, route: RouteId, pos: f64) -> (usize, EdgeId, f64) {
    let edges = &network.route(route).edges;
    let mut offset = 0.0;
    for (k, &e) in edges.iter().enumerate() {
        let len = network.edge(e).length;
        if pos < offset + len || k + 1 == edges.len() {
            return (k, e, (pos - offset).clamp(0.0, len));
        }
        offset += len;
    }
    unreachable!("routes are never empty")
}

/// Places a fixed population on the first route of a closed network.
///
/// Vehicles are spread evenly at rest; vehicle 0 is an RV and further RVs are
/// spaced evenly by index.
pub fn init_closed_population<R: Rng + ?Sized>(
    network: &RoadNetwork,
    spec: &PopulationSpec,
    dims: &ClassDimensions,
    idm: &IdmParams,
    rng: &mut R,
) -> Result<Vec<VehicleState>> {
    spec.validate()?;
    let route = RouteId(0);
    let total_len = network.route_length(route);
    let n = spec.total;
    let class = VehicleClass::Passenger;
    let (len, width) = (dims.length(class), dims.width(class));
    if n as f64 * (len + idm.s0) > total_len {
        return Err(Error::config(
            "population.total",
            format!(
                "{n} vehicles need {} m but the network is {total_len} m long",
                n as f64 * (len + idm.s0)
            ),
        ));
    }
    let pitch = total_len / n as f64;
    let gap = pitch - len;
    let rv_slots: Vec<usize> = (0..spec.rv_count).map(|k| k * n / spec.rv_count.max(1)).collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let shift = match spec.spacing {
            Spacing::Uniform => 0.0,
            Spacing::Jitter { fraction } if fraction > 0.0 => rng.random_range(-fraction * gap..=fraction * gap) / 2.0,
            Spacing::Jitter { .. } => 0.0,
        };
        let pos = (len + k as f64 * pitch + shift).rem_euclid(total_len);
        let (route_index, edge, arc) = locate(network, route, pos);
        out.push(VehicleState {
            id: VehicleId(k as u64),
            class,
            role: if rv_slots.contains(&k) { Role::Rv } else { Role::Hv },
            length: len,
            width,
            route,
            route_index,
            edge,
            lane: 0,
            arc_pos: arc,
            velocity: 0.0,
            last_accel: 0.0,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Pending {
    class: VehicleClass,
    role: Role,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RouteDemand {
    route: RouteId,
    spec: InflowSpec,
    emitted: u64,
    next_arrival: f64,
    queue: VecDeque<Pending>,
    next_lane: usize,
}

/// Runtime state of all inflows of an episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Demand {
    mode: ArrivalMode,
    assignment: RvAssignment,
    routes: Vec<RouteDemand>,
}

impl Demand {
    pub fn new<R: Rng + ?Sized>(
        network: &RoadNetwork,
        specs: &[InflowSpec],
        mode: ArrivalMode,
        assignment: RvAssignment,
        rng: &mut R,
    ) -> Result<Self> {
        let mut routes = Vec::with_capacity(specs.len());
        for s in specs {
            s.validate()?;
            let route = network
                .route_by_name(&s.route)
                .ok_or_else(|| Error::config("inflows.route", format!("unknown route `{}`", s.route)))?
                .id;
            let next_arrival = match mode {
                ArrivalMode::Uniform => f64::INFINITY,
                ArrivalMode::Poisson => exp_sample(s.rate, rng),
            };
            routes.push(RouteDemand {
                route,
                spec: s.clone(),
                emitted: 0,
                next_arrival,
                queue: VecDeque::new(),
                next_lane: 0,
            });
        }
        Ok(Self {
            mode,
            assignment,
            routes,
        })
    }

    /// Vehicles emitted so far, inserted or still waiting.
    pub fn emitted(&self) -> u64 {
        self.routes.iter().map(|r| r.emitted).sum()
    }

    /// Vehicles emitted but not yet inserted.
    pub fn pending(&self) -> usize {
        self.routes.iter().map(|r| r.queue.len()).sum()
    }

    /// Emits arrivals due by the world clock and inserts as many waiting
    /// vehicles as the entry lanes allow. Returns the ids inserted.
    pub fn spawn_step<R: Rng + ?Sized>(
        &mut self,
        world: &mut World,
        dims: &ClassDimensions,
        idm: &IdmParams,
        dt: f64,
        rng: &mut R,
    ) -> Vec<VehicleId> {
        let now = world.time;
        for rd in &mut self.routes {
            let due = match self.mode {
                ArrivalMode::Uniform => (rd.spec.rate * now / 3600.0 + 1e-9).floor() as u64,
                ArrivalMode::Poisson => {
                    let mut due = rd.emitted;
                    while rd.next_arrival <= now + 1e-9 {
                        due += 1;
                        rd.next_arrival += exp_sample(rd.spec.rate, rng);
                    }
                    due
                }
            };
            while rd.emitted < due {
                rd.emitted += 1;
                let p = rd.spec.rv_penetration;
                let is_rv = match self.assignment {
                    _ if p <= 0.0 => false,
                    RvAssignment::Counter => rd.emitted % (1.0 / p).round().max(1.0) as u64 == 0,
                    RvAssignment::Bernoulli => rng.random::<f64>() < p,
                };
                let (class, role) = if is_rv {
                    (VehicleClass::Passenger, Role::Rv)
                } else {
                    (rd.spec.class_mix.draw(rng), Role::Hv)
                };
                rd.queue.push_back(Pending { class, role });
            }
        }

        let mut inserted = Vec::new();
        let net = world.network.clone();
        for rd in &mut self.routes {
            let entry = net.route(rd.route).edges[0];
            let lanes = net.edge(entry).lane_count;
            let limit = net.edge(entry).speed_limit;
            while let Some(&p) = rd.queue.front() {
                let len = dims.length(p.class);
                let index = world.lane_index();
                let mut best: Option<(usize, f64, f64)> = None;
                for k in 0..lanes {
                    let lane = (rd.next_lane + k) % lanes;
                    let (ahead, behind) = world.probe(&index, rd.route, 0, entry, lane, len, len, None);
                    if behind.is_some_and(|b| b.gap < 0.0) {
                        continue;
                    }
                    let (gap, lead_v) = match (ahead.leader, ahead.lane_end) {
                        (Some(l), _) => (l.gap, l.velocity),
                        (None, Some(d)) => (d, 0.0),
                        (None, None) => (f64::INFINITY, limit),
                    };
                    if gap < idm.s0 {
                        continue;
                    }
                    if k == 0 {
                        best = Some((lane, gap, lead_v));
                        break;
                    }
                    if best.is_none_or(|(_, g, _)| gap > g) {
                        best = Some((lane, gap, lead_v));
                    }
                }
                let Some((lane, gap, lead_v)) = best else {
                    break;
                };
                rd.queue.pop_front();
                rd.next_lane = (lane + 1) % lanes;
                let v = INSERTION_SPEED
                    .min(limit)
                    .min(safe_speed(gap, lead_v, dt, EMERGENCY_DECEL));
                let id = VehicleId(world.next_id);
                world.next_id += 1;
                world.vehicles.push(VehicleState {
                    id,
                    class: p.class,
                    role: p.role,
                    length: len,
                    width: dims.width(p.class),
                    route: rd.route,
                    route_index: 0,
                    edge: entry,
                    lane,
                    arc_pos: len,
                    velocity: v,
                    last_accel: 0.0,
                });
                inserted.push(id);
            }
        }
        inserted
    }
}

fn exp_sample<R: Rng + ?Sized>(rate_per_hour: f64, rng: &mut R) -> f64 {
    if rate_per_hour <= 0.0 {
        return f64::INFINITY;
    }
    Exp::new(rate_per_hour / 3600.0).expect("positive rate").sample(rng)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::network::{build_bottleneck, build_figure_eight, build_ring, BottleneckParams};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn ring_population_uniform() {
        let net = build_ring(220.0).unwrap();
        let spec = PopulationSpec {
            total: 22,
            rv_count: 1,
            spacing: Spacing::Uniform,
        };
        let vs = init_closed_population(
            &net,
            &spec,
            &ClassDimensions::default(),
            &IdmParams::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(vs.len(), 22);
        assert!(vs[0].is_rv());
        assert_eq!(vs.iter().filter(|v| v.is_rv()).count(), 1);
        for w in vs.windows(2) {
            assert!((w[1].arc_pos - w[0].arc_pos - 10.0).abs() < 1e-9);
        }
        assert!(vs.iter().all(|v| v.velocity == 0.0));
    }

    #[test]
    fn figure_eight_population() {
        let net = build_figure_eight(25.0).unwrap();
        let spec = PopulationSpec {
            total: 14,
            rv_count: 1,
            spacing: Spacing::Jitter { fraction: 0.2 },
        };
        let vs = init_closed_population(
            &net,
            &spec,
            &ClassDimensions::default(),
            &IdmParams::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(vs.len(), 14);
        assert_eq!(vs.iter().filter(|v| v.is_rv()).count(), 1);
    }

    #[test]
    fn overfull_network_is_config_error() {
        let net = build_ring(150.0).unwrap();
        let spec = PopulationSpec {
            total: 30,
            rv_count: 0,
            spacing: Spacing::Uniform,
        };
        let r = init_closed_population(
            &net,
            &spec,
            &ClassDimensions::default(),
            &IdmParams::default(),
            &mut rng(),
        );
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn class_mix_must_sum_to_one() {
        let mut m = ClassMix::heterogeneous();
        assert!(m.validate().is_ok());
        m.bus = 0.2;
        assert!(m.validate().is_err());
    }

    /// Runs spawning on a bottleneck whose vehicles are removed every step,
    /// so entry is never blocked.
    fn unblocked_emissions(spec: InflowSpec, steps: u64) -> (u64, Vec<VehicleState>) {
        let net = Arc::new(build_bottleneck(&BottleneckParams::default()).unwrap());
        let mut world = World::new(net.clone());
        let mut r = rng();
        let mut demand = Demand::new(&net, &[spec], ArrivalMode::Uniform, RvAssignment::Counter, &mut r).unwrap();
        let mut all = Vec::new();
        for s in 1..=steps {
            world.steps = s;
            world.time = s as f64 * 0.1;
            demand.spawn_step(
                &mut world,
                &ClassDimensions::default(),
                &IdmParams::default(),
                0.1,
                &mut r,
            );
            all.append(&mut world.vehicles);
        }
        (demand.emitted(), all)
    }

    #[test]
    fn uniform_headway_spawns_every_three_seconds() {
        let (n, vs) = unblocked_emissions(InflowSpec::new("main", 1200.0, 0.0), 300);
        assert_eq!(n, 10);
        assert_eq!(vs.len(), 10);
    }

    #[test]
    fn counter_rule_marks_every_tenth() {
        let (_, vs) = unblocked_emissions(InflowSpec::new("main", 3600.0, 0.1), 5000);
        assert_eq!(vs.len(), 500);
        let rv: Vec<usize> = (0..vs.len()).filter(|&k| vs[k].is_rv()).collect();
        assert_eq!(rv.len(), 50);
        assert!(rv.iter().all(|k| (k + 1) % 10 == 0));
        assert!(vs
            .iter()
            .filter(|v| v.is_rv())
            .all(|v| v.class == VehicleClass::Passenger));
    }

    #[test]
    fn class_fractions_converge() {
        let spec = InflowSpec {
            class_mix: ClassMix::heterogeneous(),
            ..InflowSpec::new("main", 3600.0, 0.0)
        };
        let (_, vs) = unblocked_emissions(spec, 20000);
        let n = vs.len() as f64;
        let frac = |c| vs.iter().filter(|v| v.class == c).count() as f64 / n;
        assert!((frac(VehicleClass::Passenger) - 0.7).abs() < 0.03);
        assert!((frac(VehicleClass::SemiTruck) - 0.1).abs() < 0.03);
        assert!((frac(VehicleClass::Bus) - 0.05).abs() < 0.03);
    }
}
