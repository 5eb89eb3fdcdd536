//! Episode engine: reset/step semantics over the world, demand, observations
//! and rewards of one environment.

mod config;
mod rollout;
mod sweep;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{EnvKind, EpisodeConfig, INTERSECTION_WARMUP};
pub use rollout::{
    replay, run_episode, EpisodeSummary, IdmPolicy, Policy, ReplayPolicy, RolloutHeader, RolloutRecord, StepRecord,
    ZeroPolicy,
};
pub use sweep::{run_density_sweep, SweepConfig, SweepGrid, SweepRow};

use crate::demand::{init_closed_population, Demand};
use crate::dynamics::{acceleration_noise, apply_rv_action};
use crate::error::{Error, Result};
use crate::metrics::{time_space_rows, TimeSpacePoint, VelocityStats, STANDSTILL_SPEED};
use crate::network::PriorityRule;
use crate::observation::{
    junction_observation, precise, stack_rv_observations, CenterRule, Observation, ObservationMode,
};
use crate::reward;
use crate::vehicle::VehicleId;
use crate::world::{lane_change_mandatory, step_dynamics, World};

const NOISE_STREAM: u64 = 0;
const DEMAND_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-step diagnostics returned alongside the reward.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Policy-controlled steps taken so far.
    pub step: usize,
    pub time: f64,
    pub vehicles: usize,
    pub mean_velocity: f64,
    /// Exits over the reward window, in vehicles/hour.
    pub outflow: f64,
    pub collision: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One running episode.
#[derive(Clone, Debug)]
pub struct Env {
    config: EpisodeConfig,
    world: World,
    demand: Option<Demand>,
    noise_rng: ChaCha8Rng,
    demand_rng: ChaCha8Rng,
    slots: Vec<Option<VehicleId>>,
    control_steps: usize,
    done: bool,
    velocity: VelocityStats,
    trace: Option<Vec<TimeSpacePoint>>,
}

impl Env {
    /// Builds the network and the initial population without simulating.
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        let network = Arc::new(config.network.build()?);
        let mut world = World::new(network.clone());
        if let Some(pop) = &config.population {
            let mut rng = stream(config.seed, INIT_STREAM);
            world.vehicles = init_closed_population(&network, pop, &config.vehicles, &config.idm, &mut rng)?;
            world.next_id = world.vehicles.len() as u64;
        }
        let mut demand_rng = stream(config.seed, DEMAND_STREAM);
        let demand = if config.inflows.is_empty() {
            None
        } else {
            Some(Demand::new(
                &network,
                &config.inflows,
                config.arrivals,
                config.rv_assignment,
                &mut demand_rng,
            )?)
        };
        let mut env = Self {
            slots: vec![None; config.agents],
            noise_rng: stream(config.seed, NOISE_STREAM),
            demand_rng,
            config,
            world,
            demand,
            control_steps: 0,
            done: false,
            velocity: VelocityStats::default(),
            trace: None,
        };
        env.update_slots();
        Ok(env)
    }

    /// Builds the episode and runs the warmup with every vehicle human-driven.
    pub fn reset(config: EpisodeConfig) -> Result<(Self, Observation)> {
        let mut env = Self::new(config)?;
        let obs = env.warm_up()?;
        Ok((env, obs))
    }

    /// Records a time-space row for every vehicle after each simulated step.
    pub fn enable_trace(&mut self) {
        self.trace = Some(time_space_rows(&self.world));
    }

    pub fn trace(&self) -> Option<&[TimeSpacePoint]> {
        self.trace.as_deref()
    }

    /// Runs the configured warmup and returns the first observation.
    pub fn warm_up(&mut self) -> Result<Observation> {
        for _ in 0..self.config.warmup {
            self.advance(None)?;
        }
        self.observe()
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn slots(&self) -> &[Option<VehicleId>] {
        &self.slots
    }

    pub fn control_steps(&self) -> usize {
        self.control_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn velocity_stats(&self) -> &VelocityStats {
        &self.velocity
    }

    pub fn demand(&self) -> Option<&Demand> {
        self.demand.as_ref()
    }

    /// Applies one action per slot and advances one step.
    pub fn step(&mut self, actions: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if actions.len() != self.config.agents {
            return Err(Error::Layout {
                what: "actions",
                expected: self.config.agents,
                got: actions.len(),
            });
        }
        self.advance(Some(actions))?;
        self.control_steps += 1;
        self.velocity.record(self.world.vehicles.iter().map(|v| v.velocity));
        self.done = self.control_steps >= self.config.horizon || self.world.collision;
        let reward = self.reward()?;
        let observation = self.observe()?;
        Ok(StepResult {
            observation,
            reward,
            done: self.done,
            info: self.info(),
        })
    }

    pub fn info(&self) -> StepInfo {
        let w = &self.world;
        let n = w.vehicles.len();
        StepInfo {
            step: self.control_steps,
            time: w.time,
            vehicles: n,
            mean_velocity: if n == 0 {
                0.0
            } else {
                w.vehicles.iter().map(|v| v.velocity).sum::<f64>() / n as f64
            },
            outflow: w.exit_log.rate(w.time, self.config.reward.bottleneck_window),
            collision: w.collision,
        }
    }

    fn advance(&mut self, actions: Option<&[f64]>) -> Result<()> {
        let cfg = &self.config;
        let dt = cfg.dt;
        lane_change_mandatory(&mut self.world, &cfg.rules, &cfg.idm);
        let perception = self.world.prepare(&cfg.rules, &cfg.idm, dt);
        let mut accel = Vec::with_capacity(self.world.vehicles.len());
        for (i, v) in self.world.vehicles.iter().enumerate() {
            let slot = actions.and_then(|a| {
                let s = self.slots.iter().position(|s| *s == Some(v.id))?;
                Some(a[s])
            });
            let a = match slot {
                Some(raw) if v.is_rv() => apply_rv_action(v.velocity, raw, &cfg.action, dt).map_err(|e| match e {
                    Error::Policy { message, .. } => Error::Policy {
                        step: self.control_steps,
                        message,
                    },
                    other => other,
                })?,
                _ => {
                    self.world.idm_command(i, &perception.around[i], &cfg.idm)
                        + acceleration_noise(cfg.idm.noise_bound, &mut self.noise_rng)
                }
            };
            accel.push(a);
        }
        step_dynamics(&mut self.world, &perception, &accel, dt)?;
        if let Some(d) = &mut self.demand {
            d.spawn_step(&mut self.world, &cfg.vehicles, &cfg.idm, dt, &mut self.demand_rng);
        }
        self.update_slots();
        if let Some(t) = &mut self.trace {
            t.extend(time_space_rows(&self.world));
        }
        Ok(())
    }

    fn update_slots(&mut self) {
        let w = &self.world;
        if self.config.env == EnvKind::Intersection {
            // Nearest the junction first: RVs still approaching, then RVs past it.
            let net = &w.network;
            let approach_len = |r| net.edge(net.route(r).edges[0]).length;
            let mut rvs: Vec<(bool, f64, VehicleId)> = w
                .vehicles
                .iter()
                .filter(|v| v.is_rv())
                .map(|v| {
                    let pos = w.route_position(v) - approach_len(v.route);
                    (pos > 0.0, pos.abs(), v.id)
                })
                .collect();
            rvs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            self.slots = (0..self.config.agents).map(|k| rvs.get(k).map(|r| r.2)).collect();
            return;
        }
        for s in &mut self.slots {
            if s.is_some_and(|id| w.vehicle(id).is_none_or(|v| !v.is_rv())) {
                *s = None;
            }
        }
        let mut waiting: Vec<VehicleId> = w
            .vehicles
            .iter()
            .filter(|v| v.is_rv() && !self.slots.contains(&Some(v.id)))
            .map(|v| v.id)
            .collect();
        waiting.sort();
        let mut waiting = waiting.into_iter();
        for s in &mut self.slots {
            if s.is_none() {
                match waiting.next() {
                    Some(id) => *s = Some(id),
                    None => break,
                }
            }
        }
    }

    /// The vehicle whose view the single-agent precise ring vectors describe:
    /// the RV in slot 0, or the lowest-id vehicle when there is none.
    fn ring_subject(&self) -> Result<VehicleId> {
        self.slots[0]
            .or_else(|| self.world.vehicles.iter().map(|v| v.id).min())
            .ok_or_else(|| Error::Domain("the ring is empty".into()))
    }

    pub fn observe(&self) -> Result<Observation> {
        let spec = &self.config.observation;
        let w = &self.world;
        Ok(match spec.mode {
            ObservationMode::Image => match spec.center {
                CenterRule::PerRv => stack_rv_observations(w, spec, &self.slots),
                CenterRule::Junction => junction_observation(w, spec),
            },
            ObservationMode::PositionOnly => Observation::Vector {
                values: precise::position_only_ring(w, self.ring_subject()?)?,
            },
            ObservationMode::Precise => Observation::Vector {
                values: match self.config.env {
                    EnvKind::Ring => precise::precise_ring(w, self.ring_subject()?)?,
                    EnvKind::FigureEight => precise::precise_figure_eight(w)?,
                    EnvKind::Intersection => precise::precise_intersection(w, spec.vehicles_per_approach),
                    EnvKind::Merge => precise::precise_merge(w, &self.slots),
                    EnvKind::Bottleneck => precise::precise_bottleneck(w, spec.outflow_window),
                },
            },
        })
    }

    /// Reward of the current state.
    pub fn reward(&self) -> Result<f64> {
        step_reward(&self.config, &self.world, &self.slots)
    }

    /// Accelerations (or velocity targets, for velocity actions) that make
    /// every slotted RV drive like a human, noise excluded.
    pub fn idm_actions(&self) -> Vec<f64> {
        let cfg = &self.config;
        let mut probe = self.world.clone();
        lane_change_mandatory(&mut probe, &cfg.rules, &cfg.idm);
        let perception = probe.prepare(&cfg.rules, &cfg.idm, cfg.dt);
        self.slots
            .iter()
            .map(|slot| {
                let Some(i) = slot.and_then(|id| probe.index_of(id)) else {
                    return 0.0;
                };
                let a = probe.idm_command(i, &perception.around[i], &cfg.idm);
                match cfg.action.kind {
                    crate::dynamics::ActionKind::Acceleration => a,
                    crate::dynamics::ActionKind::Velocity => (probe.vehicles[i].velocity + a * cfg.dt).max(0.0),
                }
            })
            .collect()
    }

    /// End-of-episode queue on each minor approach of a two-way stop.
    pub fn minor_queues(&self) -> Vec<usize> {
        let w = &self.world;
        w.network
            .junctions
            .iter()
            .filter_map(|j| match &j.rule {
                PriorityRule::TwoWayStop { minor } => Some(minor.clone()),
                _ => None,
            })
            .flatten()
            .map(|e| crate::metrics::metric_queue_length(w, e, STANDSTILL_SPEED))
            .collect()
    }
}

/// Reward of a world state under `config`, with `slots` the RVs holding the
/// action slots.
pub fn step_reward(config: &EpisodeConfig, w: &World, slots: &[Option<VehicleId>]) -> Result<f64> {
    let p = &config.reward;
    let velocities: Vec<f64> = w.vehicles.iter().map(|v| v.velocity).collect();
    Ok(match config.env {
        EnvKind::Ring => {
            let a_rv = slots
                .first()
                .copied()
                .flatten()
                .and_then(|id| w.vehicle(id))
                .map_or(0.0, |v| v.last_accel);
            reward::reward_ring(&velocities, a_rv, p)?
        }
        EnvKind::FigureEight => reward::reward_desired_velocity(&velocities, p.v_des),
        EnvKind::Intersection => {
            let v_max: Vec<f64> = w.vehicles.iter().map(|v| w.network.edge(v.edge).speed_limit).collect();
            let standstill = velocities.iter().filter(|&&v| v < STANDSTILL_SPEED).count();
            reward::reward_intersection(w.time, &velocities, &v_max, standstill, p)
        }
        EnvKind::Merge => {
            let index = w.lane_index();
            let headways: Vec<f64> = slots
                .iter()
                .flatten()
                .filter_map(|&id| {
                    let i = w.index_of(id)?;
                    let lead = w.leader_of(&index, i).leader?;
                    Some(reward::headway(lead.gap, w.vehicles[i].velocity))
                })
                .collect();
            reward::reward_merge(&velocities, &headways, p)
        }
        EnvKind::Bottleneck => reward::reward_bottleneck(&w.exit_log, w.time, p),
    })
}
