//! Policies, full-episode rollouts and replay.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Env, EpisodeConfig, StepInfo};
use crate::error::{Error, Result};
use crate::metrics::{metric_outflow, ExitLog, TimeSpacePoint};
use crate::observation::Observation;
use crate::vehicle::{VehicleId, VehicleState};
use crate::world::{World, WorldSnapshot};

/// Trailing window of the summary outflow (s).
pub const OUTFLOW_WINDOW: f64 = 500.0;

/// Maps an observation to one action per slot.
pub trait Policy {
    fn act(&mut self, obs: &Observation, env: &Env) -> Vec<f64>;
}

impl<F: FnMut(&Observation, &Env) -> Vec<f64>> Policy for F {
    fn act(&mut self, obs: &Observation, env: &Env) -> Vec<f64> {
        self(obs, env)
    }
}

/// Always outputs zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &Observation, env: &Env) -> Vec<f64> {
        vec![0.0; env.config().agents]
    }
}

/// Drives every RV with the human car-following model, without noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdmPolicy;

impl Policy for IdmPolicy {
    fn act(&mut self, _: &Observation, env: &Env) -> Vec<f64> {
        env.idm_actions()
    }
}

/// Plays back recorded actions in order.
#[derive(Clone, Debug)]
pub struct ReplayPolicy {
    actions: Vec<Vec<f64>>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        Self { actions, next: 0 }
    }
}

impl Policy for ReplayPolicy {
    fn act(&mut self, _: &Observation, env: &Env) -> Vec<f64> {
        let a = self
            .actions
            .get(self.next)
            .cloned()
            .unwrap_or_else(|| vec![0.0; env.config().agents]);
        self.next += 1;
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutHeader {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub actions: Vec<f64>,
    /// RV held by each action slot after the step.
    pub slots: Vec<Option<VehicleId>>,
    pub reward: f64,
    pub info: StepInfo,
    pub vehicles: Vec<VehicleState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub control_steps: usize,
    /// Mean of per-step mean velocities over the controlled steps (m/s).
    pub mean_velocity: f64,
    /// Exits over the trailing 500 s, or the whole run if shorter (veh/hr).
    pub outflow: f64,
    pub exits: usize,
    /// Standing queue on each minor approach at the end.
    pub minor_queues: Vec<usize>,
    pub total_reward: f64,
    pub collision: bool,
}

impl EpisodeSummary {
    pub fn of(env: &Env, total_reward: f64) -> Self {
        let w = env.world();
        Self {
            control_steps: env.control_steps(),
            mean_velocity: env.velocity_stats().mean(),
            outflow: metric_outflow(&w.exit_log, 0.0, w.time, OUTFLOW_WINDOW),
            exits: w.exit_log.len(),
            minor_queues: env.minor_queues(),
            total_reward,
            collision: w.collision,
        }
    }
}

/// Everything needed to audit and replay one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub header: RolloutHeader,
    pub config: EpisodeConfig,
    /// State right after the warmup.
    pub initial: WorldSnapshot,
    pub initial_slots: Vec<Option<VehicleId>>,
    pub steps: Vec<StepRecord>,
    pub exit_log: ExitLog,
    pub summary: EpisodeSummary,
}

impl RolloutRecord {
    pub fn actions(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.actions.clone()).collect()
    }

    /// Vehicles and slots after `k` controlled steps; 0 is the initial state.
    pub fn state_at(&self, k: usize) -> Option<(&[VehicleState], &[Option<VehicleId>])> {
        match k {
            0 => Some((&self.initial.vehicles, &self.initial_slots)),
            k => self.steps.get(k - 1).map(|s| (&s.vehicles[..], &s.slots[..])),
        }
    }

    /// World rebuilt from the recorded state after `k` controlled steps.
    pub fn world_at(&self, k: usize) -> Result<(World, Vec<Option<VehicleId>>)> {
        let (vehicles, slots) = self
            .state_at(k)
            .ok_or_else(|| Error::Domain(format!("the rollout has no step {k}")))?;
        let mut world = World::new(Arc::new(self.config.network.build()?));
        world.vehicles = vehicles.to_vec();
        world.steps = self.initial.steps + k as u64;
        world.time = match k {
            0 => self.initial.time,
            k => self.steps[k - 1].info.time,
        };
        world.exit_log = self.exit_log.clone();
        Ok((world, slots.to_vec()))
    }

    /// Time-space rows of the controlled steps, positions measured along each
    /// vehicle's route.
    pub fn time_space(&self) -> Result<Vec<TimeSpacePoint>> {
        let net = self.config.network.build()?;
        let row = |t: f64, v: &VehicleState| TimeSpacePoint {
            t,
            vehicle_id: v.id.0,
            position: net.route_offset(v.route, v.route_index) + v.arc_pos,
            velocity: v.velocity,
        };
        let mut out: Vec<TimeSpacePoint> = self
            .initial
            .vehicles
            .iter()
            .map(|v| row(self.initial.time, v))
            .collect();
        for s in &self.steps {
            out.extend(s.vehicles.iter().map(|v| row(s.info.time, v)));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Resets, then steps the policy until the episode ends.
pub fn run_episode(config: EpisodeConfig, policy: &mut dyn Policy) -> Result<RolloutRecord> {
    let header = RolloutHeader {
        config_hash: config.hash()?,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let (mut env, mut obs) = Env::reset(config.clone())?;
    let initial = env.world().snapshot();
    let initial_slots = env.slots().to_vec();
    let mut steps = Vec::with_capacity(config.horizon);
    let mut total = 0.0;
    while !env.is_done() {
        let actions = policy.act(&obs, &env);
        let r = env.step(&actions)?;
        total += r.reward;
        steps.push(StepRecord {
            actions,
            slots: env.slots().to_vec(),
            reward: r.reward,
            info: r.info,
            vehicles: env.world().vehicles.clone(),
        });
        obs = r.observation;
    }
    Ok(RolloutRecord {
        header,
        summary: EpisodeSummary::of(&env, total),
        exit_log: env.world().exit_log.clone(),
        config,
        initial,
        initial_slots,
        steps,
    })
}

/// Re-simulates a record from its config and actions.
pub fn replay(record: &RolloutRecord) -> Result<RolloutRecord> {
    if record.header.config_hash != record.config.hash()? {
        return Err(Error::config(
            "header.config_hash",
            "does not match the recorded config",
        ));
    }
    run_episode(record.config.clone(), &mut ReplayPolicy::new(record.actions()))
}
