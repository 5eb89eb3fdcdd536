use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demand::{ArrivalMode, ClassMix, InflowSpec, PopulationSpec, RvAssignment, Spacing};
use crate::dynamics::{ActionKind, ActionSpec, IdmParams};
use crate::error::{Error, Result};
use crate::network::{
    BottleneckParams, FigureEightParams, IntersectionParams, MergeParams, NetworkKind, NetworkSpec, RingParams,
};
use crate::observation::{CenterRule, ObservationMode, ObservationSpec};
use crate::reward::{RewardParams, RING_VEHICLES};
use crate::vehicle::ClassDimensions;
use crate::world::TrafficRules;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Ring,
    FigureEight,
    Intersection,
    Merge,
    Bottleneck,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] = [
        EnvKind::Ring,
        EnvKind::FigureEight,
        EnvKind::Intersection,
        EnvKind::Merge,
        EnvKind::Bottleneck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Ring => "ring",
            EnvKind::FigureEight => "figure_eight",
            EnvKind::Intersection => "intersection",
            EnvKind::Merge => "merge",
            EnvKind::Bottleneck => "bottleneck",
        }
    }

    pub fn network_kind(self) -> NetworkKind {
        match self {
            EnvKind::Ring => NetworkKind::Ring,
            EnvKind::FigureEight => NetworkKind::FigureEight,
            EnvKind::Intersection => NetworkKind::Intersection,
            EnvKind::Merge => NetworkKind::Merge,
            EnvKind::Bottleneck => NetworkKind::Bottleneck,
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(EnvKind::Ring),
            "figure_eight" | "figure-eight" | "fig8" => Ok(EnvKind::FigureEight),
            "intersection" => Ok(EnvKind::Intersection),
            "merge" => Ok(EnvKind::Merge),
            "bottleneck" => Ok(EnvKind::Bottleneck),
            other => Err(Error::config("env", format!("unknown environment `{other}`"))),
        }
    }
}

/// Everything needed to reproduce an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub env: EnvKind,
    pub seed: u64,
    /// Step length (s).
    pub dt: f64,
    /// Policy-controlled steps per episode.
    pub horizon: usize,
    /// Steps simulated inside `reset` with every vehicle human-driven.
    pub warmup: usize,
    /// Number of RV action slots.
    pub agents: usize,
    pub action: ActionSpec,
    pub observation: ObservationSpec,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(default)]
    pub rules: TrafficRules,
    pub network: NetworkSpec,
    /// Fixed population of a closed network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSpec>,
    /// Inflows of an open network.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inflows: Vec<InflowSpec>,
    #[serde(default)]
    pub arrivals: ArrivalMode,
    #[serde(default)]
    pub rv_assignment: RvAssignment,
    #[serde(default)]
    pub vehicles: ClassDimensions,
}

impl EpisodeConfig {
    pub fn default_for(env: EnvKind) -> Self {
        let base = |horizon, warmup, agents, action, observation, network| Self {
            env,
            seed: 0,
            dt: 0.1,
            horizon,
            warmup,
            agents,
            action,
            observation,
            reward: RewardParams::default(),
            idm: IdmParams::default(),
            rules: TrafficRules::default(),
            network,
            population: None,
            inflows: Vec::new(),
            arrivals: ArrivalMode::Uniform,
            rv_assignment: RvAssignment::Counter,
            vehicles: ClassDimensions::default(),
        };
        match env {
            EnvKind::Ring => Self {
                population: Some(PopulationSpec {
                    total: RING_VEHICLES,
                    rv_count: 1,
                    spacing: Spacing::Uniform,
                }),
                ..base(
                    3000,
                    3000,
                    1,
                    ActionSpec::acceleration(-1.0, 1.0),
                    ObservationSpec::masked(28.75, 1),
                    NetworkSpec::Ring(RingParams::default()),
                )
            },
            EnvKind::FigureEight => Self {
                population: Some(PopulationSpec {
                    total: 14,
                    rv_count: 1,
                    spacing: Spacing::Jitter { fraction: 0.2 },
                }),
                ..base(
                    1500,
                    0,
                    1,
                    ActionSpec::acceleration(-3.0, 3.0),
                    ObservationSpec::masked(21.25, 1),
                    NetworkSpec::FigureEight(FigureEightParams::default()),
                )
            },
            EnvKind::Intersection => Self {
                inflows: vec![
                    InflowSpec::new("from_north", 1333.0, 0.2),
                    InflowSpec::new("from_south", 1333.0, 0.2),
                    InflowSpec::new("from_east", 500.0, 0.0),
                    InflowSpec::new("from_west", 500.0, 0.0),
                ],
                ..base(
                    400,
                    INTERSECTION_WARMUP,
                    8,
                    ActionSpec::acceleration(-7.0, 7.0),
                    ObservationSpec::square(50.0, 1, CenterRule::Junction),
                    NetworkSpec::Intersection(IntersectionParams::default()),
                )
            },
            EnvKind::Merge => Self {
                inflows: vec![
                    InflowSpec::new("highway", 1100.0, 0.1),
                    InflowSpec::new("ramp_1", 200.0, 0.0),
                    InflowSpec::new("ramp_2", 200.0, 0.0),
                ],
                ..base(
                    750,
                    0,
                    5,
                    ActionSpec::acceleration(-1.5, 1.5),
                    ObservationSpec::square(41.25, 5, CenterRule::PerRv),
                    NetworkSpec::Merge(MergeParams::default()),
                )
            },
            EnvKind::Bottleneck => Self {
                inflows: vec![InflowSpec {
                    class_mix: ClassMix::heterogeneous(),
                    ..InflowSpec::new("main", 2300.0, 0.1)
                }],
                ..base(
                    1000,
                    40,
                    15,
                    ActionSpec::velocity(0.01, 23.0),
                    ObservationSpec::masked(25.0, 15),
                    NetworkSpec::Bottleneck(BottleneckParams::default()),
                )
            },
        }
    }

    /// Turns every RV into an HV.
    pub fn all_human(mut self) -> Self {
        if let Some(p) = &mut self.population {
            p.rv_count = 0;
        }
        for f in &mut self.inflows {
            f.rv_penetration = 0.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.agents == 0 {
            return Err(Error::config("agents", "must be at least 1"));
        }
        if self.network.kind() != self.env.network_kind() {
            return Err(Error::config(
                "network.kind",
                format!("a {} environment needs a {} network", self.env, self.env),
            ));
        }
        self.action.validate()?;
        self.observation.validate()?;
        self.reward.validate()?;
        self.idm.validate()?;
        self.rules.validate()?;
        let closed = matches!(self.env, EnvKind::Ring | EnvKind::FigureEight);
        match (&self.population, closed) {
            (None, true) => return Err(Error::config("population", "closed networks need a population")),
            (Some(_), false) => return Err(Error::config("population", "open networks are fed by inflows")),
            (Some(p), true) => {
                p.validate()?;
                if p.rv_count > self.agents {
                    return Err(Error::config(
                        "population.rv_count",
                        format!("{} RVs but only {} action slots", p.rv_count, self.agents),
                    ));
                }
            }
            (None, false) => {}
        }
        if closed && !self.inflows.is_empty() {
            return Err(Error::config("inflows", "closed networks take no inflows"));
        }
        for f in &self.inflows {
            f.validate()?;
        }
        if self.env == EnvKind::Ring && self.population.as_ref().is_some_and(|p| p.total != RING_VEHICLES) {
            return Err(Error::config(
                "population.total",
                format!("the ring holds {RING_VEHICLES} vehicles"),
            ));
        }
        let obs = &self.observation;
        match obs.mode {
            ObservationMode::PositionOnly if self.env != EnvKind::Ring => {
                return Err(Error::config(
                    "observation.mode",
                    "position-only observations exist for the ring only",
                ));
            }
            ObservationMode::Image if obs.center == CenterRule::PerRv && obs.stack_size != self.agents => {
                return Err(Error::config(
                    "observation.stack_size",
                    format!(
                        "per-RV stacks need one frame per slot ({}), got {}",
                        self.agents, obs.stack_size
                    ),
                ));
            }
            _ => {}
        }
        if self.action.kind == ActionKind::Velocity && self.action.lower < 0.0 {
            return Err(Error::config("action.lower", "velocity targets must be non-negative"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Warmup steps of the intersection: long enough for the minor-road queues
/// to reach their working size before control starts.
pub const INTERSECTION_WARMUP: usize = 500;
