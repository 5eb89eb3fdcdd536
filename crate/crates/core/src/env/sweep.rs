//! Parallel density sweeps of the human-driven baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::{EpisodeSummary, IdmPolicy, Policy};
use super::{Env, EnvKind, EpisodeConfig};
use crate::error::{Error, Result};
use crate::metrics::mean_std;
use crate::network::NetworkSpec;
use crate::observation::ObservationMode;

/// Parameter varied across a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "param", content = "values", rename_all = "snake_case")]
pub enum SweepGrid {
    /// Ring circumference (m).
    Circumference(Vec<f64>),
    /// Figure-eight loop radius (m).
    Radius(Vec<f64>),
    /// Highway and per-ramp inflow (veh/hr).
    MergeInflows(Vec<(f64, f64)>),
    /// Bottleneck inflow (veh/hr).
    BottleneckInflow(Vec<f64>),
}

impl SweepGrid {
    fn len(&self) -> usize {
        match self {
            SweepGrid::Circumference(v) | SweepGrid::Radius(v) | SweepGrid::BottleneckInflow(v) => v.len(),
            SweepGrid::MergeInflows(v) => v.len(),
        }
    }

    fn label(&self, k: usize) -> Vec<f64> {
        match self {
            SweepGrid::Circumference(v) | SweepGrid::Radius(v) | SweepGrid::BottleneckInflow(v) => vec![v[k]],
            SweepGrid::MergeInflows(v) => vec![v[k].0, v[k].1],
        }
    }

    fn apply(&self, k: usize, cfg: &mut EpisodeConfig) -> Result<()> {
        match (self, &mut cfg.network) {
            (SweepGrid::Circumference(v), NetworkSpec::Ring(p)) => p.circumference = v[k],
            (SweepGrid::Radius(v), NetworkSpec::FigureEight(p)) => p.radius = v[k],
            (SweepGrid::MergeInflows(v), NetworkSpec::Merge(_)) => {
                for f in &mut cfg.inflows {
                    f.rate = if f.route.starts_with("ramp") { v[k].1 } else { v[k].0 };
                }
            }
            (SweepGrid::BottleneckInflow(v), NetworkSpec::Bottleneck(_)) => {
                for f in &mut cfg.inflows {
                    f.rate = v[k];
                }
            }
            _ => {
                return Err(Error::config(
                    "sweep",
                    format!("grid does not apply to a {} network", cfg.env),
                ))
            }
        }
        Ok(())
    }
}

/// A sweep as stored on disk: a template, a grid and the seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub seeds: Vec<u64>,
    pub template: EpisodeConfig,
}

impl SweepConfig {
    /// The baseline density grid of each environment,
    /// human-driven, 10 seeds, with vector observations so no frames are
    /// rendered. The intersection has no density sweep.
    pub fn default_for(env: EnvKind) -> Option<Self> {
        let grid = match env {
            EnvKind::Ring => SweepGrid::Circumference((0..9).map(|k| 210.0 + 10.0 * k as f64).collect()),
            EnvKind::FigureEight => SweepGrid::Radius((0..8).map(|k| 18.0 + 2.0 * k as f64).collect()),
            EnvKind::Merge => SweepGrid::MergeInflows(vec![
                (1100.0, 200.0),
                (1300.0, 100.0),
                (1300.0, 200.0),
                (1500.0, 200.0),
                (1500.0, 300.0),
            ]),
            EnvKind::Bottleneck => SweepGrid::BottleneckInflow(vec![2300.0, 2500.0]),
            EnvKind::Intersection => return None,
        };
        let mut template = EpisodeConfig::default_for(env).all_human();
        template.observation.mode = ObservationMode::Precise;
        Some(Self {
            grid,
            seeds: (0..10).collect(),
            template,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is needed"));
        }
        if self.grid.len() == 0 {
            return Err(Error::config("grid.values", "the grid is empty"));
        }
        for k in 0..self.grid.len() {
            let mut cfg = self.template.clone();
            self.grid.apply(k, &mut cfg)?;
            cfg.validate()?;
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

    pub fn run(&self) -> Result<Vec<SweepRow>> {
        run_density_sweep(&self.template, &self.grid, &self.seeds)
    }
}

/// Aggregate over seeds at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    /// Mean velocity, or outflow on the bottleneck.
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<EpisodeSummary>,
}

fn run_summary(config: EpisodeConfig) -> Result<EpisodeSummary> {
    let (mut env, mut obs) = Env::reset(config)?;
    let mut policy = IdmPolicy;
    let mut total = 0.0;
    while !env.is_done() {
        let a = policy.act(&obs, &env);
        let r = env.step(&a)?;
        total += r.reward;
        obs = r.observation;
    }
    Ok(EpisodeSummary::of(&env, total))
}

/// Runs `template` at every grid point for every seed, with any RVs driving
/// like humans. Rows follow the grid order.
pub fn run_density_sweep(template: &EpisodeConfig, grid: &SweepGrid, seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<Result<EpisodeSummary>> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let mut cfg = template.clone();
            cfg.seed = seed;
            grid.apply(k, &mut cfg)?;
            run_summary(cfg)
        })
        .collect();
    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let runs = (0..seeds.len())
            .map(|_| results.next().expect("one result per job"))
            .collect::<Result<Vec<_>>>()?;
        let metric: Vec<f64> = runs
            .iter()
            .map(|r| {
                if template.env == EnvKind::Bottleneck {
                    r.outflow
                } else {
                    r.mean_velocity
                }
            })
            .collect();
        let (mean, std) = mean_std(&metric);
        rows.push(SweepRow {
            point: grid.label(k),
            mean,
            std,
            runs,
        });
    }
    Ok(rows)
}
