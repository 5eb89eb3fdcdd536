//! CSV tables. Headers and column order are fixed per schema version.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::env::{RolloutRecord, SweepRow};
use crate::error::Result;
use crate::metrics::{mean_std, TimeSpacePoint};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub seed: u64,
    pub step: usize,
    pub time: f64,
    pub reward: f64,
    pub mean_velocity: f64,
    pub outflow: f64,
    pub vehicles: usize,
    pub collision: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub env: String,
    pub seed: u64,
    pub control_steps: usize,
    pub mean_velocity: f64,
    pub outflow: f64,
    pub exits: usize,
    /// Mean end-of-episode queue over the minor approaches.
    pub queue: f64,
    pub total_reward: f64,
    pub collision: bool,
}

impl SummaryRow {
    pub fn of(record: &RolloutRecord) -> Self {
        let s = &record.summary;
        let queue = if s.minor_queues.is_empty() {
            0.0
        } else {
            s.minor_queues.iter().sum::<usize>() as f64 / s.minor_queues.len() as f64
        };
        Self {
            env: record.config.env.to_string(),
            seed: record.config.seed,
            control_steps: s.control_steps,
            mean_velocity: s.mean_velocity,
            outflow: s.outflow,
            exits: s.exits,
            queue,
            total_reward: s.total_reward,
            collision: s.collision,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSpaceRow {
    pub seed: u64,
    pub t: f64,
    pub vehicle_id: u64,
    pub position: f64,
    pub velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCsvRow {
    pub point: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

pub fn step_rows(record: &RolloutRecord) -> Vec<StepRow> {
    record
        .steps
        .iter()
        .map(|s| StepRow {
            seed: record.config.seed,
            step: s.info.step,
            time: s.info.time,
            reward: s.reward,
            mean_velocity: s.info.mean_velocity,
            outflow: s.info.outflow,
            vehicles: s.info.vehicles,
            collision: s.info.collision,
        })
        .collect()
}

type Metric = fn(&SummaryRow) -> f64;

/// Mean and sample standard deviation of the headline metrics over runs.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<AggregateRow> {
    let col = |f: Metric| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    let metrics: [(&str, Metric); 4] = [
        ("mean_velocity", |r| r.mean_velocity),
        ("outflow", |r| r.outflow),
        ("queue", |r| r.queue),
        ("total_reward", |r| r.total_reward),
    ];
    metrics
        .into_iter()
        .map(|(metric, f)| {
            let (mean, std) = col(f);
            AggregateRow {
                metric,
                mean,
                std,
                runs: rows.len(),
            }
        })
        .collect()
}

pub fn time_space_table(seed: u64, points: &[TimeSpacePoint]) -> Vec<TimeSpaceRow> {
    points
        .iter()
        .map(|p| TimeSpaceRow {
            seed,
            t: p.t,
            vehicle_id: p.vehicle_id,
            position: p.position,
            velocity: p.velocity,
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> Vec<SweepCsvRow> {
    rows.iter()
        .map(|r| SweepCsvRow {
            point: r.point.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("/"),
            mean: r.mean,
            std: r.std,
            runs: r.runs.len(),
        })
        .collect()
}
