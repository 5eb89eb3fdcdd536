//! Evaluation metrics: windowed outflow, average velocity, queue length,
//! time-space tables and the stop-and-go wave detector.

use serde::{Deserialize, Serialize};

use crate::network::EdgeId;
use crate::vehicle::VehicleId;
use crate::world::World;

/// Velocity below which a vehicle is counted as standing (m/s).
pub const STANDSTILL_SPEED: f64 = 0.3;
/// Velocity below which a vehicle is considered caught in a wave (m/s).
pub const WAVE_SPEED: f64 = 2.0;

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub time: f64,
    pub vehicle: VehicleId,
}

/// Exit times in nondecreasing order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExitLog {
    entries: Vec<ExitRecord>,
}

impl ExitLog {
    pub fn push(&mut self, time: f64, vehicle: VehicleId) {
        debug_assert!(self.entries.last().is_none_or(|e| e.time <= time));
        self.entries.push(ExitRecord { time, vehicle });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ExitRecord] {
        &self.entries
    }

    /// Exits with time in `(from, to]`.
    pub fn count_in(&self, from: f64, to: f64) -> usize {
        let lo = self.entries.partition_point(|e| e.time <= from + TIME_EPS);
        let hi = self.entries.partition_point(|e| e.time <= to + TIME_EPS);
        hi.saturating_sub(lo)
    }

    /// Exits in the trailing window `(now - window, now]`, in vehicles/hour.
    pub fn rate(&self, now: f64, window: f64) -> f64 {
        self.count_in(now - window, now) as f64 * 3600.0 / window
    }
}

/// Outflow over the trailing `window` seconds in vehicles/hour. When the
/// episode started less than `window` seconds ago the elapsed time is used.
pub fn metric_outflow(log: &ExitLog, start: f64, now: f64, window: f64) -> f64 {
    let span = window.min(now - start);
    if span <= 0.0 {
        return 0.0;
    }
    log.rate(now, span)
}

/// Mean of per-step mean velocities; steps without vehicles are skipped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityStats {
    sum: f64,
    steps: usize,
}

impl VelocityStats {
    pub fn record(&mut self, velocities: impl IntoIterator<Item = f64>) {
        let (mut s, mut n) = (0.0, 0usize);
        for v in velocities {
            s += v;
            n += 1;
        }
        if n > 0 {
            self.sum += s / n as f64;
            self.steps += 1;
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mean(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.sum / self.steps as f64
        }
    }
}

/// Vehicles standing in line from the end of `approach` backward.
pub fn metric_queue_length(world: &World, approach: EdgeId, v_standstill: f64) -> usize {
    let index = world.lane_index();
    let lanes = world.network.edge(approach).lane_count;
    (0..lanes)
        .map(|lane| {
            index
                .lane(approach, lane)
                .iter()
                .rev()
                .take_while(|&&i| world.vehicles[i].velocity < v_standstill)
                .count()
        })
        .sum()
}

/// One row of a time-space diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSpacePoint {
    pub t: f64,
    pub vehicle_id: u64,
    /// Front bumper position along the vehicle's route (m).
    pub position: f64,
    pub velocity: f64,
}

pub fn time_space_rows(world: &World) -> Vec<TimeSpacePoint> {
    world
        .vehicles
        .iter()
        .map(|v| TimeSpacePoint {
            t: world.time,
            vehicle_id: v.id.0,
            position: world.route_position(v),
            velocity: v.velocity,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveReport {
    /// Earliest time any vehicle that had been above the wave speed fell below it.
    pub first_time: Option<f64>,
    /// Least-squares slope (m/s) of the slowest vehicle's position after the
    /// first firing; negative when the congested region travels backward.
    pub drift: Option<f64>,
}

impl WaveReport {
    pub fn fired(&self) -> bool {
        self.first_time.is_some() && self.drift.is_some_and(|d| d < 0.0)
    }
}

/// Finds stop-and-go waves in a time-space table.
///
/// `loop_length` unwraps positions on closed networks. The locus of the
/// slowest vehicle is sampled once per `sample_every` seconds.
pub fn detect_wave(rows: &[TimeSpacePoint], loop_length: Option<f64>, sample_every: f64) -> WaveReport {
    let mut frames: Vec<(f64, Vec<&TimeSpacePoint>)> = Vec::new();
    for r in rows {
        match frames.last_mut() {
            Some((t, f)) if *t == r.t => f.push(r),
            _ => frames.push((r.t, vec![r])),
        }
    }
    let mut was_fast = std::collections::BTreeSet::new();
    let mut first_time = None;
    'outer: for (t, frame) in &frames {
        for r in frame {
            if r.velocity >= WAVE_SPEED {
                was_fast.insert(r.vehicle_id);
            } else if was_fast.contains(&r.vehicle_id) {
                first_time = Some(*t);
                break 'outer;
            }
        }
    }
    let Some(t0) = first_time else {
        return WaveReport::default();
    };

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut next_sample = t0;
    let mut unwrapped = 0.0;
    let mut prev: Option<f64> = None;
    for (t, frame) in frames.iter().filter(|(t, _)| *t >= t0) {
        if *t + TIME_EPS < next_sample {
            continue;
        }
        next_sample = *t + sample_every;
        let slowest = frame
            .iter()
            .min_by(|a, b| a.velocity.total_cmp(&b.velocity).then(a.vehicle_id.cmp(&b.vehicle_id)))
            .expect("frames are never empty");
        let pos = slowest.position;
        unwrapped = match (prev, loop_length) {
            (None, _) => pos,
            (Some(p), Some(l)) => {
                let mut d = (pos - p).rem_euclid(l);
                if d > l / 2.0 {
                    d -= l;
                }
                unwrapped + d
            }
            (Some(p), None) => unwrapped + (pos - p),
        };
        prev = Some(pos);
        samples.push((*t, unwrapped));
    }
    WaveReport {
        first_time,
        drift: slope(&samples),
    }
}

/// Least-squares slope of y over x; `None` with fewer than two distinct x.
pub fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation of two equally long samples.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Sample mean and (n-1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
