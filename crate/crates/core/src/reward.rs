//! Per-environment reward functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ExitLog;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    /// Weight of the RV acceleration penalty on the ring.
    pub ring_alpha: f64,
    /// Target speed for the desired-velocity reward (m/s).
    pub v_des: f64,
    /// Weight of the standstill count at the intersection.
    pub intersection_gain: f64,
    /// Guards the intersection delay term against an empty network.
    pub eps: f64,
    /// Headway below which an RV is penalized on the merge (s).
    pub merge_h_max: f64,
    pub merge_alpha: f64,
    /// Outflow window of the bottleneck reward (s).
    pub bottleneck_window: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            ring_alpha: 4.0,
            v_des: 10.0,
            intersection_gain: 0.2,
            eps: 1e-6,
            merge_h_max: 1.0,
            merge_alpha: 0.1,
            bottleneck_window: 10.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reward.ring_alpha", self.ring_alpha),
            ("reward.v_des", self.v_des),
            ("reward.intersection_gain", self.intersection_gain),
            ("reward.eps", self.eps),
            ("reward.merge_h_max", self.merge_h_max),
            ("reward.merge_alpha", self.merge_alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be a non-negative number, got {v}")));
            }
        }
        if !(self.v_des > 0.0) {
            return Err(Error::config("reward.v_des", "must be positive"));
        }
        if !(self.bottleneck_window > 0.0) {
            return Err(Error::config("reward.bottleneck_window", "must be positive"));
        }
        Ok(())
    }
}

/// Number of vehicles on the ring.
pub const RING_VEHICLES: usize = 22;

/// Mean velocity minus the weighted magnitude of the RV's acceleration.
pub fn reward_ring(velocities: &[f64], a_rv: f64, p: &RewardParams) -> Result<f64> {
    if velocities.len() != RING_VEHICLES {
        return Err(Error::Layout {
            what: "ring velocities",
            expected: RING_VEHICLES,
            got: velocities.len(),
        });
    }
    let mean = velocities.iter().sum::<f64>() / velocities.len() as f64;
    Ok(mean - p.ring_alpha * a_rv.abs())
}

/// Normalized closeness of all velocities to `v_des`, in [0, 1].
pub fn reward_desired_velocity(velocities: &[f64], v_des: f64) -> f64 {
    if velocities.is_empty() {
        return 0.0;
    }
    let target = v_des * (velocities.len() as f64).sqrt();
    let dev = velocities.iter().map(|v| (v_des - v).powi(2)).sum::<f64>().sqrt();
    (target - dev).max(0.0) / target
}

/// Delay and standstill penalty at the intersection; `t` is the elapsed
/// episode time in seconds.
pub fn reward_intersection(t: f64, velocities: &[f64], v_max: &[f64], standstill: usize, p: &RewardParams) -> f64 {
    debug_assert_eq!(velocities.len(), v_max.len());
    let delay: f64 = velocities.iter().zip(v_max).map(|(v, m)| (m - v) / m).sum();
    -t * delay / (velocities.len() as f64 + p.eps) - p.intersection_gain * standstill as f64
}

/// Time headway of a vehicle to its leader; slow vehicles use a floor of 0.1 m/s.
pub fn headway(gap: f64, v: f64) -> f64 {
    gap / v.max(0.1)
}

/// Desired-velocity reward minus a penalty for RVs driving closer than
/// `merge_h_max` to their leader.
pub fn reward_merge(velocities: &[f64], rv_headways: &[f64], p: &RewardParams) -> f64 {
    let penalty: f64 = rv_headways.iter().map(|h| (p.merge_h_max - h).max(0.0)).sum();
    reward_desired_velocity(velocities, p.v_des) - p.merge_alpha * penalty
}

/// Outflow over the trailing reward window in vehicles/hour.
pub fn reward_bottleneck(log: &ExitLog, now: f64, p: &RewardParams) -> f64 {
    log.rate(now, p.bottleneck_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::VehicleId;

    #[test]
    fn ring_examples() {
        let p = RewardParams::default();
        assert_eq!(reward_ring(&[5.0; 22], 0.0, &p).unwrap(), 5.0);
        assert_eq!(reward_ring(&[5.0; 22], 0.5, &p).unwrap(), 3.0);
        assert_eq!(reward_ring(&[0.0; 22], 0.0, &p).unwrap(), 0.0);
        assert!(matches!(reward_ring(&[0.0; 3], 0.0, &p), Err(Error::Layout { .. })));
    }

    #[test]
    fn desired_velocity_examples() {
        assert_eq!(reward_desired_velocity(&[10.0; 14], 10.0), 1.0);
        assert_eq!(reward_desired_velocity(&[0.0; 14], 10.0), 0.0);
        assert!((reward_desired_velocity(&[5.0; 14], 10.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn intersection_examples() {
        let p = RewardParams::default();
        assert_eq!(reward_intersection(50.0, &[10.0; 4], &[10.0; 4], 0, &p), 0.0);
        assert!((reward_intersection(100.0, &[5.0; 4], &[10.0; 4], 0, &p) + 50.0).abs() < 1e-4);
        assert!((reward_intersection(3.0, &[10.0; 4], &[10.0; 4], 3, &p) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn merge_examples() {
        let p = RewardParams::default();
        assert_eq!(reward_merge(&[10.0; 6], &[1.0, 2.5], &p), 1.0);
        assert!((reward_merge(&[10.0; 6], &[0.5], &p) - 0.95).abs() < 1e-12);
        let h = headway(30.0, 0.0);
        assert!(h >= 1.0);
        assert_eq!(reward_merge(&[0.0; 6], &[h], &p), 0.0);
    }

    #[test]
    fn bottleneck_examples() {
        let p = RewardParams::default();
        let mut log = ExitLog::default();
        for (k, t) in [91.0, 94.0, 97.0, 100.0].into_iter().enumerate() {
            log.push(t, VehicleId(k as u64));
        }
        assert_eq!(reward_bottleneck(&log, 100.0, &p), 1440.0);
        assert_eq!(reward_bottleneck(&ExitLog::default(), 100.0, &p), 0.0);
    }
}
