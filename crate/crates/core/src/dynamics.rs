//! Longitudinal vehicle dynamics: the Intelligent Driver Model for human
//! drivers, robot-vehicle action mapping, and the collision failsafe.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Car-following parameters. Defaults are the canonical IDM values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Desired speed (m/s); capped by the edge speed limit at run time.
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub delta: f64,
    /// Jam distance (m).
    pub s0: f64,
    /// Half-width of the uniform acceleration noise added for human drivers.
    pub noise_bound: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            time_headway: 1.0,
            a_max: 1.0,
            b_comf: 1.5,
            delta: 4.0,
            s0: 2.0,
            noise_bound: 0.2,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("idm.v0", self.v0),
            ("idm.time_headway", self.time_headway),
            ("idm.a_max", self.a_max),
            ("idm.b_comf", self.b_comf),
            ("idm.delta", self.delta),
            ("idm.s0", self.s0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.noise_bound >= 0.0) {
            return Err(Error::config("idm.noise_bound", "must be non-negative"));
        }
        Ok(())
    }

    /// Desired gap s* for speed `v` approaching a leader at `leader_v`.
    pub fn desired_gap(&self, v: f64, leader_v: f64) -> f64 {
        self.s0 + v * self.time_headway + v * (v - leader_v) / (2.0 * (self.a_max * self.b_comf).sqrt())
    }
}

/// IDM acceleration. A leaderless vehicle uses `gap = +inf` (free road).
pub fn idm_acceleration(v: f64, gap: f64, leader_v: Option<f64>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = match leader_v {
        Some(lv) if gap.is_finite() => {
            let s_star = p.desired_gap(v, lv);
            (s_star / gap).powi(2)
        }
        _ => 0.0,
    };
    p.a_max * (free - interaction)
}

/// Uniform noise in `[-bound, bound]`; no draw is made when the bound is zero.
pub fn acceleration_noise<R: Rng + ?Sized>(bound: f64, rng: &mut R) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

/// Human-driver acceleration: IDM plus bounded uniform noise.
pub fn hv_acceleration<R: Rng + ?Sized>(v: f64, gap: f64, leader_v: Option<f64>, p: &IdmParams, rng: &mut R) -> f64 {
    idm_acceleration(v, gap, leader_v, p) + acceleration_noise(p.noise_bound, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Acceleration,
    Velocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub lower: f64,
    pub upper: f64,
}

impl ActionSpec {
    pub fn acceleration(lower: f64, upper: f64) -> Self {
        Self {
            kind: ActionKind::Acceleration,
            lower,
            upper,
        }
    }

    pub fn velocity(lower: f64, upper: f64) -> Self {
        Self {
            kind: ActionKind::Velocity,
            lower,
            upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::config(
                "action",
                format!("lower bound {} must be below upper bound {}", self.lower, self.upper),
            ));
        }
        Ok(())
    }
}

/// Physical acceleration envelope applied to velocity-tracking actions (m/s²).
pub const RV_ACCEL_ENVELOPE: f64 = 4.0;

/// Maps a raw policy output to an acceleration command.
///
/// Velocity actions are tracked in one step and limited to
/// [`RV_ACCEL_ENVELOPE`]. The failsafe is applied later by the integrator.
pub fn apply_rv_action(v: f64, raw_action: f64, spec: &ActionSpec, dt: f64) -> Result<f64> {
    if !raw_action.is_finite() {
        return Err(Error::Policy {
            step: 0,
            message: format!("non-finite action {raw_action}"),
        });
    }
    let target = raw_action.clamp(spec.lower, spec.upper);
    Ok(match spec.kind {
        ActionKind::Acceleration => target,
        ActionKind::Velocity => ((target - v) / dt).clamp(-RV_ACCEL_ENVELOPE, RV_ACCEL_ENVELOPE),
    })
}

/// Braking capability assumed by the failsafe (m/s²).
pub const EMERGENCY_DECEL: f64 = 4.5;

/// Largest speed a follower may reach this step and still stop behind a
/// leader that brakes at `decel`; never more than the gap covered in one step.
pub fn safe_speed(gap: f64, leader_v: f64, dt: f64, decel: f64) -> f64 {
    if !gap.is_finite() {
        return f64::INFINITY;
    }
    let gap = gap.max(0.0);
    let budget = gap + leader_v * leader_v / (2.0 * decel);
    let v = -decel * dt + (decel * decel * dt * dt + 2.0 * decel * budget).sqrt();
    v.min(gap / dt).max(0.0)
}

/// Upper bound on the acceleration a vehicle may apply this step.
pub fn failsafe_acceleration(v: f64, gap: f64, leader_v: f64, dt: f64) -> f64 {
    if !gap.is_finite() {
        return f64::INFINITY;
    }
    (safe_speed(gap, leader_v, dt, EMERGENCY_DECEL) - v) / dt
}
