//! Policy inputs: stacked bird's-eye-view images, precise feature vectors
//! and the position-only ring variant.

pub mod precise;
pub mod raster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Point;
use crate::vehicle::{VehicleId, VehicleState};
use crate::world::World;

pub use raster::{render_bev, BevImage, View, BACKGROUND, HV, IMAGE_SIZE, ROAD, RV};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    Image,
    Precise,
    PositionOnly,
}

impl std::str::FromStr for ObservationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Self::Image),
            "precise" => Ok(Self::Precise),
            "position-only" | "position_only" => Ok(Self::PositionOnly),
            other => Err(Error::config("observation.mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterRule {
    /// One frame per RV slot, centered on that RV.
    PerRv,
    /// A single frame centered on the first junction.
    Junction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub mode: ObservationMode,
    /// Radius of the circular mask (m); `None` leaves the square view unmasked.
    pub mask_radius: Option<f64>,
    /// Side of the square view (m).
    pub view_side: f64,
    pub stack_size: usize,
    pub center: CenterRule,
    /// Vehicles per approach in the precise intersection vector.
    #[serde(default = "default_per_approach")]
    pub vehicles_per_approach: usize,
    /// Trailing window of the outflow entry in the precise bottleneck vector (s).
    #[serde(default = "default_outflow_window")]
    pub outflow_window: f64,
}

fn default_per_approach() -> usize {
    6
}

fn default_outflow_window() -> f64 {
    20.0
}

impl ObservationSpec {
    /// Circular view whose square frame just contains the mask.
    pub fn masked(radius: f64, stack_size: usize) -> Self {
        Self {
            mode: ObservationMode::Image,
            mask_radius: Some(radius),
            view_side: 2.0 * radius,
            stack_size,
            center: CenterRule::PerRv,
            vehicles_per_approach: default_per_approach(),
            outflow_window: default_outflow_window(),
        }
    }

    pub fn square(side: f64, stack_size: usize, center: CenterRule) -> Self {
        Self {
            mode: ObservationMode::Image,
            mask_radius: None,
            view_side: side,
            stack_size,
            center,
            vehicles_per_approach: default_per_approach(),
            outflow_window: default_outflow_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.view_side > 0.0) {
            return Err(Error::config("observation.view_side", "must be positive"));
        }
        if let Some(r) = self.mask_radius {
            if !(r > 0.0) {
                return Err(Error::config("observation.mask_radius", "must be positive"));
            }
        }
        if self.stack_size == 0 {
            return Err(Error::config("observation.stack_size", "must be at least 1"));
        }
        if !(self.outflow_window > 0.0) {
            return Err(Error::config("observation.outflow_window", "must be positive"));
        }
        Ok(())
    }

    pub fn view(&self, center: Point) -> View {
        View {
            center,
            side: self.view_side,
            mask_radius: self.mask_radius,
        }
    }
}

/// What the policy sees at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    /// `stack` frames of 84×84 bytes, frame-major then row-major.
    Image {
        stack: usize,
        data: Vec<u8>,
    },
    Vector {
        values: Vec<f64>,
    },
}

impl Observation {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Observation::Image { stack, .. } => vec![*stack, IMAGE_SIZE, IMAGE_SIZE],
            Observation::Vector { values } => vec![values.len()],
        }
    }

    pub fn frame(&self, k: usize) -> Option<&[u8]> {
        match self {
            Observation::Image { stack, data } if k < *stack => {
                let n = IMAGE_SIZE * IMAGE_SIZE;
                Some(&data[k * n..(k + 1) * n])
            }
            _ => None,
        }
    }
}

/// Renders one frame per slot. Slot `k` is centered on the RV it holds;
/// empty slots are blank. RVs not holding a slot are drawn as HVs.
pub fn stack_rv_observations(world: &World, spec: &ObservationSpec, slots: &[Option<VehicleId>]) -> Observation {
    let n = IMAGE_SIZE * IMAGE_SIZE;
    let mut data = vec![BACKGROUND; spec.stack_size * n];
    let is_slotted = |v: &VehicleState| v.is_rv() && slots.contains(&Some(v.id));
    for (k, slot) in slots.iter().take(spec.stack_size).enumerate() {
        let Some(id) = slot else { continue };
        let Some(v) = world.vehicle(*id) else { continue };
        let center = raster::body_center(world, v).point();
        let img = render_bev(world, &spec.view(center), &is_slotted);
        data[k * n..(k + 1) * n].copy_from_slice(&img.pixels);
    }
    Observation::Image {
        stack: spec.stack_size,
        data,
    }
}

/// A single frame centered on the first junction, with every RV highlighted.
pub fn junction_observation(world: &World, spec: &ObservationSpec) -> Observation {
    let center = world
        .network
        .junctions
        .first()
        .map_or(Point::new(0.0, 0.0), |j| j.center);
    let img = render_bev(world, &spec.view(center), &|v: &VehicleState| v.is_rv());
    let mut data = img.pixels;
    data.resize(spec.stack_size * IMAGE_SIZE * IMAGE_SIZE, BACKGROUND);
    Observation::Image {
        stack: spec.stack_size,
        data,
    }
}
