use serde::{Deserialize, Serialize};

use crate::network::{EdgeId, RouteId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Passenger,
    SemiTruck,
    Motorcycle,
    DeliveryTruck,
    Bus,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 5] = [
        VehicleClass::Passenger,
        VehicleClass::SemiTruck,
        VehicleClass::Motorcycle,
        VehicleClass::DeliveryTruck,
        VehicleClass::Bus,
    ];
}

/// Body dimensions per vehicle class, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassDimensions {
    pub passenger: [f64; 2],
    pub semi_truck: [f64; 2],
    pub motorcycle: [f64; 2],
    pub delivery_truck: [f64; 2],
    pub bus: [f64; 2],
}

impl Default for ClassDimensions {
    fn default() -> Self {
        // [length, width]
        Self {
            passenger: [5.0, 1.8],
            semi_truck: [16.0, 2.5],
            motorcycle: [2.5, 0.8],
            delivery_truck: [8.0, 2.2],
            bus: [12.0, 2.5],
        }
    }
}

impl ClassDimensions {
    fn get(&self, class: VehicleClass) -> [f64; 2] {
        match class {
            VehicleClass::Passenger => self.passenger,
            VehicleClass::SemiTruck => self.semi_truck,
            VehicleClass::Motorcycle => self.motorcycle,
            VehicleClass::DeliveryTruck => self.delivery_truck,
            VehicleClass::Bus => self.bus,
        }
    }

    pub fn length(&self, class: VehicleClass) -> f64 {
        self.get(class)[0]
    }

    pub fn width(&self, class: VehicleClass) -> f64 {
        self.get(class)[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Human-driven, follows the car-following model.
    Hv,
    /// Robot vehicle, driven by policy actions once warmup is over.
    Rv,
}

/// Kinematic state of one vehicle. `arc_pos` is the front bumper position
/// along the current edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub role: Role,
    pub length: f64,
    pub width: f64,
    pub route: RouteId,
    /// Position of `edge` within the route.
    pub route_index: usize,
    pub edge: EdgeId,
    pub lane: usize,
    pub arc_pos: f64,
    pub velocity: f64,
    pub last_accel: f64,
}

impl VehicleState {
    pub fn is_rv(&self) -> bool {
        self.role == Role::Rv
    }

    pub fn rear_pos(&self) -> f64 {
        self.arc_pos - self.length
    }
}
