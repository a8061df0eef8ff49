use serde::{Deserialize, Serialize};

use crate::dcc::DccTimerState;
use crate::error::{Error, Result};
use crate::phy_mac::{CbrWindow, VehicleId};

/// Public snapshot of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub vehicle_id: VehicleId,
    /// Time at which `position` is valid.
    pub time_s: f64,
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    pub dcc_timer: DccTimerState,
    /// Most recent CBR evaluation.
    pub cbr_window: CbrWindow,
    pub antenna_gain_dbi: f64,
    pub next_beacon_due_s: Option<f64>,
    pub beacon_sequence: u64,
}

impl VehicleState {
    #[inline]
    pub fn position_at(&self, time_s: f64) -> (f64, f64) {
        let dt = time_s - self.time_s;
        (self.position.0 + self.velocity.0 * dt, self.position.1 + self.velocity.1 * dt)
    }
}

/// Move a vehicle along its constant velocity to `to_time_s`.
pub fn advance_mobility(vehicle: &VehicleState, to_time_s: f64) -> Result<VehicleState> {
    if !(to_time_s >= vehicle.time_s) {
        return Err(Error::contract(format!(
            "cannot move vehicle {} back from {} s to {} s",
            vehicle.vehicle_id, vehicle.time_s, to_time_s
        )));
    }
    Ok(VehicleState { position: vehicle.position_at(to_time_s), time_s: to_time_s, ..vehicle.clone() })
}

/// Per-vehicle beacon accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleCounters {
    pub vehicle_id: VehicleId,
    pub beacons_generated: u64,
    /// Beacons replaced by a newer one before they reached the air.
    pub beacons_dropped: u64,
    pub frames_sent: u64,
}
