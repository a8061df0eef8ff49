//! Single-threaded discrete-event simulation of DCC beaconing.

mod queue;
mod sim;
mod vehicle;

use serde::{Deserialize, Serialize};

pub use queue::{Event, EventKind, EventQueue};
pub use sim::{run, run_scenario, Engine};
pub use vehicle::{advance_mobility, VehicleCounters, VehicleState};

use crate::dcc::{DccParamTable, DccState};
use crate::error::{Error, Result};
use crate::metrics::{PdrCurve, VerdictCounts, DEFAULT_BIN_WIDTH_M};
use crate::phy_mac::{frame_airtime_s, MacParams, ReceptionModel, VehicleId, Verdict};
use crate::propagation::RadioEnvironment;
use crate::scenarios::ScenarioParams;

/// What the engine keeps besides the observed-vehicle streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordOptions {
    /// One CBR/state sample per vehicle per simulated second.
    pub per_second_samples: bool,
    pub distance_bin_m: f64,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { per_second_samples: true, distance_bin_m: DEFAULT_BIN_WIDTH_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub payload_bytes: u32,
    /// Receivers farther than this from a transmitter are not evaluated.
    pub relevance_radius_m: f64,
    /// Frames starting earlier are left out of the distance curve.
    pub discard_first_s: f64,
    pub cbr_window_s: f64,
    pub cbr_period_s: f64,
    pub radio: RadioEnvironment,
    pub reception: ReceptionModel,
    pub mac: MacParams,
    pub dcc: DccParamTable,
    pub record: RecordOptions,
    pub scenario: ScenarioParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            seed: 1,
            payload_bytes: 250,
            relevance_radius_m: 1000.0,
            discard_first_s: 2.0,
            cbr_window_s: 1.0,
            cbr_period_s: 0.2,
            radio: RadioEnvironment::default(),
            reception: ReceptionModel::default(),
            mac: MacParams::default(),
            dcc: DccParamTable::default(),
            record: RecordOptions::default(),
            scenario: ScenarioParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("duration_s", self.duration_s)?;
        positive("relevance_radius_m", self.relevance_radius_m)?;
        positive("cbr_window_s", self.cbr_window_s)?;
        positive("cbr_period_s", self.cbr_period_s)?;
        positive("record.distance_bin_m", self.record.distance_bin_m)?;
        if !(self.discard_first_s >= 0.0) {
            return Err(Error::config("discard_first_s must be non-negative"));
        }
        if self.payload_bytes == 0 {
            return Err(Error::config("payload_bytes must be positive"));
        }
        self.radio.validate()?;
        self.reception.validate()?;
        self.mac.validate()?;
        self.dcc.validate(self.reception.channel_bandwidth_mhz)?;
        for state in DccState::ALL {
            let rate = self.dcc.params(state).phy_rate_mbps;
            frame_airtime_s(self.payload_bytes, rate, self.reception.channel_bandwidth_mhz)?;
            self.reception.required_sinr_db(rate)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrSample {
    pub time_s: f64,
    pub vehicle_id: VehicleId,
    pub cbr: f64,
    pub state: DccState,
}

/// One frame's fate at one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub tx_id: VehicleId,
    pub rx_id: VehicleId,
    pub sequence: u64,
    pub distance_m: f64,
    /// Faded power at the receiver.
    pub rx_power_dbm: f64,
    pub verdict: Verdict,
    pub tx_state: DccState,
    pub rx_state: DccState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub duration_s: f64,
    pub observed: Vec<VehicleId>,
    /// Vehicles averaged into the ambient CBR; empty means all.
    pub ambient: Vec<VehicleId>,
    /// Observed vehicles at every CBR evaluation.
    pub cbr_samples: Vec<CbrSample>,
    /// Every vehicle once per simulated second.
    pub per_second_samples: Vec<CbrSample>,
    /// Frames exchanged between observed vehicles.
    pub frames: Vec<FrameRecord>,
    /// All links after the warm-up.
    pub pdr_curve: PdrCurve,
    /// All links over the whole run.
    pub verdict_totals: VerdictCounts,
    pub frames_sent: u64,
    /// Sum over frames of the receivers inside the relevance radius.
    pub receptions_in_scope: u64,
    pub vehicles: Vec<VehicleCounters>,
}

impl RunOutput {
    pub fn counters(&self, id: VehicleId) -> Option<&VehicleCounters> {
        self.vehicles.iter().find(|c| c.vehicle_id == id)
    }

    /// Mean CBR over the ambient vehicles after the warm-up, from the
    /// per-second samples.
    pub fn ambient_cbr(&self, discard_first_s: f64) -> Option<f64> {
        let ids = (!self.ambient.is_empty()).then_some(self.ambient.as_slice());
        crate::metrics::ambient_cbr(&self.per_second_samples, discard_first_s, ids)
    }

    pub fn link_frames(&self, tx: VehicleId, rx: VehicleId) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(move |f| f.tx_id == tx && f.rx_id == rx)
    }
}
