//! Deterministic simulation and analysis of vehicular safety beaconing
//! under the three-state DCC congestion-control machine.

pub mod dcc;
pub mod engine;
pub mod error;
pub mod fieldlog;
pub mod metrics;
pub mod phy_mac;
pub mod propagation;
pub mod rng;
pub mod scenarios;
pub mod units;

pub use dcc::{dcc_step, override_restrictive_tx, params_for, DccParamTable, DccState, DccTimerState, StateParams};
pub use engine::{run, CbrSample, Engine, FrameRecord, RunOutput, SimConfig};
pub use error::{Error, Result};
pub use metrics::{LinkStats, PdrCurve, PowerCurveFit};
pub use phy_mac::{FrameOnAir, MacParams, PhyProfile, ReceptionModel, VehicleId, Verdict};
pub use propagation::{LinkBudget, RadioEnvironment};
pub use scenarios::{ScenarioParams, ScenarioSpec, SweepParameter};
