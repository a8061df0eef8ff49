//! Declarative builders for vehicle placements.
//!
//! Each builder is a pure function of its parameters (and, for the
//! randomized smooth-flow layout, the run seed), so the same inputs always
//! yield the same ids and positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dcc::{override_restrictive_tx, DccState};
use crate::engine::SimConfig;
use crate::error::{Error, Result};
use crate::phy_mac::VehicleId;
use crate::rng::{stream, StreamPurpose};
use crate::units::kmh_to_ms;

/// Per-vehicle overrides that bypass part of the DCC machine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pin {
    /// Pinned state; `None` leaves the state machine running.
    pub state: Option<DccState>,
    pub tx_power_dbm: Option<f64>,
    pub rx_sensitivity_dbm: Option<f64>,
}

impl Pin {
    pub fn state(state: DccState) -> Self {
        Self { state: Some(state), ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_none() && self.tx_power_dbm.is_none() && self.rx_sensitivity_dbm.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: VehicleId,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub vx_m_s: f64,
    #[serde(default)]
    pub vy_m_s: f64,
    #[serde(default = "default_initial_state")]
    pub initial_state: DccState,
    #[serde(default)]
    pub pin: Pin,
    #[serde(default = "default_gain")]
    pub antenna_gain_dbi: f64,
    /// Receive-only vehicles never generate beacons.
    #[serde(default)]
    pub silent: bool,
    #[serde(default)]
    pub beacon_limit: Option<u64>,
}

fn default_initial_state() -> DccState {
    DccState::Relaxed
}

fn default_gain() -> f64 {
    DEFAULT_ANTENNA_GAIN_DBI
}

pub const DEFAULT_ANTENNA_GAIN_DBI: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StationaryPair,
    TwoWayMultiLane,
    SmoothFlow,
    Custom,
}

/// A fully placed scenario, ready for the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub vehicles: Vec<VehicleSpec>,
    /// Vehicles recorded at full resolution; every ordered pair among them
    /// is an observed link.
    pub observed: Vec<VehicleId>,
    /// Vehicles averaged into the ambient CBR; empty means all.
    pub ambient: Vec<VehicleId>,
}

impl ScenarioSpec {
    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleSpec> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<VehicleId> = self.vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate vehicle id"));
        }
        for v in &self.vehicles {
            if ![v.x_m, v.y_m, v.vx_m_s, v.vy_m_s, v.antenna_gain_dbi].iter().all(|x| x.is_finite()) {
                return Err(Error::config(format!("vehicle {}: non-finite geometry", v.id)));
            }
        }
        for id in self.observed.iter().chain(&self.ambient) {
            if ids.binary_search(id).is_err() {
                return Err(Error::config(format!("observed/ambient vehicle {id} does not exist")));
            }
        }
        let mut pos: Vec<(u64, u64)> =
            self.vehicles.iter().map(|v| (v.x_m.to_bits(), v.y_m.to_bits())).collect();
        pos.sort_unstable();
        if pos.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("two vehicles share a position"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryPairParams {
    pub distance_m: f64,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub rx_sensitivity_dbm: f64,
    pub beacons: u64,
}

impl Default for StationaryPairParams {
    fn default() -> Self {
        Self { distance_m: 2.5, tx_power_dbm: -10.0, antenna_gain_dbi: 4.5, rx_sensitivity_dbm: -77.0, beacons: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoWayParams {
    pub congested_lanes: u32,
    pub vehicles_per_lane: u32,
    pub vehicle_length_m: f64,
    pub gap_m: f64,
    pub lane_width_m: f64,
    pub median_m: f64,
    pub congested_initial_state: DccState,
    /// Pin every congested vehicle to this state.
    pub congested_pinned: Option<DccState>,
    pub free_vehicles: bool,
    /// Longitudinal spacing of the two free-direction vehicles.
    pub free_separation_m: f64,
    pub free_speed_kmh: f64,
    pub free_initial_state: DccState,
    /// How far past the strip centre the leading free vehicle starts.
    pub free_start_ahead_m: f64,
    pub antenna_gain_dbi: f64,
}

impl Default for TwoWayParams {
    fn default() -> Self {
        Self {
            congested_lanes: 4,
            vehicles_per_lane: 400,
            vehicle_length_m: 5.0,
            gap_m: 1.5,
            lane_width_m: 5.0,
            median_m: 2.0,
            congested_initial_state: DccState::Restrictive,
            congested_pinned: None,
            free_vehicles: true,
            free_separation_m: 40.0,
            free_speed_kmh: 72.0,
            free_initial_state: DccState::Relaxed,
            free_start_ahead_m: 300.0,
            antenna_gain_dbi: DEFAULT_ANTENNA_GAIN_DBI,
        }
    }
}

impl TwoWayParams {
    pub fn pitch_m(&self) -> f64 {
        self.vehicle_length_m + self.gap_m
    }

    /// A packed strip: congested lanes only, every vehicle pinned.
    pub fn packed(lanes: u32, vehicles_per_lane: u32, pinned: DccState) -> Self {
        Self {
            congested_lanes: lanes,
            vehicles_per_lane,
            congested_initial_state: pinned,
            congested_pinned: Some(pinned),
            free_vehicles: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothFlowParams {
    pub lanes: u32,
    pub vehicles_per_lane: u32,
    pub road_length_m: f64,
    pub lane_width_m: f64,
    pub min_gap_m: f64,
    pub max_gap_m: f64,
    /// Forces every gap to one value.
    pub fixed_gap_m: Option<f64>,
    pub speed_kmh: f64,
    pub initial_state: DccState,
    pub observed_lane: u32,
    /// Index within the lane of the first of three observed vehicles.
    pub observed_index: u32,
    /// Gaps pinned between the observed triple (first→second, second→third).
    pub observed_gaps_m: Option<[f64; 2]>,
    pub antenna_gain_dbi: f64,
}

impl Default for SmoothFlowParams {
    fn default() -> Self {
        Self {
            lanes: 3,
            vehicles_per_lane: 100,
            road_length_m: 5000.0,
            lane_width_m: 5.0,
            min_gap_m: 30.0,
            max_gap_m: 60.0,
            fixed_gap_m: None,
            speed_kmh: 72.0,
            initial_state: DccState::Relaxed,
            observed_lane: 2,
            observed_index: 53,
            observed_gaps_m: Some([40.0, 60.0]),
            antenna_gain_dbi: DEFAULT_ANTENNA_GAIN_DBI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomParams {
    pub vehicles: Vec<VehicleSpec>,
    pub observed: Vec<VehicleId>,
    pub ambient: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioParams {
    StationaryPair(StationaryPairParams),
    TwoWayMultiLane(TwoWayParams),
    SmoothFlow(SmoothFlowParams),
    Custom(CustomParams),
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams::TwoWayMultiLane(TwoWayParams::default())
    }
}

impl ScenarioParams {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioParams::StationaryPair(_) => ScenarioKind::StationaryPair,
            ScenarioParams::TwoWayMultiLane(_) => ScenarioKind::TwoWayMultiLane,
            ScenarioParams::SmoothFlow(_) => ScenarioKind::SmoothFlow,
            ScenarioParams::Custom(_) => ScenarioKind::Custom,
        }
    }

    pub fn build(&self, seed: u64) -> Result<ScenarioSpec> {
        let spec = match self {
            ScenarioParams::StationaryPair(p) => build_stationary_pair_with(p)?,
            ScenarioParams::TwoWayMultiLane(p) => build_two_way_multilane(p)?,
            ScenarioParams::SmoothFlow(p) => build_smooth_flow(p, seed)?,
            ScenarioParams::Custom(p) => ScenarioSpec {
                kind: ScenarioKind::Custom,
                vehicles: p.vehicles.clone(),
                observed: p.observed.clone(),
                ambient: p.ambient.clone(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Two parked vehicles: id 0 transmits, id 1 only listens. Both are pinned
/// to Restrictive; the transmitter's power is overridden.
pub fn build_stationary_pair(distance_m: f64, tx_power_dbm: f64, antenna_gain_dbi: f64) -> Result<ScenarioSpec> {
    build_stationary_pair_with(&StationaryPairParams {
        distance_m,
        tx_power_dbm,
        antenna_gain_dbi,
        ..StationaryPairParams::default()
    })
}

fn build_stationary_pair_with(p: &StationaryPairParams) -> Result<ScenarioSpec> {
    if !(p.distance_m > 0.0 && p.distance_m.is_finite()) {
        return Err(Error::config(format!("pair distance must be positive, got {}", p.distance_m)));
    }
    let base = |id, x_m| VehicleSpec {
        id,
        x_m,
        y_m: 0.0,
        vx_m_s: 0.0,
        vy_m_s: 0.0,
        initial_state: DccState::Restrictive,
        pin: Pin::state(DccState::Restrictive),
        antenna_gain_dbi: p.antenna_gain_dbi,
        silent: false,
        beacon_limit: None,
    };
    let mut tx = base(0, 0.0);
    tx.pin.tx_power_dbm = Some(p.tx_power_dbm);
    tx.beacon_limit = Some(p.beacons);
    let mut rx = base(1, p.distance_m);
    rx.pin.rx_sensitivity_dbm = Some(p.rx_sensitivity_dbm);
    rx.silent = true;
    Ok(ScenarioSpec {
        kind: ScenarioKind::StationaryPair,
        vehicles: vec![tx, rx],
        observed: vec![0, 1],
        ambient: vec![],
    })
}

/// A jammed direction (stationary, `congested_lanes` lanes at bumper-to-bumper
/// pitch) next to a free-flowing direction carrying two vehicles on its
/// first and fourth lanes.
///
/// Congested ids run lane by lane from 0; the free vehicles take
/// `n + 1` and `n + 2` where `n` is the congested population. The observed
/// list is the congested-centre vehicle (second lane, middle index) followed
/// by the two free vehicles.
pub fn build_two_way_multilane(p: &TwoWayParams) -> Result<ScenarioSpec> {
    let pitch = p.pitch_m();
    if !(p.vehicle_length_m > 0.0 && p.gap_m >= 0.0 && pitch > 0.0) {
        return Err(Error::config("vehicle length must be positive and the gap non-negative"));
    }
    if !(p.lane_width_m > 0.0 && p.median_m >= 0.0) {
        return Err(Error::config("lane width must be positive and the median non-negative"));
    }
    if p.vehicles_per_lane > 0 && p.congested_lanes == 0 {
        return Err(Error::config("vehicles_per_lane set with zero congested lanes"));
    }
    if p.free_vehicles && !(p.free_separation_m > 0.0) {
        return Err(Error::config("free_separation_m must be positive"));
    }
    let n_per = p.vehicles_per_lane;
    let lanes = if n_per == 0 { 0 } else { p.congested_lanes };
    let strip_len = n_per.saturating_sub(1) as f64 * pitch;
    let centre_x = strip_len / 2.0;
    let mut vehicles = Vec::with_capacity((lanes * n_per) as usize + 2);
    let mut ambient = Vec::new();
    let pin = p.congested_pinned.map(Pin::state).unwrap_or_default();
    let initial = p.congested_pinned.unwrap_or(p.congested_initial_state);
    for lane in 0..lanes {
        for i in 0..n_per {
            let id = lane * n_per + i;
            let x = i as f64 * pitch;
            vehicles.push(VehicleSpec {
                id,
                x_m: x,
                y_m: lane as f64 * p.lane_width_m,
                vx_m_s: 0.0,
                vy_m_s: 0.0,
                initial_state: initial,
                pin,
                antenna_gain_dbi: p.antenna_gain_dbi,
                silent: false,
                beacon_limit: None,
            });
            if x >= strip_len / 3.0 && x <= 2.0 * strip_len / 3.0 {
                ambient.push(id);
            }
        }
    }
    let mut observed = Vec::new();
    if lanes > 0 {
        let lane = 1.min(lanes - 1);
        observed.push(lane * n_per + n_per / 2);
    }
    if p.free_vehicles {
        let n = lanes * n_per;
        // Free lanes sit across the median, lane 1 nearest to it.
        let free_lane_y = |j: u32| {
            lanes.saturating_sub(1) as f64 * p.lane_width_m + p.median_m + p.lane_width_m * (1 + j) as f64
        };
        let speed = kmh_to_ms(p.free_speed_kmh);
        let lead_x = centre_x + p.free_start_ahead_m;
        for (k, (lane_j, x)) in [(0u32, lead_x), (3u32, lead_x + p.free_separation_m)].into_iter().enumerate() {
            let id = n + 1 + k as u32;
            vehicles.push(VehicleSpec {
                id,
                x_m: x,
                y_m: free_lane_y(lane_j),
                vx_m_s: -speed,
                vy_m_s: 0.0,
                initial_state: p.free_initial_state,
                pin: Pin::default(),
                antenna_gain_dbi: p.antenna_gain_dbi,
                silent: false,
                beacon_limit: None,
            });
            observed.push(id);
        }
    }
    Ok(ScenarioSpec { kind: ScenarioKind::TwoWayMultiLane, vehicles, observed, ambient })
}

/// One-directional traffic with random headways.
///
/// Ids run lane by lane from 0; within a lane the index grows with `x` and
/// everybody drives towards `+x`. The observed triple is
/// `observed_lane · vehicles_per_lane + observed_index + {0, 1, 2}`.
pub fn build_smooth_flow(p: &SmoothFlowParams, seed: u64) -> Result<ScenarioSpec> {
    if !(p.min_gap_m > 0.0 && p.max_gap_m >= p.min_gap_m) {
        return Err(Error::config("need 0 < min_gap_m <= max_gap_m"));
    }
    if let Some(g) = p.fixed_gap_m {
        if !(g > 0.0) {
            return Err(Error::config("fixed_gap_m must be positive"));
        }
    }
    let observing = p.vehicles_per_lane >= 3;
    if observing && (p.observed_lane >= p.lanes || p.observed_index + 2 >= p.vehicles_per_lane) {
        return Err(Error::config("observed triple lies outside the generated traffic"));
    }
    let mut rng = stream(seed, 0, StreamPurpose::Scenario);
    let speed = kmh_to_ms(p.speed_kmh);
    let mut vehicles = Vec::with_capacity((p.lanes * p.vehicles_per_lane) as usize);
    for lane in 0..p.lanes {
        let mut x = match p.fixed_gap_m {
            Some(_) => 0.0,
            None => rng.gen_range(0.0..p.min_gap_m),
        };
        for i in 0..p.vehicles_per_lane {
            if i > 0 {
                let drawn = match p.fixed_gap_m {
                    Some(g) => g,
                    None => rng.gen_range(p.min_gap_m..=p.max_gap_m),
                };
                let pinned = match p.observed_gaps_m {
                    Some([a, _]) if lane == p.observed_lane && i == p.observed_index + 1 => Some(a),
                    Some([_, b]) if lane == p.observed_lane && i == p.observed_index + 2 => Some(b),
                    _ => None,
                };
                x += pinned.unwrap_or(drawn);
            }
            if x > p.road_length_m {
                return Err(Error::config(format!(
                    "{} vehicles per lane do not fit on a {} m road",
                    p.vehicles_per_lane, p.road_length_m
                )));
            }
            vehicles.push(VehicleSpec {
                id: lane * p.vehicles_per_lane + i,
                x_m: x,
                y_m: lane as f64 * p.lane_width_m,
                vx_m_s: speed,
                vy_m_s: 0.0,
                initial_state: p.initial_state,
                pin: Pin::default(),
                antenna_gain_dbi: p.antenna_gain_dbi,
                silent: false,
                beacon_limit: None,
            });
        }
    }
    let observed = if observing {
        let first = p.observed_lane * p.vehicles_per_lane + p.observed_index;
        vec![first, first + 1, first + 2]
    } else {
        vec![]
    };
    Ok(ScenarioSpec { kind: ScenarioKind::SmoothFlow, vehicles, observed, ambient: vec![] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    RestrictiveTxPower,
    RxSensitivity,
    Distance,
    AntennaGain,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::RestrictiveTxPower => "restrictive_tx_power",
            SweepParameter::RxSensitivity => "rx_sensitivity",
            SweepParameter::Distance => "distance",
            SweepParameter::AntennaGain => "antenna_gain",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParameter::RestrictiveTxPower,
            SweepParameter::RxSensitivity,
            SweepParameter::Distance,
            SweepParameter::AntennaGain,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| Error::config(format!("unknown sweep parameter '{s}'")))
    }
}

/// One configuration per value; seed and every other field are shared.
pub fn sweep(base: &SimConfig, parameter: SweepParameter, values: &[f64]) -> Result<Vec<(f64, SimConfig)>> {
    values.iter().map(|&v| Ok((v, apply_sweep_value(base, parameter, v)?))).collect()
}

fn apply_sweep_value(base: &SimConfig, parameter: SweepParameter, value: f64) -> Result<SimConfig> {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::RestrictiveTxPower => {
            cfg.dcc = override_restrictive_tx(&cfg.dcc, value)?;
            if let ScenarioParams::StationaryPair(p) = &mut cfg.scenario {
                p.tx_power_dbm = value;
            }
        }
        SweepParameter::RxSensitivity => {
            cfg.dcc.restrictive.rx_sensitivity_dbm = value;
            if let ScenarioParams::StationaryPair(p) = &mut cfg.scenario {
                p.rx_sensitivity_dbm = value;
            }
        }
        SweepParameter::Distance => match &mut cfg.scenario {
            ScenarioParams::StationaryPair(p) => p.distance_m = value,
            other => {
                return Err(Error::config(format!(
                    "distance sweeps need a stationary_pair scenario, not {:?}",
                    other.kind()
                )))
            }
        },
        SweepParameter::AntennaGain => match &mut cfg.scenario {
            ScenarioParams::StationaryPair(p) => p.antenna_gain_dbi = value,
            ScenarioParams::TwoWayMultiLane(p) => p.antenna_gain_dbi = value,
            ScenarioParams::SmoothFlow(p) => p.antenna_gain_dbi = value,
            ScenarioParams::Custom(p) => p.vehicles.iter_mut().for_each(|v| v.antenna_gain_dbi = value),
        },
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &VehicleSpec, b: &VehicleSpec) -> f64 {
        ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2)).sqrt()
    }

    #[test]
    fn stationary_pair_configuration() {
        let s = build_stationary_pair(2.5, -10.0, 4.5).unwrap();
        assert_eq!(s.vehicles.len(), 2);
        let (tx, rx) = (&s.vehicles[0], &s.vehicles[1]);
        assert_eq!(tx.pin.tx_power_dbm, Some(-10.0));
        assert_eq!(tx.pin.state, Some(DccState::Restrictive));
        assert_eq!(tx.beacon_limit, Some(5000));
        assert_eq!(rx.pin.rx_sensitivity_dbm, Some(-77.0));
        assert!(rx.silent);
        assert_eq!(dist(tx, rx), 2.5);
        let s = build_stationary_pair(10.0, 23.0, 4.5).unwrap();
        assert_eq!(s.vehicles[0].pin.tx_power_dbm, Some(23.0));
        assert_eq!(dist(&s.vehicles[0], &s.vehicles[1]), 10.0);
        assert!(build_stationary_pair(0.0, -10.0, 4.5).is_err());
        assert!(build_stationary_pair(-1.0, -10.0, 4.5).is_err());
    }

    #[test]
    fn two_way_geometry() {
        let p = TwoWayParams::default();
        let s = build_two_way_multilane(&p).unwrap();
        assert_eq!(s.vehicles.len(), 1602);
        assert_eq!(s.observed, vec![600, 1601, 1602]);
        let v = |id| s.vehicle(id).unwrap();
        assert_eq!(v(1).x_m - v(0).x_m, 6.5);
        assert_eq!(v(2).x_m - v(0).x_m, 13.0);
        let (a, b) = (v(1601), v(1602));
        assert_eq!(b.x_m - a.x_m, 40.0);
        assert_eq!(b.y_m - a.y_m, 15.0);
        assert_eq!(a.vx_m_s, -20.0);
        assert_eq!(a.initial_state, DccState::Relaxed);
        assert_eq!(v(600).initial_state, DccState::Restrictive);
        assert_eq!(v(600).vx_m_s, 0.0);
        // The centre vehicle sits mid-strip on the second lane.
        assert_eq!(v(600).y_m, 5.0);
        assert_eq!(v(600).x_m, 200.0 * 6.5);
        s.validate().unwrap();
    }

    #[test]
    fn two_way_without_congestion() {
        let p = TwoWayParams { vehicles_per_lane: 0, ..TwoWayParams::default() };
        let s = build_two_way_multilane(&p).unwrap();
        assert_eq!(s.vehicles.len(), 2);
        assert_eq!(s.observed, vec![1, 2]);
    }

    #[test]
    fn packed_strip_is_pinned() {
        let s = build_two_way_multilane(&TwoWayParams::packed(3, 50, DccState::Restrictive)).unwrap();
        assert_eq!(s.vehicles.len(), 150);
        assert!(s.vehicles.iter().all(|v| v.pin.state == Some(DccState::Restrictive)));
        assert!(!s.ambient.is_empty());
    }

    #[test]
    fn smooth_flow_defaults() {
        let p = SmoothFlowParams::default();
        let s = build_smooth_flow(&p, 1).unwrap();
        assert_eq!(s.vehicles.len(), 300);
        assert_eq!(s.observed, vec![253, 254, 255]);
        let v = |id| s.vehicle(id).unwrap();
        assert_eq!(v(254).x_m - v(253).x_m, 40.0);
        assert_eq!(v(255).x_m - v(254).x_m, 60.0);
        assert!(s.vehicles.iter().all(|v| v.x_m <= p.road_length_m && v.vx_m_s == 20.0));
        for lane in 0..3 {
            for i in 1..100u32 {
                let id = lane * 100 + i;
                if (253..=255).contains(&id) && id != 253 {
                    continue;
                }
                let gap = v(id).x_m - v(id - 1).x_m;
                assert!((30.0..=60.0).contains(&gap), "{id}: {gap}");
            }
        }
    }

    #[test]
    fn smooth_flow_is_deterministic() {
        let p = SmoothFlowParams::default();
        assert_eq!(build_smooth_flow(&p, 9).unwrap(), build_smooth_flow(&p, 9).unwrap());
        assert_ne!(build_smooth_flow(&p, 9).unwrap(), build_smooth_flow(&p, 10).unwrap());
    }

    #[test]
    fn smooth_flow_fixed_gap() {
        let p = SmoothFlowParams { fixed_gap_m: Some(45.0), observed_gaps_m: None, ..SmoothFlowParams::default() };
        let s = build_smooth_flow(&p, 1).unwrap();
        for w in s.vehicles[..100].windows(2) {
            assert_eq!(w[1].x_m - w[0].x_m, 45.0);
        }
    }

    #[test]
    fn smooth_flow_overflow_is_an_error() {
        let p = SmoothFlowParams { road_length_m: 4000.0, fixed_gap_m: Some(45.0), ..SmoothFlowParams::default() };
        assert!(matches!(build_smooth_flow(&p, 1), Err(Error::Config(_))));
    }

    #[test]
    fn sweeps() {
        let base = SimConfig {
            scenario: ScenarioParams::StationaryPair(StationaryPairParams::default()),
            ..SimConfig::default()
        };
        let out = sweep(&base, SweepParameter::RestrictiveTxPower, &[-10.0, 0.0, 10.0, 16.0, 23.0]).unwrap();
        assert_eq!(out.len(), 5);
        for (v, cfg) in &out {
            assert_eq!(cfg.dcc.restrictive.tx_power_dbm, *v);
            assert_eq!(cfg.seed, base.seed);
            match &cfg.scenario {
                ScenarioParams::StationaryPair(p) => assert_eq!(p.tx_power_dbm, *v),
                _ => unreachable!(),
            }
        }
        let out = sweep(&base, SweepParameter::RxSensitivity, &[-77.0, -95.0]).unwrap();
        assert_eq!(out[1].1.dcc.restrictive.rx_sensitivity_dbm, -95.0);
        assert!(sweep(&base, SweepParameter::Distance, &[]).unwrap().is_empty());
        assert!("bogus".parse::<SweepParameter>().is_err());
        let two_way = SimConfig::default();
        assert!(sweep(&two_way, SweepParameter::Distance, &[5.0]).is_err());
    }
}
