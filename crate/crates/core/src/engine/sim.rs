use std::collections::HashMap;

use rand::Rng;

use super::queue::{EventKind, EventQueue};
use super::vehicle::{VehicleCounters, VehicleState};
use super::{CbrSample, FrameRecord, RunOutput, SimConfig};
use crate::dcc::{dcc_step, params_for, DccState, DccTimerState, StateParams};
use crate::error::{Error, Result};
use crate::metrics::{PdrCurve, VerdictCounts};
use crate::phy_mac::{
    frame_airtime_s, reception_verdict_mw, BusyTracker, CbrWindow, PhyProfile, VehicleId, Verdict,
};
use crate::propagation::{sample_fading_gain, PathLoss};
use crate::rng::{stream, StreamPurpose, StreamRng};
use crate::scenarios::{Pin, ScenarioSpec, VehicleSpec};
use crate::units::{dbm_to_mw, mw_to_dbm};

/// Simulate `config` to completion.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    Engine::new(config)?.finish()
}

/// Simulate an already placed scenario.
pub fn run_scenario(config: &SimConfig, spec: ScenarioSpec) -> Result<RunOutput> {
    Engine::with_scenario(config, spec)?.finish()
}

// Rounds event times built from a float period onto a nanosecond grid so
// that ticks land exactly on whole seconds.
fn grid_time(k: u64, period_s: f64) -> f64 {
    (k as f64 * period_s * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Copy)]
struct Attempt {
    time_s: f64,
    countdown_start_s: f64,
}

#[derive(Debug, Clone, Copy)]
struct LiveRx {
    frame: usize,
    signal_mw: f64,
    interference_mw: f64,
    sensitivity_dbm: f64,
    interrupted: bool,
}

#[derive(Debug)]
struct Node {
    state: VehicleState,
    silent: bool,
    beacon_limit: Option<u64>,
    observed: bool,
    gain_linear: f64,
    pin: Pin,
    params: StateParams,
    cca_mw: f64,
    sensitivity_mw: f64,

    power_sum_mw: f64,
    on_air: u32,
    decoding: u32,
    transmitting: bool,
    busy: bool,
    tracker: BusyTracker,
    live: Vec<LiveRx>,

    pending_due: Option<f64>,
    backoff: Option<u32>,
    attempt: Option<Attempt>,
    tx_generation: u64,
    beacon_generation: u64,
    last_beacon_s: Option<f64>,

    counters: VehicleCounters,
    fading: StreamRng,
    backoff_rng: StreamRng,
}

impl Node {
    fn id(&self) -> VehicleId {
        self.state.vehicle_id
    }

    fn effective_params(&self, table: &crate::dcc::DccParamTable) -> StateParams {
        let mut p = params_for(self.state.dcc_timer.current, table);
        if let Some(tx) = self.pin.tx_power_dbm {
            p.tx_power_dbm = tx;
        }
        if let Some(s) = self.pin.rx_sensitivity_dbm {
            p.rx_sensitivity_dbm = s;
        }
        p
    }
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    rx: usize,
    power_mw: f64,
    distance_m: f64,
    rx_state: DccState,
    decoding: bool,
    decided: Option<Verdict>,
}

#[derive(Debug)]
struct Frame {
    tx: usize,
    start_s: f64,
    end_s: f64,
    sequence: u64,
    tx_state: DccState,
    phy_rate_mbps: f64,
    required_sinr_db: f64,
    arrivals: Vec<Arrival>,
}

/// A running simulation. Build it, optionally pin vehicles, then advance
/// with [`Engine::run_until`] or [`Engine::finish`].
pub struct Engine {
    config: SimConfig,
    nodes: Vec<Node>,
    index_of: HashMap<VehicleId, usize>,
    observed_ids: Vec<VehicleId>,
    ambient_ids: Vec<VehicleId>,
    queue: EventQueue,
    frames: Vec<Option<Frame>>,
    free_frames: Vec<usize>,
    spare_arrivals: Vec<Vec<Arrival>>,
    pathloss: PathLoss,
    noise_mw: f64,
    now_s: f64,
    max_speed_m_s: f64,
    spatial: Vec<(f64, u32)>,
    spatial_time_s: f64,
    tick: u64,

    cbr_samples: Vec<CbrSample>,
    per_second_samples: Vec<CbrSample>,
    frame_records: Vec<FrameRecord>,
    pdr_curve: PdrCurve,
    verdict_totals: VerdictCounts,
    frames_sent: u64,
    receptions_in_scope: u64,
}

impl Engine {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.scenario.build(config.seed)?;
        Self::with_scenario(config, spec)
    }

    pub fn with_scenario(config: &SimConfig, spec: ScenarioSpec) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let mut vehicles: Vec<VehicleSpec> = spec.vehicles.clone();
        vehicles.sort_by_key(|v| v.id);
        let seed = config.seed;
        let nodes: Vec<Node> = vehicles
            .iter()
            .map(|v| {
                let timer = DccTimerState::new(v.pin.state.unwrap_or(v.initial_state), 0.0);
                let mut node = Node {
                    state: VehicleState {
                        vehicle_id: v.id,
                        time_s: 0.0,
                        position: (v.x_m, v.y_m),
                        velocity: (v.vx_m_s, v.vy_m_s),
                        dcc_timer: timer,
                        cbr_window: CbrWindow::trailing(0.0, config.cbr_window_s),
                        antenna_gain_dbi: v.antenna_gain_dbi,
                        next_beacon_due_s: None,
                        beacon_sequence: 0,
                    },
                    silent: v.silent,
                    beacon_limit: v.beacon_limit,
                    observed: spec.observed.contains(&v.id),
                    gain_linear: crate::units::db_to_linear(v.antenna_gain_dbi),
                    pin: v.pin,
                    params: params_for(timer.current, &config.dcc),
                    cca_mw: 0.0,
                    sensitivity_mw: 0.0,
                    power_sum_mw: 0.0,
                    on_air: 0,
                    decoding: 0,
                    transmitting: false,
                    busy: false,
                    tracker: BusyTracker::default(),
                    live: Vec::new(),
                    pending_due: None,
                    backoff: None,
                    attempt: None,
                    tx_generation: 0,
                    beacon_generation: 0,
                    last_beacon_s: None,
                    counters: VehicleCounters { vehicle_id: v.id, ..VehicleCounters::default() },
                    fading: stream(seed, v.id, StreamPurpose::Fading),
                    backoff_rng: stream(seed, v.id, StreamPurpose::Backoff),
                };
                node.params = node.effective_params(&config.dcc);
                node.cca_mw = dbm_to_mw(node.params.cca_threshold_dbm);
                node.sensitivity_mw = dbm_to_mw(node.params.rx_sensitivity_dbm);
                node
            })
            .collect();
        let index_of = nodes.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
        let max_speed_m_s = vehicles
            .iter()
            .map(|v| (v.vx_m_s * v.vx_m_s + v.vy_m_s * v.vy_m_s).sqrt())
            .fold(0.0, f64::max);
        let mut engine = Engine {
            pathloss: PathLoss::new(&config.radio)?,
            noise_mw: dbm_to_mw(config.reception.noise_floor_dbm()),
            pdr_curve: PdrCurve::new(config.record.distance_bin_m)?,
            config: config.clone(),
            nodes,
            index_of,
            observed_ids: spec.observed.clone(),
            ambient_ids: spec.ambient.clone(),
            queue: EventQueue::default(),
            frames: Vec::new(),
            free_frames: Vec::new(),
            spare_arrivals: Vec::new(),
            now_s: 0.0,
            max_speed_m_s,
            spatial: Vec::new(),
            spatial_time_s: 0.0,
            tick: 0,
            cbr_samples: Vec::new(),
            per_second_samples: Vec::new(),
            frame_records: Vec::new(),
            verdict_totals: VerdictCounts::default(),
            frames_sent: 0,
            receptions_in_scope: 0,
        };
        engine.rebuild_spatial_index();
        for i in 0..engine.nodes.len() {
            let n = &engine.nodes[i];
            if n.silent || n.beacon_limit == Some(0) {
                continue;
            }
            let interval = n.params.beacon_interval_s();
            let phase = stream(seed, n.id(), StreamPurpose::Phase).gen::<f64>() * interval;
            engine.schedule_beacon(i, phase);
        }
        engine.queue.push(grid_time(1, engine.config.cbr_period_s), 0, EventKind::CbrTick);
        if engine.config.record.per_second_samples {
            engine.queue.push(1.0, 0, EventKind::MetricTick);
        }
        Ok(engine)
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    fn index(&self, id: VehicleId) -> Result<usize> {
        self.index_of.get(&id).copied().ok_or(Error::UnknownVehicle(id))
    }

    /// Snapshot of a vehicle at the current simulation time.
    pub fn vehicle_state(&self, id: VehicleId) -> Result<VehicleState> {
        let n = &self.nodes[self.index(id)?];
        super::advance_mobility(&n.state, self.now_s.max(n.state.time_s))
    }

    /// Pin a vehicle to `state`; its state machine stops until unpinned.
    pub fn force_state(&mut self, id: VehicleId, state: DccState) -> Result<()> {
        let i = self.index(id)?;
        self.nodes[i].pin.state = Some(state);
        self.enter_state(i, state, self.now_s);
        Ok(())
    }

    /// Override the transmit power in every state.
    pub fn pin_tx_power(&mut self, id: VehicleId, tx_power_dbm: f64) -> Result<()> {
        let i = self.index(id)?;
        self.nodes[i].pin.tx_power_dbm = Some(tx_power_dbm);
        let state = self.nodes[i].state.dcc_timer.current;
        self.enter_state(i, state, self.now_s);
        Ok(())
    }

    /// Drop every pin; the state machine resumes at the next evaluation.
    pub fn unpin(&mut self, id: VehicleId) -> Result<()> {
        let i = self.index(id)?;
        self.nodes[i].pin = Pin::default();
        let state = self.nodes[i].state.dcc_timer.current;
        self.enter_state(i, state, self.now_s);
        Ok(())
    }

    /// Process every event up to and including `until_s` (capped at the
    /// configured duration).
    pub fn run_until(&mut self, until_s: f64) -> Result<()> {
        let limit = until_s.min(self.config.duration_s);
        while let Some(t) = self.queue.peek_time() {
            if t > limit {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.now_s = ev.time_s;
            self.dispatch(ev.vehicle as usize, ev.kind)?;
        }
        self.now_s = self.now_s.max(limit);
        Ok(())
    }

    /// Run to the configured duration, let frames already on the air
    /// finish, and collect the outputs.
    pub fn finish(mut self) -> Result<RunOutput> {
        self.run_until(self.config.duration_s)?;
        while let Some(ev) = self.queue.pop() {
            if let EventKind::TxEnd { frame } = ev.kind {
                self.now_s = ev.time_s;
                self.end_frame(frame)?;
            }
        }
        Ok(RunOutput {
            seed: self.config.seed,
            duration_s: self.config.duration_s,
            observed: self.observed_ids,
            ambient: self.ambient_ids,
            cbr_samples: self.cbr_samples,
            per_second_samples: self.per_second_samples,
            frames: self.frame_records,
            pdr_curve: self.pdr_curve,
            verdict_totals: self.verdict_totals,
            frames_sent: self.frames_sent,
            receptions_in_scope: self.receptions_in_scope,
            vehicles: self.nodes.iter().map(|n| n.counters).collect(),
        })
    }

    fn dispatch(&mut self, i: usize, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::TxEnd { frame } => self.end_frame(frame),
            EventKind::TxStart { generation } => {
                if generation == self.nodes[i].tx_generation && self.nodes[i].attempt.is_some() {
                    self.start_frame(i)?;
                }
                Ok(())
            }
            EventKind::BeaconDue { generation } => {
                if generation == self.nodes[i].beacon_generation {
                    self.beacon_due(i);
                }
                Ok(())
            }
            EventKind::CbrTick => self.cbr_tick(),
            EventKind::MetricTick => {
                let t = self.now_s;
                for n in &self.nodes {
                    self.per_second_samples.push(CbrSample {
                        time_s: t,
                        vehicle_id: n.id(),
                        cbr: n.state.cbr_window.cbr(),
                        state: n.state.dcc_timer.current,
                    });
                }
                let next = t + 1.0;
                if next <= self.config.duration_s {
                    self.queue.push(next, 0, EventKind::MetricTick);
                }
                Ok(())
            }
        }
    }

    fn schedule_beacon(&mut self, i: usize, at_s: f64) {
        let n = &mut self.nodes[i];
        n.beacon_generation += 1;
        n.state.next_beacon_due_s = Some(at_s);
        self.queue.push(at_s, i as u32, EventKind::BeaconDue { generation: n.beacon_generation });
    }

    fn beacon_due(&mut self, i: usize) {
        let t = self.now_s;
        let n = &mut self.nodes[i];
        n.state.next_beacon_due_s = None;
        n.counters.beacons_generated += 1;
        n.last_beacon_s = Some(t);
        if n.pending_due.replace(t).is_some() {
            n.counters.beacons_dropped += 1;
        } else if n.attempt.is_none() {
            if n.busy {
                if n.backoff.is_none() {
                    n.backoff = Some(self.config.mac.draw_backoff(&mut n.backoff_rng));
                }
            } else {
                let at = t + self.config.mac.aifs_s;
                n.attempt = Some(Attempt { time_s: at, countdown_start_s: at });
                n.tx_generation += 1;
                self.queue.push(at, i as u32, EventKind::TxStart { generation: n.tx_generation });
            }
        }
        let more = n.beacon_limit.map_or(true, |limit| n.counters.beacons_generated < limit);
        if more {
            let next = t + n.params.beacon_interval_s();
            self.schedule_beacon(i, next);
        }
    }

    fn on_channel_busy(&mut self, i: usize, t: f64) {
        let mac = self.config.mac;
        let n = &mut self.nodes[i];
        let Some(a) = n.attempt else { return };
        if a.time_s <= t {
            return;
        }
        n.attempt = None;
        n.tx_generation += 1;
        n.backoff = Some(match n.backoff {
            Some(b) => {
                let elapsed = if t > a.countdown_start_s {
                    ((t - a.countdown_start_s) / mac.slot_time_s).floor() as u32
                } else {
                    0
                };
                b - elapsed.min(b)
            }
            None => mac.draw_backoff(&mut n.backoff_rng),
        });
    }

    fn on_channel_idle(&mut self, i: usize, t: f64) {
        let mac = self.config.mac;
        let n = &mut self.nodes[i];
        if n.pending_due.is_none() || n.attempt.is_some() || n.transmitting {
            return;
        }
        let slots = *n.backoff.get_or_insert_with(|| mac.draw_backoff(&mut n.backoff_rng));
        let start = t + mac.aifs_s;
        let at = start + slots as f64 * mac.slot_time_s;
        n.attempt = Some(Attempt { time_s: at, countdown_start_s: start });
        n.tx_generation += 1;
        self.queue.push(at, i as u32, EventKind::TxStart { generation: n.tx_generation });
    }

    fn refresh_busy(&mut self, i: usize, t: f64) {
        let n = &mut self.nodes[i];
        let busy = n.transmitting || n.decoding > 0 || n.power_sum_mw >= n.cca_mw;
        if busy == n.busy {
            return;
        }
        n.busy = busy;
        if busy {
            n.tracker.mark_busy(t);
            self.on_channel_busy(i, t);
        } else {
            n.tracker.mark_idle(t);
            self.on_channel_idle(i, t);
        }
    }

    fn rebuild_spatial_index(&mut self) {
        let t = self.now_s;
        self.spatial.clear();
        self.spatial.extend(self.nodes.iter().enumerate().map(|(i, n)| (n.state.position_at(t).0, i as u32)));
        self.spatial.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.spatial_time_s = t;
    }

    fn start_frame(&mut self, i: usize) -> Result<()> {
        let t = self.now_s;
        let cfg = &self.config;
        let (params, tx_state, tx_pos, tx_gain) = {
            let n = &mut self.nodes[i];
            n.attempt = None;
            n.backoff = None;
            n.pending_due = None;
            n.transmitting = true;
            n.counters.frames_sent += 1;
            n.state.beacon_sequence += 1;
            for live in &mut n.live {
                live.interrupted = true;
            }
            (n.params, n.state.dcc_timer.current, n.state.position_at(t), n.state.antenna_gain_dbi)
        };
        let airtime = frame_airtime_s(cfg.payload_bytes, params.phy_rate_mbps, cfg.reception.channel_bandwidth_mhz)?;
        let required_sinr_db = cfg.reception.required_sinr_db(params.phy_rate_mbps)?;
        let end = t + airtime;
        let slot = self.free_frames.pop().unwrap_or_else(|| {
            self.frames.push(None);
            self.frames.len() - 1
        });
        let mut arrivals = self.spare_arrivals.pop().unwrap_or_default();
        arrivals.clear();

        let radius = cfg.relevance_radius_m;
        let slack = self.max_speed_m_s * (t - self.spatial_time_s) + 1e-6;
        let lo = tx_pos.0 - radius - slack;
        let hi = tx_pos.0 + radius + slack;
        let first = self.spatial.partition_point(|&(x, _)| x < lo);
        let eirp_mw = dbm_to_mw(params.tx_power_dbm + tx_gain);
        for k in first..self.spatial.len() {
            let (x_indexed, r) = self.spatial[k];
            if x_indexed > hi {
                break;
            }
            let r = r as usize;
            if r == i {
                continue;
            }
            let rx = &mut self.nodes[r];
            let p = rx.state.position_at(t);
            let d2 = (p.0 - tx_pos.0).powi(2) + (p.1 - tx_pos.1).powi(2);
            if d2 > radius * radius {
                continue;
            }
            let d = d2.sqrt();
            if !(d > 0.0) {
                let rx_id = rx.id();
                return Err(Error::config(format!(
                    "vehicles {} and {rx_id} occupy the same position at t={t}",
                    self.nodes[i].id()
                )));
            }
            let mean_mw = eirp_mw * rx.gain_linear / self.pathloss.linear_from_squared(d2);
            let power_mw = mean_mw * sample_fading_gain(&cfg.radio, &mut rx.fading);
            let mut decided = None;
            let mut decoding = false;
            if power_mw < rx.sensitivity_mw {
                decided = Some(Verdict::BelowSensitivity);
            } else if rx.transmitting {
                decided = Some(Verdict::RxBusyTransmitting);
            } else {
                decoding = true;
            }
            for live in &mut rx.live {
                live.interference_mw += power_mw;
            }
            if decoding {
                rx.live.push(LiveRx {
                    frame: slot,
                    signal_mw: power_mw,
                    interference_mw: rx.power_sum_mw,
                    sensitivity_dbm: rx.params.rx_sensitivity_dbm,
                    interrupted: false,
                });
                rx.decoding += 1;
            }
            rx.power_sum_mw += power_mw;
            rx.on_air += 1;
            arrivals.push(Arrival {
                rx: r,
                power_mw,
                distance_m: d,
                rx_state: rx.state.dcc_timer.current,
                decoding,
                decided,
            });
        }
        self.frames_sent += 1;
        let sequence = self.nodes[i].state.beacon_sequence;
        self.frames[slot] = Some(Frame {
            tx: i,
            start_s: t,
            end_s: end,
            sequence,
            tx_state,
            phy_rate_mbps: params.phy_rate_mbps,
            required_sinr_db,
            arrivals,
        });
        self.queue.push(end, i as u32, EventKind::TxEnd { frame: slot });

        self.refresh_busy(i, t);
        let n_arrivals = self.frames[slot].as_ref().map_or(0, |f| f.arrivals.len());
        for k in 0..n_arrivals {
            let r = self.frames[slot].as_ref().expect("frame present").arrivals[k].rx;
            self.refresh_busy(r, t);
        }
        Ok(())
    }

    fn end_frame(&mut self, slot: usize) -> Result<()> {
        let t = self.now_s;
        let frame = self.frames[slot].take().ok_or_else(|| Error::contract("frame ended twice"))?;
        self.free_frames.push(slot);
        self.nodes[frame.tx].transmitting = false;
        let tx_id = self.nodes[frame.tx].id();
        let tx_observed = self.nodes[frame.tx].observed;
        let bw = self.config.reception.channel_bandwidth_mhz;
        for a in &frame.arrivals {
            let rx = &mut self.nodes[a.rx];
            rx.on_air -= 1;
            rx.power_sum_mw = if rx.on_air == 0 { 0.0 } else { (rx.power_sum_mw - a.power_mw).max(0.0) };
            let verdict = match a.decided {
                Some(v) => v,
                None => {
                    rx.decoding -= 1;
                    let pos = rx
                        .live
                        .iter()
                        .position(|l| l.frame == slot)
                        .ok_or_else(|| Error::contract("reception bookkeeping lost a frame"))?;
                    let live = rx.live.swap_remove(pos);
                    let profile = PhyProfile {
                        phy_rate_mbps: frame.phy_rate_mbps,
                        rx_sensitivity_dbm: live.sensitivity_dbm,
                        required_sinr_db: frame.required_sinr_db,
                        channel_bandwidth_mhz: bw,
                    };
                    reception_verdict_mw(live.signal_mw, live.interference_mw, self.noise_mw, &profile, live.interrupted)
                }
            };
            debug_assert!(a.decoding == a.decided.is_none());
            self.verdict_totals.add(verdict);
            self.receptions_in_scope += 1;
            if frame.start_s >= self.config.discard_first_s {
                self.pdr_curve.add(a.distance_m, verdict);
            }
            if tx_observed && rx.observed {
                self.frame_records.push(FrameRecord {
                    start_s: frame.start_s,
                    end_s: frame.end_s,
                    tx_id,
                    rx_id: rx.id(),
                    sequence: frame.sequence,
                    distance_m: a.distance_m,
                    rx_power_dbm: mw_to_dbm(a.power_mw),
                    verdict,
                    tx_state: frame.tx_state,
                    rx_state: a.rx_state,
                });
            }
        }
        self.refresh_busy(frame.tx, t);
        for a in &frame.arrivals {
            self.refresh_busy(a.rx, t);
        }
        let mut arrivals = frame.arrivals;
        arrivals.clear();
        self.spare_arrivals.push(arrivals);
        Ok(())
    }

    fn cbr_tick(&mut self) -> Result<()> {
        let t = self.now_s;
        let window = self.config.cbr_window_s;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            let cbr = n.tracker.cbr(t, window);
            n.tracker.prune(t - window);
            n.state.cbr_window = CbrWindow { window_length_s: window, busy_time_accumulated_s: cbr * window, window_start_s: t - window };
            let before = n.state.dcc_timer.current;
            if n.pin.state.is_none() {
                dcc_step(&mut n.state.dcc_timer, cbr, t, &self.config.dcc)?;
            }
            let after = n.state.dcc_timer.current;
            if n.observed {
                self.cbr_samples.push(CbrSample { time_s: t, vehicle_id: n.id(), cbr, state: after });
            }
            if after != before {
                self.enter_state(i, after, t);
            }
        }
        self.tick += 1;
        let next = grid_time(self.tick + 1, self.config.cbr_period_s);
        if next <= self.config.duration_s {
            self.queue.push(next, 0, EventKind::CbrTick);
        }
        self.rebuild_spatial_index();
        Ok(())
    }

    /// Apply the parameters of `state` (after pins) from time `t`.
    fn enter_state(&mut self, i: usize, state: DccState, t: f64) {
        let table = self.config.dcc;
        let n = &mut self.nodes[i];
        if n.state.dcc_timer.current != state {
            n.state.dcc_timer = DccTimerState::new(state, t);
        }
        let old_interval = n.params.beacon_interval_s();
        n.params = n.effective_params(&table);
        n.cca_mw = dbm_to_mw(n.params.cca_threshold_dbm);
        n.sensitivity_mw = dbm_to_mw(n.params.rx_sensitivity_dbm);
        let new_interval = n.params.beacon_interval_s();
        if new_interval != old_interval {
            if let (Some(last), Some(_)) = (n.last_beacon_s, n.state.next_beacon_due_s) {
                // Keep the vehicle's own phase so that a fleet changing state
                // on the same tick does not start beaconing in lockstep.
                let periods = ((t - last) / new_interval).ceil().max(1.0);
                self.schedule_beacon(i, last + periods * new_interval);
            }
        }
        self.refresh_busy(i, t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{CustomParams, ScenarioParams};

    fn spec(id: VehicleId, x: f64) -> VehicleSpec {
        VehicleSpec {
            id,
            x_m: x,
            y_m: 0.0,
            vx_m_s: 0.0,
            vy_m_s: 0.0,
            initial_state: DccState::Relaxed,
            pin: Pin::default(),
            antenna_gain_dbi: 4.5,
            silent: false,
            beacon_limit: None,
        }
    }

    fn custom(vehicles: Vec<VehicleSpec>, duration_s: f64) -> SimConfig {
        let observed = vehicles.iter().map(|v| v.id).collect();
        SimConfig {
            duration_s,
            scenario: ScenarioParams::Custom(CustomParams { vehicles, observed, ambient: vec![] }),
            ..SimConfig::default()
        }
    }

    fn restrictive_pair(d: f64) -> SimConfig {
        let mut a = spec(0, 0.0);
        let mut b = spec(1, d);
        a.pin = Pin::state(DccState::Restrictive);
        b.pin = Pin::state(DccState::Restrictive);
        custom(vec![a, b], 10.0)
    }

    #[test]
    fn lone_vehicle_stays_relaxed_on_empty_channel() {
        let out = run(&custom(vec![spec(7, 0.0)], 10.0)).unwrap();
        assert_eq!(out.cbr_samples.len(), 50);
        assert!(out.cbr_samples.iter().all(|s| s.state == DccState::Relaxed));
        // Only its own 384 µs frames at 2 Hz occupy the channel.
        assert!(out.cbr_samples.iter().all(|s| s.cbr < 0.001));
        assert_eq!(out.counters(7).unwrap().frames_sent, 20);
        assert_eq!(out.receptions_in_scope, 0);
    }

    #[test]
    fn pair_is_repeatable() {
        let cfg = restrictive_pair(5.0);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.frames.is_empty());
    }

    #[test]
    fn seeds_change_fading_not_cadence() {
        let cfg = restrictive_pair(20.0);
        let a = run(&cfg).unwrap();
        let b = run(&SimConfig { seed: 99, ..cfg }).unwrap();
        for id in [0, 1] {
            assert_eq!(a.counters(id).unwrap().frames_sent, b.counters(id).unwrap().frames_sent);
        }
        assert_ne!(a.frames, b.frames);
    }

    #[test]
    fn conservation_and_no_self_reception() {
        let vehicles = (0..12).map(|k| spec(k, k as f64 * 7.0)).collect();
        let out = run(&custom(vehicles, 5.0)).unwrap();
        assert_eq!(out.verdict_totals.total(), out.receptions_in_scope);
        assert_eq!(out.receptions_in_scope, out.frames_sent * 11);
        assert!(out.frames.iter().all(|f| f.tx_id != f.rx_id));
        assert!(out.frames.iter().all(|f| f.end_s > f.start_s));
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let mut e = Engine::new(&restrictive_pair(5.0)).unwrap();
        assert_eq!(e.force_state(42, DccState::Active), Err(Error::UnknownVehicle(42)));
        assert_eq!(e.unpin(42), Err(Error::UnknownVehicle(42)));
    }

    #[test]
    fn unpinned_vehicle_resumes_its_state_machine() {
        let mut e = Engine::new(&restrictive_pair(5.0)).unwrap();
        e.run_until(3.0).unwrap();
        e.unpin(0).unwrap();
        e.run_until(10.0).unwrap();
        assert_eq!(e.vehicle_state(0).unwrap().dcc_timer.current, DccState::Active);
        assert_eq!(e.vehicle_state(1).unwrap().dcc_timer.current, DccState::Restrictive);
    }

    #[test]
    fn mobility_is_tracked() {
        let mut v = spec(3, 0.0);
        v.vx_m_s = 20.0;
        let mut e = Engine::new(&custom(vec![v, spec(4, -50.0)], 5.0)).unwrap();
        e.run_until(2.0).unwrap();
        assert_eq!(e.vehicle_state(3).unwrap().position, (40.0, 0.0));
        assert_eq!(e.vehicle_state(4).unwrap().position, (-50.0, 0.0));
    }

    #[test]
    fn zero_duration_is_invalid() {
        let cfg = SimConfig { duration_s: 0.0, ..restrictive_pair(5.0) };
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
    }
}
