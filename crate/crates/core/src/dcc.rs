//! The three-state DCC machine.
//!
//! A vehicle moves one step up (Relaxed → Active → Restrictive) when its
//! CBR stays at or above the next threshold for `up_dwell_s`, and one step
//! down when it stays below the current state's threshold for
//! `down_dwell_s`. Hold timers restart whenever the condition lapses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy_mac::sensitivity_for_rate_dbm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DccState {
    Relaxed,
    Active,
    Restrictive,
}

impl DccState {
    pub const ALL: [DccState; 3] = [DccState::Relaxed, DccState::Active, DccState::Restrictive];

    pub fn as_str(self) -> &'static str {
        match self {
            DccState::Relaxed => "relaxed",
            DccState::Active => "active",
            DccState::Restrictive => "restrictive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for DccState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Transmit/receive settings a vehicle uses while in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateParams {
    pub tx_power_dbm: f64,
    pub cca_threshold_dbm: f64,
    pub beacon_rate_hz: f64,
    pub phy_rate_mbps: f64,
    pub rx_sensitivity_dbm: f64,
}

impl StateParams {
    fn with_table_sensitivity(tx_power_dbm: f64, cca_threshold_dbm: f64, beacon_rate_hz: f64, phy_rate_mbps: f64) -> Self {
        Self {
            tx_power_dbm,
            cca_threshold_dbm,
            beacon_rate_hz,
            phy_rate_mbps,
            rx_sensitivity_dbm: sensitivity_for_rate_dbm(phy_rate_mbps, 10.0)
                .expect("default rates are in the 10 MHz table"),
        }
    }

    pub fn beacon_interval_s(&self) -> f64 {
        1.0 / self.beacon_rate_hz
    }
}

/// Per-state parameters and the thresholds and dwell times of the state
/// machine. Deserializes field by field over the defaults, so a single
/// key of one row can be overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableOverrides")]
pub struct DccParamTable {
    pub relaxed: StateParams,
    pub active: StateParams,
    pub restrictive: StateParams,
    pub min_cbr_threshold: f64,
    pub max_cbr_threshold: f64,
    pub up_dwell_s: f64,
    pub down_dwell_s: f64,
}

impl Default for DccParamTable {
    fn default() -> Self {
        Self {
            relaxed: StateParams::with_table_sensitivity(33.0, -95.0, 2.0, 6.0),
            active: StateParams::with_table_sensitivity(23.0, -85.0, 2.0, 6.0),
            restrictive: StateParams {
                tx_power_dbm: -10.0,
                cca_threshold_dbm: -65.0,
                beacon_rate_hz: 1.0,
                phy_rate_mbps: 12.0,
                rx_sensitivity_dbm: -77.0,
            },
            min_cbr_threshold: 0.15,
            max_cbr_threshold: 0.40,
            up_dwell_s: 1.0,
            down_dwell_s: 5.0,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RowOverrides {
    tx_power_dbm: Option<f64>,
    cca_threshold_dbm: Option<f64>,
    beacon_rate_hz: Option<f64>,
    phy_rate_mbps: Option<f64>,
    rx_sensitivity_dbm: Option<f64>,
}

impl RowOverrides {
    fn apply(self, row: &mut StateParams) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut row.tx_power_dbm, self.tx_power_dbm);
        set(&mut row.cca_threshold_dbm, self.cca_threshold_dbm);
        set(&mut row.beacon_rate_hz, self.beacon_rate_hz);
        set(&mut row.phy_rate_mbps, self.phy_rate_mbps);
        set(&mut row.rx_sensitivity_dbm, self.rx_sensitivity_dbm);
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TableOverrides {
    relaxed: RowOverrides,
    active: RowOverrides,
    restrictive: RowOverrides,
    min_cbr_threshold: Option<f64>,
    max_cbr_threshold: Option<f64>,
    up_dwell_s: Option<f64>,
    down_dwell_s: Option<f64>,
}

impl From<TableOverrides> for DccParamTable {
    fn from(o: TableOverrides) -> Self {
        let mut t = DccParamTable::default();
        o.relaxed.apply(&mut t.relaxed);
        o.active.apply(&mut t.active);
        o.restrictive.apply(&mut t.restrictive);
        t.min_cbr_threshold = o.min_cbr_threshold.unwrap_or(t.min_cbr_threshold);
        t.max_cbr_threshold = o.max_cbr_threshold.unwrap_or(t.max_cbr_threshold);
        t.up_dwell_s = o.up_dwell_s.unwrap_or(t.up_dwell_s);
        t.down_dwell_s = o.down_dwell_s.unwrap_or(t.down_dwell_s);
        t
    }
}

pub const MIN_TX_POWER_DBM: f64 = -10.0;
pub const MAX_TX_POWER_DBM: f64 = 33.0;

impl DccParamTable {
    pub fn params(&self, state: DccState) -> &StateParams {
        match state {
            DccState::Relaxed => &self.relaxed,
            DccState::Active => &self.active,
            DccState::Restrictive => &self.restrictive,
        }
    }

    pub fn params_mut(&mut self, state: DccState) -> &mut StateParams {
        match state {
            DccState::Relaxed => &mut self.relaxed,
            DccState::Active => &mut self.active,
            DccState::Restrictive => &mut self.restrictive,
        }
    }

    pub fn validate(&self, channel_bandwidth_mhz: f64) -> Result<()> {
        let (lo, hi) = (self.min_cbr_threshold, self.max_cbr_threshold);
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config(format!("need 0 < min_cbr_threshold < max_cbr_threshold < 1, got {lo} and {hi}")));
        }
        if !(self.up_dwell_s > 0.0 && self.down_dwell_s > 0.0) {
            return Err(Error::config("dwell times must be positive"));
        }
        if self.down_dwell_s < self.up_dwell_s {
            return Err(Error::config("down_dwell_s must be at least up_dwell_s"));
        }
        for state in DccState::ALL {
            let p = self.params(state);
            if !(p.beacon_rate_hz > 0.0 && p.beacon_rate_hz.is_finite()) {
                return Err(Error::config(format!("{state}: beacon_rate_hz must be positive")));
            }
            sensitivity_for_rate_dbm(p.phy_rate_mbps, channel_bandwidth_mhz)
                .map_err(|e| Error::config(format!("{state}: {e}")))?;
            if !(p.tx_power_dbm.is_finite() && p.cca_threshold_dbm.is_finite() && p.rx_sensitivity_dbm.is_finite()) {
                return Err(Error::config(format!("{state}: power settings must be finite")));
            }
        }
        Ok(())
    }
}

pub fn params_for(state: DccState, table: &DccParamTable) -> StateParams {
    *table.params(state)
}

/// Copy of `table` with a different Restrictive transmit power.
pub fn override_restrictive_tx(table: &DccParamTable, new_tx_dbm: f64) -> Result<DccParamTable> {
    if !(MIN_TX_POWER_DBM..=MAX_TX_POWER_DBM).contains(&new_tx_dbm) {
        return Err(Error::config(format!(
            "Restrictive Tx power {new_tx_dbm} dBm outside [{MIN_TX_POWER_DBM}, {MAX_TX_POWER_DBM}] dBm"
        )));
    }
    let mut out = *table;
    out.restrictive.tx_power_dbm = new_tx_dbm;
    Ok(out)
}

/// Per-vehicle state-machine memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DccTimerState {
    pub current: DccState,
    /// Sample time since which the upward condition has held.
    pub up_since_s: Option<f64>,
    /// Sample time since which the downward condition has held.
    pub down_since_s: Option<f64>,
    pub state_entry_time_s: f64,
}

impl DccTimerState {
    pub fn new(initial: DccState, now_s: f64) -> Self {
        Self { current: initial, up_since_s: None, down_since_s: None, state_entry_time_s: now_s }
    }

    fn refresh_holds(&mut self, cbr: f64, now_s: f64, table: &DccParamTable) {
        let (up, down) = match self.current {
            DccState::Relaxed => (cbr >= table.min_cbr_threshold, false),
            DccState::Active => (cbr >= table.max_cbr_threshold, cbr < table.min_cbr_threshold),
            DccState::Restrictive => (false, cbr < table.max_cbr_threshold),
        };
        self.up_since_s = if up { self.up_since_s.or(Some(now_s)) } else { None };
        self.down_since_s = if down { self.down_since_s.or(Some(now_s)) } else { None };
    }
}

// Sample times are sums of a float period; absorb the rounding.
const DWELL_EPS_S: f64 = 1e-9;

/// Feed one CBR sample taken at `now_s` and return the (possibly new)
/// state with its parameters.
///
/// After a transition the new state's conditions are evaluated on the same
/// sample, so a hold that already applies starts counting immediately; at
/// most one transition happens per sample.
pub fn dcc_step(
    timer: &mut DccTimerState,
    cbr_sample: f64,
    now_s: f64,
    table: &DccParamTable,
) -> Result<(DccState, StateParams)> {
    if !(0.0..=1.0).contains(&cbr_sample) {
        return Err(Error::contract(format!("CBR sample {cbr_sample} outside [0, 1]")));
    }
    timer.refresh_holds(cbr_sample, now_s, table);
    let held = |since: Option<f64>, dwell: f64| since.is_some_and(|s| now_s - s >= dwell - DWELL_EPS_S);
    let next = match timer.current {
        DccState::Relaxed if held(timer.up_since_s, table.up_dwell_s) => Some(DccState::Active),
        DccState::Active if held(timer.up_since_s, table.up_dwell_s) => Some(DccState::Restrictive),
        DccState::Active if held(timer.down_since_s, table.down_dwell_s) => Some(DccState::Relaxed),
        DccState::Restrictive if held(timer.down_since_s, table.down_dwell_s) => Some(DccState::Active),
        _ => None,
    };
    if let Some(state) = next {
        timer.current = state;
        timer.state_entry_time_s = now_s;
        timer.up_since_s = None;
        timer.down_since_s = None;
        timer.refresh_holds(cbr_sample, now_s, table);
    }
    Ok((timer.current, params_for(timer.current, table)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERIOD: f64 = 0.2;

    /// Drive the machine with `(cbr, count)` segments at the 200 ms cadence,
    /// returning `(time, state)` after every sample.
    fn drive(start: DccState, segments: &[(f64, usize)]) -> Vec<(f64, DccState)> {
        let table = DccParamTable::default();
        let mut timer = DccTimerState::new(start, 0.0);
        let mut k = 0usize;
        let mut out = Vec::new();
        for &(cbr, n) in segments {
            for _ in 0..n {
                k += 1;
                let now = k as f64 * PERIOD;
                let (s, _) = dcc_step(&mut timer, cbr, now, &table).unwrap();
                out.push((now, s));
            }
        }
        out
    }

    fn first_time_in(trace: &[(f64, DccState)], state: DccState) -> Option<f64> {
        trace.iter().find(|(_, s)| *s == state).map(|(t, _)| *t)
    }

    #[test]
    fn relaxed_to_active_after_one_second() {
        // Samples at 0.2 .. 1.0 cover 0.8 s of hold, 1.2 completes 1.0 s.
        let trace = drive(DccState::Relaxed, &[(0.20, 5)]);
        assert!(trace.iter().all(|(_, s)| *s == DccState::Relaxed));
        let trace = drive(DccState::Relaxed, &[(0.20, 6)]);
        assert_eq!(trace.last().unwrap().1, DccState::Active);
    }

    #[test]
    fn restrictive_needs_five_seconds_below_max() {
        // 25 samples span 4.8 s of hold, the 26th reaches 5.0 s.
        let trace = drive(DccState::Restrictive, &[(0.10, 25)]);
        assert!(trace.iter().all(|(_, s)| *s == DccState::Restrictive));
        let trace = drive(DccState::Restrictive, &[(0.10, 26)]);
        assert_eq!(trace.last().unwrap().1, DccState::Active);
    }

    #[test]
    fn alternating_cbr_never_holds() {
        let mut segs = Vec::new();
        for _ in 0..500 {
            segs.push((0.45, 1));
            segs.push((0.35, 1));
        }
        let trace = drive(DccState::Active, &segs);
        assert!(trace.iter().all(|(_, s)| *s == DccState::Active));
    }

    #[test]
    fn no_direct_jump_between_extremes() {
        let trace = drive(DccState::Relaxed, &[(0.9, 100)]);
        let active = first_time_in(&trace, DccState::Active).unwrap();
        let restrictive = first_time_in(&trace, DccState::Restrictive).unwrap();
        assert!(active < restrictive);
    }

    #[test]
    fn constant_cbr_convergence_bounds() {
        for start in DccState::ALL {
            let trace = drive(start, &[(0.10, 60)]);
            let t = first_time_in(&trace, DccState::Relaxed).unwrap();
            assert!(t - PERIOD <= 10.0 + 1e-9, "{start}: relaxed at {t}");

            let trace = drive(start, &[(0.50, 20)]);
            let t = first_time_in(&trace, DccState::Restrictive).unwrap();
            assert!(t - PERIOD <= 2.0 + 1e-9, "{start}: restrictive at {t}");
        }
    }

    #[test]
    fn out_of_range_cbr_is_rejected() {
        let table = DccParamTable::default();
        let mut timer = DccTimerState::new(DccState::Relaxed, 0.0);
        assert!(matches!(dcc_step(&mut timer, 1.5, 0.2, &table), Err(Error::Contract(_))));
        assert!(matches!(dcc_step(&mut timer, -0.1, 0.2, &table), Err(Error::Contract(_))));
    }

    #[test]
    fn default_parameter_rows() {
        let t = DccParamTable::default();
        let r = params_for(DccState::Restrictive, &t);
        assert_eq!((r.tx_power_dbm, r.cca_threshold_dbm, r.beacon_rate_hz, r.phy_rate_mbps, r.rx_sensitivity_dbm),
                   (-10.0, -65.0, 1.0, 12.0, -77.0));
        let a = params_for(DccState::Active, &t);
        assert_eq!(a.tx_power_dbm, 23.0);
        assert_eq!(a.tx_power_dbm - r.tx_power_dbm, 33.0);
        assert_eq!(r.cca_threshold_dbm - a.cca_threshold_dbm, 20.0);
        t.validate(10.0).unwrap();
    }

    #[test]
    fn restrictive_tx_override() {
        let t = DccParamTable::default();
        let o = override_restrictive_tx(&t, 16.0).unwrap();
        assert_eq!(o.restrictive.tx_power_dbm, 16.0);
        assert_eq!(o.active, t.active);
        assert_eq!(o.relaxed, t.relaxed);
        assert_eq!(o.restrictive.cca_threshold_dbm, t.restrictive.cca_threshold_dbm);
        assert_eq!(override_restrictive_tx(&t, -10.0).unwrap(), t);
        for p in [0.0, 10.0] {
            assert_eq!(override_restrictive_tx(&t, p).unwrap().restrictive.tx_power_dbm, p);
        }
        assert!(matches!(override_restrictive_tx(&t, 40.0), Err(Error::Config(_))));
        assert!(matches!(override_restrictive_tx(&t, -11.0), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_tables() {
        let mut t = DccParamTable::default();
        t.min_cbr_threshold = 0.5;
        assert!(t.validate(10.0).is_err());
        let mut t = DccParamTable::default();
        t.down_dwell_s = 0.5;
        assert!(t.validate(10.0).is_err());
        let mut t = DccParamTable::default();
        t.active.phy_rate_mbps = 54.0;
        assert!(t.validate(10.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Piecewise-constant CBR traces of up to 120 s.
        fn trace_strategy() -> impl Strategy<Value = Vec<(f64, usize)>> {
            proptest::collection::vec((0.0f64..=1.0, 1usize..40), 1..40)
        }

        proptest! {
            #[test]
            fn dwell_invariants(start in prop::sample::select(DccState::ALL.to_vec()), segs in trace_strategy()) {
                let table = DccParamTable::default();
                let mut timer = DccTimerState::new(start, 0.0);
                let mut samples = Vec::new();
                let mut prev = start;
                let mut entered_restrictive: Option<f64> = if start == DccState::Restrictive { Some(0.0) } else { None };
                let mut k = 0usize;
                for (cbr, n) in segs {
                    for _ in 0..n {
                        k += 1;
                        let now = k as f64 * PERIOD;
                        samples.push((now, cbr));
                        let (s, _) = dcc_step(&mut timer, cbr, now, &table).unwrap();
                        if s != prev {
                            // One step at a time.
                            prop_assert!(!matches!((prev, s),
                                (DccState::Relaxed, DccState::Restrictive) | (DccState::Restrictive, DccState::Relaxed)));
                            if prev == DccState::Restrictive {
                                let entered = entered_restrictive.unwrap();
                                prop_assert!(now - entered >= table.down_dwell_s - 1e-9);
                            }
                            if s == DccState::Restrictive {
                                entered_restrictive = Some(now);
                            }
                            let up = matches!((prev, s),
                                (DccState::Relaxed, DccState::Active) | (DccState::Active, DccState::Restrictive));
                            let threshold = if s == DccState::Active { table.min_cbr_threshold } else { table.max_cbr_threshold };
                            // Every sample within the last dwell must satisfy the condition.
                            let dwell = if up { table.up_dwell_s } else { table.down_dwell_s };
                            let window: Vec<f64> = samples.iter()
                                .filter(|(t, _)| *t >= now - dwell - 1e-9)
                                .map(|(_, c)| *c).collect();
                            prop_assert!(window.len() as f64 >= dwell / PERIOD);
                            for c in window {
                                if up {
                                    prop_assert!(c >= threshold);
                                } else {
                                    let below = if prev == DccState::Restrictive { table.max_cbr_threshold } else { table.min_cbr_threshold };
                                    prop_assert!(c < below);
                                }
                            }
                            prev = s;
                        }
                    }
                }
            }

            #[test]
            fn replayable(start in prop::sample::select(DccState::ALL.to_vec()), segs in trace_strategy()) {
                let a = drive(start, &segs);
                let b = drive(start, &segs);
                prop_assert_eq!(a, b);
            }
        }
    }
}
