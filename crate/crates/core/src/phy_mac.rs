//! 802.11p PHY timing, CSMA parameters, reception verdicts and channel-busy
//! bookkeeping.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_mw, mw_to_dbm};

const SERVICE_BITS: u32 = 16;
const TAIL_BITS: u32 = 6;

/// OFDM timing for one channel width.
#[derive(Debug, Clone, Copy)]
struct OfdmTiming {
    preamble_s: f64,
    signal_s: f64,
    symbol_s: f64,
    /// (rate in Mbps, data bits per symbol, minimum sensitivity in dBm)
    rates: &'static [(f64, u32, f64)],
}

const OFDM_10MHZ: OfdmTiming = OfdmTiming {
    preamble_s: 32e-6,
    signal_s: 8e-6,
    symbol_s: 8e-6,
    rates: &[
        (3.0, 24, -85.0),
        (4.5, 36, -84.0),
        (6.0, 48, -82.0),
        (9.0, 72, -80.0),
        (12.0, 96, -77.0),
        (18.0, 144, -73.0),
        (24.0, 192, -69.0),
        (27.0, 216, -68.0),
    ],
};

const OFDM_20MHZ: OfdmTiming = OfdmTiming {
    preamble_s: 16e-6,
    signal_s: 4e-6,
    symbol_s: 4e-6,
    rates: &[
        (6.0, 24, -82.0),
        (9.0, 36, -81.0),
        (12.0, 48, -79.0),
        (18.0, 72, -77.0),
        (24.0, 96, -74.0),
        (36.0, 144, -70.0),
        (48.0, 192, -66.0),
        (54.0, 216, -65.0),
    ],
};

fn timing(channel_bandwidth_mhz: f64) -> Result<&'static OfdmTiming> {
    match channel_bandwidth_mhz {
        b if b == 10.0 => Ok(&OFDM_10MHZ),
        b if b == 20.0 => Ok(&OFDM_20MHZ),
        b => Err(Error::config(format!("unsupported channel bandwidth {b} MHz"))),
    }
}

fn rate_entry(phy_rate_mbps: f64, channel_bandwidth_mhz: f64) -> Result<(f64, u32, f64)> {
    timing(channel_bandwidth_mhz)?
        .rates
        .iter()
        .copied()
        .find(|(r, _, _)| (r - phy_rate_mbps).abs() < 1e-9)
        .ok_or_else(|| {
            Error::config(format!(
                "unsupported PHY rate {phy_rate_mbps} Mbps for a {channel_bandwidth_mhz} MHz channel"
            ))
        })
}

/// Airtime of one PPDU: preamble, SIGNAL field and the padded data symbols.
pub fn frame_airtime_s(payload_bytes: u32, phy_rate_mbps: f64, channel_bandwidth_mhz: f64) -> Result<f64> {
    if payload_bytes == 0 {
        return Err(Error::config("payload must be at least one byte"));
    }
    let t = timing(channel_bandwidth_mhz)?;
    let (_, bits_per_symbol, _) = rate_entry(phy_rate_mbps, channel_bandwidth_mhz)?;
    let bits = SERVICE_BITS + 8 * payload_bytes + TAIL_BITS;
    let symbols = bits.div_ceil(bits_per_symbol);
    Ok(t.preamble_s + t.signal_s + symbols as f64 * t.symbol_s)
}

/// Minimum receiver input sensitivity for a PHY rate (IEEE 802.11 OFDM
/// receiver performance table).
pub fn sensitivity_for_rate_dbm(phy_rate_mbps: f64, channel_bandwidth_mhz: f64) -> Result<f64> {
    Ok(rate_entry(phy_rate_mbps, channel_bandwidth_mhz)?.2)
}

/// Thermal noise over the channel plus the receiver noise figure.
pub fn noise_floor_dbm(channel_bandwidth_mhz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * (channel_bandwidth_mhz * 1e6).log10() + noise_figure_db
}

/// Threshold reception model: noise and per-modulation SINR requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceptionModel {
    pub channel_bandwidth_mhz: f64,
    pub noise_figure_db: f64,
    pub sinr_bpsk_db: f64,
    pub sinr_qpsk_db: f64,
    pub sinr_16qam_db: f64,
    pub sinr_64qam_db: f64,
}

impl Default for ReceptionModel {
    fn default() -> Self {
        Self {
            channel_bandwidth_mhz: 10.0,
            noise_figure_db: 10.0,
            sinr_bpsk_db: 5.0,
            sinr_qpsk_db: 8.0,
            sinr_16qam_db: 15.0,
            sinr_64qam_db: 22.0,
        }
    }
}

impl ReceptionModel {
    pub fn noise_floor_dbm(&self) -> f64 {
        noise_floor_dbm(self.channel_bandwidth_mhz, self.noise_figure_db)
    }

    /// SINR needed to decode a frame sent at `phy_rate_mbps`.
    pub fn required_sinr_db(&self, phy_rate_mbps: f64) -> Result<f64> {
        let (_, bits_per_symbol, _) = rate_entry(phy_rate_mbps, self.channel_bandwidth_mhz)?;
        // 48 data subcarriers; bits per subcarrier before coding tell the
        // constellation apart (coding rate 1/2 or 3/4).
        let coded = bits_per_symbol as f64 / 48.0;
        Ok(match coded {
            c if c <= 0.75 => self.sinr_bpsk_db,
            c if c <= 1.5 => self.sinr_qpsk_db,
            c if c <= 3.0 => self.sinr_16qam_db,
            _ => self.sinr_64qam_db,
        })
    }

    pub fn profile(&self, phy_rate_mbps: f64, rx_sensitivity_dbm: f64) -> Result<PhyProfile> {
        Ok(PhyProfile {
            phy_rate_mbps,
            rx_sensitivity_dbm,
            required_sinr_db: self.required_sinr_db(phy_rate_mbps)?,
            channel_bandwidth_mhz: self.channel_bandwidth_mhz,
        })
    }

    pub fn validate(&self) -> Result<()> {
        timing(self.channel_bandwidth_mhz)?;
        if !self.noise_figure_db.is_finite() {
            return Err(Error::config("noise_figure_db must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyProfile {
    pub phy_rate_mbps: f64,
    pub rx_sensitivity_dbm: f64,
    pub required_sinr_db: f64,
    pub channel_bandwidth_mhz: f64,
}

/// Fixed-window broadcast CSMA (no ACKs, no retries).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    pub slot_time_s: f64,
    pub aifs_s: f64,
    pub contention_window: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        Self { slot_time_s: 13e-6, aifs_s: 58e-6, contention_window: 15 }
    }
}

impl MacParams {
    /// Backoff slot count, uniform in `[0, contention_window]`.
    pub fn draw_backoff<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.gen_range(0..=self.contention_window)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slot_time_s > 0.0 && self.aifs_s >= 0.0) {
            return Err(Error::config("slot_time_s must be positive and aifs_s non-negative"));
        }
        Ok(())
    }
}

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOnAir {
    pub tx_vehicle_id: VehicleId,
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub tx_power_dbm: f64,
    pub phy_rate_mbps: f64,
    pub payload_bytes: u32,
    pub sequence_number: u64,
}

/// Energy detection against a CCA threshold.
pub fn cca_busy(observed_power_dbm: f64, cca_threshold_dbm: f64) -> bool {
    observed_power_dbm >= cca_threshold_dbm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Delivered,
    BelowSensitivity,
    SinrFailure,
    RxBusyTransmitting,
}

impl Verdict {
    pub const ALL: [Verdict; 4] =
        [Verdict::Delivered, Verdict::BelowSensitivity, Verdict::SinrFailure, Verdict::RxBusyTransmitting];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Delivered => "delivered",
            Verdict::BelowSensitivity => "below_sensitivity",
            Verdict::SinrFailure => "sinr_failure",
            Verdict::RxBusyTransmitting => "rx_busy_transmitting",
        }
    }
}

/// Decide the fate of one frame at one receiver, all powers in milliwatts
/// and already faded. The gates apply in order: sensitivity, own
/// transmission, SINR.
pub fn reception_verdict_mw(
    signal_mw: f64,
    interference_mw: f64,
    noise_mw: f64,
    profile: &PhyProfile,
    receiver_transmitting: bool,
) -> Verdict {
    if signal_mw < dbm_to_mw(profile.rx_sensitivity_dbm) {
        return Verdict::BelowSensitivity;
    }
    if receiver_transmitting {
        return Verdict::RxBusyTransmitting;
    }
    let sinr = signal_mw / (noise_mw + interference_mw);
    if sinr < db_to_linear(profile.required_sinr_db) {
        return Verdict::SinrFailure;
    }
    Verdict::Delivered
}

/// dBm front end of [`reception_verdict_mw`]; `interferers_dbm` are the
/// faded powers of every temporally overlapping frame.
pub fn reception_decision(
    signal_dbm: f64,
    interferers_dbm: &[f64],
    profile: &PhyProfile,
    noise_floor_dbm: f64,
    receiver_transmitting: bool,
) -> Verdict {
    let interference: f64 = interferers_dbm.iter().map(|&p| dbm_to_mw(p)).sum();
    reception_verdict_mw(
        dbm_to_mw(signal_dbm),
        interference,
        dbm_to_mw(noise_floor_dbm),
        profile,
        receiver_transmitting,
    )
}

/// SINR in dB for reporting.
pub fn sinr_db(signal_mw: f64, interference_mw: f64, noise_mw: f64) -> f64 {
    mw_to_dbm(signal_mw) - mw_to_dbm(noise_mw + interference_mw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrWindow {
    pub window_length_s: f64,
    pub busy_time_accumulated_s: f64,
    pub window_start_s: f64,
}

impl CbrWindow {
    /// Window ending at `now_s`.
    pub fn trailing(now_s: f64, window_length_s: f64) -> Self {
        Self { window_length_s, busy_time_accumulated_s: 0.0, window_start_s: now_s - window_length_s }
    }

    pub fn end_s(&self) -> f64 {
        self.window_start_s + self.window_length_s
    }

    pub fn cbr(&self) -> f64 {
        (self.busy_time_accumulated_s / self.window_length_s).clamp(0.0, 1.0)
    }
}

/// Fill `window` from busy intervals (clipped and de-overlapped) and return
/// the resulting channel busy ratio.
pub fn cbr_update<I>(window: &mut CbrWindow, busy_intervals: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (lo, hi) = (window.window_start_s, window.end_s());
    let mut clipped: Vec<(f64, f64)> = busy_intervals
        .into_iter()
        .map(|(s, e)| (s.max(lo), e.min(hi)))
        .filter(|(s, e)| e > s)
        .collect();
    clipped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut busy = 0.0;
    let mut cursor = f64::NEG_INFINITY;
    for (s, e) in clipped {
        let s = s.max(cursor);
        if e > s {
            busy += e - s;
            cursor = e;
        }
    }
    window.busy_time_accumulated_s = busy.min(window.window_length_s);
    window.cbr()
}

/// Exact record of when a vehicle sensed the channel busy.
#[derive(Debug, Clone, Default)]
pub struct BusyTracker {
    closed: VecDeque<(f64, f64)>,
    open_since: Option<f64>,
}

impl BusyTracker {
    pub fn is_busy(&self) -> bool {
        self.open_since.is_some()
    }

    pub fn mark_busy(&mut self, now_s: f64) {
        if self.open_since.is_none() {
            self.open_since = Some(now_s);
        }
    }

    pub fn mark_idle(&mut self, now_s: f64) {
        let Some(start) = self.open_since.take() else { return };
        if now_s <= start {
            return;
        }
        match self.closed.back_mut() {
            Some(last) if last.1 >= start => last.1 = last.1.max(now_s),
            _ => self.closed.push_back((start, now_s)),
        }
    }

    /// Drop intervals that end before `before_s`.
    pub fn prune(&mut self, before_s: f64) {
        while self.closed.front().is_some_and(|&(_, e)| e < before_s) {
            self.closed.pop_front();
        }
    }

    /// Channel busy ratio over the window ending at `now_s`.
    pub fn cbr(&self, now_s: f64, window_length_s: f64) -> f64 {
        let mut window = CbrWindow::trailing(now_s, window_length_s);
        let open = self.open_since.map(|s| (s, now_s));
        cbr_update(&mut window, self.closed.iter().copied().chain(open))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Airtime computed from first principles: 10 MHz OFDM has a 32 µs
    /// preamble, an 8 µs SIGNAL symbol and 8 µs data symbols; 12 Mbps
    /// carries 12 bits/µs · 8 µs = 96 bits per symbol.
    fn airtime_oracle_us(payload: u32, mbps: f64) -> f64 {
        let bits_per_symbol = mbps * 8.0;
        let bits = 16.0 + 8.0 * payload as f64 + 6.0;
        32.0 + 8.0 + (bits / bits_per_symbol).ceil() * 8.0
    }

    #[test]
    fn airtime_matches_oracle() {
        assert_abs_diff_eq!(frame_airtime_s(250, 12.0, 10.0).unwrap(), 216e-6, epsilon = 1e-12);
        for rate in [3.0, 4.5, 6.0, 9.0, 12.0, 18.0, 24.0, 27.0] {
            for payload in [1, 100, 250, 1500] {
                let got = frame_airtime_s(payload, rate, 10.0).unwrap() * 1e6;
                assert_abs_diff_eq!(got, airtime_oracle_us(payload, rate), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn airtime_errors() {
        assert!(matches!(frame_airtime_s(0, 12.0, 10.0), Err(Error::Config(_))));
        assert!(matches!(frame_airtime_s(250, 54.0, 10.0), Err(Error::Config(_))));
        assert!(matches!(frame_airtime_s(250, 12.0, 40.0), Err(Error::Config(_))));
    }

    #[test]
    fn airtime_is_affine_in_payload() {
        let one = frame_airtime_s(250, 12.0, 10.0).unwrap();
        let two = frame_airtime_s(500, 12.0, 10.0).unwrap();
        assert!(two < 2.0 * one);
    }

    #[test]
    fn sensitivity_table() {
        assert_eq!(sensitivity_for_rate_dbm(12.0, 10.0).unwrap(), -77.0);
        assert_eq!(sensitivity_for_rate_dbm(3.0, 10.0).unwrap(), -85.0);
        assert_eq!(sensitivity_for_rate_dbm(6.0, 10.0).unwrap(), -82.0);
    }

    #[test]
    fn default_noise_floor() {
        assert_abs_diff_eq!(ReceptionModel::default().noise_floor_dbm(), -94.0, epsilon = 1e-9);
    }

    #[test]
    fn sinr_thresholds_by_modulation() {
        let m = ReceptionModel::default();
        assert_eq!(m.required_sinr_db(12.0).unwrap(), 15.0);
        assert_eq!(m.required_sinr_db(6.0).unwrap(), 8.0);
        assert_eq!(m.required_sinr_db(3.0).unwrap(), 5.0);
        assert_eq!(m.required_sinr_db(27.0).unwrap(), 22.0);
    }

    #[test]
    fn cca_examples() {
        assert!(cca_busy(-64.9, -65.0));
        assert!(!cca_busy(-90.0, -65.0));
        assert!(cca_busy(-90.0, -95.0));
    }

    fn restrictive_profile() -> PhyProfile {
        ReceptionModel::default().profile(12.0, -77.0).unwrap()
    }

    #[test]
    fn reception_examples() {
        let p = restrictive_profile();
        assert_eq!(reception_decision(-76.0, &[], &p, -94.0, false), Verdict::Delivered);
        assert_eq!(reception_decision(-77.1, &[], &p, -94.0, false), Verdict::BelowSensitivity);
        assert_eq!(reception_decision(-60.0, &[-60.0], &p, -94.0, false), Verdict::SinrFailure);
        let lenient = PhyProfile { required_sinr_db: 0.01, ..p };
        assert_eq!(reception_decision(-60.0, &[-60.0], &lenient, -94.0, false), Verdict::SinrFailure);
        assert_eq!(reception_decision(-60.0, &[], &p, -94.0, true), Verdict::RxBusyTransmitting);
    }

    #[test]
    fn cbr_examples() {
        let mut w = CbrWindow::trailing(1.0, 1.0);
        assert_eq!(cbr_update(&mut w, []), 0.0);
        let mut w = CbrWindow::trailing(1.0, 1.0);
        assert_abs_diff_eq!(cbr_update(&mut w, [(0.5, 0.5 + 216e-6)]), 0.000216, epsilon = 1e-12);
        // Back-to-back frames, some overlapping, spilling past the window.
        let air = 216e-6;
        let frames: Vec<(f64, f64)> =
            (0..7000).map(|i| (-0.2 + i as f64 * air * 0.9, -0.2 + i as f64 * air * 0.9 + air)).collect();
        let mut w = CbrWindow::trailing(1.0, 1.0);
        let cbr = cbr_update(&mut w, frames);
        assert!(cbr <= 1.0 && cbr > 0.99, "{cbr}");
    }

    #[test]
    fn busy_tracker_counts_open_interval() {
        let mut t = BusyTracker::default();
        t.mark_busy(0.2);
        t.mark_idle(0.4);
        t.mark_busy(0.9);
        assert_abs_diff_eq!(t.cbr(1.0, 1.0), 0.3, epsilon = 1e-12);
        t.mark_idle(1.0);
        t.prune(0.5);
        assert_abs_diff_eq!(t.cbr(1.5, 1.0), 0.1, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cbr_in_unit_interval(iv in proptest::collection::vec((-2.0f64..3.0, 0.0f64..0.5), 0..64)) {
                let mut w = CbrWindow::trailing(1.0, 1.0);
                let c = cbr_update(&mut w, iv.into_iter().map(|(s, l)| (s, s + l)));
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!(w.busy_time_accumulated_s <= w.window_length_s);
            }

            #[test]
            fn delivered_implies_gates(sig in -100.0f64..-30.0, intf in -120.0f64..-30.0,
                                       sens in -95.0f64..-70.0, sinr in 0.0f64..25.0, busy: bool) {
                let p = PhyProfile { rx_sensitivity_dbm: sens, required_sinr_db: sinr, ..restrictive_profile() };
                let v = reception_decision(sig, &[intf], &p, -94.0, busy);
                if v == Verdict::Delivered {
                    prop_assert!(sig >= sens);
                    prop_assert!(!busy);
                    prop_assert!(sinr_db(dbm_to_mw(sig), dbm_to_mw(intf), dbm_to_mw(-94.0)) >= sinr - 1e-9);
                }
            }
        }
    }
}
