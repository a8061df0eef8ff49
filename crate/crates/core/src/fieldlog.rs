//! Field beacon logs: parsing, RSSI conversion, GPS distances and
//! Table-style PDR tabulation.
//!
//! Log files are CSV with a header row:
//!
//! * transmit side: `time_s,seq,lat_deg,lon_deg`
//! * receive side: `time_s,seq,rssi,lat_deg,lon_deg`

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PdrCurve;

pub const RSSI_MIN: i64 = 0;
pub const RSSI_MAX: i64 = 60;
/// Added to the device RSSI to obtain dBm.
pub const RSSI_OFFSET_DBM: f64 = -95.0;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxLogRecord {
    pub time_s: f64,
    #[serde(rename = "seq")]
    pub sequence_number: u64,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxLogRecord {
    pub time_s: f64,
    #[serde(rename = "seq")]
    pub sequence_number: u64,
    pub rssi: i64,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

pub fn rssi_to_dbm(rssi: i64) -> Result<f64> {
    if !(RSSI_MIN..=RSSI_MAX).contains(&rssi) {
        return Err(Error::Log(format!("rssi {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")));
    }
    Ok(rssi as f64 + RSSI_OFFSET_DBM)
}

/// Inverse of [`rssi_to_dbm`] on the integer grid.
pub fn dbm_to_rssi(dbm: f64) -> Result<i64> {
    let rssi = (dbm - RSSI_OFFSET_DBM).round();
    if !(RSSI_MIN as f64..=RSSI_MAX as f64).contains(&rssi) {
        return Err(Error::Log(format!("{dbm} dBm outside the device range")));
    }
    Ok(rssi as i64)
}

fn valid_coordinates(lat: f64, lon: f64) -> bool {
    lat.abs() <= 90.0 && lon.abs() <= 180.0
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> Result<f64> {
    if !valid_coordinates(lat1, lon1) || !valid_coordinates(lat2, lon2) {
        return Err(Error::Log(format!("invalid coordinates ({lat1}, {lon1}) / ({lat2}, {lon2})")));
    }
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    /// Rows that did not parse against the schema.
    pub malformed: u64,
    pub rssi_out_of_range: u64,
    pub invalid_coordinates: u64,
    pub duplicate_sequence: u64,
    /// Received sequence numbers that were never transmitted.
    pub unmatched_rx: u64,
    /// Transmissions for which no receiver position was known.
    pub unlocated_tx: u64,
}

impl RejectCounts {
    pub fn total(&self) -> u64 {
        self.malformed
            + self.rssi_out_of_range
            + self.invalid_coordinates
            + self.duplicate_sequence
            + self.unmatched_rx
            + self.unlocated_tx
    }

    fn merge(&mut self, o: &RejectCounts) {
        self.malformed += o.malformed;
        self.rssi_out_of_range += o.rssi_out_of_range;
        self.invalid_coordinates += o.invalid_coordinates;
        self.duplicate_sequence += o.duplicate_sequence;
        self.unmatched_rx += o.unmatched_rx;
        self.unlocated_tx += o.unlocated_tx;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog<T> {
    pub records: Vec<T>,
    pub rejects: RejectCounts,
}

const TX_HEADER: [&str; 4] = ["time_s", "seq", "lat_deg", "lon_deg"];
const RX_HEADER: [&str; 5] = ["time_s", "seq", "rssi", "lat_deg", "lon_deg"];

fn read_log<T, R>(reader: R, header: &[&str]) -> Result<ParsedLog<T>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Log(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::Log(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut out = ParsedLog { records: Vec::new(), rejects: RejectCounts::default() };
    for row in rdr.deserialize::<T>() {
        match row {
            Ok(r) => out.records.push(r),
            Err(_) => out.rejects.malformed += 1,
        }
    }
    Ok(out)
}

pub fn read_tx_log<R: Read>(reader: R) -> Result<ParsedLog<TxLogRecord>> {
    read_log(reader, &TX_HEADER)
}

pub fn read_rx_log<R: Read>(reader: R) -> Result<ParsedLog<RxLogRecord>> {
    read_log(reader, &RX_HEADER)
}

pub fn write_tx_log<W: std::io::Write>(writer: W, records: &[TxLogRecord]) -> Result<()> {
    write_log(writer, records)
}

pub fn write_rx_log<W: std::io::Write>(writer: W, records: &[RxLogRecord]) -> Result<()> {
    write_log(writer, records)
}

fn write_log<W: std::io::Write, T: Serialize>(writer: W, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| Error::Log(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Result of joining a transmit log with a receive log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTable {
    /// Sent and received counts per distance bin.
    pub curve: PdrCurve,
    /// `(distance_m, rx_power_dbm)` for every matched reception.
    pub scatter: Vec<(f64, f64)>,
    pub sent: u64,
    pub received: u64,
    pub rejects: RejectCounts,
}

/// Join on sequence number and tabulate delivery by distance.
///
/// A received beacon's distance is measured from the position the
/// transmitter stamped into the beacon to the receiver's own position.
/// Lost beacons are placed using the receiver's position at the nearest
/// logged reception in time, or `rx_fallback` when the receive log holds
/// none. Output does not depend on record order.
pub fn match_and_tabulate(
    tx: &[TxLogRecord],
    rx: &[RxLogRecord],
    bin_width_m: f64,
    rx_fallback: Option<(f64, f64)>,
) -> Result<LogTable> {
    let mut rejects = RejectCounts::default();
    let mut tx_sorted: Vec<TxLogRecord> = tx
        .iter()
        .copied()
        .filter(|r| {
            let ok = valid_coordinates(r.lat_deg, r.lon_deg) && r.time_s.is_finite();
            rejects.invalid_coordinates += u64::from(!ok);
            ok
        })
        .collect();
    tx_sorted.sort_by(|a, b| {
        a.sequence_number.cmp(&b.sequence_number).then(a.time_s.total_cmp(&b.time_s)).then(a.lat_deg.total_cmp(&b.lat_deg)).then(a.lon_deg.total_cmp(&b.lon_deg))
    });
    let before = tx_sorted.len();
    tx_sorted.dedup_by_key(|r| r.sequence_number);
    rejects.duplicate_sequence += (before - tx_sorted.len()) as u64;
    if tx_sorted.is_empty() {
        return Err(Error::Log("transmit log has no usable records; PDR is undefined".into()));
    }

    let mut rx_valid: Vec<RxLogRecord> = Vec::with_capacity(rx.len());
    for r in rx {
        if !(RSSI_MIN..=RSSI_MAX).contains(&r.rssi) {
            rejects.rssi_out_of_range += 1;
        } else if !valid_coordinates(r.lat_deg, r.lon_deg) || !r.time_s.is_finite() {
            rejects.invalid_coordinates += 1;
        } else {
            rx_valid.push(*r);
        }
    }
    rx_valid.sort_by(|a, b| {
        a.sequence_number.cmp(&b.sequence_number).then(a.time_s.total_cmp(&b.time_s)).then(a.rssi.cmp(&b.rssi))
    });
    let before = rx_valid.len();
    rx_valid.dedup_by_key(|r| r.sequence_number);
    rejects.duplicate_sequence += (before - rx_valid.len()) as u64;

    let tx_by_seq: HashMap<u64, &TxLogRecord> = tx_sorted.iter().map(|r| (r.sequence_number, r)).collect();
    let mut matched: HashMap<u64, &RxLogRecord> = HashMap::new();
    for r in &rx_valid {
        if tx_by_seq.contains_key(&r.sequence_number) {
            matched.insert(r.sequence_number, r);
        } else {
            rejects.unmatched_rx += 1;
        }
    }

    let mut track: Vec<(f64, f64, f64)> = rx_valid.iter().map(|r| (r.time_s, r.lat_deg, r.lon_deg)).collect();
    track.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let rx_position_at = |t: f64| -> Option<(f64, f64)> {
        if track.is_empty() {
            return rx_fallback;
        }
        let k = track.partition_point(|p| p.0 < t);
        let best = match (k.checked_sub(1), track.get(k)) {
            (Some(a), Some(b)) => {
                if t - track[a].0 <= b.0 - t {
                    track[a]
                } else {
                    *b
                }
            }
            (Some(a), None) => track[a],
            (None, Some(b)) => *b,
            (None, None) => unreachable!("track is non-empty"),
        };
        Some((best.1, best.2))
    };

    let mut curve = PdrCurve::new(bin_width_m)?;
    let mut scatter = Vec::with_capacity(matched.len());
    let (mut sent, mut received) = (0u64, 0u64);
    for t in &tx_sorted {
        let reception = matched.get(&t.sequence_number);
        let rx_pos = match reception {
            Some(r) => Some((r.lat_deg, r.lon_deg)),
            None => rx_position_at(t.time_s),
        };
        let Some((lat, lon)) = rx_pos else {
            rejects.unlocated_tx += 1;
            continue;
        };
        let d = haversine_m(t.lat_deg, t.lon_deg, lat, lon)?;
        sent += 1;
        match reception {
            Some(r) => {
                received += 1;
                curve.add_counts_at(d, 1, 1);
                scatter.push((d, rssi_to_dbm(r.rssi)?));
            }
            None => curve.add_counts_at(d, 1, 0),
        }
    }
    Ok(LogTable { curve, scatter, sent, received, rejects })
}

impl LogTable {
    pub fn add_parse_rejects(&mut self, parsed: &RejectCounts) {
        self.rejects.merge(parsed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy_mac::Verdict;

    #[test]
    fn rssi_mapping() {
        assert_eq!(rssi_to_dbm(0).unwrap(), -95.0);
        assert_eq!(rssi_to_dbm(60).unwrap(), -35.0);
        assert_eq!(rssi_to_dbm(18).unwrap(), -77.0);
        assert!(rssi_to_dbm(-1).is_err());
        assert!(rssi_to_dbm(61).is_err());
        for r in 0..=60 {
            assert_eq!(dbm_to_rssi(rssi_to_dbm(r).unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine_m(37.5, 127.0, 37.5, 127.0).unwrap(), 0.0);
        let one_degree = haversine_m(0.0, 0.0, 1.0, 0.0).unwrap();
        assert!((one_degree - 111_195.0).abs() < 1.0, "{one_degree}");
        let (a, b) = ((37.51, 127.02), (37.53, 127.09));
        assert_eq!(haversine_m(a.0, a.1, b.0, b.1).unwrap(), haversine_m(b.0, b.1, a.0, a.1).unwrap());
        assert!(haversine_m(91.0, 0.0, 0.0, 0.0).is_err());
        assert!(haversine_m(0.0, 181.0, 0.0, 0.0).is_err());
    }

    const LAT0: f64 = 37.0;
    const M_PER_DEG: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

    fn tx_at(seq: u64, north_m: f64) -> TxLogRecord {
        TxLogRecord { time_s: seq as f64, sequence_number: seq, lat_deg: LAT0 + north_m / M_PER_DEG, lon_deg: 127.0 }
    }

    fn rx_of(seq: u64, rssi: i64) -> RxLogRecord {
        RxLogRecord { time_s: seq as f64 + 0.001, sequence_number: seq, rssi, lat_deg: LAT0, lon_deg: 127.0 }
    }

    #[test]
    fn tabulates_by_distance() {
        let tx: Vec<TxLogRecord> = (0..100).map(|s| tx_at(s, if s < 50 { 2.51 } else { 5.01 })).collect();
        let rx: Vec<RxLogRecord> = (0..100).filter(|s| s % 2 == 0 || *s >= 90).map(|s| rx_of(s, 20)).collect();
        let table = match_and_tabulate(&tx, &rx, 2.5, None).unwrap();
        assert_eq!(table.sent, 100);
        let near = table.curve.bin_at(3.0);
        let far = table.curve.bin_at(6.0);
        assert_eq!((near.sent(), near.delivered()), (50, 25));
        assert_eq!((far.sent(), far.delivered()), (50, 30));
        assert_eq!(table.scatter.len(), 55);
        assert!(table.scatter.iter().all(|&(_, p)| p == -75.0));
    }

    #[test]
    fn unmatched_rx_is_an_anomaly() {
        let tx: Vec<TxLogRecord> = (0..10).map(|s| tx_at(s, 2.51)).collect();
        let rx = vec![rx_of(3, 20), rx_of(77, 20), rx_of(4, 99)];
        let table = match_and_tabulate(&tx, &rx, 2.5, None).unwrap();
        assert_eq!(table.received, 1);
        assert_eq!(table.rejects.unmatched_rx, 1);
        assert_eq!(table.rejects.rssi_out_of_range, 1);
    }

    #[test]
    fn empty_rx_gives_zero_pdr() {
        let tx: Vec<TxLogRecord> = (0..10).map(|s| tx_at(s, 2.51)).collect();
        let table = match_and_tabulate(&tx, &[], 2.5, Some((LAT0, 127.0))).unwrap();
        for b in table.curve.bins().iter().filter(|b| b.sent() > 0) {
            assert_eq!(b.pdr(), Some(0.0));
            assert_eq!(b.verdicts.get(Verdict::Delivered), 0);
        }
        assert_eq!(table.sent, 10);
        let unplaced = match_and_tabulate(&tx, &[], 2.5, None).unwrap();
        assert_eq!(unplaced.rejects.unlocated_tx, 10);
    }

    #[test]
    fn empty_tx_is_an_error() {
        assert!(matches!(match_and_tabulate(&[], &[rx_of(1, 20)], 2.5, None), Err(Error::Log(_))));
    }

    #[test]
    fn parses_and_rejects_rows() {
        let tx = "time_s,seq,lat_deg,lon_deg\n0.0,1,37.0,127.0\nbad,2,37,127\n1.0,3,37.0,127.0\n";
        let parsed = read_tx_log(tx.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.rejects.malformed, 1);
        let rx = "time_s,seq,rssi,lat_deg,lon_deg\n0.1,1,18,37.0,127.0\n0.2,3,x,37.0,127.0\n";
        let parsed = read_rx_log(rx.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejects.malformed, 1);
        assert!(read_tx_log("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read() {
        let tx: Vec<TxLogRecord> = (0..5).map(|s| tx_at(s, 3.0)).collect();
        let mut buf = Vec::new();
        write_tx_log(&mut buf, &tx).unwrap();
        assert_eq!(read_tx_log(&buf[..]).unwrap().records, tx);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        proptest! {
            #[test]
            fn order_independent(seed in any::<u64>(), n in 1usize..60) {
                let tx: Vec<TxLogRecord> = (0..n as u64).map(|s| tx_at(s, 1.0 + (s % 7) as f64 * 1.3)).collect();
                let rx: Vec<RxLogRecord> = (0..n as u64).filter(|s| s % 3 != 0).map(|s| rx_of(s, (s % 50) as i64)).collect();
                let base = match_and_tabulate(&tx, &rx, 2.5, None);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let (mut tx2, mut rx2) = (tx.clone(), rx.clone());
                tx2.shuffle(&mut rng);
                rx2.shuffle(&mut rng);
                let shuffled = match_and_tabulate(&tx2, &rx2, 2.5, None);
                match (base, shuffled) {
                    (Ok(mut a), Ok(mut b)) => {
                        a.scatter.sort_by(|x, y| x.partial_cmp(y).unwrap());
                        b.scatter.sort_by(|x, y| x.partial_cmp(y).unwrap());
                        prop_assert_eq!(a, b);
                    }
                    (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
                }
            }

            #[test]
            fn received_never_exceeds_sent(n in 1u64..80, keep in 0u64..5) {
                let tx: Vec<TxLogRecord> = (0..n).map(|s| tx_at(s, (s % 11) as f64 + 0.5)).collect();
                let rx: Vec<RxLogRecord> = (0..n + 5).filter(|s| s % 5 >= keep).map(|s| rx_of(s, 30)).collect();
                let t = match_and_tabulate(&tx, &rx, 2.5, None).unwrap();
                for b in t.curve.bins() {
                    prop_assert!(b.delivered() <= b.sent());
                    if let Some(p) = b.pdr() { prop_assert!((0.0..=1.0).contains(&p)); }
                }
            }
        }
    }
}
