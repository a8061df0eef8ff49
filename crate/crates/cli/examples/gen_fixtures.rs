//! Regenerates the field-log fixtures under `crates/cli/fixtures`.
//!
//! Parking lot: a fixed receiver and a transmitter parked 2.5, 5, 7.5 and
//! 10 m away, 5000 beacons per distance, with the delivered counts of the
//! measured PDR table. Highway: two vehicles driving in line at 72 km/h
//! whose gap sweeps from half to twice the crossover distance; received
//! power follows a power law that meets -77 dBm at the crossover, scaled
//! by unit-mean Rician fading and quantized to integer RSSI.
//!
//! Run with `cargo run -p dccsim-cli --example gen_fixtures`.

use std::fs::File;
use std::path::Path;

use dccsim_core::fieldlog::{dbm_to_rssi, write_rx_log, write_tx_log, RxLogRecord, TxLogRecord};
use dccsim_core::propagation::{rx_power_dbm, sample_fading_gain, LinkBudget, RadioEnvironment};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EARTH_RADIUS_M: f64 = 6_371_000.0;
const ORIGIN: (f64, f64) = (36.3725, 127.3620);
const RSSI_FLOOR_DBM: f64 = -95.0;

fn north_of(origin: (f64, f64), metres: f64) -> (f64, f64) {
    (origin.0 + (metres / EARTH_RADIUS_M).to_degrees(), origin.1)
}

fn east_of(origin: (f64, f64), metres: f64) -> (f64, f64) {
    let lon = metres / (EARTH_RADIUS_M * origin.0.to_radians().cos());
    (origin.0, origin.1 + lon.to_degrees())
}

fn rssi(dbm: f64) -> i64 {
    dbm_to_rssi(dbm.round().clamp(-95.0, -35.0)).expect("clamped into the device range")
}

fn write(dir: &Path, name: &str, tx: &[TxLogRecord], rx: &[RxLogRecord]) {
    write_tx_log(File::create(dir.join(format!("tx_{name}.csv"))).unwrap(), tx).unwrap();
    write_rx_log(File::create(dir.join(format!("rx_{name}.csv"))).unwrap(), rx).unwrap();
}

fn parking(dir: &Path) {
    const BEACONS: usize = 5000;
    const DISTANCES: [f64; 4] = [2.5, 5.0, 7.5, 10.0];
    let table: [(f64, [usize; 4]); 4] = [
        (-10.0, [3840, 110, 0, 0]),
        (0.0, [5000, 5000, 5000, 4870]),
        (10.0, [5000; 4]),
        (23.0, [5000; 4]),
    ];
    let env = RadioEnvironment::default();
    for (power, delivered) in table {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + power as u64);
        let (mut tx, mut rx) = (Vec::new(), Vec::new());
        let mut seq = 0u64;
        for (block, (&d, &ok)) in DISTANCES.iter().zip(&delivered).enumerate() {
            // A centimetre past the mark keeps rounding off the bin edge.
            let tx_pos = north_of(ORIGIN, d + 0.01);
            let mut hits = vec![false; BEACONS];
            hits[..ok].iter_mut().for_each(|h| *h = true);
            hits.shuffle(&mut rng);
            let budget = LinkBudget { tx_power_dbm: power, tx_gain_dbi: 4.5, rx_gain_dbi: 4.5, distance_m: d };
            let mean = rx_power_dbm(&budget, &env).unwrap();
            for (k, hit) in hits.into_iter().enumerate() {
                seq += 1;
                let time_s = block as f64 * 6000.0 + k as f64;
                tx.push(TxLogRecord { time_s, sequence_number: seq, lat_deg: tx_pos.0, lon_deg: tx_pos.1 });
                if hit {
                    let dbm = mean + 10.0 * sample_fading_gain(&env, &mut rng).log10();
                    rx.push(RxLogRecord {
                        time_s: time_s + 0.002,
                        sequence_number: seq,
                        rssi: rssi(dbm),
                        lat_deg: ORIGIN.0,
                        lon_deg: ORIGIN.1,
                    });
                }
            }
        }
        write(dir, &format!("{}dbm", power), &tx, &rx);
    }
}

fn highway(dir: &Path) {
    const BEACONS: usize = 6000;
    const RATE_HZ: f64 = 10.0;
    const SPEED_M_S: f64 = 20.0;
    const PERIOD_S: f64 = 60.0;
    let env = RadioEnvironment::default();
    for (power, crossover_m) in [(-10.0, 8.0), (10.0, 17.0), (16.0, 27.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + power as u64);
        let (mut tx, mut rx) = (Vec::new(), Vec::new());
        for k in 0..BEACONS {
            let t = k as f64 / RATE_HZ;
            let swing = 0.5 - 0.5 * (std::f64::consts::TAU * t / PERIOD_S).cos();
            let gap = crossover_m * (0.5 + 1.5 * swing);
            let lead = east_of(ORIGIN, SPEED_M_S * t);
            let follow = east_of(ORIGIN, SPEED_M_S * t - gap);
            let seq = k as u64 + 1;
            tx.push(TxLogRecord { time_s: t, sequence_number: seq, lat_deg: lead.0, lon_deg: lead.1 });
            let mean = -77.0 + 20.0 * (crossover_m / gap).log10();
            let dbm = mean + 10.0 * sample_fading_gain(&env, &mut rng).log10();
            if dbm >= RSSI_FLOOR_DBM {
                rx.push(RxLogRecord {
                    time_s: (k as f64 * 100.0 + 2.0) / 1000.0,
                    sequence_number: seq,
                    rssi: rssi(dbm),
                    lat_deg: follow.0,
                    lon_deg: follow.1,
                });
            }
        }
        write(dir, &format!("{}dbm", power), &tx, &rx);
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for sub in ["parking", "highway"] {
        std::fs::create_dir_all(root.join(sub)).unwrap();
    }
    parking(&root.join("parking"));
    highway(&root.join("highway"));
    println!("fixtures written to {}", root.display());
}
